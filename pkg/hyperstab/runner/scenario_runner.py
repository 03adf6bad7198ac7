import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hyperstab import io_utils
from hyperstab.characteristics import TimingData, compute_timing
from hyperstab.debug_utils import worker_count
from hyperstab.errors import ValidationError
from hyperstab.feedback.closure import CompatibilityReport, check_compatibility, linear_sample_positions
from hyperstab.feedback.ramps import build_ramps
from hyperstab.feedback.synthesis import FeedbackLaw, synthesize_linear, synthesize_nonlinear
from hyperstab.lyapunov import LyapunovReport, build_weights, calibrate_gamma, verify_decay
from hyperstab.scenario import Scenario
from hyperstab.solver.grid import InitialData, SimulationTrace
from hyperstab.solver.simulate import SimulationConfig, simulate
from hyperstab.system_model import HyperbolicSystem, validate_system

logger = logging.getLogger(__name__)

EXACT_DECAY_TOL = 1e-10
RESIDUAL_MARGIN = 0.1  # after T_opt, linear runs


@dataclass
class PreparedScenario:
    scenario: Scenario
    system: HyperbolicSystem
    timing: TimingData
    law: FeedbackLaw
    linear_law: FeedbackLaw  # law of the Jacobian at 0, used for Gamma
    w0: InitialData
    compatibility: CompatibilityReport | None = None

    @property
    def horizon(self) -> float:
        return self.scenario.resolve_horizon(self.timing.t_opt)

    @property
    def settle_time(self) -> float:
        """Time from which the state should have vanished."""
        if self.scenario.is_nonlinear:
            return self.timing.t_opt + self.scenario.delta
        return self.timing.t_opt + RESIDUAL_MARGIN


def decay_tolerance(solver: str, nx: int, q: float, Lambda: float, max_speed: float) -> float:
    if solver == "exact":
        return EXACT_DECAY_TOL
    return 5.0 * q * Lambda * max_speed / (nx - 1)


def prepare(scenario: Scenario) -> PreparedScenario:
    system = scenario.build_system()
    report = validate_system(system)
    if not report.ok:
        raise ValidationError("invalid system:\n" + "\n".join(f"  {v}" for v in report.violations))
    timing = compute_timing(system)
    w0 = scenario.build_initial()
    linear_law = synthesize_linear(system.coupling.jacobian(np.zeros(system.m)))

    if not scenario.is_nonlinear:
        if not system.coupling.is_linear:
            raise ValidationError("linear feedback needs a linear coupling; use feedback: nonlinear")
        return PreparedScenario(scenario, system, timing, linear_law, linear_law, w0)

    compatibility = check_compatibility(w0, system, tol=scenario.tol_compat)
    if not compatibility.ok:
        raise ValidationError(
            f"initial data incompatible with the x=0 coupling: order 0 residual "
            f"{compatibility.residual0:.3e}, order 1 residual {compatibility.residual1:.3e}"
        )
    if scenario.epsilon is not None and w0.c1_norm() >= scenario.epsilon:
        raise ValidationError(f"|w0|_C1 = {w0.c1_norm():.3e} is not below epsilon = {scenario.epsilon}")
    anchor = w0.values_at(np.array([0.0]))[system.k :, 0]
    law = synthesize_nonlinear(system.coupling, anchor=anchor, radius=scenario.epsilon)
    law = law.with_ramps(build_ramps(w0, system, scenario.delta), scenario.delta)
    return PreparedScenario(scenario, system, timing, law, linear_law, w0, compatibility)


def synthesis_report(prepared: PreparedScenario) -> dict:
    system, law = prepared.system, prepared.law
    positions = linear_sample_positions(system, law)
    class_b = law.class_b
    return {
        "name": prepared.scenario.name,
        "k": system.k,
        "m": system.m,
        "class_b": {
            "passed": class_b.passed,
            "convention": class_b.convention,
            "blocks": [
                {"i": i, "sigma_ratio": ratio, "invertible": ok} for i, ratio, ok in class_b.blocks
            ],
            "full_block_invertible": class_b.full_block_invertible,
        },
        "maps": [
            {
                "target": f"w{fm.target + 1}",
                "inputs": [f"w{i + 1}" for i in fm.inputs],
                "coefficients": fm.coefficients,
            }
            for fm in law.maps
        ],
        "uncontrolled": [f"w{j + 1}" for j in law.uncontrolled],
        "tau": prepared.timing.tau,
        "t_opt": prepared.timing.t_opt,
        "sample_positions": {
            f"w{c + 1}": {f"w{i + 1}": a for i, a in zip(law.map_for(c).inputs, pos)}
            for c, pos in positions.items()
        },
    }


def format_synthesis(report: dict) -> str:
    lines = [f"scenario {report['name']}: k = {report['k']}, m = {report['m']}"]
    cb = report["class_b"]
    lines.append(f"class B ({cb['convention']}): {'yes' if cb['passed'] else 'no'}")
    for block in cb["blocks"]:
        state = "invertible" if block["invertible"] else "SINGULAR"
        lines.append(f"  i = {block['i']}: sigma ratio {block['sigma_ratio']:.6e} {state}")
    lines.append(f"  full trailing block invertible: {cb['full_block_invertible']}")
    for fm in report["maps"]:
        coef = ", ".join(repr(float(c)) for c in fm["coefficients"])
        inputs = ", ".join(fm["inputs"]) or "-"
        lines.append(f"{fm['target']}(t,1) = M[{coef}] . ({inputs})")
    for name in report["uncontrolled"]:
        lines.append(f"{name}(t,1) = 0")
    lines.append("tau = [" + ", ".join(repr(float(t)) for t in report["tau"]) + "]")
    lines.append(f"T_opt = {report['t_opt']!r}")
    for target, samples in report["sample_positions"].items():
        for name, a in samples.items():
            lines.append(f"a({name}, {target})(1) = {float(a)!r}")
    return "\n".join(lines)


@dataclass
class RunResult:
    trace: SimulationTrace
    gamma: float | None
    decay: LyapunovReport | None
    residual_linf: float


class ScenarioRunner:
    def __init__(self, scenario: Scenario, output_dir: Path | None = None):
        self.scenario = scenario
        self.output_dir = output_dir or io_utils.resolve_output_dir(scenario.output_dir)
        self.prepared = prepare(scenario)

    def synth(self) -> dict:
        report = synthesis_report(self.prepared)
        io_utils.write_json(self.output_dir / io_utils.SYNTH_FILE, report)
        logger.info(f"🧮 Synthesized {len(report['maps'])} feedback maps, T_opt = {report['t_opt']}")
        return report

    def gamma_for(self, q_values, lambdas) -> float:
        lyap = self.scenario.lyapunov
        if lyap.gamma != "auto":
            return float(lyap.gamma)
        prepared = self.prepared
        return calibrate_gamma(
            prepared.system,
            prepared.linear_law,
            q_values=tuple(q_values),
            lambdas=tuple(lambdas),
            seed=self.scenario.seed,
            kappa=lyap.kappa,
        )

    def run_cell(self, Lambda: float, q: float, nx: int, snapshots=(), tag: str = "run") -> RunResult:
        prepared, scenario = self.prepared, self.scenario
        system = prepared.system
        config = SimulationConfig(
            nx=nx,
            cfl=scenario.numerics.cfl,
            solver=scenario.numerics.solver,
            horizon=prepared.horizon,
            cadence=scenario.numerics.cadence,
            q=q,
            snapshot_times=tuple(snapshots),
            sampling=scenario.sampling,
        )
        gamma = self.gamma_for([q], [Lambda])
        weights = build_weights(system, prepared.law, q, Lambda, gamma, nx)
        trace = simulate(system, prepared.law, prepared.w0, config, weights=weights, tag=tag)
        tol = scenario.lyapunov.tol_disc
        if tol is None:
            tol = decay_tolerance(config.solver, nx, q, Lambda, system.max_speed())
        slack, t_start = 0.0, 0.0
        if scenario.is_nonlinear:
            slack, t_start = scenario.lyapunov.slack, 0.5 * scenario.delta
        decay = verify_decay(
            trace.step_times, trace.step_values, q, Lambda, tol, slack=slack, t_start=t_start
        )
        residual = float("nan")
        if trace.times[-1] >= prepared.settle_time - 1e-12:
            residual = trace.max_after("linf", prepared.settle_time)
        return RunResult(trace=trace, gamma=gamma, decay=decay, residual_linf=residual)

    def simulate(self, snapshots=()) -> RunResult:
        lyap = self.scenario.lyapunov
        result = self.run_cell(
            lyap.Lambda[0], lyap.q[0], self.scenario.numerics.nx, snapshots=snapshots,
            tag=self.scenario.name,
        )
        io_utils.write_trace(self.output_dir / io_utils.TRACE_FILE, result.trace)
        for t, values in result.trace.snapshots.items():
            io_utils.write_snapshot(self.output_dir / io_utils.snapshot_name(t), values)
        logger.info(
            f"📈 Trace written to {self.output_dir}, decay "
            f"{'passes' if result.decay.passed else 'FAILS'} (worst margin {result.decay.worst_margin:.3e})"
        )
        return result

    def sweep(self, lambdas, qs, nxs) -> list[dict]:
        cells = [(L, q, nx) for L in lambdas for q in qs for nx in nxs]
        payload = self.scenario.model_dump(mode="json")
        sweep_dir = io_utils.ensure_dir(self.output_dir / io_utils.SWEEP_DIR)
        workers = worker_count(len(cells))
        logger.info(f"🧪 Sweeping {len(cells)} cells on {workers} workers")
        if workers == 1:
            rows = [_sweep_cell(payload, str(sweep_dir), *cell) for cell in cells]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_sweep_cell, payload, str(sweep_dir), *cell) for cell in cells]
                rows = [f.result() for f in futures]
        io_utils.write_csv(
            sweep_dir / io_utils.SUMMARY_FILE,
            io_utils.SUMMARY_COLUMNS,
            ([row[c] for c in io_utils.SUMMARY_COLUMNS] for row in rows),
        )
        return rows


def _sweep_cell(payload: dict, sweep_dir: str, Lambda: float, q: float, nx: int) -> dict:
    scenario = Scenario.model_validate(payload)
    runner = ScenarioRunner(scenario, output_dir=Path(sweep_dir))
    result = runner.run_cell(Lambda, q, nx, tag=f"L{Lambda:g}_q{q:g}_nx{nx}")
    io_utils.write_trace(Path(sweep_dir) / io_utils.sweep_trace_name(Lambda, q, nx), result.trace)
    return {
        "lambda": float(Lambda),
        "q": float(q),
        "nx": int(nx),
        "t_opt": runner.prepared.timing.t_opt,
        "gamma": result.gamma,
        "residual_linf": result.residual_linf,
        "decay_pass": result.decay.passed,
        "worst_margin": result.decay.worst_margin,
    }
