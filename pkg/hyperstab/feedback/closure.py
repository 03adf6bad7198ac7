"""Boundary values at x=1 produced by a feedback law, and initial-data compatibility."""

import logging
from dataclasses import dataclass

import numpy as np

from hyperstab.characteristics import delay_maps_on_grid, frozen_delay_maps
from hyperstab.errors import NoConvergence
from hyperstab.feedback.synthesis import FeedbackLaw
from hyperstab.solver.grid import InitialData, StateGrid
from hyperstab.solver.upwind import advance_values, hold_controls
from hyperstab.system_model import HyperbolicSystem, evaluate_speed, speeds_on_grid

logger = logging.getLogger(__name__)

SAMPLING_MODES = ("frozen", "local_cauchy")
LOCAL_CAUCHY_CFL = 0.9
MAX_LOCAL_STEPS = 1_000_000


def linear_sample_positions(
    system: HyperbolicSystem, law: FeedbackLaw, dx: float | None = None
) -> dict[int, np.ndarray]:
    """a_{i,c}(1) for every controlled c and each of its inputs i, at the zero state."""
    pairs = [(i, fm.target) for fm in law.maps for i in fm.inputs]
    maps = delay_maps_on_grid(system, np.array([1.0]), pairs=pairs, dx=dx)
    return {
        fm.target: np.array([maps[(i, fm.target)][0] for i in fm.inputs])
        for fm in law.maps
    }


class BoundaryClosure:
    """
    Evaluates the m controls at x=1 from a state on the solver grid.

    Without ramps the law is applied as a linear feedback with sample
    positions fixed at startup. With ramps (nonlinear setting) each control
    is zeta + (1 - eta) M(samples), and the sample positions follow the
    current state, either through frozen speeds or through a private
    forward solve over the determinacy triangle ("local_cauchy").
    """

    def __init__(
        self,
        system: HyperbolicSystem,
        law: FeedbackLaw,
        sampling: str = "local_cauchy",
        dx: float | None = None,
    ):
        if sampling not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {sampling!r}, expected one of {SAMPLING_MODES}")
        self.system = system
        self.law = law
        self.sampling = sampling
        if not law.sample_positions:
            law = law.with_sampling(linear_sample_positions(system, law, dx))
            self.law = law
        self.nonlinear = law.ramps is not None

    @property
    def mode(self) -> str:
        return "nonlinear" if self.nonlinear else "linear"

    def __call__(self, t: float, values: np.ndarray) -> np.ndarray:
        system, law = self.system, self.law
        out = np.zeros(system.m)
        for j in law.uncontrolled:
            out[j - system.k] = law.ramps.zeta(j, t) if self.nonlinear else 0.0
        for fm in law.maps:
            c = fm.target
            if not self.nonlinear:
                out[c - system.k] = self._feedback(c, self._linear_samples(c, values))
                continue
            zeta, gate = law.ramps.zeta(c, t), 1.0 - law.ramps.eta(c, t)
            feedback = 0.0
            if gate != 0.0 and fm.inputs:
                feedback = self._feedback(c, self.samples(c, values))
            out[c - system.k] = zeta + gate * feedback
        return out

    def _feedback(self, target: int, samples: np.ndarray) -> float:
        return float(self.law.evaluate(target, samples[None, :])[0])

    def _linear_samples(self, target: int, values: np.ndarray) -> np.ndarray:
        fm = self.law.map_for(target)
        positions = self.law.sample_positions[target]
        x = np.linspace(0.0, 1.0, values.shape[1])
        return np.array([np.interp(a, x, values[i]) for i, a in zip(fm.inputs, positions)])

    def positions(self, target: int, values: np.ndarray) -> np.ndarray:
        """Current sample positions a_{i,target}(t, 1), aligned with the map inputs."""
        fm = self.law.map_for(target)
        if not fm.inputs:
            return np.zeros(0)
        if not self.nonlinear or not self.system.is_quasilinear:
            return self.law.sample_positions[target]
        x = np.linspace(0.0, 1.0, values.shape[1])
        if self.sampling == "frozen":
            pairs = [(i, target) for i in fm.inputs]
            maps = frozen_delay_maps(self.system, x, values, pairs, at=[1.0])
            return np.array([maps[p][0] for p in pairs])
        return self._local_cauchy_positions(target, fm.inputs, values)

    def samples(self, target: int, values: np.ndarray) -> np.ndarray:
        fm = self.law.map_for(target)
        x = np.linspace(0.0, 1.0, values.shape[1])
        positions = self.positions(target, values)
        return np.array([np.interp(a, x, values[i]) for i, a in zip(fm.inputs, positions)])

    def _local_cauchy_positions(self, target: int, inputs, values: np.ndarray) -> np.ndarray:
        system = self.system
        x = np.linspace(0.0, 1.0, values.shape[1])
        h = LOCAL_CAUCHY_CFL * (x[1] - x[0]) / system.max_speed()
        controls = hold_controls(system)

        # Forward: follow the target characteristic from x=1 to x=0 while the
        # private copy advances; keep the speed field at every step.
        speeds = [speeds_on_grid(system, x, values)]
        current = values.copy()
        pos, elapsed = 1.0, 0.0
        for _ in range(MAX_LOCAL_STEPS):
            current = advance_values(current, elapsed, system, controls, h)
            speeds.append(speeds_on_grid(system, x, current))
            k1 = np.interp(pos, x, speeds[-2][target])
            k2 = np.interp(max(pos - h * k1, 0.0), x, speeds[-1][target])
            nxt = pos - 0.5 * h * (k1 + k2)
            if nxt <= 0.0:
                elapsed += h * pos / (pos - nxt)
                break
            pos, elapsed = nxt, elapsed + h
        else:
            raise NoConvergence(f"characteristic of w{target + 1} never reached x=0")

        # Backward: from (elapsed, 0) to time 0 along each slower family.
        out = []
        # Last stored interval; elapsed can land on its right end.
        top = min(int(elapsed // h), len(speeds) - 2)
        for i in inputs:
            pos, s = 0.0, elapsed
            for j in range(top, -1, -1):
                dt = s - j * h
                if dt <= 0.0:
                    continue
                w = dt / h
                lam_s = (1.0 - w) * speeds[j][i] + w * speeds[j + 1][i]
                k1 = np.interp(pos, x, lam_s)
                k2 = np.interp(min(pos + dt * k1, 1.0), x, speeds[j][i])
                pos = pos + 0.5 * dt * (k1 + k2)
                s = j * h
            out.append(pos)
        return np.array(out)


def boundary_closure(
    t: float,
    state: StateGrid,
    law: FeedbackLaw,
    system: HyperbolicSystem,
    sampling: str = "local_cauchy",
) -> np.ndarray:
    return BoundaryClosure(system, law, sampling=sampling, dx=state.dx)(t, state.values)


@dataclass
class CompatibilityReport:
    order0: np.ndarray
    order1: np.ndarray
    tol: float

    @property
    def residual0(self) -> float:
        return float(np.max(np.abs(self.order0))) if self.order0.size else 0.0

    @property
    def residual1(self) -> float:
        return float(np.max(np.abs(self.order1))) if self.order1.size else 0.0

    @property
    def ok(self) -> bool:
        return self.residual0 <= self.tol and self.residual1 <= self.tol


def check_compatibility(w0, system: HyperbolicSystem, tol: float = 1e-8) -> CompatibilityReport:
    """
    Order-0 and order-1 matching of the data with w_-(t,0) = B(w_+(t,0)) at t=0.
    w0 is InitialData (analytic slopes) or a StateGrid (one-sided differences).
    """
    if isinstance(w0, InitialData):
        trace = w0.values_at(np.array([0.0]))[:, 0]
        slope = w0.slopes_at(np.array([0.0]))[:, 0]
    else:
        values, dx = w0.values, w0.dx
        trace = values[:, 0]
        slope = (-3.0 * values[:, 0] + 4.0 * values[:, 1] - values[:, 2]) / (2.0 * dx)
    k = system.k
    coupling = system.coupling
    lam = np.array([evaluate_speed(p, 0.0, trace) for p in system.speeds])
    order0 = trace[:k] - coupling.evaluate(trace[k:])
    rate_neg = -lam[:k] * slope[:k]
    rate_pos = lam[k:] * slope[k:]
    order1 = rate_neg - coupling.jacobian(trace[k:]) @ rate_pos
    report = CompatibilityReport(order0=order0, order1=order1, tol=tol)
    logger.debug(
        f"compatibility residuals: order 0 {report.residual0:.3e}, order 1 {report.residual1:.3e}"
    )
    return report
