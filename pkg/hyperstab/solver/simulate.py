import logging
import math
from dataclasses import dataclass

import numpy as np

from hyperstab.errors import BlowUp, ValidationError
from hyperstab.feedback.closure import BoundaryClosure
from hyperstab.feedback.synthesis import FeedbackLaw
from hyperstab.lyapunov import (
    LyapunovWeights,
    lyapunov_value,
    lyapunov_value_c1,
    state_delay_maps,
    vnorm,
)
from hyperstab.solver.exact import ExactAdvection
from hyperstab.solver.grid import InitialData, SimulationTrace, StateGrid, TraceRow, norms
from hyperstab.solver.upwind import check_cfl, step
from hyperstab.system_model import HyperbolicSystem

SOLVERS = ("upwind", "characteristic", "exact")
BLOWUP_LIMIT = 1e6


@dataclass
class SimulationConfig:
    nx: int = 201
    cfl: float = 0.9
    solver: str = "upwind"
    horizon: float = 1.0
    cadence: int = 1  # steps between trace rows
    q: float = 2.0
    snapshot_times: tuple[float, ...] = ()
    sampling: str = "local_cauchy"


class Simulation:
    """Closed-loop time loop; owns its state for the whole run."""

    def __init__(
        self,
        system: HyperbolicSystem,
        law: FeedbackLaw,
        w0: InitialData,
        config: SimulationConfig,
        weights: LyapunovWeights | None = None,
        tag: str = "run",
    ):
        if config.solver not in SOLVERS:
            raise ValidationError(f"unknown solver {config.solver!r}, expected one of {SOLVERS}")
        if w0.n != system.n:
            raise ValidationError(f"initial data has {w0.n} components, system has {system.n}")
        if weights is not None and weights.x.size != config.nx:
            raise ValidationError(f"weights built on {weights.x.size} points, grid has {config.nx}")
        self.logger = logging.getLogger(f"{__name__}: {tag}")
        self.system = system
        self.law = law
        self.w0 = w0
        self.config = config
        self.weights = weights
        self.exact = None
        self.closure = None
        self._prev_delay = None
        dx = 1.0 / (config.nx - 1)
        if config.solver == "exact":
            self.exact = ExactAdvection(system, law, w0, config.nx)
            self.dt = self.exact.dt
            self.steps = math.ceil(config.horizon / self.dt - 1e-9)
        else:
            self.closure = BoundaryClosure(system, law, sampling=config.sampling, dx=dx)
            dt_max = config.cfl * dx / system.max_speed()
            self.steps = max(math.ceil(config.horizon / dt_max - 1e-12), 1)
            self.dt = config.horizon / self.steps
            check_cfl(system, self.dt, dx, config.cfl)

    def _measure(self, state: StateGrid) -> tuple[float, float, float | None]:
        if self.weights is None:
            return float("nan"), float("nan"), None
        delay = None
        if self.system.is_quasilinear and self.law.maps:
            delay = state_delay_maps(self.system, self.law, state)
        sampler = self.exact.sampler(state.time) if self.exact is not None else None
        value = lyapunov_value(state, self.weights, self.law, delay=delay, sampler=sampler)
        norm = vnorm(
            state,
            self.law,
            self.weights.q,
            self.weights.delay if delay is None else delay,
            sampler=sampler,
        )
        c1 = None
        if self.system.is_quasilinear:
            c1 = lyapunov_value_c1(
                state,
                self.weights,
                self.law,
                self.system,
                delay=delay,
                delay_prev=self._prev_delay,
                dt=self.dt,
            )
            self._prev_delay = delay
        return value, norm, c1

    def _record(self, trace: SimulationTrace, state: StateGrid, n: int):
        value, norm, c1 = self._measure(state)
        trace.step_times.append(state.time)
        trace.step_values.append(value)
        if c1 is not None:
            trace.step_values_c1.append(c1)
        if n % self.config.cadence == 0 or n == self.steps:
            row = norms(state, self.config.q)
            trace.append(TraceRow(t=state.time, lyapunov=value, vnorm=norm, **row))
        for t_snap in self.config.snapshot_times:
            if t_snap not in trace.snapshots and state.time >= t_snap - 1e-12:
                trace.snapshots[t_snap] = state.values.copy()

    def _advance(self, state: StateGrid) -> StateGrid:
        if self.exact is not None:
            return self.exact.step(state)
        scheme = "characteristic" if self.config.solver == "characteristic" else "upwind"
        return step(state, self.system, self.closure, self.dt, cfl=self.config.cfl, scheme=scheme)

    def run(self) -> SimulationTrace:
        config = self.config
        self.logger.info(
            f"🚀 Simulating {self.steps} steps of {self.dt:.4e} up to t = {config.horizon} "
            f"({config.solver}, nx = {config.nx})"
        )
        state = self.exact.initial_state() if self.exact is not None else self.w0.sample(config.nx)
        trace = SimulationTrace(q=config.q)
        self._record(trace, state, 0)
        k = self.system.k
        for n in range(1, self.steps + 1):
            state = self._advance(state)
            if self.exact is None:
                # Clock from the step index so it does not drift.
                state.time = n * self.dt
            if not state.is_finite() or np.max(np.abs(state.values)) > BLOWUP_LIMIT:
                raise BlowUp(f"state left the small-data regime at t = {state.time:.4f}")
            trace.controls.append((state.time, state.values[k:, -1].copy()))
            self._record(trace, state, n)
        self.logger.info(
            f"✅ Finished at t = {state.time:.4f}, |w|_inf = {np.max(np.abs(state.values)):.3e}"
        )
        return trace


def simulate(
    system: HyperbolicSystem,
    law: FeedbackLaw,
    w0: InitialData,
    config: SimulationConfig,
    weights: LyapunovWeights | None = None,
    tag: str = "run",
) -> SimulationTrace:
    return Simulation(system, law, w0, config, weights=weights, tag=tag).run()
