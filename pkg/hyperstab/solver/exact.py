import logging

import numpy as np

from hyperstab.characteristics import gcd_speed
from hyperstab.errors import ValidationError
from hyperstab.feedback.synthesis import FeedbackLaw
from hyperstab.solver.grid import InitialData, StateGrid
from hyperstab.system_model import HyperbolicSystem

logger = logging.getLogger(__name__)

EDGE_TOL = 1e-14
CACHE_LIMIT = 200_000


class ExactAdvection:
    """
    Exact transport for constant speeds and a linear feedback law.

    The step is dx / g with g the largest common divisor of the speeds, so
    every family moves by a whole number of nodes. Nodes fed through a
    boundary during the step are filled by following the closed-loop
    characteristics back to the initial data.
    """

    def __init__(self, system: HyperbolicSystem, law: FeedbackLaw, w0: InitialData, nx: int):
        if not system.has_constant_speeds:
            raise ValidationError("exact advection needs constant speeds")
        if law.is_nonlinear or law.ramps is not None or not system.coupling.is_linear:
            raise ValidationError("exact advection needs a linear coupling and feedback")
        self.system = system
        self.law = law
        self.w0 = w0
        self.nx = nx
        self.dx = 1.0 / (nx - 1)
        self.speed = np.array([s.base[0] for s in system.speeds])
        self.g = gcd_speed(system)
        self.dt = self.dx / self.g
        shifts = self.speed / self.g
        if np.any(np.abs(shifts - np.round(shifts)) > 1e-9):
            raise ValidationError(f"speeds {self.speed.tolist()} are not multiples of {self.g}")
        self.shifts = np.round(shifts).astype(int)
        # a_{r,c}(1) = lambda_r / lambda_c for constant speeds.
        self.positions = {
            fm.target: self.speed[list(fm.inputs)] / self.speed[fm.target] for fm in law.maps
        }
        self._cache: dict[tuple[int, float, float], float] = {}
        logger.debug(f"exact advection: dt = {self.dt}, shifts = {self.shifts.tolist()}")

    def _initial(self, i: int, x: float) -> float:
        return float(self.w0.components[i].value(np.array([x]))[0])

    def control(self, target: int, t: float) -> float:
        """Boundary value of a positive family at (t, 1)."""
        if target not in self.law.targets:
            return 0.0
        fm = self.law.map_for(target)
        if not fm.inputs:
            return 0.0
        samples = np.array(
            [self.value(r, t, a) for r, a in zip(fm.inputs, self.positions[target])]
        )
        return float(samples @ fm.coefficients)

    def value(self, i: int, t: float, x: float) -> float:
        """w_i(t, x) of the closed loop by the method of characteristics."""
        key = (i, round(t, 13), round(x, 13))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if len(self._cache) > CACHE_LIMIT:
            self._cache.clear()
        lam = self.speed[i]
        k = self.system.k
        if i < k:
            start = x - lam * t
            if start >= -EDGE_TOL:
                out = self._initial(i, max(start, 0.0))
            else:
                s = t - x / lam
                trace = np.array([self.value(j, s, 0.0) for j in self.system.positive])
                out = float(self.system.coupling.evaluate(trace)[i])
        else:
            start = x + lam * t
            if start <= 1.0 + EDGE_TOL:
                out = self._initial(i, min(start, 1.0))
            else:
                out = self.control(i, t - (1.0 - x) / lam)
        self._cache[key] = out
        return out

    def sampler(self, t: float):
        """(component, positions) -> exact values at time t."""

        def sample(component: int, positions) -> np.ndarray:
            return np.array([self.value(component, t, float(a)) for a in np.atleast_1d(positions)])

        return sample

    def initial_state(self) -> StateGrid:
        return self.w0.sample(self.nx)

    def step(self, state: StateGrid) -> StateGrid:
        n = int(round(state.time / self.dt)) + 1
        t = n * self.dt
        x = state.x
        new = np.empty_like(state.values)
        for i in range(self.system.n):
            s = self.shifts[i]
            if i < self.system.k:
                new[i, s:] = state.values[i, : self.nx - s]
                fed = range(0, min(s, self.nx))
            else:
                new[i, : self.nx - s] = state.values[i, s:]
                fed = range(max(self.nx - s, 0), self.nx)
            for p in fed:
                new[i, p] = self.value(i, t, x[p])
        return StateGrid(values=new, time=t)
