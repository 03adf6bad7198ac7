import logging
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from hyperstab.errors import CFLViolation
from hyperstab.solver.grid import StateGrid
from hyperstab.system_model import HyperbolicSystem, speeds_on_grid

logger = logging.getLogger(__name__)

# (time, provisional values) -> the m control values at x=1.
Controls = Callable[[float, np.ndarray], np.ndarray]

SCHEMES = ("upwind", "characteristic")


def hold_controls(system: HyperbolicSystem) -> Controls:
    """Keep whatever the interior update left at x=1."""
    return lambda t, values: values[system.k :, -1]


def _spatial_derivative(values: np.ndarray, dx: float, k: int) -> np.ndarray:
    d = np.empty_like(values)
    # Rightward families: backward differences, forward second-order at x=0.
    neg = values[:k]
    d[:k, 1:] = (neg[:, 1:] - neg[:, :-1]) / dx
    d[:k, 0] = (-3.0 * neg[:, 0] + 4.0 * neg[:, 1] - neg[:, 2]) / (2.0 * dx)
    # Leftward families: forward differences, backward second-order at x=1.
    pos = values[k:]
    d[k:, :-1] = (pos[:, 1:] - pos[:, :-1]) / dx
    d[k:, -1] = (3.0 * pos[:, -1] - 4.0 * pos[:, -2] + pos[:, -3]) / (2.0 * dx)
    return d


def time_derivative_field(state: StateGrid, system: HyperbolicSystem) -> np.ndarray:
    """
    d_t w_i = -lambda_i d_x w_i for i < k and +lambda_i d_x w_i otherwise,
    with differences taken on the upwind side of each family.
    """
    values = state.values
    lam = speeds_on_grid(system, state.x, values if system.is_quasilinear else None)
    sign = np.array([-system.direction(i) for i in range(system.n)], dtype=float)[:, None]
    return sign * lam * _spatial_derivative(values, state.dx, system.k)


def check_cfl(system: HyperbolicSystem, dt: float, dx: float, cfl: float):
    number = dt * system.max_speed() / dx
    if number > cfl * (1.0 + 1e-12):
        raise CFLViolation(f"CFL number {number:.4f} exceeds {cfl}")


def _characteristic_update(state: StateGrid, system: HyperbolicSystem, dt: float) -> np.ndarray:
    """Semi-Lagrangian transport: feet traced back over dt with speeds frozen at t_n."""
    x = state.x
    values = state.values
    lam = speeds_on_grid(system, x, values if system.is_quasilinear else None)
    out = np.empty_like(values)
    for i in range(system.n):
        d = system.direction(i)
        half = x - 0.5 * dt * d * lam[i]
        mid = np.interp(np.clip(half, 0.0, 1.0), x, lam[i])
        foot = np.clip(x - dt * d * mid, 0.0, 1.0)
        out[i] = CubicSpline(x, values[i])(foot)
    return out


def close_boundaries(
    values: np.ndarray, t: float, system: HyperbolicSystem, controls: Controls
) -> np.ndarray:
    k = system.k
    values[k:, -1] = controls(t, values)
    values[:k, 0] = system.coupling.evaluate(values[k:, 0])
    return values


def advance_values(
    values: np.ndarray,
    t: float,
    system: HyperbolicSystem,
    controls: Controls,
    dt: float,
    scheme: str = "upwind",
) -> np.ndarray:
    state = StateGrid(values=values, time=t)
    if scheme == "upwind":
        new = values + dt * time_derivative_field(state, system)
    elif scheme == "characteristic":
        new = _characteristic_update(state, system, dt)
    else:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    return close_boundaries(new, t + dt, system, controls)


def step(
    state: StateGrid,
    system: HyperbolicSystem,
    controls: Controls,
    dt: float,
    cfl: float = 0.9,
    scheme: str = "upwind",
) -> StateGrid:
    """
    One explicit step. Interior transport, then the x=1 controls, then
    w_-(0) = B(w_+(0)) from the freshly updated outgoing values.
    """
    check_cfl(system, dt, state.dx, cfl)
    new = advance_values(state.values, state.time, system, controls, dt, scheme)
    return StateGrid(values=new, time=state.time + dt)
