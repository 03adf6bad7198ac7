"""Characteristic flows, transit times, delay maps and the optimal time."""

import logging
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad

from hyperstab.system_model import HyperbolicSystem, evaluate_speed, speeds_on_grid

logger = logging.getLogger(__name__)

MAX_STEP = 1e-3  # RK4 step cap.
BISECTION_ROUNDS = 64  # Brackets of width <= h * 2^-64.
QUAD_TOL = 1e-12

SpeedFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FlowQuery:
    family: int  # 0-based.
    t: float
    s: float
    xi: float
    # Optional (n, nx) snapshot on a uniform grid of [0,1]; speeds are then
    # lambda_i(x, w(x)) with w held fixed in time.
    frozen: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class TimingData:
    tau: np.ndarray
    t_opt: float


def speed_function(system: HyperbolicSystem, family: int, frozen=None) -> SpeedFn:
    profile = system.speeds[family]
    if frozen is None:
        return lambda x: np.asarray(evaluate_speed(profile, x), dtype=float)

    grid = np.linspace(0.0, 1.0, frozen.shape[1])

    def speed(x):
        xc = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        y = np.array([np.interp(xc, grid, row) for row in frozen])
        return np.asarray(evaluate_speed(profile, xc, y), dtype=float)

    return speed


def _step_size(system: HyperbolicSystem, dx: float | None) -> float:
    if dx is None:
        return MAX_STEP
    return min(dx / system.max_speed(), MAX_STEP)


def _rk4(speed: SpeedFn, sigma: float, x: np.ndarray, h) -> np.ndarray:
    k1 = sigma * speed(x)
    k2 = sigma * speed(x + 0.5 * h * k1)
    k3 = sigma * speed(x + 0.5 * h * k2)
    k4 = sigma * speed(x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _hit_time(speed: SpeedFn, sigma: float, x: np.ndarray, h: np.ndarray, edge: float):
    """Sub-step length in [0, h] after which one RK4 step from x lands on edge."""
    lo = np.zeros_like(x)
    hi = np.array(h, dtype=float, copy=True)
    for _ in range(BISECTION_ROUNDS):
        mid = 0.5 * (lo + hi)
        past = sigma * (_rk4(speed, sigma, x, mid) - edge) >= 0
        hi = np.where(past, mid, hi)
        lo = np.where(past, lo, mid)
    return 0.5 * (lo + hi)


def advance(speed: SpeedFn, sigma: float, x0, duration, h: float) -> np.ndarray:
    """
    Move points along dx/dtau = sigma * speed(x) for tau in [0, duration].

    speed is constant outside [0,1], so the motion there is in closed form;
    inside, fixed-step RK4 with the exit through the far edge located by
    bisection. duration must be non-negative.
    """
    x = np.array(x0, dtype=float, ndmin=1, copy=True)
    left = np.broadcast_to(np.asarray(duration, dtype=float), x.shape).copy()
    lam_lo = float(speed(np.array([0.0]))[0])
    lam_hi = float(speed(np.array([1.0]))[0])
    near, far = (0.0, 1.0) if sigma > 0 else (1.0, 0.0)
    lam_near, lam_far = (lam_lo, lam_hi) if sigma > 0 else (lam_hi, lam_lo)

    # Outside, coming toward the domain.
    outside_near = sigma * (x - near) < 0
    reach = np.abs(x - near) / lam_near
    stays = outside_near & (left <= reach)
    x[stays] += sigma * lam_near * left[stays]
    left[stays] = 0.0
    enters = outside_near & ~stays
    left[enters] -= reach[enters]
    x[enters] = near

    # Outside, moving away.
    gone = sigma * (x - far) > 0
    x[gone] += sigma * lam_far * left[gone]
    left[gone] = 0.0

    inside = left > 0
    if not np.any(inside):
        return x
    idx = np.flatnonzero(inside)
    xs, total = x[idx], left[idx]
    counts = np.maximum(np.ceil(total / h - 1e-12), 1).astype(int)
    steps = total / counts
    done = np.zeros(idx.size, dtype=bool)
    for n in range(int(counts.max())):
        active = ~done & (n < counts)
        if not np.any(active):
            break
        a = np.flatnonzero(active)
        trial = _rk4(speed, sigma, xs[a], steps[a])
        crossed = sigma * (trial - far) > 0
        keep = a[~crossed]
        xs[keep] = trial[~crossed]
        if np.any(crossed):
            c = a[crossed]
            theta = _hit_time(speed, sigma, xs[c], steps[c], far)
            remaining = total[c] - (n * steps[c] + theta)
            xs[c] = far + sigma * lam_far * np.maximum(remaining, 0.0)
            done[c] = True
    x[idx] = xs
    return x


def flow_many(system: HyperbolicSystem, family: int, t, s, xi, frozen=None, dx=None):
    """Vectorized x_i(t, s, xi); t, s and xi broadcast together."""
    t, s, xi = np.broadcast_arrays(
        np.asarray(t, float), np.asarray(s, float), np.asarray(xi, float)
    )
    shape = xi.shape
    d = system.direction(family)
    span = (t - s).ravel()
    xi = xi.ravel()
    if frozen is None and system.speeds[family].is_constant:
        lam = system.speeds[family].base[0]
        return (xi + d * lam * span).reshape(shape)
    speed = speed_function(system, family, frozen)
    h = _step_size(system, dx)
    out = xi.copy()
    for sign in (1.0, -1.0):
        mask = np.sign(span) == sign
        if np.any(mask):
            out[mask] = advance(speed, d * sign, xi[mask], np.abs(span[mask]), h)
    return out.reshape(shape)


def flow(system: HyperbolicSystem, query: FlowQuery, dx: float | None = None) -> float:
    return float(
        flow_many(system, query.family, query.t, query.s, query.xi, query.frozen, dx)[()]
    )


def transit_times(system: HyperbolicSystem, j: int, xs, frozen=None, dx=None) -> np.ndarray:
    """tau(j, x): time for the leftward family-j characteristic from x to reach 0."""
    if j < system.k:
        raise ValueError(f"family {j + 1} is not a positive family")
    xs = np.array(xs, dtype=float, ndmin=1)
    if frozen is None and system.speeds[j].is_constant:
        return np.maximum(xs, 0.0) / system.speeds[j].base[0]

    speed = speed_function(system, j, frozen)
    h = _step_size(system, dx)
    pos = np.maximum(xs, 0.0)
    elapsed = np.zeros_like(pos)
    active = pos > 0
    while np.any(active):
        a = np.flatnonzero(active)
        trial = _rk4(speed, -1.0, pos[a], h)
        crossed = trial <= 0
        moving = a[~crossed]
        pos[moving] = trial[~crossed]
        elapsed[moving] += h
        if np.any(crossed):
            c = a[crossed]
            elapsed[c] += _hit_time(speed, -1.0, pos[c], np.full(c.size, h), 0.0)
            pos[c] = 0.0
            active[c] = False
    return elapsed


def transit_time(system: HyperbolicSystem, j: int, x: float, dx=None) -> float:
    return float(transit_times(system, j, [x], dx=dx)[0])


def _tau(system: HyperbolicSystem, family: int) -> float:
    profile = system.speeds[family]
    if not any(profile.base[1:]):
        return 1.0 / profile.base[0]
    value, _ = quad(
        lambda x: 1.0 / profile.base_values(x), 0.0, 1.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL
    )
    return value


def optimal_time(k: int, m: int, tau: np.ndarray) -> float:
    if m >= k:
        sums = [tau[i] + tau[m + i] for i in range(k)]
        return float(max(max(sums), tau[k]))
    return float(max(tau[i] + tau[m + i] for i in range(k - m, k)))


def compute_timing(system: HyperbolicSystem) -> TimingData:
    tau = np.array([_tau(system, i) for i in range(system.n)])
    t_opt = optimal_time(system.k, system.m, tau)
    logger.debug(f"transit times {tau.tolist()}, T_opt = {t_opt}")
    return TimingData(tau=tau, t_opt=t_opt)


def positive_pairs(system: HyperbolicSystem) -> list[tuple[int, int]]:
    return [(i, j) for j in system.positive for i in system.positive if i < j]


def delay_map(system: HyperbolicSystem, i: int, j: int, x: float, dx=None) -> float:
    """a_{i,j}(x) = x_i(0, tau(j, x), 0) for positive families i < j."""
    if not system.k <= i < j < system.n:
        raise ValueError(f"delay map needs positive families i < j, got {i + 1}, {j + 1}")
    tau = transit_time(system, j, x, dx=dx)
    return flow(system, FlowQuery(family=i, t=0.0, s=tau, xi=0.0), dx=dx)


def delay_maps_on_grid(
    system: HyperbolicSystem, x: np.ndarray, pairs=None, dx=None
) -> dict[tuple[int, int], np.ndarray]:
    if pairs is None:
        pairs = positive_pairs(system)
    out = {}
    for j in sorted({j for _, j in pairs}):
        tau = transit_times(system, j, x, dx=dx)
        for i, jj in pairs:
            if jj == j:
                out[(i, j)] = flow_many(system, i, 0.0, tau, 0.0, dx=dx)
    return out


def travel_times(
    system: HyperbolicSystem, x: np.ndarray, values: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative int_0^x ds / lambda_i(s, w(s)) per family for a frozen state."""
    lam = speeds_on_grid(system, x, values)
    return cumulative_trapezoid(1.0 / lam, x, axis=1, initial=0.0), lam


def frozen_delay_maps(
    system: HyperbolicSystem, x: np.ndarray, values: np.ndarray, pairs, at=None
) -> dict[tuple[int, int], np.ndarray]:
    """
    Delay maps for speeds frozen at the snapshot values. The frozen field is
    autonomous, so the family-i flow is the inverse of its travel time.
    `at` restricts evaluation to the given positions (default: the grid).
    """
    theta, lam = travel_times(system, x, values)
    points = x if at is None else np.atleast_1d(np.asarray(at, dtype=float))
    out = {}
    for i, j in pairs:
        tau = np.interp(points, x, theta[j])
        a = np.interp(tau, theta[i], x)
        beyond = tau > theta[i, -1]
        a[beyond] = 1.0 + (tau[beyond] - theta[i, -1]) * lam[i, -1]
        out[(i, j)] = a
    return out


def delay_derivative_bounds(system: HyperbolicSystem, pairs) -> dict:
    """(c1, c2) with c1 <= a'_{i,j} <= c2, from a'_{i,j} = lambda_i(a) / lambda_j(x)."""
    x = np.linspace(0.0, 1.0, 1024)
    lam = speeds_on_grid(system, x)
    return {
        (i, j): (lam[i].min() / lam[j].max(), lam[i].max() / lam[j].min())
        for i, j in pairs
    }


def gcd_speed(system: HyperbolicSystem, max_denominator: int = 1000) -> float:
    """Largest g with every constant speed an integer multiple of g."""
    fracs = [Fraction(s.base[0]).limit_denominator(max_denominator) for s in system.speeds]
    common = math.lcm(*(f.denominator for f in fracs))
    g = math.gcd(*(int(f * common) for f in fracs))
    return g / common
