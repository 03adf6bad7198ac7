"""Lyapunov weights, functionals, norms and decay verdicts."""

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad, trapezoid

from hyperstab.characteristics import (
    QUAD_TOL,
    compute_timing,
    delay_derivative_bounds,
    delay_maps_on_grid,
    frozen_delay_maps,
)
from hyperstab.errors import CalibrationFailed, ValidationError
from hyperstab.feedback.synthesis import FeedbackLaw
from hyperstab.solver.grid import StateGrid
from hyperstab.solver.upwind import time_derivative_field
from hyperstab.system_model import HyperbolicSystem, speeds_on_grid

logger = logging.getLogger(__name__)

# (component, positions) -> values; defaults to linear interpolation on the grid.
Sampler = Callable[[int, np.ndarray], np.ndarray]
DelayMaps = dict[tuple[int, int], np.ndarray]

GAMMA_MAX_EXPONENT = 40
CALIBRATION_SAMPLES = 512
DECAY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class LyapunovWeights:
    q: float
    Lambda: float
    gamma: float
    x: np.ndarray
    p: np.ndarray  # (n, nx)
    theta: np.ndarray  # (n, nx), int_0^x ds / lambda_i(s, 0)
    tau: np.ndarray
    # Delay maps a_{r,c}(x) on the grid at the zero state.
    delay: DelayMaps = field(default_factory=dict)


def _cumulative_inverse_speed(system: HyperbolicSystem, family: int, x: np.ndarray) -> np.ndarray:
    profile = system.speeds[family]
    if not any(profile.base[1:]):
        return x / profile.base[0]
    pieces = [
        quad(lambda s: 1.0 / profile.base_values(s), a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL)[0]
        for a, b in zip(x[:-1], x[1:])
    ]
    return np.concatenate([[0.0], np.cumsum(pieces)])


def law_pairs(law: FeedbackLaw) -> list[tuple[int, int]]:
    return [(r, fm.target) for fm in law.maps for r in fm.inputs]


def build_weights(
    system: HyperbolicSystem,
    law: FeedbackLaw,
    q: float,
    Lambda: float,
    gamma: float,
    nx: int,
) -> LyapunovWeights:
    """
    p_i = lambda_i^-1 exp(-q L theta_i + q L tau_i) for rightward families,
    Gamma^q lambda_i^-1 exp(q L theta_i) for uncontrolled leftward ones and
    Gamma^q lambda_c^-1 exp(q L theta_c + q L tau_{c-m}) for a controlled c.
    """
    if q < 1 or Lambda < 1 or gamma < 1:
        raise ValidationError(f"need q, Lambda, Gamma >= 1, got {q}, {Lambda}, {gamma}")
    x = np.linspace(0.0, 1.0, nx)
    tau = compute_timing(system).tau
    lam = speeds_on_grid(system, x)
    theta = np.array([_cumulative_inverse_speed(system, i, x) for i in range(system.n)])
    rate = q * Lambda
    p = np.empty_like(theta)
    for i in system.negative:
        p[i] = np.exp(-rate * theta[i] + rate * tau[i]) / lam[i]
    targets = set(law.targets)
    for j in system.positive:
        shift = rate * tau[j - system.m] if j in targets else 0.0
        p[j] = gamma**q * np.exp(rate * theta[j] + shift) / lam[j]
    delay = delay_maps_on_grid(system, x, pairs=law_pairs(law), dx=x[1] - x[0])
    return LyapunovWeights(
        q=q, Lambda=Lambda, gamma=gamma, x=x, p=p, theta=theta, tau=tau, delay=delay
    )


def weight_identity_residual(system: HyperbolicSystem, weights: LyapunovWeights) -> float:
    """
    Largest deviation of log(lambda_i p_i)(x) - log(lambda_i p_i)(0) from
    -+ q Lambda int_0^x ds / lambda_i, the integrated form of
    (lambda_i p_i)' = -+ q Lambda p_i, with the integral by independent quadrature.
    """
    x = weights.x
    lam = speeds_on_grid(system, x)
    rate = weights.q * weights.Lambda
    worst = 0.0
    for i in range(system.n):
        profile = system.speeds[i]
        integral = np.array(
            [
                quad(lambda s: 1.0 / profile.base_values(s), 0.0, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL)[0]
                for b in x
            ]
        )
        log_lp = np.log(lam[i] * weights.p[i])
        expected = -system.direction(i) * rate * integral
        worst = max(worst, float(np.max(np.abs(log_lp - log_lp[0] - expected))))
    return worst


def weight_ratio_constant(weights: LyapunovWeights, t_opt: float) -> float:
    """C with max p / min p = C^q exp(q Lambda T_opt)."""
    ratio = float(np.max(weights.p) / np.min(weights.p))
    return ratio ** (1.0 / weights.q) * np.exp(-weights.Lambda * t_opt)


def calibrate_gamma(
    system: HyperbolicSystem,
    law: FeedbackLaw,
    q_values=(1.0, 2.0),
    lambdas=(1.0,),
    samples: int = CALIBRATION_SAMPLES,
    seed: int = 0,
    kappa: float = 2.0,
) -> float:
    """
    Smallest power of two Gamma with, for every random trace v_+ at x=0,
    Gamma^q sum_c e^{q L tau_{c-m}} |d_c|^q >= kappa^q sum_i e^{q L tau_i} |(B v_+)_i|^q
    where d_c = v_c - M_c(inputs) is the feedback defect. The lambda_i(0)
    factors cancel against the weights.
    """
    matrix = system.coupling.jacobian(np.zeros(system.m))
    if not np.any(matrix):
        return 1.0
    tau = compute_timing(system).tau
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((samples, system.m))
    k = system.k
    defects = np.zeros((samples, len(law.maps)))
    offsets = np.zeros(len(law.maps))
    for col, fm in enumerate(law.maps):
        inputs = v[:, [j - k for j in fm.inputs]]
        defects[:, col] = v[:, fm.target - k] - law.evaluate(fm.target, inputs)
        offsets[col] = tau[fm.target - system.m]
    rows = v @ matrix.T

    exponent = 0
    for q in q_values:
        for Lambda in lambdas:
            rate = q * Lambda
            good = np.abs(defects) ** q @ np.exp(rate * offsets)
            bad = kappa**q * (np.abs(rows) ** q @ np.exp(rate * tau[:k]))
            positive = good > 0
            if np.any(~positive & (bad > 1e-12 * np.max(bad))):
                raise CalibrationFailed("boundary rows do not vanish with the feedback defects")
            if not np.any(positive):
                continue
            need = np.max(bad[positive] / good[positive]) ** (1.0 / q)
            exponent = max(exponent, int(np.ceil(np.log2(max(need, 1.0)) - 1e-12)))
    if exponent > GAMMA_MAX_EXPONENT:
        raise CalibrationFailed(f"Gamma would need 2^{exponent}, above 2^{GAMMA_MAX_EXPONENT}")
    gamma = float(2**exponent)
    logger.debug(f"calibrated Gamma = {gamma} over {samples} traces")
    return gamma


def _interp_sampler(values: np.ndarray, x: np.ndarray) -> Sampler:
    return lambda component, positions: np.interp(positions, x, values[component])


def defect_field(
    values: np.ndarray,
    x: np.ndarray,
    law: FeedbackLaw,
    delay: DelayMaps,
    sampler: Sampler | None = None,
) -> dict[int, np.ndarray]:
    """T_c(x) = w_c(x) - M_c(w_r(a_{r,c}(x)), ...) for every controlled c."""
    if sampler is None:
        sampler = _interp_sampler(values, x)
    out = {}
    for fm in law.maps:
        if not fm.inputs:
            out[fm.target] = values[fm.target].copy()
            continue
        samples = np.stack([sampler(r, delay[(r, fm.target)]) for r in fm.inputs], axis=1)
        out[fm.target] = values[fm.target] - law.evaluate(fm.target, samples)
    return out


def back_substitute(
    values: np.ndarray,
    defects: dict[int, np.ndarray],
    x: np.ndarray,
    law: FeedbackLaw,
    delay: DelayMaps,
) -> np.ndarray:
    """
    Rebuilds the controlled components from their defects, w_c = T_c + M_c(samples),
    keeping the other rows of `values`. Inputs of a map are slower families, so
    targets are filled in ascending order.
    """
    out = np.array(values, dtype=float)
    for fm in sorted(law.maps, key=lambda fm: fm.target):
        c = fm.target
        if not fm.inputs:
            out[c] = defects[c]
            continue
        samples = np.stack([np.interp(delay[(r, c)], x, out[r]) for r in fm.inputs], axis=1)
        out[c] = defects[c] + law.evaluate(c, samples)
    return out


def _functional(
    values: np.ndarray,
    x: np.ndarray,
    law: FeedbackLaw,
    delay: DelayMaps,
    q: float,
    p: np.ndarray | None = None,
    sampler: Sampler | None = None,
) -> float:
    parts = np.abs(values) ** q
    for c, t_c in defect_field(values, x, law, delay, sampler).items():
        parts[c] = np.abs(t_c) ** q
    if p is not None:
        parts = p * parts
    return float(trapezoid(np.sum(parts, axis=0), x))


def lyapunov_value(
    state: StateGrid,
    weights: LyapunovWeights,
    law: FeedbackLaw,
    delay: DelayMaps | None = None,
    sampler: Sampler | None = None,
) -> float:
    """V = sum_i int p_i |w_i|^q with the controlled components replaced by their defects."""
    return _functional(
        state.values,
        weights.x,
        law,
        weights.delay if delay is None else delay,
        weights.q,
        p=weights.p,
        sampler=sampler,
    )


def lyapunov_value_c1(
    state: StateGrid,
    weights: LyapunovWeights,
    law: FeedbackLaw,
    system: HyperbolicSystem,
    delay: DelayMaps | None = None,
    delay_prev: DelayMaps | None = None,
    dt: float | None = None,
) -> float:
    """
    The C^1 part: same weights applied to d_t w, with the time derivative of
    each defect by the chain rule through the sampled values. d_t a comes
    from differencing the sample positions against the previous evaluation
    (zero when none is given).
    """
    x = weights.x
    delay = weights.delay if delay is None else delay
    field_t = time_derivative_field(state, system)
    parts = np.abs(field_t) ** weights.q
    for fm in law.maps:
        c = fm.target
        if not fm.inputs:
            continue
        pos = [delay[(r, c)] for r in fm.inputs]
        samples = np.stack([np.interp(a, x, state.values[r]) for r, a in zip(fm.inputs, pos)], axis=1)
        chain = []
        for r, a in zip(fm.inputs, pos):
            rate = np.interp(a, x, field_t[r])
            if delay_prev is not None and dt:
                slope = np.interp(a, x, np.gradient(state.values[r], x))
                rate = rate + slope * (a - delay_prev[(r, c)]) / dt
            chain.append(rate)
        grad = law.gradient(c, samples)
        d_defect = field_t[c] - np.sum(grad * np.stack(chain, axis=1), axis=1)
        parts[c] = np.abs(d_defect) ** weights.q
    return float(trapezoid(np.sum(weights.p * parts, axis=0), x))


def state_delay_maps(
    system: HyperbolicSystem, law: FeedbackLaw, state: StateGrid
) -> DelayMaps:
    """a_{r,c}(t, x) on the grid for speeds frozen at the current state."""
    return frozen_delay_maps(system, state.x, state.values, law_pairs(law))


def triple_norm(
    values: np.ndarray, x: np.ndarray, law: FeedbackLaw, b_maps: DelayMaps, q: float
) -> float:
    """Unweighted norm with the defects built from arbitrary monotone maps b_{r,c}."""
    return _functional(values, x, law, b_maps, q) ** (1.0 / q)


def vnorm(
    state: StateGrid,
    law: FeedbackLaw,
    q: float,
    delay: DelayMaps,
    sampler: Sampler | None = None,
) -> float:
    return _functional(state.values, state.x, law, delay, q, sampler=sampler) ** (1.0 / q)


def equivalence_constant(
    law: FeedbackLaw, b_bounds: dict[tuple[int, int], tuple[float, float]]
) -> float:
    """
    lambda* with ||v||_q / lambda* <= |||v||| <= lambda* ||v||_q for every
    q >= 1. Upward by the triangle inequality and the change of variables
    int |v(b(x))|^q <= c_1^-1 int |v|^q; downward by back-substituting the
    defects in increasing target order.
    """
    n = law.k + law.m
    beta = 0.0
    upper = 1.0
    for fm in law.maps:
        size = sum(
            abs(coef) * max(1.0, 1.0 / b_bounds[(r, fm.target)][0])
            for r, coef in zip(fm.inputs, fm.coefficients)
        )
        beta = max(beta, size)
        upper += size
    lower = n * (1.0 + beta) ** n
    return max(upper, lower)


def law_delay_bounds(system: HyperbolicSystem, law: FeedbackLaw):
    return delay_derivative_bounds(system, law_pairs(law))


@dataclass
class LyapunovReport:
    passed: bool
    worst_margin: float
    checked: int
    rates: np.ndarray
    failures: list[tuple[float, float]] = field(default_factory=list)
    envelope: float | None = None


def verify_decay(
    times,
    values,
    q: float,
    Lambda: float,
    tol: float,
    slack: float = 0.0,
    t_start: float = 0.0,
) -> LyapunovReport:
    """
    Checks V(t_{n+1}) <= V(t_n) exp(-q L' dt) (1 + tol) step by step, with
    L' = Lambda (1 - slack), from t_start on and while V(t_n) stays above
    the floor 1e-12 V(t_start). The margin is the relative excess, so a
    passing report has worst_margin <= 0.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    rate = q * Lambda * (1.0 - slack)
    use = times >= t_start - 1e-12
    times, values = times[use], values[use]
    if times.size < 2 or values[0] <= 0:
        return LyapunovReport(passed=True, worst_margin=-np.inf, checked=0, rates=np.zeros(0))
    floor = DECAY_FLOOR * values[0]
    worst = -np.inf
    checked = 0
    rates = []
    failures = []
    for n in range(times.size - 1):
        if values[n] <= floor:
            continue
        dt = times[n + 1] - times[n]
        margin = values[n + 1] / (values[n] * np.exp(-rate * dt)) - 1.0 - tol
        worst = max(worst, margin)
        checked += 1
        if values[n + 1] > 0:
            rates.append(np.log(values[n + 1] / values[n]) / dt)
        if margin > 0:
            failures.append((float(times[n]), float(margin)))
    if failures:
        logger.debug(f"decay fails at {len(failures)} of {checked} steps, worst margin {worst:.3e}")
    return LyapunovReport(
        passed=not failures,
        worst_margin=float(worst),
        checked=checked,
        rates=np.array(rates),
        failures=failures,
    )


def fit_envelope(times, norms, t_opt: float, Lambda: float) -> float:
    """Smallest C with ||w(t)|| <= C exp(Lambda (T_opt - t)) ||w(0)|| on the trace."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if norms[0] <= 0:
        return 0.0
    return float(np.max(norms * np.exp(Lambda * (times - t_opt))) / norms[0])
