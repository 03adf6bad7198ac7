import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from hyperstab.errors import ValidationError
from hyperstab.system_model import HyperbolicSystem, evaluate_speed

logger = logging.getLogger(__name__)


class Ramp:
    """C^1 cubic on [0, width] from (value, slope) down to (0, 0); zero afterwards."""

    def __init__(self, value: float, slope: float, width: float):
        if width <= 0:
            raise ValidationError(f"ramp width must be positive, got {width}")
        self.value = float(value)
        self.slope = float(slope)
        self.width = float(width)
        self._spline = CubicHermiteSpline(
            [0.0, self.width], [self.value, 0.0], [self.slope, 0.0]
        )
        self._derivative = self._spline.derivative()

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0 and self.slope == 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.width, self._spline(np.clip(t, 0.0, self.width)), 0.0)
        return out if out.ndim else float(out)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.width, self._derivative(np.clip(t, 0.0, self.width)), 0.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class RampPair:
    zeta: Ramp  # blends the initial boundary trace out
    eta: Ramp  # gates the feedback in


@dataclass(frozen=True)
class RampSet:
    delta: float
    pairs: dict[int, RampPair]  # positive family (0-based) -> ramps

    def zeta(self, family: int, t: float) -> float:
        return self.pairs[family].zeta(t)

    def eta(self, family: int, t: float) -> float:
        return self.pairs[family].eta(t)

    @property
    def active_until(self) -> float:
        return 0.5 * self.delta


def build_ramps(w0, system: HyperbolicSystem, delta: float) -> RampSet:
    """
    zeta_j(0) = w0_j(1), zeta_j'(0) = lambda_j(1, w0(1)) w0_j'(1); eta_j goes
    from 1 to 0 with flat ends. Both vanish from delta/2 on.
    """
    if delta <= 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    width = 0.5 * delta
    trace = w0.values_at(np.array([1.0]))[:, 0]
    slopes = w0.slopes_at(np.array([1.0]))[:, 0]
    pairs = {}
    for j in system.positive:
        speed = evaluate_speed(system.speeds[j], 1.0, trace)
        pairs[j] = RampPair(
            zeta=Ramp(trace[j], speed * slopes[j], width),
            eta=Ramp(1.0, 0.0, width),
        )
        logger.debug(
            f"ramp for w{j + 1}: zeta(0) = {trace[j]:.6e}, zeta'(0) = {speed * slopes[j]:.6e}"
        )
    return RampSet(delta=float(delta), pairs=pairs)
