import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as P

from hyperstab.errors import ValidationError

logger = logging.getLogger(__name__)

VALIDATION_POINTS = 1024  # Sampling density for ordering/positivity checks.


@dataclass(frozen=True, eq=False)
class SpeedProfile:
    # Ascending powers of x, degree <= 3. Magnitude only; the sign comes from
    # the family index.
    base: tuple[float, ...]
    # lambda(x, y) = base(x) + sum_j c_j y_j
    state_coupling: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 1 <= len(self.base) <= 4:
            raise ValidationError(
                f"speed polynomial needs 1..4 coefficients, got {len(self.base)}"
            )

    @property
    def is_constant(self) -> bool:
        return not any(self.base[1:]) and not self.is_state_dependent

    @property
    def is_state_dependent(self) -> bool:
        return self.state_coupling is not None and any(self.state_coupling)

    def base_values(self, x) -> np.ndarray:
        return P.polyval(np.clip(x, 0.0, 1.0), self.base)


@dataclass(frozen=True, eq=False)
class BoundaryCoupling:
    """x=0 relation w_-(t,0) = B(w_+(t,0)), with B(v) = matrix @ v + v^T Q_i v."""

    matrix: np.ndarray  # k x m
    quadratic: np.ndarray | None = None  # k x m x m

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_linear(self) -> bool:
        return self.quadratic is None or not np.any(self.quadratic)

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        """v has shape (m,) or (N, m); the result matches with k in place of m."""
        v = np.asarray(v, dtype=float)
        out = v @ self.matrix.T
        if not self.is_linear:
            out = out + np.einsum("...j,ijl,...l->...i", v, self.quadratic, v)
        return out

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        jac = np.broadcast_to(self.matrix, v.shape[:-1] + self.matrix.shape).copy()
        if not self.is_linear:
            sym = self.quadratic + np.swapaxes(self.quadratic, 1, 2)
            jac += np.einsum("ijl,...l->...ij", sym, v)
        return jac


@dataclass(frozen=True, eq=False)
class HyperbolicSystem:
    k: int
    m: int
    speeds: tuple[SpeedProfile, ...]
    coupling: BoundaryCoupling
    y_max: float = 0.0

    @property
    def n(self) -> int:
        return self.k + self.m

    @property
    def negative(self) -> range:
        return range(self.k)

    @property
    def positive(self) -> range:
        return range(self.k, self.n)

    @property
    def is_quasilinear(self) -> bool:
        return any(s.state_coupling is not None for s in self.speeds)

    @property
    def has_constant_speeds(self) -> bool:
        return all(s.is_constant for s in self.speeds)

    def direction(self, family: int) -> int:
        # +1: transported toward x=1 (fed at x=0); -1: toward x=0 (fed at x=1).
        return 1 if family < self.k else -1

    def max_speed(self) -> float:
        return self._max_speed

    @cached_property
    def _max_speed(self) -> float:
        x = np.linspace(0.0, 1.0, VALIDATION_POINTS)
        best = 0.0
        for y in _box_corners(self.n, self.y_max if self.is_quasilinear else 0.0):
            best = max(best, float(np.max(speeds_on_grid(self, x, y))))
        return best


def evaluate_speed(profile: SpeedProfile, x, y=None):
    """
    Speed magnitude at x (clamped to [0,1], i.e. constant extension) and
    optional state y. y may be a vector of n entries or an (n, N) array
    matching an array of positions.
    """
    value = profile.base_values(x)
    if y is not None and profile.state_coupling is not None:
        value = value + np.tensordot(profile.state_coupling, np.asarray(y, float), 1)
    if np.any(value <= 0):
        raise ValidationError(f"non-positive speed {np.min(value):.3e} for {profile}")
    return value if np.ndim(value) else float(value)


def speeds_on_grid(system: HyperbolicSystem, x: np.ndarray, values=None) -> np.ndarray:
    """(n, N) array of speed magnitudes; values is the (n, N) state or None."""
    x = np.asarray(x, dtype=float)
    out = np.empty((system.n, x.size))
    for i, profile in enumerate(system.speeds):
        out[i] = evaluate_speed(profile, x, values)
    return out


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str):
        self.violations.append(message)


def _box_corners(n: int, y_max: float):
    if y_max <= 0:
        yield np.zeros(n)
        return
    for signs in itertools.product((-1.0, 1.0), repeat=n):
        yield y_max * np.array(signs)


def validate_system(system: HyperbolicSystem, y_max: float | None = None) -> ValidationReport:
    report = ValidationReport()
    k, m = system.k, system.m
    if k < 1 or m < 1:
        report.add(f"need k >= 1 and m >= 1, got k={k}, m={m}")
        return report
    if len(system.speeds) != system.n:
        report.add(f"expected {system.n} speed profiles, got {len(system.speeds)}")
        return report
    if system.coupling.matrix.shape != (k, m):
        report.add(f"coupling matrix must be {k}x{m}, got {system.coupling.matrix.shape}")
    quadratic = system.coupling.quadratic
    if quadratic is not None and quadratic.shape != (k, m, m):
        report.add(f"quadratic coupling must be {k}x{m}x{m}, got {quadratic.shape}")
    for i, profile in enumerate(system.speeds):
        coupling = profile.state_coupling
        if coupling is not None and len(coupling) != system.n:
            report.add(f"speed {i + 1}: state coupling needs {system.n} entries")
            return report

    if y_max is None:
        y_max = system.y_max
    x = np.linspace(0.0, 1.0, VALIDATION_POINTS)
    for y in _box_corners(system.n, y_max if system.is_quasilinear else 0.0):
        lam = np.empty((system.n, x.size))
        for i, profile in enumerate(system.speeds):
            lam[i] = profile.base_values(x)
            if profile.state_coupling is not None:
                lam[i] += np.dot(profile.state_coupling, y)
        where = f" at y={y.tolist()}" if system.is_quasilinear else ""
        for i in range(system.n):
            if np.any(lam[i] <= 0):
                p = int(np.argmin(lam[i]))
                report.add(
                    f"speed {i + 1} not positive at x={x[p]:.4f}{where}: {lam[i, p]:.4e}"
                )
        signed = lam * np.array([-system.direction(i) for i in range(system.n)])[:, None]
        # -lambda_1 < ... < -lambda_k < 0 < lambda_{k+1} < ... < lambda_n
        for i in range(system.n - 1):
            gap = signed[i + 1] - signed[i]
            if i == k - 1:
                continue
            if np.any(gap <= 0):
                p = int(np.argmin(gap))
                report.add(
                    f"ordering violated between families {i + 1} and {i + 2} "
                    f"at x={x[p]:.4f}{where}"
                )

    for message in report.violations:
        logger.debug(f"validation: {message}")
    return report
