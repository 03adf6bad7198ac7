import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import trapezoid

from hyperstab.errors import ValidationError

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "l1", "l2", "lq", "linf", "lyapunov", "vnorm")
C1_POINTS = 2049  # Sampling density for the C^1 norm of initial data.


@dataclass(frozen=True, eq=False)
class ComponentProfile:
    """sum_r sine[r-1] sin(r pi x) + poly(x), or linear interpolation of raw samples."""

    sine: tuple[float, ...] = ()
    poly: tuple[float, ...] = ()
    samples: np.ndarray | None = None  # uniform on [0,1]

    def __post_init__(self):
        if self.samples is not None and (self.sine or self.poly):
            raise ValidationError("raw samples cannot be combined with sine/poly terms")
        if self.samples is not None and len(self.samples) < 3:
            raise ValidationError("raw samples need at least 3 points")

    def _modes(self) -> np.ndarray:
        return np.pi * np.arange(1, len(self.sine) + 1)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.samples is not None:
            grid = np.linspace(0.0, 1.0, len(self.samples))
            return np.interp(x, grid, self.samples)
        out = np.zeros_like(x)
        if self.sine:
            out = out + np.sin(np.multiply.outer(x, self._modes())) @ np.asarray(self.sine)
        if self.poly:
            out = out + P.polyval(x, self.poly)
        return out

    def slope(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.samples is not None:
            grid = np.linspace(0.0, 1.0, len(self.samples))
            d = np.gradient(np.asarray(self.samples, float), grid, edge_order=2)
            return np.interp(x, grid, d)
        out = np.zeros_like(x)
        if self.sine:
            modes = self._modes()
            out = out + np.cos(np.multiply.outer(x, modes)) @ (np.asarray(self.sine) * modes)
        if len(self.poly) > 1:
            out = out + P.polyval(x, P.polyder(self.poly))
        return out


@dataclass(frozen=True, eq=False)
class InitialData:
    components: tuple[ComponentProfile, ...]

    @classmethod
    def zeros(cls, n: int) -> "InitialData":
        return cls(components=tuple(ComponentProfile() for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.components)

    def values_at(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([c.value(x) for c in self.components])

    def slopes_at(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([c.slope(x) for c in self.components])

    def sample(self, nx: int) -> "StateGrid":
        return StateGrid(values=self.values_at(np.linspace(0.0, 1.0, nx)), time=0.0)

    def c1_norm(self) -> float:
        x = np.linspace(0.0, 1.0, C1_POINTS)
        return float(np.max(np.abs(self.values_at(x))) + np.max(np.abs(self.slopes_at(x))))


@dataclass(eq=False)
class StateGrid:
    values: np.ndarray  # (n, nx)
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] < 3:
            raise ValidationError(f"state needs shape (n, nx >= 3), got {self.values.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)

    def copy(self) -> "StateGrid":
        return StateGrid(values=self.values.copy(), time=self.time)

    def sample(self, component: int, positions) -> np.ndarray:
        """Linear interpolation of one component at interior positions."""
        return np.interp(positions, self.x, self.values[component])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def lq_norm(values: np.ndarray, x: np.ndarray, q: float) -> float:
    """(int_0^1 sum_i |w_i|^q dx)^(1/q) by the composite trapezoid rule."""
    return float(trapezoid(np.sum(np.abs(values) ** q, axis=0), x) ** (1.0 / q))


def norms(state: StateGrid, q: float) -> dict[str, float]:
    x = state.x
    return {
        "l1": lq_norm(state.values, x, 1.0),
        "l2": lq_norm(state.values, x, 2.0),
        "lq": lq_norm(state.values, x, q),
        "linf": float(np.max(np.abs(state.values))),
    }


@dataclass
class TraceRow:
    t: float
    l1: float
    l2: float
    lq: float
    linf: float
    lyapunov: float = float("nan")
    vnorm: float = float("nan")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, c) for c in TRACE_COLUMNS)


@dataclass
class SimulationTrace:
    q: float
    rows: list[TraceRow] = field(default_factory=list)
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)
    # Per-step t and V, recorded every step regardless of the output cadence.
    step_times: list[float] = field(default_factory=list)
    step_values: list[float] = field(default_factory=list)
    # C^1 part of V per step, quasilinear runs only.
    step_values_c1: list[float] = field(default_factory=list)
    # Control values at x=1 per step, (time, m values).
    controls: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def append(self, row: TraceRow):
        if self.rows and row.t <= self.rows[-1].t:
            raise ValueError(f"trace times must increase, got {row.t} after {self.rows[-1].t}")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def value_at(self, name: str, t: float) -> float:
        """Column value at the first recorded time >= t."""
        times = self.times
        idx = int(np.searchsorted(times, t - 1e-12))
        if idx >= len(times):
            raise ValueError(f"trace ends at t={times[-1]}, before {t}")
        return float(getattr(self.rows[idx], name))

    def max_after(self, name: str, t: float) -> float:
        times = self.times
        mask = times >= t - 1e-12
        if not np.any(mask):
            raise ValueError(f"trace ends at t={times[-1]}, before {t}")
        return float(np.max(self.column(name)[mask]))
