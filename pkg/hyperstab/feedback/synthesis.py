import logging
from dataclasses import dataclass, field, replace

import numpy as np

from hyperstab.errors import NoConvergence, SingularSubmatrix
from hyperstab.system_model import BoundaryCoupling

logger = logging.getLogger(__name__)

SINGULAR_RATIO = 1e-12  # sigma_min / sigma_max below this counts as singular.
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 30

CLASS_RANGE = "trailing blocks 1 <= i <= min(m-1, k)"
FULL_RANGE = "trailing blocks 1 <= i <= min(m, k)"


@dataclass
class ClassBReport:
    passed: bool
    # (i, sigma_min / sigma_max, invertible) per tested block size.
    blocks: list[tuple[int, float, bool]] = field(default_factory=list)
    convention: str = CLASS_RANGE
    # Trailing min(m,k) block, reported even when it lies outside the range.
    full_block_invertible: bool | None = None

    def failed_indices(self) -> list[int]:
        return [i for i, _, ok in self.blocks if not ok]


def _sigma_ratio(block: np.ndarray) -> float:
    sigma = np.linalg.svd(block, compute_uv=False)
    return float(sigma[-1] / sigma[0]) if sigma[0] > 0 else 0.0


def trailing_block(matrix: np.ndarray, i: int) -> np.ndarray:
    return matrix[-i:, -i:]


def check_class_B(matrix, require_full_block: bool = False) -> ClassBReport:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    k, m = matrix.shape
    top = min(m, k) if require_full_block else min(m - 1, k)
    report = ClassBReport(
        passed=True, convention=FULL_RANGE if require_full_block else CLASS_RANGE
    )
    for i in range(1, top + 1):
        ratio = _sigma_ratio(trailing_block(matrix, i))
        ok = ratio >= SINGULAR_RATIO
        report.blocks.append((i, ratio, ok))
        report.passed &= ok
    full = min(m, k)
    report.full_block_invertible = _sigma_ratio(trailing_block(matrix, full)) >= SINGULAR_RATIO
    return report


@dataclass(frozen=True, eq=False)
class FeedbackMap:
    """
    One controlled boundary value: w_target(t,1) = M(w_inputs sampled inside).

    Built by the elimination step that zeroes `rows` of the coupling; the
    unknowns of that step are the last len(rows) positive components and the
    first of them is the target.
    """

    target: int  # 0-based component index.
    inputs: tuple[int, ...]  # 0-based component indices, slower positive families.
    rows: tuple[int, ...]  # coupling rows made to vanish.
    coefficients: np.ndarray  # linear row, len(inputs)
    guess: np.ndarray  # -Q^{-1} L, (len(rows), len(inputs))


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    k: int
    m: int
    maps: tuple[FeedbackMap, ...]  # ascending target
    class_b: ClassBReport
    coupling: BoundaryCoupling | None = None  # set for nonlinear laws
    # target -> positions a_{i,target}(1), aligned with map.inputs (linear case)
    sample_positions: dict[int, np.ndarray] = field(default_factory=dict)
    ramps: object | None = None  # RampSet, nonlinear case
    delta: float | None = None

    @property
    def is_nonlinear(self) -> bool:
        return self.coupling is not None and not self.coupling.is_linear

    @property
    def targets(self) -> tuple[int, ...]:
        return tuple(fm.target for fm in self.maps)

    @property
    def uncontrolled(self) -> tuple[int, ...]:
        controlled = set(self.targets)
        return tuple(j for j in range(self.k, self.k + self.m) if j not in controlled)

    def map_for(self, target: int) -> FeedbackMap:
        for fm in self.maps:
            if fm.target == target:
                return fm
        raise KeyError(f"component {target + 1} has no feedback map")

    def with_sampling(self, positions: dict[int, np.ndarray]) -> "FeedbackLaw":
        return replace(self, sample_positions=positions)

    def with_ramps(self, ramps, delta: float) -> "FeedbackLaw":
        return replace(self, ramps=ramps, delta=delta)

    def evaluate(self, target: int, inputs: np.ndarray) -> np.ndarray:
        """M_target on a batch of sampled inputs, shape (N, len(map.inputs)) -> (N,)."""
        fm = self.map_for(target)
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if not fm.inputs:
            return np.zeros(inputs.shape[0])
        if not self.is_nonlinear:
            return inputs @ fm.coefficients
        return _newton_solve(self.coupling, fm, inputs)[:, 0]

    def complete(self, v_plus: np.ndarray, first_target: int | None = None) -> np.ndarray:
        """
        Overwrite every controlled entry of the x=0 trace v_+ (length m), from
        first_target upward, with its map applied to the entries below it.
        """
        v = np.array(v_plus, dtype=float, copy=True)
        for fm in self.maps:
            if first_target is not None and fm.target < first_target:
                continue
            inputs = v[[i - self.k for i in fm.inputs]]
            v[fm.target - self.k] = self.evaluate(fm.target, inputs[None, :])[0]
        return v

    def gradient(self, target: int, inputs: np.ndarray) -> np.ndarray:
        """dM_target / d inputs, shape (N, len(map.inputs))."""
        fm = self.map_for(target)
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if not fm.inputs or not self.is_nonlinear:
            return np.broadcast_to(fm.coefficients, inputs.shape).copy()
        u = _newton_solve(self.coupling, fm, inputs)
        v = np.concatenate([inputs, u], axis=1)
        jac = self.coupling.jacobian(v)[:, list(fm.rows), :]
        width = inputs.shape[1]
        j_first, j_u = jac[:, :, :width], jac[:, :, width:]
        return -np.linalg.solve(j_u, j_first)[:, 0, :]


def _elimination_steps(k: int, m: int):
    # Step s zeroes the last s rows using the last s columns.
    for s in range(1, min(m, k) + 1):
        target = m + k - s
        yield s, target, tuple(range(k, target)), tuple(range(k - s, k))


def synthesize_linear(matrix, require_full_block: bool | None = None) -> FeedbackLaw:
    """
    Gaussian elimination of the coupling rows from the bottom up. Step s:
    R = last s rows, split into L (first m-s columns) and Q (last s columns);
    u = -Q^{-1} L v and the first row of -Q^{-1} L is the map of the first
    unknown. The step with m - s = 0 gives the zero map.

    When m >= k the last step uses the full trailing k x k block, which must
    be invertible even though the class range stops at min(m-1, k); this is
    the default. For m < k the bottom map is zero by convention and no block
    is inverted for it.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    k, m = matrix.shape
    if require_full_block is None:
        require_full_block = m >= k
    report = check_class_B(matrix, require_full_block=require_full_block)
    maps = []
    for s, target, inputs, rows in _elimination_steps(k, m):
        width = m - s
        if width > 0 or require_full_block:
            q_block = matrix[k - s :, width:]
            ratio = _sigma_ratio(q_block)
            if ratio < SINGULAR_RATIO:
                raise SingularSubmatrix(s, ratio)
        if width == 0:
            guess = np.zeros((s, 0))
        else:
            guess = -np.linalg.solve(q_block, matrix[k - s :, :width])
        coef = guess[0].copy()
        maps.append(
            FeedbackMap(
                target=target, inputs=inputs, rows=rows, coefficients=coef, guess=guess
            )
        )
    maps.sort(key=lambda fm: fm.target)
    logger.debug(
        "synthesized "
        + ", ".join(f"w{fm.target + 1} <- {fm.coefficients.tolist()}" for fm in maps)
    )
    return FeedbackLaw(k=k, m=m, maps=tuple(maps), class_b=report)


def synthesize_nonlinear(
    coupling: BoundaryCoupling, anchor=None, radius: float | None = None, **kwargs
) -> FeedbackLaw:
    """
    Local maps M_i for a nonlinear coupling, evaluated by damped Newton on
    the eliminated rows starting from the linearized solution. The class-B
    tests use the Jacobian at 0.
    """
    linear = synthesize_linear(coupling.jacobian(np.zeros(coupling.m)), **kwargs)
    if anchor is not None and radius is not None:
        size = float(np.max(np.abs(anchor)))
        if size >= radius:
            raise NoConvergence(
                f"boundary trace {size:.3e} is outside the smallness radius {radius:.3e}"
            )
    return replace(linear, coupling=coupling)


def _newton_solve(coupling: BoundaryCoupling, fm: FeedbackMap, first: np.ndarray) -> np.ndarray:
    """Unknowns u (N, s) with the rows of B(first, u) equal to zero."""
    rows = list(fm.rows)
    width = first.shape[1]
    u = first @ fm.guess.T

    def residual(u_):
        return coupling.evaluate(np.concatenate([first, u_], axis=1))[:, rows]

    r = residual(u)
    norm = np.max(np.abs(r), axis=1)
    for _ in range(NEWTON_MAX_ITER):
        if np.all(norm < NEWTON_TOL):
            return u
        jac = coupling.jacobian(np.concatenate([first, u], axis=1))[:, rows, width:]
        try:
            delta = np.linalg.solve(jac, -r[..., None])[..., 0]
        except np.linalg.LinAlgError as e:
            raise NoConvergence(f"singular Newton Jacobian for w{fm.target + 1}") from e
        alpha = np.ones(first.shape[0])
        pending = norm >= NEWTON_TOL
        for _ in range(NEWTON_MAX_HALVINGS):
            trial = u + alpha[:, None] * delta
            r_trial = residual(trial)
            n_trial = np.max(np.abs(r_trial), axis=1)
            accept = pending & (n_trial < norm)
            u[accept] = trial[accept]
            r[accept] = r_trial[accept]
            norm[accept] = n_trial[accept]
            pending &= ~accept
            if not np.any(pending):
                break
            alpha[pending] *= 0.5
        if np.any(pending):
            break
    if np.all(norm < NEWTON_TOL):
        return u
    raise NoConvergence(
        f"Newton for w{fm.target + 1} stalled at residual {np.max(norm):.3e}"
    )
