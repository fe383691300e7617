"""Template-specific linear SVMs with class-balanced squared-hinge loss.

Each template gets its own one-vs-rest model: the template's encodings are
the positives, a large pool of other encodings the negatives. The objective
is

    1/2 |w|^2 + lambda_+ sum_pos max(0, 1 - w.x)^2 + lambda_- sum_neg max(0, 1 + w.x)^2

with the bias folded into ``w`` through a constant feature of 1 (so the bias
is regularized too). The default solver is a finite Newton method on the
primal; randomized primal coordinate descent is available as ``method="cd"``.
Both decrease the objective monotonically.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import DimMismatchError, MediaEncoding, Template, TdffError

logger = logging.getLogger(__name__)


class NonConvergenceError(TdffError):
    pass


class EmptyNegativesError(TdffError):
    pass


class NegativeRole(str, enum.Enum):
    VERIFICATION_PROBE = "verification-probe"
    IDENTIFICATION_PROBE = "identification-probe"
    GALLERY_TEMPLATE = "gallery-template"


@dataclass(frozen=True)
class SolverConfig:
    C: float = 10.0
    tolerance: float = 1e-4
    max_iterations: int = 1000
    seed: int = 0
    method: str = "newton"
    raise_on_nonconvergence: bool = True

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.method not in ("newton", "cd"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray = field(repr=False)
    bias: float
    owner_template: str
    # solver diagnostics, not persisted
    n_iter: int = field(default=0, compare=False)
    converged: bool = field(default=True, compare=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SvmModel):
            return NotImplemented
        return (self.owner_template == other.owner_template
                and self.bias == other.bias
                and np.array_equal(self.weights, other.weights))


def class_weights(n_pos: int, n_neg: int, C: float) -> tuple[float, float]:
    """Per-sample penalties that give both classes the same total weight."""
    if n_pos < 1 or n_neg < 1:
        raise ValueError(f"need at least one sample per class, got {n_pos}/{n_neg}")
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    total = n_pos + n_neg
    return C * total / (2 * n_pos), C * total / (2 * n_neg)


@dataclass(frozen=True)
class TrainingProblem:
    positives: np.ndarray = field(repr=False)   # (N_+, dim)
    negatives: np.ndarray = field(repr=False)   # (N_-, dim)
    lambda_pos: float
    lambda_neg: float
    owner_template: str = ""

    @classmethod
    def build(cls, positives, negatives, C: float, owner_template: str = "") -> "TrainingProblem":
        pos = _as_matrix(positives)
        neg = _as_matrix(negatives)
        if pos.shape[1] != neg.shape[1]:
            raise DimMismatchError(f"positives have dim {pos.shape[1]}, negatives {neg.shape[1]}")
        lp, ln = class_weights(pos.shape[0], neg.shape[0], C)
        return cls(pos, neg, lp, ln, owner_template)

    @property
    def n_pos(self) -> int:
        return self.positives.shape[0]

    @property
    def n_neg(self) -> int:
        return self.negatives.shape[0]

    def design(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Augmented samples (with trailing 1), labels and per-sample costs."""
        X = np.vstack([self.positives, self.negatives])
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        y = np.concatenate([np.ones(self.n_pos), -np.ones(self.n_neg)])
        cost = np.concatenate([np.full(self.n_pos, self.lambda_pos),
                               np.full(self.n_neg, self.lambda_neg)])
        return X, y, cost


def _as_matrix(encodings) -> np.ndarray:
    if isinstance(encodings, np.ndarray):
        m = np.asarray(encodings, dtype=np.float64)
    else:
        m = np.array([e.vector if isinstance(e, MediaEncoding) else e for e in encodings],
                     dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError(f"expected a non-empty (n, dim) sample matrix, got shape {m.shape}")
    return m


def build_negative_set(role: NegativeRole, target: Template, training: Iterable[Template],
                       gallery: Iterable[Template] = ()) -> list[MediaEncoding]:
    """Negatives for the SVM of ``target``.

    Probe-side models (verification and identification) use every training
    encoding; gallery models additionally use every other gallery template.
    ``target`` never contributes to its own negatives.
    """
    role = NegativeRole(role)
    sources = [t for t in training if t.template_id != target.template_id]
    if role is NegativeRole.GALLERY_TEMPLATE:
        sources = [t for t in gallery if t.template_id != target.template_id] + sources
    negatives = [e for t in sources for e in t.encodings]
    if not negatives:
        raise EmptyNegativesError(f"no negatives for template {target.template_id} ({role.value})")
    return negatives


def primal_objective(w: np.ndarray, X: np.ndarray, y: np.ndarray, cost: np.ndarray) -> float:
    """Objective value at augmented weights ``w`` for augmented samples ``X``."""
    slack = np.maximum(0.0, 1.0 - y * (X @ w))
    return 0.5 * float(w @ w) + float(cost @ (slack * slack))


def primal_gradient(w: np.ndarray, X: np.ndarray, y: np.ndarray, cost: np.ndarray) -> np.ndarray:
    slack = np.maximum(0.0, 1.0 - y * (X @ w))
    return w - 2.0 * X.T @ (cost * y * slack)


def primal_cd(X: np.ndarray, y: np.ndarray, cost: np.ndarray, tol: float, max_iter: int,
              rng: np.random.Generator,
              callback: Callable[[int, np.ndarray], None] | None = None,
              ) -> tuple[np.ndarray, int, bool]:
    """Coordinate descent on the primal squared-hinge objective.

    Each coordinate takes a Newton step on its one-dimensional restriction
    (generalized second derivative), backtracked until
    f(w + z e_j) - f(w) <= -sigma z^2, so the objective never increases.
    Coordinates are visited in a fresh random order every epoch; stops once
    the largest partial derivative seen during an epoch is below ``tol``.

    Returns (w, epochs, converged).
    """
    n, d = X.shape
    Xt = np.ascontiguousarray(X.T)
    cy = cost * y
    w = np.zeros(d)
    slack = 1.0 - y * (X @ w)
    sigma, shrink, max_halvings = 0.01, 0.5, 60

    converged = False
    epoch = 0
    for epoch in range(1, max_iter + 1):
        max_viol = 0.0
        for j in rng.permutation(d).tolist():
            xj = Xt[j]
            active = slack > 0.0
            sa = np.where(active, slack, 0.0)
            wj = w[j]
            grad = wj - 2.0 * float(cy @ (xj * sa))
            if abs(grad) > max_viol:
                max_viol = abs(grad)
            if grad == 0.0:
                continue
            hess = 1.0 + 2.0 * float(cost @ np.where(active, xj * xj, 0.0))
            z = -grad / hess
            yx = y * xj
            for _ in range(max_halvings):
                trial = slack - z * yx
                tp = np.maximum(trial, 0.0)
                # (tp - sa)(tp + sa) keeps the loss change accurate for tiny z
                change = z * wj + 0.5 * z * z + float(cost @ ((tp - sa) * (tp + sa)))
                if change <= -sigma * z * z:
                    w[j] = wj + z
                    slack = trial
                    break
                z *= shrink
        if callback is not None:
            callback(epoch, w)
        if max_viol < tol:
            converged = True
            break
    return w, epoch, converged


def _line_search(w: np.ndarray, d: np.ndarray, o: np.ndarray, delta: np.ndarray,
                 y: np.ndarray, cost: np.ndarray) -> float:
    """Exact minimizer over t >= 0 of f(w + t d).

    f along the ray is a convex piecewise quadratic; its derivative
    A + B t is linear between the points where a sample's hinge switches,
    so the breakpoints are walked in order, toggling each sample's share.
    """
    m = 1.0 - y * o          # slack at t = 0
    yd = y * delta           # slack decreases at rate yd
    with np.errstate(divide="ignore", invalid="ignore"):
        tb = np.where(yd != 0.0, m / yd, np.inf)
    # active just after t = 0
    active = (m > 0.0) | ((m == 0.0) & (yd < 0.0))
    ca = np.where(active, cost, 0.0)
    A = float(w @ d) - 2.0 * float(ca @ (yd * m))
    B = float(d @ d) + 2.0 * float(ca @ (delta * delta))
    order = [i for i in np.argsort(tb, kind="stable").tolist() if 0.0 < tb[i] < np.inf]
    for i in order:
        t = tb[i]
        if A + B * t >= 0.0:
            break
        # sample i changes state at t
        s = 1.0 if not active[i] else -1.0
        active[i] = not active[i]
        A -= s * 2.0 * cost[i] * yd[i] * m[i]
        B += s * 2.0 * cost[i] * delta[i] * delta[i]
    return max(-A / B, 0.0)


def primal_newton(X: np.ndarray, y: np.ndarray, cost: np.ndarray, tol: float, max_iter: int,
                  callback: Callable[[int, np.ndarray], None] | None = None,
                  ) -> tuple[np.ndarray, int, bool]:
    """Finite Newton method for the squared-hinge primal.

    Each iteration solves the regularized least-squares problem on the
    samples currently inside the margin and moves towards its solution by
    an exact line search, so the objective never increases. Stops once the
    largest gradient entry is below ``tol``.

    Returns (w, iterations, converged).
    """
    n, d = X.shape
    w = np.zeros(d)
    eye = np.eye(d)
    for it in range(1, max_iter + 1):
        o = X @ w
        slack = 1.0 - y * o
        active = slack > 0.0
        ca = np.where(active, cost, 0.0)
        grad = w - 2.0 * X.T @ (ca * y * slack)
        if np.max(np.abs(grad)) < tol:
            return w, it - 1, True
        Xa = X[active]
        H = eye + 2.0 * (Xa.T * cost[active]) @ Xa
        target = np.linalg.solve(H, 2.0 * Xa.T @ (cost[active] * y[active]))
        step = target - w
        t = _line_search(w, step, o, X @ step, y, cost)
        if t == 0.0:
            break
        w = w + t * step
        if callback is not None:
            callback(it, w)
    o = X @ w
    slack = np.maximum(1.0 - y * o, 0.0)
    grad = w - 2.0 * X.T @ (cost * y * slack)
    return w, max_iter, bool(np.max(np.abs(grad)) < tol)


def train_template_svm(problem: TrainingProblem, config: SolverConfig,
                       callback: Callable[[int, np.ndarray], None] | None = None) -> SvmModel:
    """Fit the template-specific SVM.

    ``callback(iteration, augmented_w)`` is called after every outer pass
    (an epoch for coordinate descent, a Newton step otherwise).
    """
    X, y, cost = problem.design()
    if config.method == "newton":
        w, n_iter, converged = primal_newton(X, y, cost, config.tolerance, config.max_iterations, callback)
    else:
        rng = np.random.default_rng(config.seed)
        w, n_iter, converged = primal_cd(X, y, cost, config.tolerance, config.max_iterations, rng, callback)
    if not converged:
        msg = (f"template {problem.owner_template!r}: no convergence after {n_iter} passes "
               f"(C={config.C}, tolerance={config.tolerance})")
        if config.raise_on_nonconvergence:
            raise NonConvergenceError(msg)
        logger.warning(msg)
    if not np.all(np.isfinite(w)):
        raise NonConvergenceError(f"template {problem.owner_template!r}: non-finite weights")
    return SvmModel(w[:-1].copy(), float(w[-1]), problem.owner_template, n_iter, converged)


def train_for_template(target: Template, negatives: Sequence[MediaEncoding],
                       config: SolverConfig) -> SvmModel:
    problem = TrainingProblem.build(target.encodings, negatives, config.C, target.template_id)
    return train_template_svm(problem, config)


def decision_value(model: SvmModel, x) -> float:
    """Raw signed margin w.x + b."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise DimMismatchError(f"model {model.owner_template} has dim {model.dim}, input {x.shape}")
    return float(model.weights @ x) + model.bias


def decision_values(model: SvmModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise DimMismatchError(f"model {model.owner_template} has dim {model.dim}, input {X.shape}")
    return X @ model.weights + model.bias
