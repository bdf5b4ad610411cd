"""Rank-constrained one-vs-all ridge training.

The model is a linear classifier over concepts: given TF-IDF rows X (n x p)
and one class per row, we minimize

    0.5 * ||Y - X W^T - 1 b^T||_F^2 + 0.5 * ridge * ||W||_F^2
    subject to rank(W) = r,

where Y is the n x K one-hot label matrix. For fixed W the optimal offsets
are b = class_means - W mu, which folds the offsets away and leaves a
reduced-rank regression on the column-centered matrices Xc and Yc. Writing
C = Xc^T Xc + ridge*I, the optimal W is the rank-r truncation of the full
ridge solution and factors as W = H diag(sigma) Phi with H (K x r,
orthonormal columns), sigma the singular values of W, and Phi (r x p,
orthonormal rows). Phi is the crosslingual embedding map.

Everything is computed matrix-free:

1. The top-r eigenpairs of the K x K operator
       G u = Yc^T Xc C^{-1} Xc^T Yc u
   give the left singular subspace of W. Each application is one centered
   linear solve (blockwise Woodbury), and the eigensolver is Lanczos with
   full reorthogonalization.
2. The unnormalized embedding rows come from r more solves,
       Phi* = P^T Yc^T Xc C^{-1}, solved row by row in eigenvalue order.
3. A dense r x r eigendecomposition of Phi* Phi*^T = Q L Q^T rotates the
   factors into canonical form: H = P Q, sigma = sqrt(L),
   Phi = diag(sigma)^{-1} Q^T Phi*.

``direct_fit`` recomputes the same factorization densely (Cholesky plus a
full SVD) and exists as an independent check for small problems.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .corpus import SparseVector
from .linop import (
    CenteredGramOperator,
    CsrMatrix,
    SolverTolerances,
    WoodburyBlockSolver,
    eigensolve_topk,
)

log = logging.getLogger(__name__)


class RankDeficiencyError(RuntimeError):
    """The requested rank exceeds what the training data supports."""

    def __init__(self, requested: int, achievable: int):
        super().__init__(
            f"requested rank {requested}, but the label/feature cross-covariance "
            f"supports at most {achievable}"
        )
        self.requested = requested
        self.achievable = achievable


@dataclass(frozen=True)
class TrainSet:
    """Vectorized training rows with one class label per row.

    x rows are unit-norm TF-IDF vectors (zero rows are not allowed here,
    they must be dropped upstream), labels take values in [0, n_classes),
    col_means is the column mean of x and class_means the empirical class
    frequency vector.
    """

    x: CsrMatrix
    labels: np.ndarray
    n_classes: int
    col_means: np.ndarray
    class_means: np.ndarray

    @classmethod
    def build(cls, x: CsrMatrix, labels: Sequence[int], n_classes: int | None = None) -> "TrainSet":
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if x.n_rows != len(labels):
            raise ValueError("one label per matrix row required")
        if x.n_rows < 2:
            raise ValueError("need at least two training rows")
        if len(labels) and labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        k = int(labels.max()) + 1 if n_classes is None else int(n_classes)
        if labels.max() >= k:
            raise ValueError("label out of range")
        counts = np.diff(x.row_offsets)
        if np.any(counts == 0):
            raise ValueError("zero rows must be dropped before training")
        spm = x.to_scipy()
        col_means = np.asarray(spm.sum(axis=0)).ravel() / x.n_rows
        class_means = np.bincount(labels, minlength=k).astype(np.float64) / x.n_rows
        return cls(x, labels, k, col_means, class_means)

    @property
    def n_rows(self) -> int:
        return self.x.n_rows

    @property
    def n_features(self) -> int:
        return self.x.n_cols


@dataclass(frozen=True)
class FitConfig:
    ridge: float
    rank: int
    tol: SolverTolerances = SolverTolerances()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ridge <= 0:
            raise ValueError("ridge must be positive")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")


@dataclass
class FitDiagnostics:
    eig_iterations: int = 0
    eig_converged: bool = True
    eig_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cg_iterations: int = 0
    cg_truncated: bool = False


@dataclass
class FitResult:
    """W = class_directions @ diag(singular_values) @ projection, plus offsets.

    class_directions is K x r with orthonormal columns, projection is r x p
    with orthonormal rows, singular_values is nonincreasing.
    gram_eigenvalues are the top eigenvalues of the K x K solve operator
    (the squared singular values of the whitened cross-covariance), kept for
    diagnostics and for checking against the dense route.
    """

    class_directions: np.ndarray
    singular_values: np.ndarray
    projection: np.ndarray
    offsets: np.ndarray
    gram_eigenvalues: np.ndarray
    config: FitConfig
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    def weights(self) -> np.ndarray:
        """Materialize W (K x p). Dense, use only on small problems."""
        return (self.class_directions * self.singular_values) @ self.projection


class ClassifierGramOperator:
    """The K x K map u -> Yc^T Xc C^{-1} Xc^T Yc u, applied matrix-free.

    Multiplication by Yc^T and Yc reduces to label-indexed gathers and
    bincount sums; the inner solve goes through a shared WoodburyBlockSolver
    (or plain conjugate gradients when no block structure is given).
    """

    def __init__(
        self,
        train: TrainSet,
        ridge: float,
        tol: SolverTolerances,
        blocks: Sequence[tuple[int, int]] | None = None,
    ):
        self.train = train
        self.op = CenteredGramOperator(train.x, ridge)
        self._solver = WoodburyBlockSolver(
            self.op,
            blocks if blocks is not None else [(0, train.n_features)],
            tol,
        )

    @property
    def dim(self) -> int:
        return self.train.n_classes

    @property
    def cg_iterations(self) -> int:
        return self._solver.total_cg_iterations

    @property
    def cg_truncated(self) -> bool:
        return self._solver.truncated

    def rhs_for(self, u: np.ndarray) -> np.ndarray:
        """Xc^T Yc u, the right-hand side of the inner system."""
        t = u[self.train.labels]  # Y u
        w = self.op._sp_t @ t
        w -= (self.train.n_rows * float(self.train.class_means @ u)) * self.op.col_means
        return w

    def project_back(self, x: np.ndarray) -> np.ndarray:
        """Yc^T Xc x for a feature-space vector x."""
        s = self.op._sp @ x
        s -= float(self.op.col_means @ x)
        return np.bincount(self.train.labels, weights=s, minlength=self.train.n_classes)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._solver.solve(rhs)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got shape {u.shape}")
        return self.project_back(self.solve(self.rhs_for(u)))


def classifier_gram_apply(
    train: TrainSet,
    ridge: float,
    tol: SolverTolerances,
    blocks: Sequence[tuple[int, int]] | None = None,
) -> ClassifierGramOperator:
    """Build the operator; call the result on K-vectors."""
    return ClassifierGramOperator(train, ridge, tol, blocks)


def _as_ranges(space) -> list[tuple[int, int]]:
    if space is None:
        return []
    if hasattr(space, "block_ranges"):
        return space.block_ranges()
    return [(int(lo), int(hi)) for lo, hi in space]


_RANK_EPS = 1e-12  # relative floor under which a factor eigenvalue counts as zero


def _canonical_factors(
    left: np.ndarray, phi_star: np.ndarray, requested_rank: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rotate (left, Phi*) into H, sigma, Phi with orthonormal Phi rows."""
    gram = phi_star @ phi_star.T
    lam, q = np.linalg.eigh((gram + gram.T) / 2.0)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    q = q[:, order]
    achievable = int(np.sum(lam > _RANK_EPS * max(lam[0], 0.0)))
    if lam[0] <= 0.0 or achievable < requested_rank:
        raise RankDeficiencyError(requested_rank, achievable)
    sigma = np.sqrt(lam)
    directions = left @ q
    projection = (q.T @ phi_star) / sigma[:, None]
    return directions, sigma, projection


def compute_offsets(
    class_directions: np.ndarray,
    singular_values: np.ndarray,
    projection: np.ndarray,
    train: TrainSet,
) -> np.ndarray:
    """Optimal per-class offsets b = class_means - W col_means."""
    return train.class_means - class_directions @ (singular_values * (projection @ train.col_means))


def fit(train: TrainSet, space, cfg: FitConfig) -> FitResult:
    """Train the rank-constrained classifier with iterative solvers only.

    ``space`` supplies the per-language column blocks (a FeatureSpace or a
    list of (lo, hi) ranges); pass None to solve without block structure.
    Raises RankDeficiencyError when the data cannot support cfg.rank.
    """
    rank = cfg.rank
    if rank > min(train.n_classes, train.n_features):
        raise RankDeficiencyError(rank, min(train.n_classes, train.n_features))
    ranges = _as_ranges(space) or None
    gram = ClassifierGramOperator(train, cfg.ridge, cfg.tol, ranges)
    eig = eigensolve_topk(gram, train.n_classes, rank, cfg.tol, cfg.seed)
    if not eig.converged:
        log.warning(
            "eigensolver truncated after %d applications (worst residual %.3g)",
            eig.iterations,
            float(eig.residuals.max()),
        )
    log.info(
        "top eigenvalues: %s ... %s (%d operator applications)",
        ", ".join(f"{v:.4g}" for v in eig.values[:3]),
        f"{eig.values[-1]:.4g}",
        eig.iterations,
    )
    # unnormalized embedding rows, one centered solve per eigen-direction,
    # in eigenvalue order for reproducibility
    phi_star = np.zeros((rank, train.n_features))
    for i in range(rank):
        phi_star[i] = gram.solve(gram.rhs_for(eig.vectors[:, i]))
    directions, sigma, projection = _canonical_factors(eig.vectors, phi_star, rank)
    offsets = compute_offsets(directions, sigma, projection, train)
    log.info(
        "fit done: rank %d, sigma in [%.4g, %.4g], %d inner CG iterations%s",
        rank,
        float(sigma[-1]),
        float(sigma[0]),
        gram.cg_iterations,
        " (some truncated)" if gram.cg_truncated else "",
    )
    return FitResult(
        class_directions=directions,
        singular_values=sigma,
        projection=projection,
        offsets=offsets,
        gram_eigenvalues=eig.values,
        config=cfg,
        diagnostics=FitDiagnostics(
            eig_iterations=eig.iterations,
            eig_converged=eig.converged,
            eig_residuals=eig.residuals,
            cg_iterations=gram.cg_iterations,
            cg_truncated=gram.cg_truncated,
        ),
    )


_DIRECT_FIT_LIMIT = 10**6  # n * p guard for the dense route


def direct_fit(train: TrainSet, cfg: FitConfig) -> FitResult:
    """Dense reference implementation of ``fit`` (for small problems).

    Centers X and Y explicitly, factors C = Xc^T Xc + ridge*I by Cholesky,
    takes the full SVD of Yc^T Xc L^{-T} and truncates it to cfg.rank. The
    iterative path never calls this; it exists so the two routes can be
    compared.
    """
    n, p = train.n_rows, train.n_features
    if n * p > _DIRECT_FIT_LIMIT:
        raise ValueError(f"direct_fit is limited to n*p <= {_DIRECT_FIT_LIMIT}, got {n * p}")
    rank = cfg.rank
    if rank > min(train.n_classes, p):
        raise RankDeficiencyError(rank, min(train.n_classes, p))
    x = train.x.toarray()
    xc = x - x.mean(axis=0)
    y = np.zeros((n, train.n_classes))
    y[np.arange(n), train.labels] = 1.0
    yc = y - y.mean(axis=0)

    c = xc.T @ xc + cfg.ridge * np.eye(p)
    chol = np.linalg.cholesky(c)
    cross = yc.T @ xc  # K x p
    # whitened cross-covariance M = cross @ L^{-T}; M L^T = cross
    m = scipy.linalg.solve_triangular(chol, cross.T, lower=True).T
    left, svals, vt = np.linalg.svd(m, full_matrices=False)
    achievable = int(np.sum(svals > _RANK_EPS * max(svals[0], 0.0)))
    if achievable < rank:
        raise RankDeficiencyError(rank, achievable)
    left_r = left[:, :rank]
    svals_r = svals[:rank]
    vt_r = vt[:rank]
    # Phi* = Sigma_r V_r^T L^{-1}, solved as L^T z = V_r^T
    phi_star = svals_r[:, None] * scipy.linalg.solve_triangular(chol.T, vt_r.T, lower=False).T

    gram = phi_star @ phi_star.T
    lam, q = np.linalg.eigh((gram + gram.T) / 2.0)
    order = np.argsort(lam)[::-1]
    lam, q = lam[order], q[:, order]
    if lam[0] <= 0.0 or np.sum(lam > _RANK_EPS * lam[0]) < rank:
        raise RankDeficiencyError(rank, int(np.sum(lam > _RANK_EPS * max(lam[0], 0.0))))
    sigma = np.sqrt(lam)
    directions = left_r @ q
    projection = (q.T @ phi_star) / sigma[:, None]
    offsets = compute_offsets(directions, sigma, projection, train)
    return FitResult(
        class_directions=directions,
        singular_values=sigma,
        projection=projection,
        offsets=offsets,
        gram_eigenvalues=svals_r**2,
        config=cfg,
    )


def classify(x: SparseVector, result: FitResult) -> int:
    """Winner-takes-all class of a vectorized document; ties pick the
    smallest class index."""
    if x.dim != result.projection.shape[1]:
        raise ValueError("vector lives in a different feature space")
    embedded = result.projection[:, x.indices] @ x.values
    scores = result.class_directions @ (result.singular_values * embedded) + result.offsets
    return int(np.argmax(scores))


def ridge_objective(train: TrainSet, result: FitResult) -> float:
    """Value of the training objective at the fitted (W, b). Materializes
    dense X and Y, small problems only."""
    x = train.x.toarray()
    n = train.n_rows
    y = np.zeros((n, train.n_classes))
    y[np.arange(n), train.labels] = 1.0
    w = result.weights()
    resid = y - x @ w.T - np.outer(np.ones(n), result.offsets)
    return 0.5 * float(np.sum(resid**2)) + 0.5 * result.config.ridge * float(np.sum(w**2))


@dataclass
class CrossValidation:
    best_ridge: float
    scores: list[tuple[float, float]]  # (ridge, validation precision at 1)


def cross_validate_lambda(
    train_builder: Callable[[], tuple[TrainSet, object]],
    evaluate: Callable[[FitResult], float],
    grid: Sequence[float],
    cfg_template: FitConfig,
) -> CrossValidation:
    """Fit once per ridge value and keep the one with the best validation
    precision at 1 (ties go to the smaller ridge).

    ``train_builder`` returns (TrainSet, block source) and runs once, the
    training set does not depend on the ridge. ``evaluate`` maps a FitResult
    to validation precision; the caller wires it to the split's validation
    queries.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("empty ridge grid")
    train, space = train_builder()
    scores: list[tuple[float, float]] = []
    for ridge in grid:
        cfg = FitConfig(ridge=ridge, rank=cfg_template.rank, tol=cfg_template.tol, seed=cfg_template.seed)
        result = fit(train, space, cfg)
        precision = float(evaluate(result))
        log.info("ridge %.4g: validation precision@1 = %.4f", ridge, precision)
        scores.append((ridge, precision))
    best_ridge = max(scores, key=lambda t: (t[1], -t[0]))[0]
    return CrossValidation(best_ridge=best_ridge, scores=scores)
