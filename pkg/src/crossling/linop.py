"""Sparse storage and matrix-free iterative linear algebra.

The trainer never forms a dense Gram matrix. Everything runs through
matrix-vector products with a sparse document matrix X:

* ``CenteredGramOperator`` applies ``Xc^T Xc + ridge*I`` where ``Xc`` is the
  column-mean-centered X, using the identity
  ``Xc^T Xc = X^T X - n * mu mu^T`` with ``mu`` the column means.
* ``conjugate_gradient`` solves symmetric positive definite systems given
  only an apply callback.
* ``WoodburyBlockSolver`` exploits the block-diagonal structure of
  ``X^T X + ridge*I`` when every row of X has its support inside a single
  column block (one block per language), reducing the centered solve to
  independent per-block solves plus a rank-1 correction.
* ``eigensolve_topk`` extracts the top of a symmetric PSD spectrum by a
  Lanczos scheme with full reorthogonalization.

All vectors and matrices are float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class NumericalBreakdownError(RuntimeError):
    """An iterative solve produced non-finite values or lost definiteness."""


@dataclass(frozen=True)
class SolverTolerances:
    """Stopping rules for the iterative solvers.

    cg_eps is a relative residual threshold, ||A x - b|| <= cg_eps * ||b||.
    eig_eps bounds the Ritz residual of every returned eigenpair relative to
    the largest returned eigenvalue. The max_iter fields cap operator
    applications; hitting the cap truncates (with a flag), it does not raise.
    """

    cg_eps: float = 0.01
    cg_max_iter: int = 500
    eig_eps: float = 0.1
    eig_max_iter: int = 250

    def __post_init__(self) -> None:
        if self.cg_eps <= 0 or self.eig_eps <= 0:
            raise ValueError("tolerances must be positive")
        if self.cg_max_iter < 1 or self.eig_max_iter < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row matrix (float64 values, int64 indices).

    row_offsets has length n_rows + 1 and is nondecreasing, col_indices are
    strictly increasing within each row, values are finite.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        offs = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_offsets", offs)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if offs.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if offs[0] != 0 or offs[-1] != len(vals) or np.any(np.diff(offs) < 0):
            raise ValueError("row_offsets must grow from 0 to nnz")
        if cols.shape != vals.shape:
            raise ValueError("col_indices and values must have equal length")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        # strict increase within each row; row boundaries may decrease
        if len(cols) > 1:
            row_of = np.repeat(np.arange(self.n_rows), np.diff(offs))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(np.diff(cols)[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")

    @property
    def nnz(self) -> int:
        return len(self.values)

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[np.ndarray, np.ndarray]], n_cols: int) -> "CsrMatrix":
        """Stack (indices, values) row pairs into a matrix."""
        offs = np.zeros(len(rows) + 1, dtype=np.int64)
        for i, (idx, _) in enumerate(rows):
            offs[i + 1] = offs[i] + len(idx)
        if rows:
            cols = np.concatenate([np.asarray(idx, dtype=np.int64) for idx, _ in rows])
            vals = np.concatenate([np.asarray(v, dtype=np.float64) for _, v in rows])
        else:
            cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0, dtype=np.float64)
        return cls(len(rows), n_cols, offs, cols, vals)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.n_rows, self.n_cols),
        )

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()


def matvec(a: CsrMatrix, u: np.ndarray) -> np.ndarray:
    """A @ u for a length-n_cols vector u."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (a.n_cols,):
        raise ValueError(f"expected vector of length {a.n_cols}, got shape {u.shape}")
    return a.to_scipy() @ u


def matvec_t(a: CsrMatrix, u: np.ndarray) -> np.ndarray:
    """A.T @ u for a length-n_rows vector u."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (a.n_rows,):
        raise ValueError(f"expected vector of length {a.n_rows}, got shape {u.shape}")
    return a.to_scipy().T @ u


class CenteredGramOperator:
    """Applies ``Xc^T Xc + ridge*I`` without forming it.

    ``Xc`` is X with every column shifted to zero mean, so
    ``Xc^T Xc = X^T X - n * mu mu^T`` and one application costs two sparse
    matvecs plus a rank-1 update.
    """

    def __init__(self, x: CsrMatrix, ridge: float):
        if ridge <= 0:
            raise ValueError("ridge must be positive")
        if x.n_rows < 1:
            raise ValueError("operator needs at least one row")
        self.x = x
        self.ridge = float(ridge)
        self.n_rows = x.n_rows
        self._sp = x.to_scipy()
        self._sp_t = self._sp.T.tocsr()
        self.col_means = np.asarray(self._sp.sum(axis=0)).ravel() / x.n_rows

    @property
    def dim(self) -> int:
        return self.x.n_cols

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return centered_apply(self, u)


def centered_apply(op: CenteredGramOperator, u: np.ndarray) -> np.ndarray:
    """(Xc^T Xc + ridge*I) @ u."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (op.dim,):
        raise ValueError(f"expected vector of length {op.dim}, got shape {u.shape}")
    xu = op._sp @ u
    out = op._sp_t @ xu
    out += op.ridge * u
    out -= (op.n_rows * (op.col_means @ u)) * op.col_means
    return out


@dataclass
class CgResult:
    x: np.ndarray
    iterations: int
    residual: float  # true relative residual of x, recomputed at exit
    converged: bool


def conjugate_gradient(
    apply: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: SolverTolerances,
) -> CgResult:
    """Solve A x = rhs for symmetric positive definite A, starting from zero.

    Stops once the relative residual drops to cg_eps; the reported residual
    is recomputed from a fresh operator application, and the solve restarts
    from the current iterate if recursion drift ate the claimed accuracy.
    Hitting cg_max_iter returns the best iterate seen with converged=False.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim != 1:
        raise ValueError("rhs must be a vector")
    norm_b = float(np.linalg.norm(rhs))
    if norm_b == 0.0:
        return CgResult(np.zeros_like(rhs), 0, 0.0, True)

    x = np.zeros_like(rhs)
    r = rhs.copy()
    iters = 0
    best_x = x.copy()
    best_rel = 1.0
    while True:
        p = r.copy()
        rs = float(r @ r)
        while iters < tol.cg_max_iter:
            ap = apply(p)
            iters += 1
            pap = float(p @ ap)
            if not np.isfinite(pap) or pap <= 0.0:
                raise NumericalBreakdownError(
                    f"conjugate gradient broke down at iteration {iters} (p^T A p = {pap})"
                )
            alpha = rs / pap
            x += alpha * p
            r -= alpha * ap
            rs_new = float(r @ r)
            if not np.isfinite(rs_new):
                raise NumericalBreakdownError(
                    f"non-finite residual at iteration {iters}"
                )
            rel = np.sqrt(rs_new) / norm_b
            if rel < best_rel:
                best_rel = rel
                best_x = x.copy()
            if rel <= tol.cg_eps:
                break
            beta = rs_new / rs
            rs = rs_new
            p = r + beta * p
        # verify the recursive residual against a true one
        r_true = rhs - apply(best_x)
        rel_true = float(np.linalg.norm(r_true)) / norm_b
        if rel_true <= tol.cg_eps:
            return CgResult(best_x, iters, rel_true, True)
        if iters >= tol.cg_max_iter:
            return CgResult(best_x, iters, rel_true, False)
        # drift: restart from the best iterate with its true residual
        x = best_x.copy()
        r = r_true
        best_rel = rel_true


def _check_blocks(blocks: Sequence[tuple[int, int]], dim: int) -> list[tuple[int, int]]:
    ranges = [(int(lo), int(hi)) for lo, hi in blocks]
    if not ranges:
        raise ValueError("need at least one column block")
    pos = 0
    for lo, hi in ranges:
        if lo != pos or hi <= lo:
            raise ValueError("blocks must be nonempty and partition the columns in order")
        pos = hi
    if pos != dim:
        raise ValueError(f"blocks cover {pos} columns, operator has {dim}")
    return ranges


class WoodburyBlockSolver:
    """Solves ``(Xc^T Xc + ridge*I) x = rhs`` through per-block systems.

    With every row of X supported inside one column block, the uncentered
    matrix ``B = X^T X + ridge*I`` is block diagonal, so a B-solve is a set
    of independent conjugate-gradient solves. Centering subtracts the rank-1
    term ``n * mu mu^T`` from B, and Sherman-Morrison gives

        (B - n mu mu^T)^{-1} rhs = B^{-1} rhs + eta (eta^T rhs),
        eta = sqrt(n / (1 - n mu^T B^{-1} mu)) * B^{-1} mu.

    In exact arithmetic ``1 - n mu^T B^{-1} mu`` is always positive (it is
    ``det`` of a positive definite Schur complement); if loose inner solves
    drive it nonpositive the solver falls back to plain conjugate gradients
    on the centered operator.
    """

    def __init__(
        self,
        op: CenteredGramOperator,
        blocks: Sequence[tuple[int, int]],
        tol: SolverTolerances,
    ):
        self.op = op
        self.tol = tol
        self.blocks = _check_blocks(blocks, op.dim)
        self.total_cg_iterations = 0
        self.truncated = False
        self._eta: np.ndarray | None = None
        self._fallback = False
        self._prepared = False
        self._sub: list[tuple[int, int, sp.csr_matrix, sp.csr_matrix] | None] = []
        self._split_rows()

    def _split_rows(self) -> None:
        x = self.op.x
        starts = np.array([lo for lo, _ in self.blocks] + [self.op.dim], dtype=np.int64)
        counts = np.diff(x.row_offsets)
        nonempty = counts > 0
        first = np.zeros(x.n_rows, dtype=np.int64)
        last = np.zeros(x.n_rows, dtype=np.int64)
        first[nonempty] = x.col_indices[x.row_offsets[:-1][nonempty]]
        last[nonempty] = x.col_indices[x.row_offsets[1:][nonempty] - 1]
        block_of_first = np.searchsorted(starts, first, side="right") - 1
        block_of_last = np.searchsorted(starts, last, side="right") - 1
        if np.any(block_of_first[nonempty] != block_of_last[nonempty]):
            bad = int(np.nonzero((block_of_first != block_of_last) & nonempty)[0][0])
            raise ValueError(f"row {bad} spans more than one column block")
        spx = self.op._sp
        for b, (lo, hi) in enumerate(self.blocks):
            rows = np.nonzero(nonempty & (block_of_first == b))[0]
            if len(rows) == 0:
                self._sub.append(None)  # block touches no rows, B block is ridge*I
                continue
            xb = spx[rows][:, lo:hi].tocsr()
            self._sub.append((lo, hi, xb, xb.T.tocsr()))

    def _solve_uncentered(self, rhs: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rhs)
        ridge = self.op.ridge
        for b, (lo, hi) in enumerate(self.blocks):
            sub = self._sub[b]
            part = rhs[lo:hi]
            if sub is None:
                out[lo:hi] = part / ridge
                continue
            _, _, xb, xbt = sub

            def apply_b(u: np.ndarray, _xb=xb, _xbt=xbt) -> np.ndarray:
                return _xbt @ (_xb @ u) + ridge * u

            res = conjugate_gradient(apply_b, part, self.tol)
            self.total_cg_iterations += res.iterations
            self.truncated = self.truncated or not res.converged
            out[lo:hi] = res.x
        return out

    def _prepare(self) -> None:
        self._prepared = True
        mu = self.op.col_means
        if not np.any(mu):
            self._eta = None  # nothing to correct, B is already the centered matrix
            return
        z = self._solve_uncentered(mu)
        denom = 1.0 - self.op.n_rows * float(mu @ z)
        if denom <= 0.0:
            self._fallback = True
            return
        self._eta = np.sqrt(self.op.n_rows / denom) * z

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape != (self.op.dim,):
            raise ValueError(f"expected vector of length {self.op.dim}, got shape {rhs.shape}")
        if not self._prepared:
            self._prepare()
        if self._fallback:
            res = conjugate_gradient(self.op, rhs, self.tol)
            self.total_cg_iterations += res.iterations
            self.truncated = self.truncated or not res.converged
            return res.x
        x = self._solve_uncentered(rhs)
        if self._eta is not None:
            x += self._eta * (self._eta @ rhs)
        return x


def block_solve(
    op: CenteredGramOperator,
    blocks: Sequence[tuple[int, int]],
    rhs: np.ndarray,
    tol: SolverTolerances,
) -> np.ndarray:
    """One-shot centered solve through WoodburyBlockSolver."""
    return WoodburyBlockSolver(op, blocks, tol).solve(rhs)


@dataclass
class EigenResult:
    vectors: np.ndarray  # dim x rank, orthonormal columns
    values: np.ndarray  # length rank, nonincreasing
    iterations: int  # operator applications spent
    converged: bool
    residuals: np.ndarray  # Ritz residual norms of the returned pairs


def _reorthonormalize(v: np.ndarray, basis: np.ndarray, rng: np.random.Generator) -> np.ndarray | None:
    """Return a unit vector orthogonal to the basis columns, or None if the
    space is exhausted. Falls back to fresh random directions on breakdown."""
    dim = len(v)
    for _ in range(5):
        norm = np.linalg.norm(v)
        if norm > 0:
            q = v / norm
            # two Gram-Schmidt passes keep orthogonality at machine precision
            for _pass in range(2):
                if basis.shape[1]:
                    q -= basis @ (basis.T @ q)
            norm_q = np.linalg.norm(q)
            if norm_q > 1e-8:
                return q / norm_q
        if basis.shape[1] >= dim:
            return None
        v = rng.standard_normal(dim)
    return None


def eigensolve_topk(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    rank: int,
    tol: SolverTolerances,
    seed: int,
) -> EigenResult:
    """Top eigenpairs of a symmetric PSD operator given only an apply callback.

    Lanczos iteration with full reorthogonalization: the Krylov basis V is
    kept explicitly orthonormal, the projected matrix T = V^T A V is
    eigendecomposed every step once rank basis vectors exist, and the run
    stops when every returned Ritz pair (theta_i, p_i) satisfies

        ||apply(p_i) - theta_i p_i|| <= eig_eps * theta_max.

    Residuals are evaluated exactly from the stored products A V, so no
    extra operator applications are spent on the check. A single Krylov
    chain carries at most one eigenvector per repeated eigenvalue, so the
    residual bound alone can settle on valid but incomplete pairs; once it
    first holds, a random probe direction is injected and the bound must
    survive a few further expansions before the run is accepted. On
    breakdown (invariant subspace found early) a fresh random direction is
    injected as well. Deterministic for a fixed seed.
    """
    if rank < 1 or rank > dim:
        raise ValueError(f"rank must be in [1, {dim}], got {rank}")
    rng = np.random.default_rng(seed)
    confirm_steps = 3
    max_dim = min(dim, max(tol.eig_max_iter, rank))
    basis = np.zeros((dim, max_dim))
    products = np.zeros((dim, max_dim))
    t = np.zeros((max_dim, max_dim))
    m = 0
    cand = rng.standard_normal(dim)
    theta = np.zeros(rank)
    ritz = np.zeros((0, rank))
    residuals = np.full(rank, np.inf)
    converged = False
    probes_left: int | None = None
    inject_probe = False
    while m < max_dim:
        q = _reorthonormalize(rng.standard_normal(dim) if inject_probe else cand, basis[:, :m], rng)
        inject_probe = False
        if q is None:
            break
        basis[:, m] = q
        w = np.asarray(apply(q), dtype=np.float64)
        if w.shape != (dim,) or not np.all(np.isfinite(w)):
            raise NumericalBreakdownError("operator returned a non-finite or misshaped vector")
        products[:, m] = w
        col = basis[:, : m + 1].T @ w
        t[: m + 1, m] = col
        t[m, : m + 1] = col
        m += 1
        if m >= rank:
            tm = t[:m, :m]
            vals, vecs = np.linalg.eigh((tm + tm.T) / 2.0)
            order = np.argsort(vals)[::-1][:rank]
            theta = vals[order]
            ritz = vecs[:, order]
            resid_mat = products[:, :m] @ ritz - (basis[:, :m] @ ritz) * theta
            residuals = np.linalg.norm(resid_mat, axis=0)
            if np.all(residuals <= tol.eig_eps * max(theta[0], 0.0)):
                if m >= dim:
                    # the basis spans the whole space, nothing can be missing
                    converged = True
                    break
                if probes_left is None:
                    probes_left = confirm_steps
                    inject_probe = True
                else:
                    probes_left -= 1
                    if probes_left == 0:
                        converged = True
                        break
            else:
                probes_left = None
        cand = w
    if m < rank:
        raise NumericalBreakdownError(
            f"could not build {rank} orthonormal directions in a dimension-{dim} space"
        )
    vectors = basis[:, :m] @ ritz
    return EigenResult(vectors, theta.copy(), m, converged, residuals.copy())
