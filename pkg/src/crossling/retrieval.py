"""Crosslingual retrieval scoring and evaluation.

Queries and candidates are embedding vectors. Two similarity measures are
supported: plain cosine, and CSLS, which penalizes hub candidates by
subtracting mean nearest-neighbor similarities on both sides:

    csls(q, c) = 2 * cos(q, c) - r_T(q) - r_S(c)

where r_T(q) is the mean cosine between q and its k_nn nearest candidates
and r_S(c) the mean cosine between c and its k_nn nearest queries. When
every r_T and r_S is identical the CSLS ordering reduces to the cosine
ordering.

Zero vectors have no direction, so the scalar ``cosine`` raises on them;
rankers instead force a -inf score (a zero candidate ranks last, a zero
query ranks every candidate equally). Score ties break by ascending
candidate id, which keeps rankings total and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

# candidate-block width for memory-bounded score computation
_BLOCK = 8192


class ZeroVectorError(ValueError):
    """Cosine similarity is undefined for zero vectors."""


class RetrievalError(ValueError):
    """Inconsistent pools, rankings or relevance data."""


@dataclass
class CandidatePool:
    """Candidate ids with their embedding vectors (ids unique)."""

    language: str
    ids: list[str]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise RetrievalError("one vector per candidate id required")
        if len(set(self.ids)) != len(self.ids):
            raise RetrievalError("candidate ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two nonzero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError("cosine needs two equally long vectors")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine of a zero vector is undefined")
    return float((u @ v) / (nu * nv))


def _unit_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized copy plus a mask of rows that were zero."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return m / safe[:, None], zero


def _top_k_mean(scores: np.ndarray, k: int) -> np.ndarray:
    """Row-wise mean of the k largest entries."""
    if k >= scores.shape[1]:
        return scores.mean(axis=1)
    part = np.partition(scores, scores.shape[1] - k, axis=1)
    return part[:, scores.shape[1] - k :].mean(axis=1)


def _hubness_terms(
    qn: np.ndarray, cn: np.ndarray, k_nn: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mean nearest-neighbor cosines r_T (per query) and r_S (per candidate),
    computed in candidate blocks so the full matrix never materializes."""
    n_q, n_c = qn.shape[0], cn.shape[0]
    r_t_top = np.full((n_q, 0), -np.inf)
    r_s = np.zeros(n_c)
    for lo in range(0, n_c, _BLOCK):
        hi = min(lo + _BLOCK, n_c)
        block = qn @ cn[lo:hi].T  # n_q x (hi - lo)
        r_s[lo:hi] = _top_k_mean(block.T, k_nn)
        merged = np.hstack([r_t_top, block])
        if merged.shape[1] > k_nn:
            part = np.partition(merged, merged.shape[1] - k_nn, axis=1)
            r_t_top = part[:, merged.shape[1] - k_nn :]
        else:
            r_t_top = merged
    return r_t_top.mean(axis=1), r_s


def csls_scores(queries: np.ndarray, candidates: np.ndarray, k_nn: int = 10) -> np.ndarray:
    """Full CSLS score matrix (n_queries x n_candidates).

    Materializes the matrix, so keep the pools moderate; evaluation code
    paths stream over candidate blocks instead.
    """
    qn, _ = _unit_rows(queries)
    cn, _ = _unit_rows(candidates)
    if qn.shape[1] != cn.shape[1]:
        raise RetrievalError("queries and candidates must share a dimension")
    if not (1 <= k_nn <= min(qn.shape[0], cn.shape[0])):
        raise RetrievalError(
            f"k_nn must be in [1, {min(qn.shape[0], cn.shape[0])}], got {k_nn}"
        )
    r_t, r_s = _hubness_terms(qn, cn, k_nn)
    return 2.0 * (qn @ cn.T) - r_t[:, None] - r_s[None, :]


@dataclass
class CslsContext:
    """Precomputed candidate-side hubness for ranking single queries."""

    r_s: np.ndarray
    k_nn: int


def csls_context(queries: np.ndarray, pool: CandidatePool, k_nn: int = 10) -> CslsContext:
    qn, _ = _unit_rows(np.atleast_2d(queries))
    cn, _ = _unit_rows(pool.vectors)
    if not (1 <= k_nn <= min(qn.shape[0], len(pool))):
        raise RetrievalError(f"k_nn out of range for {qn.shape[0]} queries, {len(pool)} candidates")
    _, r_s = _hubness_terms(qn, cn, k_nn)
    return CslsContext(r_s=r_s, k_nn=k_nn)


def _order_scores(scores: np.ndarray, ids: Sequence[str]) -> list[str]:
    id_arr = np.asarray(ids)
    order = np.lexsort((id_arr, -scores))
    return [str(ids[i]) for i in order]


def rank(
    query: np.ndarray,
    pool: CandidatePool,
    measure: str = "cosine",
    context: CslsContext | None = None,
) -> list[str]:
    """Total ordering of the pool's candidate ids for one query.

    CSLS needs a context built from the full query set (candidate hubness
    depends on it). Zero vectors on either side score -inf.
    """
    query = np.asarray(query, dtype=np.float64)
    cn, czero = _unit_rows(pool.vectors)
    qnorm = np.linalg.norm(query)
    if qnorm == 0.0:
        return _order_scores(np.full(len(pool), -np.inf), pool.ids)
    cos = cn @ (query / qnorm)
    if measure == "cosine":
        scores = cos
    elif measure == "csls":
        if context is None:
            raise RetrievalError("csls ranking needs a CslsContext")
        k = context.k_nn
        if not (1 <= k <= len(pool)):
            raise RetrievalError(f"k_nn {k} out of range for pool of {len(pool)}")
        r_t = np.sort(cos)[-k:].mean()
        scores = 2.0 * cos - r_t - context.r_s
    else:
        raise RetrievalError(f"unknown measure {measure!r}")
    scores = np.where(czero, -np.inf, scores)
    return _order_scores(scores, pool.ids)


def precision_at_k(
    rankings: Sequence[Sequence[str]],
    relevance: Sequence[str] | Mapping[int, str],
    ks: Iterable[int],
) -> dict[int, float]:
    """Fraction of queries whose correct id appears in the top k.

    ``relevance`` gives the single correct id per query (a parallel sequence
    or an index-keyed mapping); a missing entry or an id absent from its
    ranking is an error.
    """
    ks = sorted(set(int(k) for k in ks))
    if not rankings:
        raise RetrievalError("no rankings to score")
    if any(k < 1 for k in ks) or not ks:
        raise RetrievalError("ks must be positive")
    hits = {k: 0 for k in ks}
    for qi, ranking in enumerate(rankings):
        try:
            correct = relevance[qi]
        except (KeyError, IndexError) as exc:
            raise RetrievalError(f"missing relevance entry for query {qi}") from exc
        try:
            pos = list(ranking).index(correct)
        except ValueError as exc:
            raise RetrievalError(
                f"correct id {correct!r} of query {qi} is not in its ranking"
            ) from exc
        for k in ks:
            if pos < k:
                hits[k] += 1
    n = len(rankings)
    return {k: hits[k] / n for k in ks}


def evaluate_direction(
    queries: np.ndarray,
    correct_ids: Sequence[str],
    pool: CandidatePool,
    measure: str,
    ks: Iterable[int],
    k_nn: int = 10,
) -> dict[int, float]:
    """Precision at k of a query block against a pool, streamed.

    Equivalent to ranking every query with ``rank`` and scoring with
    ``precision_at_k`` (same tie rules), but only tracks the rank position
    of each query's correct candidate, so it scales to large pools.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if len(correct_ids) != queries.shape[0]:
        raise RetrievalError("one correct id per query required")
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise RetrievalError("ks must be positive")
    id_arr = np.asarray(pool.ids)
    col_of = {cid: j for j, cid in enumerate(pool.ids)}
    try:
        correct_cols = np.array([col_of[cid] for cid in correct_ids], dtype=np.int64)
    except KeyError as exc:
        raise RetrievalError(f"correct id {exc.args[0]!r} is not in the pool") from exc

    qn, qzero = _unit_rows(queries)
    cn, czero = _unit_rows(pool.vectors)
    if measure == "csls":
        if not (1 <= k_nn <= min(qn.shape[0], len(pool))):
            raise RetrievalError(f"k_nn {k_nn} out of range")
        r_t, r_s = _hubness_terms(qn, cn, k_nn)
    elif measure != "cosine":
        raise RetrievalError(f"unknown measure {measure!r}")

    positions = np.zeros(queries.shape[0], dtype=np.int64)
    for qi in range(queries.shape[0]):
        cos = cn @ qn[qi]
        if measure == "csls":
            scores = 2.0 * cos - r_t[qi] - r_s
        else:
            scores = cos
        scores = np.where(czero, -np.inf, scores)
        if qzero[qi]:
            scores = np.full(len(pool), -np.inf)
        star = correct_cols[qi]
        s_star = scores[star]
        ahead = int(np.count_nonzero(scores > s_star))
        tied = (scores == s_star) & (id_arr < correct_ids[qi])
        positions[qi] = ahead + int(np.count_nonzero(tied))
    return {k: float(np.mean(positions < k)) for k in ks}


@dataclass
class EvalEntry:
    query_lang: str
    target_lang: str
    measure: str
    n_queries: int
    n_candidates: int
    precision: dict[int, float]


@dataclass
class EvalReport:
    entries: list[EvalEntry]

    def validate(self) -> None:
        for entry in self.entries:
            ks = sorted(entry.precision)
            values = [entry.precision[k] for k in ks]
            if any(not (0.0 <= v <= 1.0) for v in values):
                raise RetrievalError("precision outside [0, 1]")
            if any(b < a for a, b in zip(values, values[1:])):
                raise RetrievalError("precision must be nondecreasing in k")


def write_report(report: EvalReport, path) -> None:
    """One TSV row per (pair direction, measure, k)."""
    report.validate()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("query_lang\ttarget_lang\tmeasure\tk\tprecision\tn_queries\tn_candidates\n")
        for e in report.entries:
            for k in sorted(e.precision):
                fh.write(
                    f"{e.query_lang}\t{e.target_lang}\t{e.measure}\t{k}"
                    f"\t{e.precision[k]:.6f}\t{e.n_queries}\t{e.n_candidates}\n"
                )
