"""Shared fixtures and random-instance generators for the test suite."""

import numpy as np
from hypothesis import settings

from crossling.corpus import RawDocument
from crossling.linop import CsrMatrix, SolverTolerances
from crossling.solver import TrainSet

settings.register_profile("suite", deadline=None, max_examples=40)
settings.load_profile("suite")

# Tight enough that iterative results can be compared against dense oracles.
TIGHT = SolverTolerances(cg_eps=1e-10, cg_max_iter=4000, eig_eps=1e-9, eig_max_iter=800)


def random_sparse_rows(rng, n_rows, n_cols, density=0.3):
    """Unit-norm nonnegative sparse rows as (indices, values) pairs."""
    rows = []
    for _ in range(n_rows):
        nnz = max(1, int(rng.binomial(n_cols, density)))
        idx = np.sort(rng.choice(n_cols, size=nnz, replace=False)).astype(np.int64)
        vals = rng.random(nnz) + 0.1
        rows.append((idx, vals / np.linalg.norm(vals)))
    return rows


def random_csr(rng, n_rows, n_cols, density=0.3):
    return CsrMatrix.from_rows(random_sparse_rows(rng, n_rows, n_cols, density), n_cols)


def random_train_set(rng, n, p, k, density=0.3):
    """TrainSet with every class populated and unit-norm sparse rows."""
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    rng.shuffle(labels)
    x = random_csr(rng, n, p, density)
    return TrainSet.build(x, labels, n_classes=k)


def blocked_train_set(rng, n, p, k, blocks):
    """TrainSet whose rows each stay inside one of the given column blocks."""
    rows = []
    for i in range(n):
        lo, hi = blocks[i % len(blocks)]
        width = hi - lo
        nnz = max(1, int(rng.binomial(width, 0.4)))
        idx = lo + np.sort(rng.choice(width, size=nnz, replace=False)).astype(np.int64)
        vals = rng.random(nnz) + 0.1
        rows.append((idx, vals / np.linalg.norm(vals)))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    rng.shuffle(labels)
    x = CsrMatrix.from_rows(rows, p)
    return TrainSet.build(x, labels, n_classes=k)


def aligned_corpus(languages, concepts, seed=0, tokens_per_doc=12, shared_topics=6):
    """Tiny aligned corpus; texts blend per-concept and random tokens."""
    rng = np.random.default_rng(seed)
    topic_of = {c: int(rng.integers(0, shared_topics)) for c in concepts}
    docs = []
    for lang in languages:
        for concept in concepts:
            words = [f"{lang}topic{topic_of[concept]}"] * 3
            words += [f"{lang}w{int(rng.integers(0, 40)):02d}" for _ in range(tokens_per_doc)]
            docs.append(RawDocument(lang, str(concept), " ".join(words)))
    return docs
