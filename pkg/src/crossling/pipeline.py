"""End-to-end wiring: corpus in, trained models and reports out.

The CLI subcommands are thin wrappers around these functions, and tests
drive them directly. Training follows the split's regime: joint and
transitive models train on the split's whole training set, pairwise models
train on one pair's slice of it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import corpus as corpus_mod
from . import retrieval, solver
from .config import ConfigError, RunConfig
from .corpus import CorpusIndex, FeatureSpace, RawDocument, build_vocabulary, filter_documents
from .linop import CsrMatrix, SolverTolerances
from .model import EmbeddingModel, embed_text
from .retrieval import CandidatePool, EvalEntry, EvalReport
from .splits import EvaluationSplit
from .solver import FitConfig, FitResult, TrainSet

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A stage received inputs it cannot work with."""


def tolerances(cfg: RunConfig) -> SolverTolerances:
    return SolverTolerances(
        cg_eps=cfg.cg_eps,
        cg_max_iter=cfg.cg_max_iter,
        eig_eps=cfg.eig_eps,
        eig_max_iter=cfg.eig_max_iter,
    )


def pair_training_docs(split: EvaluationSplit, pair: tuple[str, str]) -> list[RawDocument]:
    """A single pair's training slice: documents of the pair's languages
    whose concept is described in both (query concepts are already gone)."""
    a, b = pair
    concepts_a = {d.concept for d in split.train_docs if d.language == a}
    concepts_b = {d.concept for d in split.train_docs if d.language == b}
    shared = concepts_a & concepts_b
    return [d for d in split.train_docs if d.language in (a, b) and d.concept in shared]


@dataclass
class TrainingData:
    train: TrainSet
    space: FeatureSpace
    class_labels: tuple[str, ...]
    n_filtered_out: int
    n_zero_rows: int


def prepare_training(docs: list[RawDocument], languages: list[str], cfg: RunConfig) -> TrainingData:
    """Length-filter, build vocabularies, vectorize and label a document set."""
    filtered = filter_documents(docs, cfg.min_unique, cfg.max_unique)
    n_filtered_out = len(docs) - len(filtered)
    if len(filtered) < 2:
        raise PipelineError(
            f"only {len(filtered)} training documents survive the length filter "
            f"[{cfg.min_unique}, {cfg.max_unique}]"
        )
    vocabularies = []
    for lang in sorted(languages):
        vocab = build_vocabulary(filtered, lang, cfg.max_vocab, cfg.min_doc_freq)
        if vocab.size == 0:
            raise PipelineError(f"language {lang!r} ends up with an empty vocabulary")
        vocabularies.append(vocab)
    space = FeatureSpace.build(vocabularies)

    rows = []
    kept_docs = []
    n_zero = 0
    for doc in filtered:
        vec = corpus_mod.vectorize(doc, space)
        if vec.nnz == 0:
            n_zero += 1
            continue
        rows.append((vec.indices, vec.values))
        kept_docs.append(doc)
    if len(rows) < 2:
        raise PipelineError("fewer than two nonzero training rows")
    class_labels = tuple(sorted({d.concept for d in kept_docs}))
    label_of = {c: i for i, c in enumerate(class_labels)}
    labels = np.array([label_of[d.concept] for d in kept_docs], dtype=np.int64)
    matrix = CsrMatrix.from_rows(rows, space.total_dim)
    train = TrainSet.build(matrix, labels, len(class_labels))
    log.info(
        "training set: %d documents, %d classes, %d features (%d filtered out, %d vectorized to zero)",
        train.n_rows,
        train.n_classes,
        train.n_features,
        n_filtered_out,
        n_zero,
    )
    return TrainingData(train, space, class_labels, n_filtered_out, n_zero)


def _model_from_fit(data: TrainingData, result: FitResult, cfg: RunConfig, extra_meta: dict) -> EmbeddingModel:
    projections = {}
    for lo_hi, block in zip(data.space.block_ranges(), data.space.blocks):
        lo, hi = lo_hi
        projections[block.language] = np.ascontiguousarray(result.projection[:, lo:hi])
    meta = {
        "rank": result.rank,
        "lambda": result.config.ridge,
        "seed": result.config.seed,
        "tolerances": {
            "cg_eps": cfg.cg_eps,
            "cg_max_iter": cfg.cg_max_iter,
            "eig_eps": cfg.eig_eps,
            "eig_max_iter": cfg.eig_max_iter,
        },
        "n_train_docs": data.train.n_rows,
        "n_classes": data.train.n_classes,
    }
    meta.update(extra_meta)
    return EmbeddingModel(
        space=data.space,
        projections=projections,
        singular_values=result.singular_values,
        metadata=meta,
        class_directions=result.class_directions,
        offsets=result.offsets,
        class_labels=data.class_labels,
    )


def _queries_for(
    split: EvaluationSplit,
    index: CorpusIndex,
    model: EmbeddingModel,
    pair: tuple[str, str],
    query_lang: str,
    role: str,
) -> tuple[np.ndarray, list[str]]:
    concepts = (split.test_concepts if role == "test" else split.valid_concepts)[pair]
    vectors = np.stack(
        [embed_text(model, query_lang, index.get(query_lang, c).text) for c in concepts]
    )
    return vectors, list(concepts)


def _pool_for(
    split: EvaluationSplit, index: CorpusIndex, model: EmbeddingModel, language: str
) -> CandidatePool:
    ids = split.candidates.get(language)
    if not ids:
        raise PipelineError(f"split has no candidates for language {language!r}")
    vectors = np.stack([embed_text(model, language, index.get(language, c).text) for c in ids])
    return CandidatePool(language=language, ids=list(ids), vectors=vectors)


def _covered_pairs(split: EvaluationSplit, model: EmbeddingModel) -> list[tuple[str, str]]:
    langs = set(model.languages)
    covered = [p for p in split.pairs if set(p) <= langs]
    if not covered:
        raise PipelineError(
            f"model languages {sorted(langs)} cover none of the split's pairs {split.pairs}"
        )
    return covered


def validation_precision(
    model: EmbeddingModel, split: EvaluationSplit, index: CorpusIndex, csls_k: int = 10
) -> float:
    """Mean cosine precision@1 over both directions of every covered pair's
    validation queries. Used to pick the ridge strength."""
    precisions = []
    for pair in _covered_pairs(split, model):
        if not split.valid_concepts.get(pair):
            raise PipelineError(f"split has no validation queries for pair {pair}")
        pools = {lang: _pool_for(split, index, model, lang) for lang in pair}
        for query_lang, target_lang in (pair, pair[::-1]):
            vectors, concepts = _queries_for(split, index, model, pair, query_lang, "valid")
            result = retrieval.evaluate_direction(
                vectors, concepts, pools[target_lang], "cosine", [1], csls_k
            )
            precisions.append(result[1])
    return float(np.mean(precisions))


def train_model(
    docs: list[RawDocument],
    split: EvaluationSplit,
    cfg: RunConfig,
    pair: tuple[str, str] | None = None,
) -> EmbeddingModel:
    """Train one model under the split's regime.

    For pairwise mode pass the pair to train; joint and transitive models
    ignore it. When cfg.ridge is None the ridge strength is picked by
    cross-validation on the split's validation queries.
    """
    if split.mode == "pairwise":
        if pair is None:
            raise PipelineError("pairwise training needs a pair")
        train_docs = pair_training_docs(split, pair)
        languages = sorted(pair)
        extra_meta = {"mode": split.mode, "pair": list(pair)}
    else:
        train_docs = split.train_docs
        languages = sorted({d.language for d in split.train_docs})
        extra_meta = {"mode": split.mode}
    if not train_docs:
        raise PipelineError("empty training set for this regime")
    data = prepare_training(train_docs, languages, cfg)
    tol = tolerances(cfg)
    if cfg.ridge is not None:
        fit_cfg = FitConfig(ridge=cfg.ridge, rank=cfg.rank, tol=tol, seed=cfg.seed)
        result = solver.fit(data.train, data.space, fit_cfg)
    else:
        index = CorpusIndex(docs)
        template = FitConfig(ridge=1.0, rank=cfg.rank, tol=tol, seed=cfg.seed)

        def evaluate(fit_result: FitResult) -> float:
            candidate = _model_from_fit(data, fit_result, cfg, extra_meta)
            return validation_precision(candidate, split, index, cfg.csls_k)

        cv = solver.cross_validate_lambda(lambda: (data.train, data.space), evaluate, cfg.ridge_grid, template)
        log.info("cross-validation picked lambda = %.4g", cv.best_ridge)
        extra_meta["cv_scores"] = [[r, p] for r, p in cv.scores]
        result = solver.fit(data.train, data.space, FitConfig(ridge=cv.best_ridge, rank=cfg.rank, tol=tol, seed=cfg.seed))
    return _model_from_fit(data, result, cfg, extra_meta)


def cross_validate(docs: list[RawDocument], split: EvaluationSplit, cfg: RunConfig) -> solver.CrossValidation:
    """Per-ridge validation precision table for the split's regime (joint or
    transitive; for pairwise run it per pair with a one-pair split)."""
    if split.mode == "pairwise":
        if len(split.pairs) != 1:
            raise PipelineError("cross-validation over pairwise splits runs one pair at a time")
        train_docs = pair_training_docs(split, split.pairs[0])
        languages = sorted(split.pairs[0])
    else:
        train_docs = split.train_docs
        languages = sorted({d.language for d in split.train_docs})
    data = prepare_training(train_docs, languages, cfg)
    index = CorpusIndex(docs)
    tol = tolerances(cfg)
    template = FitConfig(ridge=1.0, rank=cfg.rank, tol=tol, seed=cfg.seed)
    extra_meta = {"mode": split.mode}

    def evaluate(fit_result: FitResult) -> float:
        candidate = _model_from_fit(data, fit_result, cfg, extra_meta)
        return validation_precision(candidate, split, index, cfg.csls_k)

    return solver.cross_validate_lambda(lambda: (data.train, data.space), evaluate, cfg.ridge_grid, template)


def evaluate_model(
    model: EmbeddingModel,
    split: EvaluationSplit,
    docs: list[RawDocument],
    measures: tuple[str, ...] = ("cosine", "csls"),
    ks: tuple[int, ...] = (1, 5, 10),
    csls_k: int = 10,
) -> EvalReport:
    """Precision@k on the split's test queries, both directions per pair."""
    index = CorpusIndex(docs)
    entries = []
    for pair in _covered_pairs(split, model):
        pools = {lang: _pool_for(split, index, model, lang) for lang in pair}
        for query_lang, target_lang in (pair, pair[::-1]):
            vectors, concepts = _queries_for(split, index, model, pair, query_lang, "test")
            for measure in measures:
                precision = retrieval.evaluate_direction(
                    vectors, concepts, pools[target_lang], measure, ks, csls_k
                )
                entries.append(
                    EvalEntry(
                        query_lang=query_lang,
                        target_lang=target_lang,
                        measure=measure,
                        n_queries=len(concepts),
                        n_candidates=len(pools[target_lang]),
                        precision=precision,
                    )
                )
                log.info(
                    "%s -> %s (%s): %s",
                    query_lang,
                    target_lang,
                    measure,
                    ", ".join(f"P@{k}={v:.4f}" for k, v in sorted(precision.items())),
                )
    report = EvalReport(entries)
    report.validate()
    return report


def model_path_for_pair(base: str, pair: tuple[str, str]) -> str:
    """model.bin -> model.aa-bb.bin for per-pair artifacts."""
    suffix = f"{pair[0]}-{pair[1]}"
    if "." in base.split("/")[-1]:
        stem, ext = base.rsplit(".", 1)
        return f"{stem}.{suffix}.{ext}"
    return f"{base}.{suffix}"


def resolve_pairs(cfg: RunConfig) -> tuple[tuple[str, str], ...]:
    """Pairs from config; defaults to all unordered pairs of cfg.languages."""
    if cfg.pairs:
        return cfg.pairs
    langs = cfg.languages
    if len(langs) < 2:
        raise ConfigError("need pairs or at least two languages")
    return tuple((a, b) for i, a in enumerate(langs) for b in langs[i + 1 :])
