"""Crosslingual document embeddings from concept-aligned corpora.

Documents about the same concept in different languages supervise a
rank-constrained one-vs-all ridge classifier; the classifier's low-rank
row space doubles as a shared embedding space for all languages. Training
runs entirely on sparse matrix-vector products, so the dense feature
space is never materialized.
"""

from .config import ConfigError, RunConfig
from .corpus import (
    CorpusFormatError,
    CorpusIndex,
    FeatureSpace,
    RawDocument,
    SparseVector,
    UnknownLanguageError,
    Vocabulary,
    VocabularyError,
    build_vocabulary,
    compute_idf,
    filter_documents,
    read_corpus,
    tokenize,
    vectorize,
    write_corpus,
)
from .linop import (
    CenteredGramOperator,
    CsrMatrix,
    NumericalBreakdownError,
    SolverTolerances,
    WoodburyBlockSolver,
    block_solve,
    centered_apply,
    conjugate_gradient,
    eigensolve_topk,
    matvec,
    matvec_t,
)
from .model import (
    EmbeddingModel,
    ModelChecksumError,
    ModelFormatError,
    ModelTruncatedError,
    ModelVersionError,
    WordNotFoundError,
    embed_text,
    load_model,
    save_model,
    word_vector,
    write_embeddings,
)
from .retrieval import (
    CandidatePool,
    EvalEntry,
    EvalReport,
    RetrievalError,
    ZeroVectorError,
    cosine,
    csls_context,
    csls_scores,
    precision_at_k,
    rank,
    write_report,
)
from .solver import (
    FitConfig,
    FitResult,
    RankDeficiencyError,
    TrainSet,
    classifier_gram_apply,
    classify,
    compute_offsets,
    cross_validate_lambda,
    direct_fit,
    fit,
)
from .splits import EvaluationSplit, SplitError, make_splits, read_split, write_split

__version__ = "0.1.0"
