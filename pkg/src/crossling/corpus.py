"""Corpus handling: documents, vocabularies and TF-IDF vectorization.

A corpus is a set of documents keyed by (language, concept): every concept
names the same thing across languages, and a language holds at most one
document per concept. Each language gets its own vocabulary, and documents
embed into one concatenated feature space with a contiguous column block
per language.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .linop import CsrMatrix

# maximal runs of Unicode alphanumerics; underscore counts as punctuation
_TOKEN_RE = re.compile(r"[^\W_]+")


class CorpusFormatError(ValueError):
    """Malformed corpus file."""


class VocabularyError(ValueError):
    """Inconsistent vocabulary statistics."""


class UnknownLanguageError(KeyError):
    """A document or request names a language outside the feature space."""

    def __init__(self, language: str):
        super().__init__(language)
        self.language = language

    def __str__(self) -> str:
        return f"unknown language: {self.language!r}"


@dataclass(frozen=True)
class RawDocument:
    language: str
    concept: str
    text: str

    def __post_init__(self) -> None:
        for field_name in ("language", "concept"):
            value = getattr(self, field_name)
            if not value or re.search(r"[\t\n\r]", value):
                raise ValueError(f"{field_name} must be nonempty without tabs or newlines")


def tokenize(text: str) -> list[str]:
    """Lower-cased maximal alphanumeric runs; everything else separates."""
    return _TOKEN_RE.findall(text.lower())


def filter_documents(docs: Iterable[RawDocument], min_unique: int, max_unique: int) -> list[RawDocument]:
    """Keep documents whose unique-token count lies in [min_unique, max_unique]."""
    if min_unique < 0 or max_unique < min_unique:
        raise ValueError("need 0 <= min_unique <= max_unique")
    kept = []
    for doc in docs:
        n = len(set(tokenize(doc.text)))
        if min_unique <= n <= max_unique:
            kept.append(doc)
    return kept


@dataclass(frozen=True)
class Vocabulary:
    """Per-language word list with document frequencies and IDF weights.

    words is ordered by descending corpus frequency (ties broken
    lexicographically), index maps a word to its position, and doc_freq/idf
    are aligned with words.
    """

    language: str
    words: tuple[str, ...]
    index: dict[str, int]
    doc_freq: np.ndarray
    idf: np.ndarray

    @property
    def size(self) -> int:
        return len(self.words)


def build_vocabulary(
    docs: Iterable[RawDocument],
    language: str,
    max_size: int,
    min_doc_freq: int,
) -> Vocabulary:
    """Build the vocabulary of a language from its training documents.

    Words in fewer than min_doc_freq documents are discarded, the rest are
    ranked by total corpus frequency (ties lexicographic) and cut at
    max_size. IDF uses the same documents.
    """
    if max_size < 1 or min_doc_freq < 1:
        raise ValueError("max_size and min_doc_freq must be at least 1")
    total = Counter()
    df = Counter()
    n_docs = 0
    for doc in docs:
        if doc.language != language:
            continue
        n_docs += 1
        tokens = tokenize(doc.text)
        total.update(tokens)
        df.update(set(tokens))
    eligible = [w for w, c in df.items() if c >= min_doc_freq]
    eligible.sort(key=lambda w: (-total[w], w))
    words = tuple(eligible[:max_size])
    vocab = Vocabulary(
        language=language,
        words=words,
        index={w: i for i, w in enumerate(words)},
        doc_freq=np.array([df[w] for w in words], dtype=np.int64),
        idf=np.zeros(len(words), dtype=np.float64),
    )
    return compute_idf(vocab, n_docs)


def compute_idf(vocab: Vocabulary, n_train_docs: int) -> Vocabulary:
    """Attach idf = ln(n_train_docs / doc_freq) to a vocabulary."""
    if vocab.size == 0:
        return vocab
    if n_train_docs < 1:
        raise VocabularyError("need at least one training document")
    if np.any(vocab.doc_freq < 1):
        raise VocabularyError("every vocabulary word needs doc_freq >= 1")
    if np.any(vocab.doc_freq > n_train_docs):
        raise VocabularyError("doc_freq exceeds the number of training documents")
    idf = np.log(float(n_train_docs) / vocab.doc_freq.astype(np.float64))
    return replace(vocab, idf=idf)


@dataclass(frozen=True)
class FeatureBlock:
    language: str
    vocabulary: Vocabulary
    offset: int

    @property
    def size(self) -> int:
        return self.vocabulary.size


@dataclass(frozen=True)
class FeatureSpace:
    """Concatenation of per-language vocabularies into one column space."""

    blocks: tuple[FeatureBlock, ...]
    total_dim: int

    @classmethod
    def build(cls, vocabularies: Sequence[Vocabulary]) -> "FeatureSpace":
        seen = set()
        blocks = []
        offset = 0
        for vocab in vocabularies:
            if vocab.language in seen:
                raise ValueError(f"duplicate language {vocab.language!r}")
            seen.add(vocab.language)
            blocks.append(FeatureBlock(vocab.language, vocab, offset))
            offset += vocab.size
        return cls(tuple(blocks), offset)

    @property
    def languages(self) -> tuple[str, ...]:
        return tuple(b.language for b in self.blocks)

    def block_for(self, language: str) -> FeatureBlock:
        for block in self.blocks:
            if block.language == language:
                return block
        raise UnknownLanguageError(language)

    def block_ranges(self) -> list[tuple[int, int]]:
        return [(b.offset, b.offset + b.size) for b in self.blocks]


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse vector; values are finite and nonzero."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self) -> None:
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)
        if idx.shape != vals.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1d and equally long")
        if len(idx) and (idx[0] < 0 or idx[-1] >= self.dim or np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly increasing within [0, dim)")
        if np.any(~np.isfinite(vals)) or np.any(vals == 0.0):
            raise ValueError("values must be finite and nonzero")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def term_vector(text: str, vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    """Local TF-IDF coordinates of a text within one vocabulary, L2-normalized.

    Out-of-vocabulary tokens are dropped; a text with no in-vocabulary tokens
    (or only idf-zero ones) comes back empty.
    """
    counts = Counter()
    for token in tokenize(text):
        pos = vocab.index.get(token)
        if pos is not None:
            counts[pos] += 1
    if not counts:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    idx = np.array(sorted(counts), dtype=np.int64)
    tf = np.array([counts[i] for i in idx], dtype=np.float64)
    vals = tf * vocab.idf[idx]
    keep = vals != 0.0
    idx, vals = idx[keep], vals[keep]
    norm = np.linalg.norm(vals)
    if norm == 0.0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return idx, vals / norm


def vectorize(doc: RawDocument, space: FeatureSpace) -> SparseVector:
    """Unit-norm TF-IDF vector of a document in the concatenated space.

    Documents with no usable tokens vectorize to the zero vector.
    """
    block = space.block_for(doc.language)
    idx, vals = term_vector(doc.text, block.vocabulary)
    return SparseVector(idx + block.offset, vals, space.total_dim)


def stack_documents(docs: Sequence[RawDocument], space: FeatureSpace) -> CsrMatrix:
    """Vectorize documents into a CSR matrix, one row per document."""
    rows = []
    for doc in docs:
        vec = vectorize(doc, space)
        rows.append((vec.indices, vec.values))
    return CsrMatrix.from_rows(rows, space.total_dim)


# ---------------------------------------------------------------------------
# file formats

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\\\": "\\", "\\t": "\t", "\\n": "\n", "\\r": "\r"}
_UNESCAPE_RE = re.compile(r"\\[\\tnr]")


def escape_text(text: str) -> str:
    for raw, esc in _ESCAPES.items():
        text = text.replace(raw, esc)
    return text


def unescape_text(text: str) -> str:
    return _UNESCAPE_RE.sub(lambda m: _UNESCAPES[m.group(0)], text)


def write_corpus(docs: Iterable[RawDocument], path) -> None:
    """Write language<TAB>concept<TAB>text records, one per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(f"{doc.language}\t{doc.concept}\t{escape_text(doc.text)}\n")


def read_corpus(path) -> list[RawDocument]:
    """Read a corpus file; duplicate (language, concept) keys are an error."""
    docs = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            language, concept, text = parts
            key = (language, concept)
            if key in seen:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate document for {key}")
            seen.add(key)
            try:
                docs.append(RawDocument(language, concept, unescape_text(text)))
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
    return docs


class CorpusIndex:
    """Lookup of documents by (language, concept)."""

    def __init__(self, docs: Iterable[RawDocument]):
        self._by_key: dict[tuple[str, str], RawDocument] = {}
        self.concepts_by_language: dict[str, set[str]] = {}
        for doc in docs:
            key = (doc.language, doc.concept)
            if key in self._by_key:
                raise CorpusFormatError(f"duplicate document for {key}")
            self._by_key[key] = doc
            self.concepts_by_language.setdefault(doc.language, set()).add(doc.concept)

    def get(self, language: str, concept: str) -> RawDocument:
        doc = self._by_key.get((language, concept))
        if doc is None:
            raise KeyError(f"no document for concept {concept!r} in language {language!r}")
        return doc

    def concepts(self, language: str) -> set[str]:
        return self.concepts_by_language.get(language, set())

    @property
    def languages(self) -> list[str]:
        return sorted(self.concepts_by_language)


def write_vocabulary(vocab: Vocabulary, path) -> None:
    """Write `lang<TAB>size` then one `word<TAB>doc_freq<TAB>idf` line per word."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{vocab.language}\t{vocab.size}\n")
        for i, word in enumerate(vocab.words):
            # repr of a Python float round-trips exactly
            fh.write(f"{word}\t{int(vocab.doc_freq[i])}\t{float(vocab.idf[i])!r}\n")


def read_vocabulary(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) != 2:
            raise CorpusFormatError(f"{path}:1: malformed vocabulary header")
        language, size_str = header
        try:
            size = int(size_str)
        except ValueError as exc:
            raise CorpusFormatError(f"{path}:1: malformed vocabulary size") from exc
        words, dfs, idfs = [], [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusFormatError(f"{path}:{lineno}: expected word, doc_freq, idf")
            try:
                words.append(parts[0])
                dfs.append(int(parts[1]))
                idfs.append(float(parts[2]))
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
    if len(words) != size:
        raise CorpusFormatError(f"{path}: header claims {size} words, file has {len(words)}")
    return Vocabulary(
        language=language,
        words=tuple(words),
        index={w: i for i, w in enumerate(words)},
        doc_freq=np.array(dfs, dtype=np.int64),
        idf=np.array(idfs, dtype=np.float64),
    )
