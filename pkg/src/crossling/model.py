"""Trained embedding models: applying them to text and moving them to disk.

A model carries one projection block (rank x vocab_size) per language plus
the vocabulary needed to vectorize new text. Embedding a text is exactly
the training-time path: tokenize, TF-IDF against the language's vocabulary,
unit-normalize, multiply by the language's projection block. Texts with no
in-vocabulary tokens embed to the zero vector.

Binary model format (all integers little-endian):

    magic       4 bytes  "CR5\\0"
    version     u32      currently 1
    flags       u32      bit 0: classifier head present
    meta_len    u32      followed by UTF-8 JSON metadata
    rank        u32
    n_langs     u32
    sigma       rank f64
    per language:
        lang_len u32, language UTF-8
        vocab_size u32
        words_len u32, words joined by "\\n", UTF-8
        doc_freq   vocab_size u32
        idf        vocab_size f64
        projection rank*vocab_size f64, row-major
    if classifier head:
        n_classes u32
        class_directions n_classes*rank f64, row-major
        offsets n_classes f64
        labels_len u32, class labels joined by "\\n", UTF-8
    crc         u32 CRC-32 of every preceding byte

Loading verifies magic, version and checksum and reports truncation,
version mismatch and corruption as distinct errors. Save/load round-trips
are bit-exact.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from typing import BinaryIO, Iterable

import numpy as np

from .corpus import FeatureSpace, Vocabulary, term_vector

MAGIC = b"CR5\0"
FORMAT_VERSION = 1
_FLAG_CLASSIFIER = 1


class ModelFormatError(ValueError):
    """Base class for unreadable model files."""


class ModelVersionError(ModelFormatError):
    """Wrong magic bytes or unsupported format version."""


class ModelChecksumError(ModelFormatError):
    """Stored checksum does not match the file contents."""


class ModelTruncatedError(ModelFormatError):
    """File ends before the declared payload."""


class WordNotFoundError(KeyError):
    def __init__(self, language: str, word: str):
        super().__init__((language, word))
        self.language = language
        self.word = word

    def __str__(self) -> str:
        return f"word {self.word!r} is not in the {self.language!r} vocabulary"


@dataclass
class EmbeddingModel:
    """A trained crosslingual embedder.

    projections maps language -> (rank x vocab_size) float64 block whose
    concatenation along columns has orthonormal rows. The classifier head
    (class_directions, offsets, class_labels) is optional; embedding does
    not need it.
    """

    space: FeatureSpace
    projections: dict[str, np.ndarray]
    singular_values: np.ndarray
    metadata: dict
    class_directions: np.ndarray | None = None
    offsets: np.ndarray | None = None
    class_labels: tuple[str, ...] | None = None

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    @property
    def languages(self) -> tuple[str, ...]:
        return self.space.languages

    def has_classifier(self) -> bool:
        return self.class_directions is not None

    def full_projection(self) -> np.ndarray:
        """Concatenated rank x total_dim projection, language blocks in order."""
        return np.hstack([self.projections[lang] for lang in self.languages])


def embed_text(model: EmbeddingModel, language: str, text: str) -> np.ndarray:
    """Embed a text written in one of the model's languages."""
    block = model.space.block_for(language)
    idx, vals = term_vector(text, block.vocabulary)
    if len(idx) == 0:
        return np.zeros(model.rank)
    return model.projections[language][:, idx] @ vals


def word_vector(model: EmbeddingModel, language: str, word: str) -> np.ndarray:
    """Embedding column of a single vocabulary word."""
    block = model.space.block_for(language)
    pos = block.vocabulary.index.get(word)
    if pos is None:
        raise WordNotFoundError(language, word)
    return model.projections[language][:, pos].copy()


# ---------------------------------------------------------------------------
# serialization


class _CrcWriter:
    def __init__(self, fh: BinaryIO):
        self._fh = fh
        self.crc = 0

    def write(self, data: bytes) -> None:
        self.crc = zlib.crc32(data, self.crc)
        self._fh.write(data)

    def write_u32(self, value: int) -> None:
        self.write(struct.pack("<I", value))

    def write_blob(self, data: bytes) -> None:
        self.write_u32(len(data))
        self.write(data)

    def write_f64(self, arr: np.ndarray) -> None:
        self.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def write_u32_array(self, arr: np.ndarray) -> None:
        self.write(np.ascontiguousarray(arr, dtype="<u4").tobytes())


class _CrcReader:
    def __init__(self, fh: BinaryIO, path):
        self._fh = fh
        self._path = path
        self.crc = 0

    def read(self, n: int) -> bytes:
        data = self._fh.read(n)
        if len(data) != n:
            raise ModelTruncatedError(
                f"{self._path}: file ends {n - len(data)} bytes early"
            )
        self.crc = zlib.crc32(data, self.crc)
        return data

    def read_u32(self) -> int:
        return struct.unpack("<I", self.read(4))[0]

    def read_blob(self) -> bytes:
        return self.read(self.read_u32())

    def read_f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.read(8 * count), dtype="<f8").astype(np.float64)

    def read_u32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.read(4 * count), dtype="<u4").astype(np.int64)


def save_model(model: EmbeddingModel, path) -> None:
    with open(path, "wb") as fh:
        out = _CrcWriter(fh)
        out.write(MAGIC)
        out.write_u32(FORMAT_VERSION)
        out.write_u32(_FLAG_CLASSIFIER if model.has_classifier() else 0)
        out.write_blob(
            json.dumps(model.metadata, sort_keys=True, ensure_ascii=False).encode("utf-8")
        )
        out.write_u32(model.rank)
        out.write_u32(len(model.languages))
        out.write_f64(model.singular_values)
        for lang in model.languages:
            vocab = model.space.block_for(lang).vocabulary
            out.write_blob(lang.encode("utf-8"))
            out.write_u32(vocab.size)
            out.write_blob("\n".join(vocab.words).encode("utf-8"))
            out.write_u32_array(vocab.doc_freq)
            out.write_f64(vocab.idf)
            block = model.projections[lang]
            if block.shape != (model.rank, vocab.size):
                raise ValueError(
                    f"projection block for {lang!r} has shape {block.shape}, "
                    f"expected {(model.rank, vocab.size)}"
                )
            out.write_f64(block)
        if model.has_classifier():
            n_classes = model.class_directions.shape[0]
            out.write_u32(n_classes)
            out.write_f64(model.class_directions)
            out.write_f64(model.offsets)
            out.write_blob("\n".join(model.class_labels).encode("utf-8"))
        fh.write(struct.pack("<I", out.crc))


def load_model(path) -> EmbeddingModel:
    with open(path, "rb") as fh:
        inp = _CrcReader(fh, path)
        magic = inp.read(4)
        if magic != MAGIC:
            raise ModelVersionError(f"{path}: not a model file (magic {magic!r})")
        version = inp.read_u32()
        if version != FORMAT_VERSION:
            raise ModelVersionError(
                f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
            )
        flags = inp.read_u32()
        meta = json.loads(inp.read_blob().decode("utf-8"))
        rank = inp.read_u32()
        n_langs = inp.read_u32()
        sigma = inp.read_f64(rank)
        vocabularies = []
        projections: dict[str, np.ndarray] = {}
        for _ in range(n_langs):
            lang = inp.read_blob().decode("utf-8")
            size = inp.read_u32()
            blob = inp.read_blob().decode("utf-8")
            words = tuple(blob.split("\n")) if size else ()
            if len(words) != size:
                raise ModelFormatError(f"{path}: vocabulary of {lang!r} is inconsistent")
            doc_freq = inp.read_u32_array(size)
            idf = inp.read_f64(size)
            vocabularies.append(
                Vocabulary(
                    language=lang,
                    words=words,
                    index={w: i for i, w in enumerate(words)},
                    doc_freq=doc_freq,
                    idf=idf,
                )
            )
            projections[lang] = inp.read_f64(rank * size).reshape(rank, size)
        class_directions = offsets = class_labels = None
        if flags & _FLAG_CLASSIFIER:
            n_classes = inp.read_u32()
            class_directions = inp.read_f64(n_classes * rank).reshape(n_classes, rank)
            offsets = inp.read_f64(n_classes)
            class_labels = tuple(inp.read_blob().decode("utf-8").split("\n"))
            if len(class_labels) != n_classes:
                raise ModelFormatError(f"{path}: class label table is inconsistent")
        expected_crc = inp.crc
        stored = fh.read(4)
        if len(stored) != 4:
            raise ModelTruncatedError(f"{path}: missing checksum")
        if fh.read(1):
            raise ModelFormatError(f"{path}: trailing data after checksum")
        if struct.unpack("<I", stored)[0] != expected_crc:
            raise ModelChecksumError(f"{path}: checksum mismatch, file is corrupted")
    return EmbeddingModel(
        space=FeatureSpace.build(vocabularies),
        projections=projections,
        singular_values=sigma,
        metadata=meta,
        class_directions=class_directions,
        offsets=offsets,
        class_labels=class_labels,
    )


def write_embeddings(rows: Iterable[tuple[str, np.ndarray]], path) -> None:
    """TSV dump: id, then one column per dimension, 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row_id, vec in rows:
            fh.write(row_id)
            for v in vec:
                fh.write(f"\t{v:.17g}")
            fh.write("\n")
