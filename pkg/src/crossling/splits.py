"""Evaluation splits: held-out queries, candidate pools and training sets.

For every evaluated language pair a fixed number of shared concepts is
sampled and split into test queries and validation queries. Sampled
concepts are excluded from training globally (from every pair's training
intersection, not just their own). Per language, a candidate pool is drawn
that always contains the query concepts targeting that language.

Three training regimes are supported:

* ``joint``: train on the union of the evaluated pairs' intersections.
* ``pairwise``: one model per pair, trained on that pair's intersection
  (the split is shared, training-set restriction happens at train time).
* ``transitive``: given two training pairs that share a pivot language,
  evaluate the remaining end pair; every concept present in both end
  languages is excluded from training, so the end pair is never aligned
  directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import CorpusIndex, RawDocument

MODES = ("joint", "pairwise", "transitive")


class SplitError(ValueError):
    """The corpus cannot support the requested split, or a split file is bad."""


@dataclass
class EvaluationSplit:
    mode: str
    seed: int
    pairs: list[tuple[str, str]]  # evaluated pairs (both directions each)
    train_pairs: list[tuple[str, str]]  # pairs whose intersections feed training
    test_concepts: dict[tuple[str, str], list[str]]
    valid_concepts: dict[tuple[str, str], list[str]]
    candidates: dict[str, list[str]]
    train_docs: list[RawDocument]

    @property
    def excluded_concepts(self) -> set[str]:
        out: set[str] = set()
        for concepts in self.test_concepts.values():
            out.update(concepts)
        for concepts in self.valid_concepts.values():
            out.update(concepts)
        return out

    def languages(self) -> list[str]:
        langs: set[str] = set()
        for a, b in self.pairs + self.train_pairs:
            langs.update((a, b))
        return sorted(langs)


def _end_pair(train_pairs: Sequence[tuple[str, str]]) -> tuple[str, str]:
    """The two non-pivot languages of two pairs sharing exactly one language."""
    if len(train_pairs) != 2:
        raise SplitError("transitive mode needs exactly two training pairs")
    (a1, b1), (a2, b2) = train_pairs
    shared = {a1, b1} & {a2, b2}
    if len({a1, b1}) != 2 or len({a2, b2}) != 2 or len(shared) != 1:
        raise SplitError("transitive training pairs must share exactly one pivot language")
    pivot = shared.pop()
    ends = [lang for lang in (a1, b1, a2, b2) if lang != pivot]
    return ends[0], ends[1]


def _training_documents(
    index: CorpusIndex,
    mode: str,
    train_pairs: Sequence[tuple[str, str]],
    excluded: set[str],
    end_pair: tuple[str, str] | None,
) -> list[RawDocument]:
    banned = set(excluded)
    if mode == "transitive" and end_pair is not None:
        banned |= index.concepts(end_pair[0]) & index.concepts(end_pair[1])
    eligible: dict[tuple[str, str], RawDocument] = {}
    for a, b in train_pairs:
        shared = (index.concepts(a) & index.concepts(b)) - banned
        for lang in (a, b):
            for concept in shared:
                key = (lang, concept)
                if key not in eligible:
                    eligible[key] = index.get(lang, concept)
    return [eligible[key] for key in sorted(eligible)]


def make_splits(
    docs: Iterable[RawDocument],
    pairs: Sequence[tuple[str, str]],
    n_queries: int,
    n_valid: int,
    n_candidates: int,
    mode: str,
    seed: int,
) -> EvaluationSplit:
    """Sample a deterministic evaluation split from a corpus.

    In joint and pairwise mode ``pairs`` are the evaluated pairs. In
    transitive mode ``pairs`` are the two training pairs; the evaluated pair
    is the derived end pair and queries are sampled from its intersection.
    Raises SplitError when an evaluated pair's intersection cannot cover the
    requested query counts.
    """
    if mode not in MODES:
        raise SplitError(f"mode must be one of {MODES}, got {mode!r}")
    if n_queries < 1 or n_valid < 0 or n_candidates < 1:
        raise SplitError("need n_queries >= 1, n_valid >= 0, n_candidates >= 1")
    pairs = [tuple(p) for p in pairs]
    if not pairs:
        raise SplitError("need at least one language pair")
    for a, b in pairs:
        if a == b:
            raise SplitError(f"pair ({a!r}, {b!r}) repeats a language")
    index = CorpusIndex(docs)

    end_pair: tuple[str, str] | None = None
    if mode == "transitive":
        train_pairs = list(pairs)
        end_pair = _end_pair(train_pairs)
        eval_pairs = [end_pair]
    else:
        train_pairs = list(pairs)
        eval_pairs = list(pairs)

    test_concepts: dict[tuple[str, str], list[str]] = {}
    valid_concepts: dict[tuple[str, str], list[str]] = {}
    for pair_idx, (a, b) in enumerate(eval_pairs):
        shared = sorted(index.concepts(a) & index.concepts(b))
        needed = n_queries + n_valid
        if len(shared) <= needed:
            raise SplitError(
                f"pair ({a}, {b}) shares {len(shared)} concepts, "
                f"need more than {needed} to sample queries"
            )
        rng = np.random.default_rng([seed, 1, pair_idx])
        picked = rng.choice(len(shared), size=needed, replace=False)
        sampled = [shared[i] for i in picked]
        test_concepts[(a, b)] = sampled[:n_queries]
        valid_concepts[(a, b)] = sampled[n_queries:]

    excluded: set[str] = set()
    for concepts in test_concepts.values():
        excluded.update(concepts)
    for concepts in valid_concepts.values():
        excluded.update(concepts)

    eval_langs = sorted({lang for pair in eval_pairs for lang in pair})
    candidates: dict[str, list[str]] = {}
    for lang_idx, lang in enumerate(eval_langs):
        required: set[str] = set()
        for pair in eval_pairs:
            if lang in pair:
                required.update(test_concepts[pair])
                required.update(valid_concepts[pair])
        pool = sorted(index.concepts(lang) - required)
        n_fill = min(max(n_candidates - len(required), 0), len(pool))
        rng = np.random.default_rng([seed, 2, lang_idx])
        picked = rng.choice(len(pool), size=n_fill, replace=False) if n_fill else []
        chosen = required | {pool[i] for i in picked}
        candidates[lang] = sorted(chosen)

    train_docs = _training_documents(index, mode, train_pairs, excluded, end_pair)
    return EvaluationSplit(
        mode=mode,
        seed=seed,
        pairs=eval_pairs,
        train_pairs=train_pairs,
        test_concepts=test_concepts,
        valid_concepts=valid_concepts,
        candidates=candidates,
        train_docs=train_docs,
    )


def write_split(split: EvaluationSplit, path) -> None:
    """Sectioned text format; regenerating with the same inputs is byte-stable."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("crossling-split\t1\n")
        fh.write(f"mode\t{split.mode}\n")
        fh.write(f"seed\t{split.seed}\n")
        for a, b in split.pairs:
            fh.write(f"eval_pair\t{a}\t{b}\n")
        for a, b in split.train_pairs:
            fh.write(f"train_pair\t{a}\t{b}\n")
        fh.write(f"n_train_docs\t{len(split.train_docs)}\n")
        for (a, b), concepts in split.test_concepts.items():
            fh.write(f"[test\t{a}\t{b}]\n")
            fh.writelines(f"{c}\n" for c in concepts)
        for (a, b), concepts in split.valid_concepts.items():
            fh.write(f"[valid\t{a}\t{b}]\n")
            fh.writelines(f"{c}\n" for c in concepts)
        for lang in sorted(split.candidates):
            fh.write(f"[candidates\t{lang}]\n")
            fh.writelines(f"{c}\n" for c in split.candidates[lang])
        fh.write("[end]\n")


def read_split(path, docs: Iterable[RawDocument]) -> EvaluationSplit:
    """Load a split file and rebuild its training set against a corpus.

    The stored training-document count guards against evaluating a split
    with a corpus it was not made from.
    """
    mode = ""
    seed = 0
    eval_pairs: list[tuple[str, str]] = []
    train_pairs: list[tuple[str, str]] = []
    n_train = -1
    test_concepts: dict[tuple[str, str], list[str]] = {}
    valid_concepts: dict[tuple[str, str], list[str]] = {}
    candidates: dict[str, list[str]] = {}
    section: list[str] | None = None
    saw_end = False

    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        header = fh.readline().rstrip("\n")
        if header != "crossling-split\t1":
            raise SplitError(f"{path}:1: not a split file (bad header)")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("["):
                if not line.endswith("]"):
                    raise SplitError(f"{path}:{lineno}: malformed section header")
                fields = line[1:-1].split("\t")
                if fields[0] == "end" and len(fields) == 1:
                    saw_end = True
                    section = None
                elif fields[0] == "test" and len(fields) == 3:
                    section = test_concepts.setdefault((fields[1], fields[2]), [])
                elif fields[0] == "valid" and len(fields) == 3:
                    section = valid_concepts.setdefault((fields[1], fields[2]), [])
                elif fields[0] == "candidates" and len(fields) == 2:
                    section = candidates.setdefault(fields[1], [])
                else:
                    raise SplitError(f"{path}:{lineno}: unknown section {fields[0]!r}")
                continue
            if section is not None:
                section.append(line)
                continue
            fields = line.split("\t")
            key = fields[0]
            try:
                if key == "mode" and len(fields) == 2:
                    mode = fields[1]
                elif key == "seed" and len(fields) == 2:
                    seed = int(fields[1])
                elif key == "eval_pair" and len(fields) == 3:
                    eval_pairs.append((fields[1], fields[2]))
                elif key == "train_pair" and len(fields) == 3:
                    train_pairs.append((fields[1], fields[2]))
                elif key == "n_train_docs" and len(fields) == 2:
                    n_train = int(fields[1])
                else:
                    raise SplitError(f"{path}:{lineno}: unknown entry {key!r}")
            except ValueError as exc:
                raise SplitError(f"{path}:{lineno}: {exc}") from exc

    if not saw_end:
        raise SplitError(f"{path}: truncated split file (missing [end])")
    if mode not in MODES:
        raise SplitError(f"{path}: bad or missing mode {mode!r}")
    if not eval_pairs or n_train < 0:
        raise SplitError(f"{path}: incomplete split file")

    index = CorpusIndex(docs)
    excluded: set[str] = set()
    for concepts in test_concepts.values():
        excluded.update(concepts)
    for concepts in valid_concepts.values():
        excluded.update(concepts)
    end_pair = eval_pairs[0] if mode == "transitive" else None
    train_docs = _training_documents(index, mode, train_pairs, excluded, end_pair)
    if len(train_docs) != n_train:
        raise SplitError(
            f"{path}: corpus yields {len(train_docs)} training documents, "
            f"split was built with {n_train}"
        )
    return EvaluationSplit(
        mode=mode,
        seed=seed,
        pairs=eval_pairs,
        train_pairs=train_pairs,
        test_concepts=test_concepts,
        valid_concepts=valid_concepts,
        candidates=candidates,
        train_docs=train_docs,
    )
