"""Seeded synthetic multilingual corpora with known latent structure.

Languages share nothing at the surface level (every word is prefixed by its
language) but share a global set of latent topics. Each concept is a sparse
mixture over topics, and each document samples tokens from its concept's
mixture: with probability background_prob a background word (Zipf-ish), and
otherwise a uniform word from a sampled topic's per-language word list.
Documents about the same concept in different languages therefore follow
the same topic mixture while sharing no words, which is exactly the setting
the trainer is supposed to exploit.

Because the generator knows the latent state, it can also report an
informed reference ranking: represent every document by its normalized
topic histogram (token counts mapped through the word -> topic table) and
rank by cosine between histograms. That reference needs no training and
upper-bounds what any bag-of-words method can recover.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import RawDocument


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator knobs. Defaults give a well-separated two-language corpus.

    coverage lists (language subset, probability) pattern weights; None
    means every concept is described in every language. Document token
    counts are drawn uniformly from doc_tokens, which with the default
    topic sizes keeps unique-token counts comfortably inside the trainer's
    length filter.
    """

    languages: tuple[str, ...] = ("aa", "bb")
    n_concepts: int = 1200
    n_topics: int = 24
    topics_per_concept: int = 4
    words_per_topic: int = 60
    n_background_words: int = 400
    doc_tokens: tuple[int, int] = (160, 240)
    background_prob: float = 0.15
    coverage: tuple[tuple[tuple[str, ...], float], ...] | None = None

    def __post_init__(self) -> None:
        if self.n_topics < self.topics_per_concept:
            raise ValueError("need at least topics_per_concept topics")
        if not (0.0 <= self.background_prob < 1.0):
            raise ValueError("background_prob must be in [0, 1)")
        if self.coverage is not None:
            total = sum(w for _, w in self.coverage)
            if not np.isclose(total, 1.0):
                raise ValueError("coverage weights must sum to 1")
            for langs, _ in self.coverage:
                unknown = set(langs) - set(self.languages)
                if unknown:
                    raise ValueError(f"coverage names unknown languages {unknown}")


@dataclass
class SyntheticCorpus:
    """Generated documents plus the latent state that produced them."""

    spec: SyntheticSpec
    seed: int
    docs: list[RawDocument]
    concept_topics: dict[str, np.ndarray]  # concept -> topic mixture (n_topics,)
    word_topic: dict[str, dict[str, int]]  # language -> word -> topic
    concept_languages: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def topic_histogram(self, language: str, text: str) -> np.ndarray:
        """Normalized topic counts of a text under the generator's tables."""
        from .corpus import tokenize

        table = self.word_topic[language]
        hist = np.zeros(self.spec.n_topics)
        for token in tokenize(text):
            topic = table.get(token)
            if topic is not None:
                hist[topic] += 1.0
        total = hist.sum()
        return hist / total if total else hist


def _topic_words(spec: SyntheticSpec, language: str) -> list[list[str]]:
    return [
        [f"{language}t{t:02d}x{j:02d}" for j in range(spec.words_per_topic)]
        for t in range(spec.n_topics)
    ]


def _background_words(spec: SyntheticSpec, language: str) -> list[str]:
    return [f"{language}bg{j:03d}" for j in range(spec.n_background_words)]


def generate(spec: SyntheticSpec, seed: int) -> SyntheticCorpus:
    """Generate a corpus; identical (spec, seed) gives identical documents."""
    rng = np.random.default_rng(seed)
    topic_words = {lang: _topic_words(spec, lang) for lang in spec.languages}
    background = {lang: _background_words(spec, lang) for lang in spec.languages}
    bg_weights = 1.0 / (np.arange(spec.n_background_words) + 3.0)
    bg_weights /= bg_weights.sum()

    word_topic = {
        lang: {w: t for t, words in enumerate(topic_words[lang]) for w in words}
        for lang in spec.languages
    }

    patterns: list[tuple[str, ...]]
    weights: np.ndarray
    if spec.coverage is None:
        patterns = [tuple(spec.languages)]
        weights = np.array([1.0])
    else:
        patterns = [tuple(langs) for langs, _ in spec.coverage]
        weights = np.array([w for _, w in spec.coverage])

    docs: list[RawDocument] = []
    concept_topics: dict[str, np.ndarray] = {}
    concept_languages: dict[str, tuple[str, ...]] = {}
    lo, hi = spec.doc_tokens
    for c in range(spec.n_concepts):
        concept = f"c{c:05d}"
        topics = rng.choice(spec.n_topics, size=spec.topics_per_concept, replace=False)
        mix = rng.dirichlet(np.full(spec.topics_per_concept, 2.0))
        mixture = np.zeros(spec.n_topics)
        mixture[topics] = mix
        concept_topics[concept] = mixture
        langs = patterns[rng.choice(len(patterns), p=weights)]
        concept_languages[concept] = langs
        for lang in langs:
            n_tokens = int(rng.integers(lo, hi + 1))
            is_bg = rng.random(n_tokens) < spec.background_prob
            n_bg = int(is_bg.sum())
            tokens = []
            if n_bg:
                picks = rng.choice(spec.n_background_words, size=n_bg, p=bg_weights)
                tokens.extend(background[lang][j] for j in picks)
            n_topic = n_tokens - n_bg
            if n_topic:
                t_picks = rng.choice(topics, size=n_topic, p=mix)
                w_picks = rng.integers(0, spec.words_per_topic, size=n_topic)
                tokens.extend(topic_words[lang][t][j] for t, j in zip(t_picks, w_picks))
            rng.shuffle(tokens)
            docs.append(RawDocument(lang, concept, " ".join(tokens)))
    return SyntheticCorpus(
        spec=spec,
        seed=seed,
        docs=docs,
        concept_topics=concept_topics,
        word_topic=word_topic,
        concept_languages=concept_languages,
    )


def three_language_spec(
    languages: Sequence[str] = ("aa", "bb", "cc"),
    n_concepts: int = 900,
) -> SyntheticSpec:
    """Partial-coverage spec suited to pivoted (transitive) training.

    With ends (first, last) and pivot in the middle, a good share of
    concepts lives in exactly one training pair, and enough concepts sit in
    both end languages to sample end-pair queries from.
    """
    a, b, c = languages
    return SyntheticSpec(
        languages=tuple(languages),
        n_concepts=n_concepts,
        coverage=(
            ((a, b), 0.28),
            ((b, c), 0.28),
            ((a, c), 0.22),
            ((a, b, c), 0.22),
        ),
    )
