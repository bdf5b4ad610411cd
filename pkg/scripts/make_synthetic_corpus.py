#!/usr/bin/env python3
"""Generate a synthetic aligned corpus TSV for experiments.

The two-language default matches the retrieval benchmark; --three-language
switches to the partial-coverage setup used for pivoted training, where no
single language pair covers every concept.
"""

import argparse

from crossling.corpus import write_corpus
from crossling.synthetic import SyntheticSpec, generate, three_language_spec


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("output", help="corpus TSV path")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--concepts", type=int, default=1200)
    parser.add_argument("--languages", default="aa,bb", help="comma-separated codes")
    parser.add_argument(
        "--three-language", action="store_true",
        help="partial-coverage three-language corpus for transitive runs",
    )
    args = parser.parse_args()

    if args.three_language:
        spec = three_language_spec(n_concepts=args.concepts)
    else:
        spec = SyntheticSpec(
            languages=tuple(args.languages.split(",")), n_concepts=args.concepts
        )
    corpus = generate(spec, args.seed)
    write_corpus(corpus.docs, args.output)
    print(f"languages\t{','.join(spec.languages)}")
    print(f"concepts\t{spec.n_concepts}")
    print(f"documents\t{len(corpus.docs)}")
    print(f"path\t{args.output}")


if __name__ == "__main__":
    main()
