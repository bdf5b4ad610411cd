"""Command-line interface.

Subcommands: split, train, embed, eval, cv. Options shared with the config
file override it; ``--threads 1`` pins the numerical libraries to one
thread before they are imported, which makes reruns byte-identical.
Failures print one ``error:<code>: message`` line to stderr and exit
nonzero.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, build_config

log = logging.getLogger("crossling")

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--corpus", help="corpus TSV (language, concept, text)")
    p.add_argument("--split", help="split file path")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    p.add_argument("--quiet", action="store_true", help="warnings only")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossling",
        description="Crosslingual document embeddings: train, embed, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="sample held-out queries and candidate pools")
    _add_shared(p)
    p.add_argument("--languages", help="comma-separated language codes")
    p.add_argument("--pairs", help="comma-separated lang:lang pairs")
    p.add_argument("--mode", choices=("joint", "pairwise", "transitive"))
    p.add_argument("--n-queries", type=int, dest="n_queries")
    p.add_argument("--n-valid", type=int, dest="n_valid")
    p.add_argument("--n-candidates", type=int, dest="n_candidates")

    p = sub.add_parser("train", help="train model(s) on a split's training set")
    _add_shared(p)
    p.add_argument("--model", help="output model path (pairwise adds a pair suffix)")
    p.add_argument("--lambda", type=float, dest="ridge", help="ridge strength; omit to cross-validate")
    p.add_argument("--lambda-grid", dest="lambda_grid", help="comma-separated grid for cross-validation")
    p.add_argument("--rank", type=int)
    p.add_argument("--max-vocab", type=int, dest="max_vocab")
    p.add_argument("--min-doc-freq", type=int, dest="min_doc_freq")
    p.add_argument("--min-unique", type=int, dest="min_unique")
    p.add_argument("--max-unique", type=int, dest="max_unique")
    p.add_argument("--cg-eps", type=float, dest="cg_eps")
    p.add_argument("--cg-max-iter", type=int, dest="cg_max_iter")
    p.add_argument("--eig-eps", type=float, dest="eig_eps")
    p.add_argument("--eig-max-iter", type=int, dest="eig_max_iter")

    p = sub.add_parser("embed", help="embed a TSV of (language, id, text) rows")
    _add_shared(p)
    p.add_argument("--model", help="model file")
    p.add_argument("--input", help="input TSV path")
    p.add_argument("--output", help="output TSV path")

    p = sub.add_parser("eval", help="retrieval precision of a model on a split")
    _add_shared(p)
    p.add_argument("--model", help="model file")
    p.add_argument("--report", help="output report TSV")
    p.add_argument("--measure", help="comma-separated measures (cosine, csls)")
    p.add_argument("--k", help="comma-separated cutoffs")
    p.add_argument("--csls-k", type=int, dest="csls_k")

    p = sub.add_parser("cv", help="validation precision per ridge value")
    _add_shared(p)
    p.add_argument("--lambda-grid", dest="lambda_grid", help="comma-separated grid")
    p.add_argument("--rank", type=int)
    p.add_argument("--max-vocab", type=int, dest="max_vocab")
    p.add_argument("--min-doc-freq", type=int, dest="min_doc_freq")
    p.add_argument("--min-unique", type=int, dest="min_unique")
    p.add_argument("--max-unique", type=int, dest="max_unique")
    p.add_argument("--cg-eps", type=float, dest="cg_eps")
    p.add_argument("--cg-max-iter", type=int, dest="cg_max_iter")
    p.add_argument("--eig-eps", type=float, dest="eig_eps")
    p.add_argument("--eig-max-iter", type=int, dest="eig_max_iter")

    return parser


def _overrides(args: argparse.Namespace) -> dict:
    from .config import _parse_pairs, _parse_tuple  # noqa: internal reuse

    out = {}
    simple = (
        "corpus", "split", "model", "report", "input", "output", "seed", "threads",
        "mode", "n_queries", "n_valid", "n_candidates", "max_vocab", "min_doc_freq",
        "min_unique", "max_unique", "ridge", "rank", "cg_eps", "cg_max_iter",
        "eig_eps", "eig_max_iter", "csls_k",
    )
    for name in simple:
        value = getattr(args, name, None)
        if value is not None:
            out[name] = value
    if getattr(args, "languages", None):
        out["languages"] = _parse_tuple(args.languages, str)
    if getattr(args, "pairs", None):
        out["pairs"] = _parse_pairs(args.pairs)
    if getattr(args, "lambda_grid", None):
        out["ridge_grid"] = _parse_tuple(args.lambda_grid, float)
    if getattr(args, "measure", None):
        out["measure"] = _parse_tuple(args.measure, str)
    if getattr(args, "k", None):
        out["k"] = _parse_tuple(args.k, int)
    return out


def _require(cfg, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) in (None, (), "")]
    if missing:
        raise ConfigError(f"missing required options: {', '.join(missing)}")


def cmd_split(cfg) -> int:
    from . import corpus as corpus_mod
    from . import pipeline
    from .splits import make_splits, write_split

    _require(cfg, "corpus", "split")
    docs = corpus_mod.read_corpus(cfg.corpus)
    pairs = pipeline.resolve_pairs(cfg)
    split = make_splits(docs, pairs, cfg.n_queries, cfg.n_valid, cfg.n_candidates, cfg.mode, cfg.seed)
    write_split(split, cfg.split)
    for pair in split.pairs:
        a, b = pair
        print(
            f"pair\t{a}\t{b}\ttest={len(split.test_concepts[pair])}"
            f"\tvalid={len(split.valid_concepts[pair])}"
        )
    for lang in sorted(split.candidates):
        print(f"candidates\t{lang}\t{len(split.candidates[lang])}")
    print(f"train_docs\t{len(split.train_docs)}")
    return 0


def cmd_train(cfg) -> int:
    from . import corpus as corpus_mod
    from . import pipeline
    from .model import save_model
    from .splits import read_split

    _require(cfg, "corpus", "split", "model")
    docs = corpus_mod.read_corpus(cfg.corpus)
    split = read_split(cfg.split, docs)
    if split.mode == "pairwise":
        for pair in split.pairs:
            model = pipeline.train_model(docs, split, cfg, pair)
            path = pipeline.model_path_for_pair(cfg.model, pair)
            save_model(model, path)
            print(f"model\t{pair[0]}-{pair[1]}\t{path}")
    else:
        model = pipeline.train_model(docs, split, cfg)
        save_model(model, cfg.model)
        print(f"model\t{split.mode}\t{cfg.model}")
    return 0


def cmd_embed(cfg) -> int:
    from .corpus import CorpusFormatError, unescape_text
    from .model import embed_text, load_model, write_embeddings

    _require(cfg, "model", "input", "output")
    model = load_model(cfg.model)
    known = set(model.languages)
    rows = []
    skipped = 0
    zero = 0
    with open(cfg.input, "r", encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusFormatError(
                    f"{cfg.input}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            language, row_id, text = parts
            if language not in known:
                skipped += 1
                log.warning("%s:%d: skipping unknown language %r", cfg.input, lineno, language)
                continue
            vec = embed_text(model, language, unescape_text(text))
            if not vec.any():
                zero += 1
            rows.append((row_id, vec))
    write_embeddings(rows, cfg.output)
    if skipped:
        print(f"skipped\t{skipped}", file=sys.stderr)
    if zero:
        print(f"zero_vectors\t{zero}", file=sys.stderr)
    print(f"embedded\t{len(rows)}\t{cfg.output}")
    return 0


def cmd_eval(cfg) -> int:
    from . import corpus as corpus_mod
    from . import pipeline
    from .model import load_model
    from .retrieval import write_report
    from .splits import read_split

    _require(cfg, "corpus", "split", "model", "report")
    docs = corpus_mod.read_corpus(cfg.corpus)
    split = read_split(cfg.split, docs)
    model = load_model(cfg.model)
    report = pipeline.evaluate_model(model, split, docs, cfg.measure, cfg.k, cfg.csls_k)
    write_report(report, cfg.report)
    for entry in report.entries:
        for k in sorted(entry.precision):
            print(
                f"{entry.query_lang}\t{entry.target_lang}\t{entry.measure}"
                f"\t{k}\t{entry.precision[k]:.6f}"
            )
    return 0


def cmd_cv(cfg) -> int:
    from . import corpus as corpus_mod
    from . import pipeline
    from .splits import read_split

    _require(cfg, "corpus", "split")
    docs = corpus_mod.read_corpus(cfg.corpus)
    split = read_split(cfg.split, docs)
    cv = pipeline.cross_validate(docs, split, cfg)
    print("lambda\tvalid_p1")
    for ridge, precision in cv.scores:
        print(f"{ridge:g}\t{precision:.6f}")
    print(f"best\t{cv.best_ridge:g}")
    return 0


_COMMANDS = {
    "split": cmd_split,
    "train": cmd_train,
    "embed": cmd_embed,
    "eval": cmd_eval,
    "cv": cmd_cv,
}


def _error_code(exc: BaseException) -> str:
    from . import corpus as corpus_mod
    from . import linop, retrieval, solver
    from .model import ModelFormatError
    from .pipeline import PipelineError
    from .splits import SplitError

    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, corpus_mod.CorpusFormatError):
        return "corpus-format"
    if isinstance(exc, corpus_mod.VocabularyError):
        return "vocab"
    if isinstance(exc, corpus_mod.UnknownLanguageError):
        return "unknown-language"
    if isinstance(exc, SplitError):
        return "split"
    if isinstance(exc, ModelFormatError):
        return "model-format"
    if isinstance(exc, solver.RankDeficiencyError):
        return "rank-deficient"
    if isinstance(exc, linop.NumericalBreakdownError):
        return "numerical"
    if isinstance(exc, retrieval.RetrievalError):
        return "retrieval"
    if isinstance(exc, PipelineError):
        return "pipeline"
    if isinstance(exc, FileNotFoundError):
        return "io"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (ValueError, KeyError)):
        return "invalid"
    return "internal"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads is None and args.config:
        # peek at the config so the pin happens before numpy is imported
        try:
            from .config import read_config

            threads = read_config(args.config).get("threads")
        except ConfigError:
            threads = None
    if threads is not None and threads >= 1:
        for var in _THREAD_VARS:
            os.environ[var] = str(threads)
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args.config, _overrides(args))
        return _COMMANDS[args.command](cfg)
    except BrokenPipeError:
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        code = _error_code(exc)
        message = str(exc).replace("\n", " ")
        print(f"error:{code}: {message}", file=sys.stderr)
        log.debug("failure detail", exc_info=exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
