"""Run configuration: defaults, config-file parsing and CLI overrides.

The config file is flat ``key = value`` text (``#`` starts a comment).
Every key can be overridden by the command-line flag of the same name.
This module must stay import-light: the CLI reads ``threads`` before any
numerical library is imported.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


class ConfigError(ValueError):
    """Bad config file or inconsistent option values."""


@dataclass(frozen=True)
class RunConfig:
    corpus: str | None = None
    languages: tuple[str, ...] = ()
    pairs: tuple[tuple[str, str], ...] = ()
    mode: str = "joint"
    n_queries: int = 1000
    n_valid: int = 1000
    n_candidates: int = 200000
    max_vocab: int = 200000
    min_doc_freq: int = 3
    min_unique: int = 50
    max_unique: int = 1000
    ridge: float | None = None  # config key "lambda"; None means cross-validate
    ridge_grid: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    rank: int = 300
    cg_eps: float = 0.01
    cg_max_iter: int = 500
    eig_eps: float = 0.1
    eig_max_iter: int = 250
    measure: tuple[str, ...] = ("cosine", "csls")
    k: tuple[int, ...] = (1, 5, 10)
    csls_k: int = 10
    seed: int = 0
    threads: int = 1
    split: str | None = None
    model: str | None = None
    report: str | None = None
    output: str | None = None
    input: str | None = None


def _parse_pairs(raw: str) -> tuple[tuple[str, str], ...]:
    pairs = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        sides = chunk.split(":")
        if len(sides) != 2 or not sides[0] or not sides[1]:
            raise ConfigError(f"pair {chunk!r} must look like lang:lang")
        pairs.append((sides[0], sides[1]))
    return tuple(pairs)


def _parse_tuple(raw: str, cast):
    return tuple(cast(part.strip()) for part in raw.split(",") if part.strip())


# key -> (attribute, parser)
_PARSERS = {
    "corpus": ("corpus", str),
    "languages": ("languages", lambda raw: _parse_tuple(raw, str)),
    "pairs": ("pairs", _parse_pairs),
    "mode": ("mode", str),
    "n_queries": ("n_queries", int),
    "n_valid": ("n_valid", int),
    "n_candidates": ("n_candidates", int),
    "max_vocab": ("max_vocab", int),
    "min_doc_freq": ("min_doc_freq", int),
    "min_unique": ("min_unique", int),
    "max_unique": ("max_unique", int),
    "lambda": ("ridge", float),
    "lambda_grid": ("ridge_grid", lambda raw: _parse_tuple(raw, float)),
    "rank": ("rank", int),
    "cg_eps": ("cg_eps", float),
    "cg_max_iter": ("cg_max_iter", int),
    "eig_eps": ("eig_eps", float),
    "eig_max_iter": ("eig_max_iter", int),
    "measure": ("measure", lambda raw: _parse_tuple(raw, str)),
    "k": ("k", lambda raw: _parse_tuple(raw, int)),
    "csls_k": ("csls_k", int),
    "seed": ("seed", int),
    "threads": ("threads", int),
    "split": ("split", str),
    "model": ("model", str),
    "report": ("report", str),
    "output": ("output", str),
    "input": ("input", str),
}


def read_config(path) -> dict:
    """Parse a config file into {attribute: value}."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        attr, parser = _PARSERS[key]
        try:
            values[attr] = parser(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def build_config(config_path: str | None, overrides: dict) -> RunConfig:
    """Layer defaults, then the config file, then CLI overrides."""
    values = read_config(config_path) if config_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config attributes {sorted(unknown)}")
    cfg = replace(RunConfig(), **values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.mode not in ("joint", "pairwise", "transitive"):
        raise ConfigError(f"mode must be joint, pairwise or transitive, got {cfg.mode!r}")
    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")
    if cfg.rank < 1:
        raise ConfigError("rank must be at least 1")
    if cfg.ridge is not None and cfg.ridge <= 0:
        raise ConfigError("lambda must be positive")
    if any(g <= 0 for g in cfg.ridge_grid):
        raise ConfigError("lambda_grid values must be positive")
    for name in ("n_queries", "n_candidates", "max_vocab", "min_doc_freq", "csls_k"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be at least 1")
    if cfg.n_valid < 0:
        raise ConfigError("n_valid must be nonnegative")
    if not (0 <= cfg.min_unique <= cfg.max_unique):
        raise ConfigError("need 0 <= min_unique <= max_unique")
    if any(k < 1 for k in cfg.k):
        raise ConfigError("k values must be positive")
    bad = [m for m in cfg.measure if m not in ("cosine", "csls")]
    if bad:
        raise ConfigError(f"unknown measures {bad}")
