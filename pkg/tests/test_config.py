"""Config file parsing, override layering and validation."""

import pytest

from crossling.config import ConfigError, RunConfig, build_config, read_config


def write(tmp_path, text):
    path = tmp_path / "run.conf"
    path.write_text(text, encoding="utf-8")
    return path


def test_read_config_parses_flat_keys(tmp_path):
    path = write(
        tmp_path,
        "# training setup\n"
        "corpus = data/corpus.tsv\n"
        "languages = en, de\n"
        "pairs = en:de, en:fr\n"
        "\n"
        "lambda = 0.5   # ridge strength\n"
        "lambda_grid = 0.1, 1, 10\n"
        "rank = 64\n"
        "measure = cosine\n"
        "k = 1, 10\n",
    )
    values = read_config(path)
    assert values == {
        "corpus": "data/corpus.tsv",
        "languages": ("en", "de"),
        "pairs": (("en", "de"), ("en", "fr")),
        "ridge": 0.5,
        "ridge_grid": (0.1, 1.0, 10.0),
        "rank": 64,
        "measure": ("cosine",),
        "k": (1, 10),
    }


def test_read_config_unknown_key_names_line(tmp_path):
    path = write(tmp_path, "rank = 8\nshrinkage = 3\n")
    with pytest.raises(ConfigError, match="2"):
        read_config(path)


def test_read_config_requires_assignment(tmp_path):
    path = write(tmp_path, "rank 8\n")
    with pytest.raises(ConfigError, match="key = value"):
        read_config(path)


def test_read_config_bad_value_names_key(tmp_path):
    path = write(tmp_path, "rank = many\n")
    with pytest.raises(ConfigError, match="rank"):
        read_config(path)


def test_read_config_bad_pair_syntax(tmp_path):
    path = write(tmp_path, "pairs = en-de\n")
    with pytest.raises(ConfigError, match="lang:lang"):
        read_config(path)


def test_read_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        read_config("/nonexistent/run.conf")


def test_build_config_defaults():
    cfg = build_config(None, {})
    assert cfg == RunConfig()
    assert cfg.mode == "joint"
    assert cfg.threads == 1
    assert cfg.ridge is None  # cross-validate by default


def test_build_config_overrides_beat_file(tmp_path):
    path = write(tmp_path, "rank = 64\nseed = 5\n")
    cfg = build_config(str(path), {"rank": 8, "mode": "pairwise"})
    assert cfg.rank == 8  # CLI wins
    assert cfg.seed == 5  # file survives where no override given
    assert cfg.mode == "pairwise"


def test_build_config_none_overrides_are_ignored(tmp_path):
    path = write(tmp_path, "rank = 64\n")
    cfg = build_config(str(path), {"rank": None, "seed": None})
    assert cfg.rank == 64
    assert cfg.seed == 0


@pytest.mark.parametrize(
    "overrides, fragment",
    [
        ({"mode": "cascade"}, "mode"),
        ({"threads": 0}, "threads"),
        ({"rank": 0}, "rank"),
        ({"ridge": -1.0}, "lambda"),
        ({"ridge_grid": (1.0, 0.0)}, "lambda_grid"),
        ({"n_queries": 0}, "n_queries"),
        ({"min_unique": 10, "max_unique": 5}, "min_unique"),
        ({"k": (0,)}, "k values"),
        ({"measure": ("cosine", "manhattan")}, "manhattan"),
    ],
)
def test_build_config_validation(overrides, fragment):
    with pytest.raises(ConfigError, match=fragment):
        build_config(None, overrides)
