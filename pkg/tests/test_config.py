"""Tests for option files and overrides"""
import pytest

from ltl_fsc.config import build_config, load_config, parse_options
from ltl_fsc.const import DEFAULT_N_NEW, DEFAULT_SEARCH_TIME_LIMIT, EVAL_RICHARDSON
from ltl_fsc.exceptions import InvalidConfig


def test_parse_options():
    text = "# synthesis\nn_max = 5  # small\n\n beta=0.9\neval_method = richardson\n"
    assert parse_options(text) == {
        "n_max": "5",
        "beta": "0.9",
        "eval_method": "richardson",
    }


@pytest.mark.parametrize("text", ["n_max 5\n", "= 5\n"])
def test_parse_options_rejects_malformed_lines(text):
    with pytest.raises(InvalidConfig, match="line 1"):
        parse_options(text)


def test_overrides_win_over_file_options(tmp_path):
    path = tmp_path / "bpi.conf"
    path.write_text("n_max = 5\nbeta = 0.9\n", encoding="utf-8")
    config = build_config(load_config(path), {"beta": 0.5, "n_new": None})
    assert config.n_max == 5
    assert config.beta == 0.5
    assert config.n_new == DEFAULT_N_NEW


def test_build_config_coerces_strings():
    config = build_config({"max_iterations": "7", "eval_method": EVAL_RICHARDSON})
    assert config.max_iterations == 7
    assert config.eval_method == EVAL_RICHARDSON


def test_time_limits_are_coerced():
    assert build_config().time_limit is None
    assert build_config().search_time_limit == DEFAULT_SEARCH_TIME_LIMIT
    config = build_config({"time_limit": "90", "search_time_limit": "12.5"})
    assert config.time_limit == 90.0
    assert config.search_time_limit == 12.5


@pytest.mark.parametrize(
    "options",
    [
        {"n_max": "zero"},
        {"n_max": 0},
        {"beta": 1.5},
        {"eps_feas": -1},
        {"eval_method": "jacobi"},
        {"lp_backend": "cplex"},
        {"unknown": 1},
        {"n_max": 2},
        {"time_limit": "0"},
        {"search_time_limit": "never"},
    ],
)
def test_build_config_rejects(options):
    with pytest.raises(InvalidConfig):
        build_config(options)
