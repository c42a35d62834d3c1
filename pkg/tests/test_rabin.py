"""Tests for the Rabin automata"""
from itertools import product

import numpy as np
import pytest

from ltl_fsc.const import BUILTIN_CASE1, BUILTIN_CASE2
from ltl_fsc.exceptions import ModelParseError, UnknownLetter, UnknownName
from ltl_fsc.rabin import (
    accepts_lasso,
    builtin_dra,
    dra_step,
    dump_dra,
    parse_dra,
    run_dra,
)

LETTERS = [
    frozenset(p for p, bit in zip("abc", bits) if bit)
    for bits in product((0, 1), repeat=3)
]


def eventually_always_b_never_c(prefix, cycle):
    if any("c" in letter for letter in (*prefix, *cycle)):
        return False
    return all("b" in letter for letter in cycle)


def infinitely_a_and_b_never_c(prefix, cycle):
    if any("c" in letter for letter in (*prefix, *cycle)):
        return False
    return any("a" in letter for letter in cycle) and any(
        "b" in letter for letter in cycle
    )


def words(max_length, min_length=0):
    for length in range(min_length, max_length + 1):
        yield from product(LETTERS, repeat=length)


@pytest.mark.parametrize(
    "name, oracle",
    [
        (BUILTIN_CASE1, eventually_always_b_never_c),
        (BUILTIN_CASE2, infinitely_a_and_b_never_c),
    ],
)
def test_builtin_matches_lasso_oracle(name, oracle):
    dra = builtin_dra(name)
    # acceptance depends on the prefix only through the state it reaches,
    # the oracle only through whether it contains c
    representatives = {}
    for prefix in words(4):
        key = (run_dra(dra, prefix)[-1], any("c" in letter for letter in prefix))
        representatives.setdefault(key, prefix)
    mismatches = [
        (prefix, cycle)
        for prefix in representatives.values()
        for cycle in words(3, min_length=1)
        if accepts_lasso(dra, prefix, cycle) != oracle(prefix, cycle)
    ]
    assert mismatches == []


@pytest.mark.parametrize("name", [BUILTIN_CASE1, BUILTIN_CASE2])
def test_builtin_sampled_lassos(name):
    dra = builtin_dra(name)
    oracle = infinitely_a_and_b_never_c
    if name == BUILTIN_CASE1:
        oracle = eventually_always_b_never_c
    rng = np.random.default_rng(7)
    for _ in range(2000):
        prefix = [LETTERS[i] for i in rng.integers(8, size=rng.integers(0, 5))]
        cycle = [LETTERS[i] for i in rng.integers(8, size=rng.integers(1, 4))]
        assert accepts_lasso(dra, prefix, cycle) == oracle(prefix, cycle)


def test_dra_step_by_name():
    dra = builtin_dra(BUILTIN_CASE1)
    assert dra_step(dra, "q0", {"b"}) == "q1"
    assert dra_step(dra, "q1", {"a"}) == "q0"
    assert dra_step(dra, "q1", {"b", "c"}) == "q2"


def test_unknown_letter_and_name():
    dra = builtin_dra(BUILTIN_CASE2)
    with pytest.raises(UnknownLetter):
        dra.letter_mask({"z"})
    with pytest.raises(UnknownName):
        builtin_dra("phi3")


def test_empty_cycle_is_rejected():
    with pytest.raises(ValueError):
        accepts_lasso(builtin_dra(BUILTIN_CASE1), [], [])


@pytest.mark.parametrize("name", [BUILTIN_CASE1, BUILTIN_CASE2])
def test_dump_parse(name):
    dra = builtin_dra(name)
    parsed = parse_dra(dump_dra(dra))
    assert parsed.states == dra.states
    assert parsed.initial == dra.initial
    assert parsed.pairs == dra.pairs
    np.testing.assert_array_equal(parsed.delta, dra.delta)


def test_parse_rejects_nondeterminism():
    text = dump_dra(builtin_dra(BUILTIN_CASE1))
    duplicate = text.replace("transitions:\n", "transitions:\n  q0 -- {} --> q1\n")
    with pytest.raises(ModelParseError):
        parse_dra(duplicate)


def test_parse_rejects_partial_transition_function():
    text = dump_dra(builtin_dra(BUILTIN_CASE1))
    partial = "\n".join(
        line for line in text.splitlines() if line != "  q2 -- {a} --> q2"
    )
    with pytest.raises(ModelParseError):
        parse_dra(partial)
