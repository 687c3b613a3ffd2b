import random

import pytest
from hypothesis import given, settings, strategies as st

import util
from treeder import gen
from treeder.core import Inj, Node, Port, Sym, TensorPair, TermVal
from treeder.matrix import MatrixElement
from treeder.sexpr import SexprError, dump, parse, read, write


def test_read_nested_lists():
    assert read("(a (b c) d)") == ["a", ["b", "c"], "d"]
    assert read("atom") == "atom"


def test_read_rejects_garbage():
    for text in ["(a", "a)", "", "(a))", "()"][:3]:
        with pytest.raises(SexprError):
            read(text)
    with pytest.raises(SexprError):
        read("(a) trailing")


def test_tree_syntax():
    t = parse("(a (u b) _)")
    assert isinstance(t, TermVal)
    assert t.root.label == Sym("a", 2)
    assert isinstance(t.root.children[1], Port)
    assert dump(t) == "(a (u b) _)"


def test_matrix_syntax_round_trip():
    text = "(mat 2 1 (tuple (a _) (b _)) ((1 1 2) (2 1 1)))"
    v = parse(text)
    assert isinstance(v, MatrixElement)
    assert v.k == 2
    assert v.outer_arity == 1
    assert v.grouping == {1: (1, 2), 2: (1, 1)}
    assert dump(v) == text


def test_pair_and_injection_syntax():
    v = parse("(pair b (in2 (top 3)))")
    assert isinstance(v, TensorPair)
    assert isinstance(v.right, Inj)
    assert v.right.side == 2
    assert dump(v) == "(pair b (in2 (top 3)))"


def test_fold_syntax_round_trip():
    text = "(fold 2 1 ((1 1 2)) _)"
    v = parse(text)
    assert v.k == 2
    assert dump(v) == text


def test_parse_errors_are_sexpr_errors():
    for text in ["(mat x 1 (tuple b) ())", "(in3 b)", "(fold 1 1 ((1 1)) b)"]:
        with pytest.raises(SexprError):
            parse(text)


def test_canonical_output_has_no_extra_whitespace():
    v = parse("( a   ( u   b )\n  b )")
    assert dump(v) == "(a (u b) b)"


@settings(max_examples=150)
@given(st.integers(1, 80), st.integers(0, 3), st.integers(0, 2**30))
def test_tree_round_trip(size, ports, seed):
    rng = random.Random(seed)
    t = gen.random_tree(rng, util.ABU, size, ports)
    v = TermVal(t) if isinstance(t, Node) else t
    if isinstance(v, Port):
        return
    assert parse(dump(v)) == v


@settings(max_examples=100)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**30))
def test_matrix_round_trip(k, outer, seed):
    rng = random.Random(seed)
    e = gen.random_monotone_element(rng, k, outer, util.ABU)
    assert parse(dump(e)) == e
