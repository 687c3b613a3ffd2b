import random

import pytest
from hypothesis import given, strategies as st

import util
from treeder import gen
from treeder.core import (
    Coproduct,
    Finite,
    FoldOf,
    Folded,
    Inj,
    Node,
    Port,
    RankedAlphabet,
    StructureError,
    Sym,
    Tensor,
    TensorPair,
    Terminal,
    TerminalElem,
    TermOf,
    TermVal,
    arity,
    check_grouping,
    flatten,
    fold_flatten,
    map_labels,
    natural_pair_index,
    plug,
    rebuild,
    term_arity,
    term_nodes,
    typecheck,
    unit,
)

A, U, B = Sym("a", 2), Sym("u", 1), Sym("b", 0)


def leaf(sym=B):
    return Node(sym, ())


def test_symbols_and_arity():
    assert arity(leaf()) == 0
    assert arity(Node(A, (Port(), Port()))) == 2
    assert arity(TensorPair(TermVal(Node(A, (Port(), Port()))), TermVal(Port()))) == 3
    assert arity(TerminalElem(4)) == 4
    assert arity(Inj(1, TermVal(Port()))) == 1


def test_ports_are_distinct_objects():
    p, q = Port(), Port()
    assert p is not q
    assert term_arity(Node(A, (p, q))) == 2


def test_plug_fills_in_document_order():
    t = Node(A, (Port(), Node(U, (Port(),))))
    filled = plug(t, [leaf(), Node(U, (leaf(),))])
    assert filled == Node(A, (leaf(), Node(U, (Node(U, (leaf(),)),))))


def test_plug_wrong_count():
    with pytest.raises(StructureError):
        plug(Node(A, (Port(), Port())), [leaf()])


def test_map_labels_preserves_shape():
    t = Node(A, (leaf(), Node(U, (leaf(),))))
    renamed = map_labels(t, lambda s: Sym(s.name.upper(), s.arity))
    assert [n.label.name for n in term_nodes(renamed)] == ["A", "B", "U", "B"]


def test_check_grouping_rejects_collisions():
    check_grouping({1: (1, 1), 2: (1, 2)}, 2, 2, 1)
    with pytest.raises(StructureError):
        check_grouping({1: (1, 1), 2: (1, 1)}, 2, 2, 1)
    with pytest.raises(StructureError):
        check_grouping({1: (1, 3)}, 1, 2, 1)  # slot out of range
    with pytest.raises(StructureError):
        check_grouping({1: (2, 1)}, 1, 2, 1)  # group out of range


def test_unit_and_flatten_small():
    t = TermVal(Node(A, (leaf(), leaf())))
    assert flatten(unit(t)) == t
    # substituting one-node terms for labels is also the identity
    wrapped = TermVal(
        map_labels(
            t.root, lambda s: TermVal(Node(s, tuple(Port() for _ in range(s.arity))))
        )
    )
    assert flatten(wrapped) == t


def test_flatten_substitutes_at_ports():
    body = TermVal(Node(U, (Port(),)))
    t = TermVal(Node(body, (Node(unit(TermVal(leaf())).root.label, ()),)))
    assert flatten(t) == TermVal(Node(U, (leaf(),)))


def test_fold_flatten_multiplies_degrees():
    inner = Folded(TermVal(Port()), {1: (1, 1)}, 1, 1)
    outer = Folded(inner, {1: (1, 2)}, 2, 1)
    collapsed = fold_flatten(outer)
    assert collapsed.k == 2
    assert collapsed.outer_arity == 1


def test_typecheck_basic_shapes():
    alphabet = RankedAlphabet([("a", 2), ("u", 1), ("b", 0)])
    fin = Finite(alphabet)
    assert typecheck(A, fin)
    assert not typecheck(Sym("z", 0), fin)
    assert typecheck(TermVal(Node(A, (leaf(), leaf()))), TermOf(fin))
    assert typecheck(TensorPair(A, B), Tensor(fin, fin))
    assert typecheck(Inj(2, TerminalElem(0)), Coproduct(fin, Terminal()))
    assert typecheck(
        Folded(TermVal(Port()), {1: (1, 1)}, 1, 1), FoldOf(1, TermOf(fin))
    )


def test_natural_pair_index():
    # slot of (p1, p2) in the lexicographic flattening of {1..k1} x {1..k2}
    assert natural_pair_index(1, 1, 2, 3) == 1
    assert natural_pair_index(2, 3, 2, 3) == 6


@given(st.integers(1, 60), st.integers(0, 3), st.integers(0, 2**30))
def test_rebuild_identity_on_random_trees(size, ports, seed):
    rng = random.Random(seed)
    t = gen.random_tree(rng, util.ABU, size, ports)
    if isinstance(t, Port):
        return
    rebuilt = rebuild(t, lambda n, ch: Node(n.label, tuple(ch)))
    assert rebuilt == t
    assert term_arity(rebuilt) == ports


@given(st.integers(1, 120), st.integers(0, 2**30))
def test_flatten_unit_round_trip(size, seed):
    rng = random.Random(seed)
    t = TermVal(gen.random_tree(rng, util.ABU, size))
    assert flatten(unit(t)) == t
