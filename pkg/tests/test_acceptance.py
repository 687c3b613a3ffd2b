"""End-to-end properties, each checked against an independent oracle.

Every test here draws from its own seeded RNG so the suite is
deterministic run to run.
"""

import itertools
import random
import subprocess
import sys

import pytest

import util
from treeder import gen, lam, prime, relabel
from treeder import transducer as td
from treeder.core import (
    Folded,
    Node,
    Port,
    Sym,
    TermVal,
    arity,
    flatten,
    fold_flatten,
    map_labels,
    term_nodes,
    unit,
)
from treeder.factforest import check_aperiodic, factorise, flatn, is_hereditarily_homogeneous
from treeder.lam import Arrow, O, Out
from treeder.matrix import is_monotone, unfold_general, unfold_monotone
from treeder.unfold_decomp import (
    classify_twists,
    unfold_alpha_homogeneous,
    unfold_constant_twist,
    unfold_homogeneous,
    unfold_monotone_decomposed,
)

ABU = util.ABU


def random_term(rng, max_size, n_ports=0):
    return TermVal(gen.random_tree(rng, ABU, rng.randint(1, max_size), n_ports))


def one_node_term(sym):
    return TermVal(Node(sym, tuple(Port() for _ in range(sym.arity))))


# ---------------------------------------------------------------------------
# Substitution and graded fold laws
# ---------------------------------------------------------------------------


def random_folded(rng, payload):
    n = arity(payload)
    k = rng.randint(1, 3)
    outer = rng.randint(max(1, -(-n // k)), n + 2)
    slots = [(g, s) for g in range(1, outer + 1) for s in range(1, k + 1)]
    grouping = dict(zip(range(1, n + 1), rng.sample(slots, n)))
    return Folded(payload, grouping, k, outer)


def test_monad_and_graded_fold_laws():
    rng = random.Random(101)
    for _ in range(1000):
        t = random_term(rng, 200)
        # unit is a two-sided identity for substitution
        assert flatten(unit(t)) == t
        wrapped = TermVal(map_labels(t.root, lambda s: one_node_term(s)))
        assert flatten(wrapped) == t
    for _ in range(200):
        # substitution is associative on doubly nested terms
        t = random_term(rng, 12)
        tt = TermVal(map_labels(t.root, lambda s: unit(one_node_term(s))))
        assert flatten(flatten(tt)) == flatten(
            TermVal(map_labels(tt.root, flatten))
        )
    for _ in range(300):
        # collapsing graded folds multiplies the degrees, in either order
        inner = random_folded(rng, random_term(rng, 8, rng.randint(0, 3)))
        middle = random_folded(rng, inner)
        outer = random_folded(rng, middle)
        outer_first = fold_flatten(outer)
        assert outer_first.k == middle.k * outer.k
        via_outer = fold_flatten(outer_first)
        inner_first = Folded(
            fold_flatten(middle), outer.grouping, outer.k, outer.outer_arity
        )
        via_inner = fold_flatten(inner_first)
        assert via_inner.k == inner.k * middle.k * outer.k
        assert via_inner == via_outer


# ---------------------------------------------------------------------------
# Factoring a two-sided term into alternating blocks
# ---------------------------------------------------------------------------


def _distinct_two_sided(rng, size):
    """A tree over left/right-injected symbols with unique names, so block
    membership can be read off the labels."""
    t = gen.random_tree(rng, ABU, size)
    counter = itertools.count()
    from treeder.core import Inj, rebuild

    def retag(n, ch):
        i = next(counter)
        side = rng.choice((1, 2))
        return Node(Inj(side, Sym(f"n{i}", n.label.arity)), tuple(ch))

    return TermVal(rebuild(t, retag))


def _blocks(factored):
    """name -> factor index, reading the inner labels of each factor."""
    owner = {}
    for i, outer_node in enumerate(term_nodes(factored.root)):
        factor = outer_node.label.payload
        for inner in term_nodes(factor.root):
            owner[inner.label.payload.name] = i
    return owner


def test_two_sided_factoring_laws():
    rng = random.Random(102)
    for _ in range(500):
        t = _distinct_two_sided(rng, rng.randint(1, 40))
        up = prime.fact_up(t)
        down = prime.fact_down(t)
        assert prime.strip_factoring(up) == t
        assert prime.strip_factoring(down) == t
        coarse, fine = _blocks(up), _blocks(down)
        # nodes in the same fine block share a coarse block
        rep = {}
        for name, fb in fine.items():
            cb = coarse[name]
            assert rep.setdefault(fb, cb) == cb


# ---------------------------------------------------------------------------
# Pre-order traversal
# ---------------------------------------------------------------------------


def _preorder_oracle(root):
    """(labels of nodes, original index of each port) in pre-order, ports
    numbered by document order in the input."""
    port_no = {}
    counter = itertools.count(1)

    def number(n):
        for c in n.children:
            if isinstance(c, Port):
                port_no[id(c)] = next(counter)
            else:
                number(c)

    labels, ports = [], []

    def walk(n):
        # a node's port slots stay at its own spine position, so they come
        # before any port inside its subtrees
        labels.append(n.label.name)
        for c in n.children:
            if isinstance(c, Port):
                ports.append(port_no[id(c)])
        for c in n.children:
            if isinstance(c, Node):
                walk(c)

    number(root)
    walk(root)
    return labels, ports


def test_preorder_spine_matches_recursive_oracle():
    rng = random.Random(103)
    for _ in range(500):
        t = random_term(rng, 40, rng.randint(0, 4))
        f = prime.preorder(t)
        if isinstance(t.root, Port):
            assert f.grouping == {1: (1, 1)}
            continue
        labels, ports = _preorder_oracle(t.root)
        spine = []
        n = f.payload.root
        while n.label.name == "pre2":
            spine.append(n.children[0].label.name)
            n = n.children[1]
        assert n.label.name == "pre0"
        assert spine == labels
        # the fold's grouping is a bijection back onto the original ports
        targets = [f.grouping[i][0] for i in range(1, len(ports) + 1)]
        assert targets == ports
        assert sorted(targets) == list(range(1, len(ports) + 1))


# ---------------------------------------------------------------------------
# Decomposed unfolding routes
# ---------------------------------------------------------------------------


def test_unfold_constant_twist_matches_general():
    rng = random.Random(104)
    for _ in range(300):
        k = rng.randint(1, 3)
        t = util.element_tree(rng, util.constant_element, k, rng.randint(1, 80))
        assert classify_twists(t, k).kind == "constant"
        assert unfold_constant_twist(t, k) == unfold_general(t, k)


def test_unfold_alpha_homogeneous_matches_general():
    rng = random.Random(105)
    done = 0
    while done < 300:
        k = rng.randint(1, 3)
        alpha = util.idempotent_monotone_map(rng, k)
        t = util.element_tree(
            rng, lambda r, kk, o: util.alpha_element(r, kk, o, alpha), k, rng.randint(2, 80)
        )
        assert classify_twists(t, k).kind in ("constant", "equal")
        assert unfold_alpha_homogeneous(t, k) == unfold_general(t, k)
        done += 1


def test_unfold_homogeneous_matches_general():
    rng = random.Random(106)
    done = strictly_homogeneous = 0
    while done < 300:
        k = rng.randint(2, 3)
        alpha = util.idempotent_monotone_map(rng, k)
        root = util.mixed_root(rng, k, alpha)
        left = util.element_tree(rng, util.constant_element, k, rng.randint(1, 20))
        right = util.stabilizer_chain(rng, k, alpha, rng.randint(1, 6))
        t = Node(root, (left, right))
        cls = classify_twists(t, k)
        assert cls.kind != "other"
        strictly_homogeneous += cls.kind == "homogeneous"
        assert unfold_homogeneous(t, k) == unfold_general(t, k)
        done += 1
    assert strictly_homogeneous >= 100  # the mixed class is actually exercised


def test_unfold_monotone_decomposed_matches_general():
    rng = random.Random(107)
    for _ in range(300):
        k = rng.randint(1, 3)
        t = gen.random_matrix_tree(rng, k, ABU, rng.randint(1, 80))
        got = unfold_monotone_decomposed(TermVal(t), k)
        assert got is not None
        assert got == unfold_general(t, k)


# ---------------------------------------------------------------------------
# The swap chain: what full unfolding can do and monotone unfolding cannot
# ---------------------------------------------------------------------------


def _contains_white(member):
    return any(n.label.name == "white" for n in term_nodes(flatten(member).root))


def test_swap_chain_parity_and_monotone_rejection():
    for n in range(9):
        chain = util.swap_chain(n)
        first = unfold_general(chain, 2).members[0]
        assert _contains_white(first) == (n % 2 == 1)
        if n >= 1:
            assert unfold_monotone(chain, 2) is None
            assert unfold_monotone_decomposed(TermVal(chain), 2) is None


# ---------------------------------------------------------------------------
# Factorisation forests
# ---------------------------------------------------------------------------


def test_factorisation_forest_laws():
    rng = random.Random(108)
    for _ in range(300):
        monoid = rng.choice(util.APERIODIC_MONOIDS)
        h = util.random_hom(rng, monoid, ABU)
        t = random_term(rng, 25)
        trace = []
        nt = factorise(t, h, _measure_trace=trace)
        assert flatn(nt) == t
        assert is_hereditarily_homogeneous(nt, h)
        # every recursive call strictly shrinks the measure of the root call
        assert trace and all(m < trace[0] for m in trace[1:])
    assert not check_aperiodic(util.z2())
    with pytest.raises(Exception):
        factorise(random_term(random.Random(0), 5), util.random_hom(random.Random(0), util.z2(), ABU))


# ---------------------------------------------------------------------------
# Type automata over leftmost words
# ---------------------------------------------------------------------------


def _closure_types(max_size):
    out = [O]
    grown = True
    while grown:
        grown = False
        for s, t in itertools.product(list(out), list(out)):
            a = Arrow(s, t)
            if lam.type_size(a) <= max_size and a not in out:
                out.append(a)
                grown = True
    return out


def _scan_word(w, X, closure):
    """(type of the word or None, whether every prefix types inside the
    closure), in a single pass."""
    tau = None
    if w[0][0] == "var":
        tau = X.get(w[0][1])
    inside = tau in closure
    for letter in w[1:]:
        if tau is None:
            return None, False
        if letter[0] == "lam":
            tau = Arrow(X[letter[1]], tau) if letter[1] in X else None
        elif letter[0] == "app":
            tau = tau.dst if isinstance(tau, Arrow) else None
        else:
            return None, False
        inside = inside and tau in closure
    return tau, inside and tau is not None


def test_type_dfa_exhaustive_and_counter_free():
    atoms = _closure_types(4)  # just o and o -> o at this size
    for base_size in range(1, len(atoms) + 1):
        for base in itertools.combinations(atoms, base_size):
            closure = lam.downward_closure(base)
            names = ["x", "y", "z"]
            tlist = sorted(closure, key=lambda t: (lam.type_size(t), repr(t)))
            for assign in itertools.product(tlist, repeat=3):
                X = dict(zip(names, assign))
                letters = [("app",)]
                for v in names:
                    letters += [("var", v), ("lam", v)]
                for target in closure:
                    dfa = lam.build_type_dfa(closure, target)
                    assert lam.check_counter_free(dfa)
                    for length in range(1, 7):
                        if length > 4 and len(letters) > 5:
                            letters_here = letters[:5]  # keep the blow-up sane
                        else:
                            letters_here = letters
                        for w in itertools.product(letters_here, repeat=length):
                            got = lam.dfa_accepts(dfa, w, X)
                            tau, inside = _scan_word(w, X, closure)
                            assert tau == lam.word_type(w, X)
                            # sound: acceptance implies the right type
                            assert not got or tau == target
                            # complete on words typed inside the closure
                            if inside:
                                assert got == (tau == target)


# ---------------------------------------------------------------------------
# Linear normalisation
# ---------------------------------------------------------------------------


def _size(t):
    return sum(1 for _ in term_nodes(t.root))


def test_linear_normalisation_matches_reference():
    rng = random.Random(109)
    types = [Arrow(O, O), Arrow(O, Arrow(O, O)), O]
    for _ in range(500):
        X = {"f1": O, "f2": Arrow(O, O)}
        t = gen.random_linear_term(rng, types, X, letters=[("a", 2), ("e", 0)])
        got = lam.normalize_linear(t, types, X)
        want = lam.reference_normalize(t)
        assert got is not None
        assert got == want or lam.alpha_equal(got, want)
        assert _size(got) <= _size(t)


def test_duplicating_terms_blow_up_and_are_rejected():
    types = lam.downward_closure([Arrow(O, Arrow(O, O))])
    for n in range(1, 11):
        t = lam.exponential_term(n)
        assert _size(lam.reference_normalize(t)) >= 2**n
        assert lam.normalize_linear(t, types, dict(lam.EXPONENTIAL_VARS)) is None


# ---------------------------------------------------------------------------
# Thin terms normalise to their pre-order
# ---------------------------------------------------------------------------


def _out_names(t):
    return [n.label.name for n in term_nodes(t.root) if isinstance(n.label, Out)]


def test_thin_normal_form_is_preorder_of_input():
    rng = random.Random(110)
    for _ in range(300):
        t = util.random_thin_term(rng, rng.randint(2, 50))
        assert lam.is_thin(t) and lam.is_linear(t)
        assert _out_names(lam.reference_normalize(t)) == _out_names(t)
        word = lam.normalize_thin(t)  # internally asserts the survivor order
        assert _out_names(word.payload) == _out_names(t)


# ---------------------------------------------------------------------------
# Transducer routes and monotonicity transfer
# ---------------------------------------------------------------------------


def test_transducer_routes_agree():
    rng = random.Random(111)
    defined = 0
    for _ in range(200):
        tr = util.random_valid_transducer(rng, rng.randint(1, 3))
        t = gen.random_tree(rng, list(util.TD_IN), rng.randint(1, 60))
        direct = td.run(tr, t)
        via = td.run_via_lambda(tr, t)
        assert direct == via
        defined += direct is not None
    assert defined >= 50  # both outcomes are exercised


def test_update_monotonicity_matches_lambda_representation():
    rng = random.Random(112)
    monotone = crossing = 0
    for _ in range(500):
        n_regs = rng.randint(1, 3)
        names = ["r%d" % i for i in range(1, n_regs)] + ["res"]
        regs = td.RegisterSet(
            tuple((nm, rng.randint(0, 2) if nm != "res" else 0) for nm in names), "res"
        )
        sym = rng.choice(util.TD_IN)
        u = util.random_update(rng, regs, sym)
        want = td.is_monotone_update(u, regs)
        assert is_monotone(td.lambda_repr(u, regs)) == want
        monotone += want
        crossing += not want
    assert monotone and crossing  # violators are included


# ---------------------------------------------------------------------------
# Relabelling characteristic functions
# ---------------------------------------------------------------------------


def _paths(root):
    """Every node with the list of its ancestors, outermost first."""
    out = []

    def walk(n, anc):
        out.append((n, anc))
        for c in n.children:
            walk(c, anc + [n])

    walk(root, [])
    return out


def _selected_names(tagged):
    return [n.label.name.endswith(".1") for n in term_nodes(tagged.root)]


def _node_order(root):
    return [n for n in term_nodes(root)]


def test_relabel_matches_node_pair_oracle_exhaustively():
    alphabets = [
        [Sym("a", 2), Sym("b", 0)],
        [Sym("a", 1), Sym("b", 0)],
    ]
    subsets = [frozenset(s) for s in [(), ("a",), ("b",), ("a", "b")]]
    for alphabet in alphabets:
        for root in util.enumerate_trees(alphabet, 9):
            t = TermVal(root)
            info = _paths(root)
            descendants = {}
            for n, anc in info:
                for depth, a in enumerate(anc):
                    descendants.setdefault(id(a), []).append((n, anc[depth + 1 :]))
            for gamma in subsets:
                for delta in subsets:
                    for reflexive in (False, True):
                        got_until = _selected_names(
                            relabel.char_until(t, gamma, delta, reflexive)
                        )
                        want_until = []
                        for n, _ in info:
                            hit = any(
                                d.label.name in delta
                                and all(m.label.name in gamma for m in between)
                                for d, between in descendants.get(id(n), [])
                            )
                            if reflexive:
                                hit = hit or n.label.name in delta
                            want_until.append(hit)
                        assert got_until == want_until

                        got_since = _selected_names(
                            relabel.char_since(t, gamma, delta, reflexive)
                        )
                        want_since = []
                        for n, anc in info:
                            hit = any(
                                a.label.name in delta
                                and all(m.label.name in gamma for m in anc[i + 1 :])
                                for i, a in enumerate(anc)
                            )
                            if reflexive:
                                hit = hit or n.label.name in delta
                            want_since.append(hit)
                        assert got_since == want_since
            for i in (1, 2, 3):
                got = _selected_names(relabel.char_child(t, i))
                want = []

                def child_flags(n, flag):
                    want.append(flag)
                    for j, c in enumerate(n.children, start=1):
                        child_flags(c, j == i)

                child_flags(root, False)
                assert got == want


# ---------------------------------------------------------------------------
# Command line determinism
# ---------------------------------------------------------------------------


def _cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "treeder.cli", *args],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "TREEDER_COLOR": "0"},
    )


def test_cli_selftest_is_deterministic():
    first = _cli("selftest", "--seed", "7", "--max-size", "10")
    second = _cli("selftest", "--seed", "7", "--max-size", "10")
    assert first.returncode == 0, first.stdout + first.stderr
    assert first.stdout == second.stdout
    assert "suites passed" in first.stdout


def test_cli_both_routes_agree_on_shipped_example():
    r = _cli(
        "run-transducer",
        "examples_data/mirror.stt",
        "examples_data/tree.sexp",
        "--route",
        "both",
    )
    assert r.returncode == 0, r.stdout + r.stderr
    assert r.stdout.strip() == "(a b (a b b))"
