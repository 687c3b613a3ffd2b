"""Shared generators and brute-force oracles for the test suite."""

import itertools
import random

from treeder import gen
from treeder import transducer as td
from treeder.core import Node, Port, Sym, TermVal
from treeder.factforest import Branch, BranchHom, FiniteMonoid
from treeder.lam import Var, app, lam, out
from treeder.matrix import MatrixElement

ABU = [Sym("a", 2), Sym("u", 1), Sym("b", 0)]


def iter_nodes(root):
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, Node):
            stack.extend(reversed(n.children))


def preorder_names(t):
    root = t.root if isinstance(t, TermVal) else t
    return [n.label.name for n in iter_nodes(root) if isinstance(n, Node)]


def enumerate_trees(alphabet, max_size):
    """All port-free trees over the alphabet with at most max_size nodes."""
    by_size = {0: []}

    def of_size(n):
        if n in by_size:
            return by_size[n]
        found = []
        for sym in alphabet:
            if sym.arity == 0:
                if n == 1:
                    found.append(Node(sym, ()))
                continue
            # distribute n-1 nodes over sym.arity non-empty children
            for split in _compositions(n - 1, sym.arity):
                for kids in itertools.product(*(of_size(s) for s in split)):
                    found.append(Node(sym, kids))
        by_size[n] = found
        return found

    out = []
    for n in range(1, max_size + 1):
        out.extend(of_size(n))
    return out


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# Matrix-power trees grouped by twist shape
# ---------------------------------------------------------------------------


def member_tree(rng, n_ports):
    size = rng.randint(max(1, n_ports), n_ports + 3)
    return TermVal(gen.random_tree(rng, ABU, size, n_ports))


def _element_from_assignments(rng, k, outer, assignments):
    """Members in tuple order, each owning the (group, slot) pairs listed
    for it; grouping numbers the ports in document order."""
    members, grouping = [], {}
    p = 1
    for m in range(k):
        members.append(member_tree(rng, len(assignments[m])))
        for (g, s) in sorted(assignments[m]):
            grouping[p] = (g, s)
            p += 1
    return MatrixElement(k, tuple(members), grouping, outer)


def constant_element(rng, k, outer):
    """Each outer port's k slots are wholly owned by one member, so every
    edge twist is a constant map."""
    assignments = [[] for _ in range(k)]
    for g in range(1, outer + 1):
        m = rng.randrange(k)
        for s in range(1, k + 1):
            assignments[m].append((g, s))
    return _element_from_assignments(rng, k, outer, assignments)


def idempotent_monotone_map(rng, k):
    image = sorted(rng.sample(range(1, k + 1), rng.randint(1, k)))
    vals = sorted(min(image, key=lambda i: (abs(i - s), i)) for s in range(1, k + 1))
    alpha = {s: vals[s - 1] for s in range(1, k + 1)}
    for i in image:
        alpha[i] = i
    return alpha


def alpha_element(rng, k, outer, alpha):
    """Slot (g, s) owned by member alpha(s): every edge twist equals alpha."""
    assignments = [[] for _ in range(k)]
    for g in range(1, outer + 1):
        for s in range(1, k + 1):
            assignments[alpha[s] - 1].append((g, s))
    return _element_from_assignments(rng, k, outer, assignments)


def element_tree(rng, make_elem, k, size):
    def build(budget):
        outer = 0 if budget <= 1 else min(rng.randint(0, 2), budget - 1)
        e = make_elem(rng, k, outer)
        share = max(1, (budget - 1) // max(1, outer))
        return Node(e, tuple(build(rng.randint(1, share)) for _ in range(outer)))

    return build(size)


def mixed_root(rng, k, alpha):
    """Two outer ports: port 1 wired by a constant map, port 2 by alpha."""
    c = rng.randint(1, k)
    assignments = [[] for _ in range(k)]
    for s in range(1, k + 1):
        assignments[c - 1].append((1, s))
        assignments[alpha[s] - 1].append((2, s))
    return _element_from_assignments(rng, k, 2, assignments)


def stabilizer_chain(rng, k, alpha, length):
    """A chain whose edge twists all fix alpha's fibers (alpha ∘ e = alpha)."""
    fibers = {}
    for s in range(1, k + 1):
        fibers.setdefault(alpha[s], []).append(s)
    t = Node(_element_from_assignments(rng, k, 0, [[] for _ in range(k)]), ())
    for _ in range(length):
        e = {}
        for fib in fibers.values():
            for s, v in zip(fib, sorted(rng.choices(fib, k=len(fib)))):
                e[s] = v
        assignments = [[] for _ in range(k)]
        for s in range(1, k + 1):
            assignments[e[s] - 1].append((1, s))
        t = Node(_element_from_assignments(rng, k, 1, assignments), (t,))
    return t


# ---------------------------------------------------------------------------
# Swap-chain family: k=2, each node exchanges the two coordinates
# ---------------------------------------------------------------------------

WHITE, BLACK = Sym("white", 0), Sym("black", 0)


def swap_element():
    a = Sym("a", 1)
    m1 = TermVal(Node(a, (Port(),)))
    m2 = TermVal(Node(a, (Port(),)))
    return MatrixElement(2, (m1, m2), {1: (1, 2), 2: (1, 1)}, 1)


def swap_chain(n):
    """n swap nodes over a (black, white) leaf pair."""
    leaf = MatrixElement(
        2, (TermVal(Node(BLACK, ())), TermVal(Node(WHITE, ()))), {}, 0
    )
    t = Node(leaf, ())
    for _ in range(n):
        t = Node(swap_element(), (t,))
    return t


# ---------------------------------------------------------------------------
# Linear thin λ-terms: chains that branch only at complete redexes
# ---------------------------------------------------------------------------


def random_thin(rng, budget, fresh, end):
    """Every node has at most one non-port child except redex application
    nodes; each redex body is a chain ending at the bound variable."""
    if budget <= 1:
        return end
    if rng.random() < 0.4 and budget >= 4:
        x = f"v{next(fresh)}"
        body = random_thin(rng, (budget - 2) // 2, fresh, Node(Var(x), ()))
        argt = random_thin(rng, (budget - 2) // 2, fresh, end)
        return app(lam(x, body), argt)
    return out(f"o{next(fresh)}", random_thin(rng, budget - 1, fresh, end))


def random_thin_term(rng, size):
    fresh = itertools.count()
    return TermVal(random_thin(rng, size, fresh, out("end")))


# ---------------------------------------------------------------------------
# Random register transducers
# ---------------------------------------------------------------------------

TD_IN = (Sym("a", 2), Sym("u", 1), Sym("b", 0))
TD_OUT = (Sym("f", 2), Sym("g", 1), Sym("c", 0))


def _random_body(rng, regs, budget, pool):
    if pool and rng.random() < 0.5 and budget > 0:
        reg, copy = pool.pop(rng.randrange(len(pool)))
        m = regs.arity_of(reg)
        return Node(
            td.Placeholder(reg, copy, m),
            tuple(_random_body(rng, regs, budget - 1, pool) for _ in range(m)),
        )
    maxar = 2 if budget > 1 else 0
    letter = rng.choice([s for s in TD_OUT if s.arity <= maxar])
    return Node(
        letter,
        tuple(_random_body(rng, regs, budget - 1, pool) for _ in range(letter.arity)),
    )


def _graft_ports(rng, body, m):
    """Replace m random nullary letter leaves with ports; None if body has
    too few leaves."""
    leaves = []

    def walk(n):
        if isinstance(n, Node):
            if not n.children and isinstance(n.label, Sym):
                leaves.append(id(n))
            for c in n.children:
                walk(c)

    walk(body)
    if len(leaves) < m:
        return None
    chosen = set(rng.sample(leaves, m))

    def rebuild(n):
        if id(n) in chosen:
            return Port()
        return Node(n.label, tuple(rebuild(c) for c in n.children))

    return rebuild(body)


def random_update(rng, regs, sym):
    """A register update for one input letter; single-use by a shared
    placeholder pool, not necessarily monotone."""
    pool = [(r, i) for r, _ in regs.registers for i in range(1, sym.arity + 1)]
    rng.shuffle(pool)
    pool = pool[: rng.randint(0, len(pool))]
    rules = []
    for r, m in regs.registers:
        if rng.random() < 0.15:
            continue  # leave the register undefined sometimes
        body = _random_body(rng, regs, rng.randint(1, 5), pool)
        body = _graft_ports(rng, body, m)
        if body is not None:
            rules.append((r, body))
    return td.RegisterUpdate(sym.arity, tuple(rules))


def random_transducer(rng, n_regs):
    names = ["r%d" % i for i in range(1, n_regs)] + ["res"]
    regs = td.RegisterSet(
        tuple((nm, rng.randint(0, 2) if nm != "res" else 0) for nm in names), "res"
    )
    updates = tuple((sym.name, random_update(rng, regs, sym)) for sym in TD_IN)
    return td.Transducer(TD_IN, TD_OUT, regs, updates, ())


def random_valid_transducer(rng, n_regs, max_tries=200):
    for _ in range(max_tries):
        tr = random_transducer(rng, n_regs)
        if not td.validate(tr):
            return tr
    raise AssertionError("could not draw a valid transducer")


# ---------------------------------------------------------------------------
# Small aperiodic monoids and homomorphisms
# ---------------------------------------------------------------------------


def max_chain(n):
    els = tuple(str(i) for i in range(n))
    mul = {(a, b): str(max(int(a), int(b))) for a in els for b in els}
    return FiniteMonoid(els, "0", mul)


def flip_flop():
    els = ("e", "l", "r")
    mul = {(a, b): (a if b == "e" else b) for a in els for b in els}
    return FiniteMonoid(els, "e", mul)


def null_monoid(n):
    """Unit adjoined to elements that multiply to a zero."""
    els = ("e",) + tuple("z%d" % i for i in range(n - 1))
    mul = {}
    for a in els:
        for b in els:
            mul[(a, b)] = b if a == "e" else (a if b == "e" else "z0")
    return FiniteMonoid(els, "e", mul)


APERIODIC_MONOIDS = [
    max_chain(2),
    max_chain(4),
    max_chain(6),
    flip_flop(),
    null_monoid(3),
    null_monoid(5),
]


def z2():
    return FiniteMonoid(
        ("0", "1"),
        "0",
        {("0", "0"): "0", ("0", "1"): "1", ("1", "0"): "1", ("1", "1"): "0"},
    )


def random_hom(rng, monoid, alphabet):
    return BranchHom(
        monoid,
        {
            Branch(s, p): rng.choice(monoid.elements)
            for s in alphabet
            for p in range(1, s.arity + 1)
        },
    )
