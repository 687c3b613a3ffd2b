"""Seeded random generators for trees, matrix elements and λ-terms.

Shared between the test suite and the command line's self-test so both
exercise the same distributions.  Everything is driven by an explicit
``random.Random`` so runs are reproducible.
"""

from __future__ import annotations

import random
from typing import Dict, List, Optional, Sequence, Tuple

from . import lam
from .core import Node, Port, Sym, TNode, TermVal
from .matrix import MatrixElement


def random_tree(rng: random.Random, alphabet: Sequence[Sym], size: int,
                n_ports: int = 0) -> TNode:
    """A uniform-ish random tree with ~``size`` nodes and exactly
    ``n_ports`` ports, using only the given symbols."""
    leaves = [s for s in alphabet if s.arity == 0]
    internals = [s for s in alphabet if s.arity > 0]
    if not leaves:
        raise ValueError("alphabet needs a nullary symbol")

    def build(budget: int, ports: int) -> TNode:
        if ports == 1 and (budget <= 1 or rng.random() < 0.2):
            return Port()
        if ports == 0 and (budget <= 1 or not internals):
            return Node(rng.choice(leaves), ())
        if ports > 1:
            cands = [s for s in internals if s.arity >= 2]
            if not cands:
                raise ValueError("splitting ports needs a symbol of arity >= 2")
        else:
            cands = internals
        if not cands:
            raise ValueError("alphabet cannot realise the requested ports")
        sym = rng.choice(cands)
        share = [0] * sym.arity
        for _ in range(ports):
            # keep at most one port per child slot where possible
            open_slots = [i for i, x in enumerate(share) if x == 0] or list(range(sym.arity))
            share[rng.choice(open_slots)] += 1
        child_budget = max((budget - 1) // sym.arity, 1)
        return Node(sym, tuple(build(child_budget, share[i]) for i in range(sym.arity)))

    return build(max(size, 1), n_ports)


def random_monotone_element(rng: random.Random, k: int, alphabet: Sequence[Sym],
                            outer_arity: int, member_size: int = 4) -> MatrixElement:
    """A monotone element of the k-th matrix power: the slots of each
    outer port are filled by a sorted random choice of owning members."""
    # decide, per outer port, which (slot -> member) wires exist
    wires: List[List[Tuple[int, int]]] = []
    for g in range(1, outer_arity + 1):
        n_wires = rng.randint(0, k)
        slots = sorted(rng.sample(range(1, k + 1), n_wires))
        owners = sorted(rng.choices(range(1, k + 1), k=n_wires))
        wires.append(list(zip(slots, owners)))
    ports_of_member = {c: [] for c in range(1, k + 1)}
    for g, pairs in enumerate(wires, start=1):
        for s, owner in pairs:
            ports_of_member[owner].append((g, s))
    members = []
    grouping = {}
    concat = 0
    for c in range(1, k + 1):
        n_ports = len(ports_of_member[c])
        members.append(TermVal(random_tree(rng, alphabet, member_size, n_ports)))
        for g, s in ports_of_member[c]:
            concat += 1
            grouping[concat] = (g, s)
    return MatrixElement(k, tuple(members), grouping, outer_arity)


def random_matrix_tree(rng: random.Random, k: int, alphabet: Sequence[Sym],
                       size: int, max_arity: int = 2) -> Node:
    """A tree whose labels are monotone matrix-power elements."""

    def build(budget: int) -> Node:
        n = rng.randint(0, max_arity) if budget > 1 else 0
        e = random_monotone_element(rng, k, alphabet, n)
        child_budget = max((budget - 1) // max(n, 1), 1)
        return Node(e, tuple(build(child_budget) for _ in range(n)))

    return build(max(size, 1))


# ---------------------------------------------------------------------------
# Linear typable λ-terms
# ---------------------------------------------------------------------------


class _Retry(Exception):
    pass


def _arrows_into(closure, tau) -> List[object]:
    return [t for t in closure if isinstance(t, lam.Arrow) and t.dst == tau and t in closure]


def random_linear_term(rng: random.Random, closure, X: Dict[str, object],
                       tau=None, max_depth: int = 7,
                       letters: Optional[Sequence[Tuple[str, int]]] = None):
    """A random linear term, typable within ``closure``, of type ``tau``
    (default: the atom), with free variables drawn from ``X``.  Binder
    names are fresh ``b``-names, so they never clash with ``X``.

    Generation is by rejection: a bounded recursive walk threads the set
    of binders that still must be used exactly once, and retries when it
    paints itself into a corner."""
    closure = lam.downward_closure(closure)
    if tau is None:
        tau = lam.O
    free_names = list(X)
    counter = [0]

    def fresh() -> str:
        counter[0] += 1
        return f"b{counter[0]}"

    def gen(goal, must: List[Tuple[str, object]], depth: int) -> TNode:
        # must: bound variables that this subterm has to consume
        moves = []
        if not must and any(X[f] == goal for f in free_names):
            moves.append("free")
        if len(must) == 1 and must[0][1] == goal:
            moves.append("bound")
        if depth > 0:
            if isinstance(goal, lam.Arrow) and goal in closure:
                moves.append("lam")
            if _arrows_into(closure, goal):
                moves.append("app")
            if goal == lam.O and letters and (
                not must or any(ar > 0 for _, ar in letters)
            ):
                moves.append("out")
        if not moves:
            raise _Retry
        move = rng.choice(moves)
        if move == "free":
            return lam.var(rng.choice([f for f in free_names if X[f] == goal]))
        if move == "bound":
            return lam.var(must[0][0])
        if move == "lam":
            b = fresh()
            X[b] = goal.src
            body = gen(goal.dst, must + [(b, goal.src)], depth - 1)
            return lam.lam(b, body)
        if move == "out":
            pool = [l for l in letters if l[1] > 0] if must else list(letters)
            name, ar = rng.choice(pool)
            shared = [[] for _ in range(ar)]
            for ob in must:
                shared[rng.randrange(ar)].append(ob)
            return lam.out(name, *(gen(lam.O, shared[i], depth - 1) for i in range(ar)))
        # app
        sigma_fun = rng.choice(_arrows_into(closure, goal))
        left, right = [], []
        for ob in must:
            (left if rng.random() < 0.5 else right).append(ob)
        fun = gen(sigma_fun, left, depth - 1)
        arg = gen(sigma_fun.src, right, depth - 1)
        return lam.app(fun, arg)

    for _ in range(4000):
        counter[0] = 0
        snapshot = dict(X)
        try:
            root = gen(tau, [], max_depth)
        except _Retry:
            X.clear()
            X.update(snapshot)
            continue
        return TermVal(root)
    raise ValueError("could not generate a term for the given type set")
