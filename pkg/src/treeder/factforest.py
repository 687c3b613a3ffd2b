"""Aperiodic monoids, branch homomorphisms, and factorisation forests.

A nested factorisation of depth 1 is a plain letter; at depth n+1 it is a
term whose labels are depth-n nested factorisations.  ``factorise`` splits a
term into a hereditarily homogeneous nested factorisation, driven by a
homomorphism from branches into a finite aperiodic monoid.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iproduct

from .core import (
    PORT,
    Node,
    Port,
    StructureError,
    Sym,
    TermVal,
    flatten,
    iter_preorder,
    map_labels,
    term_arity,
)


class MonoidError(StructureError):
    pass


@dataclass(frozen=True)
class FiniteMonoid:
    elements: tuple
    unit: object
    mul: dict  # (x, y) -> z

    def __post_init__(self):
        elems = set(self.elements)
        if self.unit not in elems:
            raise MonoidError("unit not among elements")
        for x, y in iproduct(self.elements, repeat=2):
            if (x, y) not in self.mul or self.mul[(x, y)] not in elems:
                raise MonoidError(f"multiplication not total at ({x}, {y})")
        for x in self.elements:
            if self.mul[(self.unit, x)] != x or self.mul[(x, self.unit)] != x:
                raise MonoidError(f"unit law fails at {x}")
        for x, y, z in iproduct(self.elements, repeat=3):
            if self.mul[(self.mul[(x, y)], z)] != self.mul[(x, self.mul[(y, z)])]:
                raise MonoidError(f"associativity fails at ({x}, {y}, {z})")

    def times(self, x, y):
        return self.mul[(x, y)]

    def product(self, seq):
        acc = self.unit
        for x in seq:
            acc = self.mul[(acc, x)]
        return acc

    def semigroup_closure(self, gens):
        """The subsemigroup generated by ``gens`` (products of length >= 1)."""
        seen = set(gens)
        frontier = set(gens)
        while frontier:
            new = set()
            for x in frontier:
                for g in gens:
                    for z in (self.mul[(x, g)], self.mul[(g, x)]):
                        if z not in seen:
                            new.add(z)
            seen |= new
            frontier = new
        return frozenset(seen)


def check_aperiodic(m: FiniteMonoid) -> bool:
    for x in m.elements:
        power = x
        seen = []
        for _ in range(len(m.elements) + 1):
            nxt = m.mul[(power, x)]
            if nxt == power:
                break
            seen.append(power)
            power = nxt
        else:
            return False
    return True


# ---------------------------------------------------------------------------
# Monotone partial maps (the working aperiodic monoid of the unfold pipeline)
# ---------------------------------------------------------------------------


def monotone_partial_maps(k: int) -> FiniteMonoid:
    """All monotone partial functions {1..k} -> {1..k} under composition,
    encoded as length-k tuples with 0 for 'undefined'."""

    def monotone(t):
        prev = 0
        for v in t:
            if v:
                if v < prev:
                    return False
                prev = v
        return True

    elems = tuple(sorted(t for t in iproduct(range(k + 1), repeat=k) if monotone(t)))
    ident = tuple(range(1, k + 1))

    def compose(a, b):
        # (a . b)(q) = a(b(q))
        return tuple(a[b[q] - 1] if b[q] else 0 for q in range(k))

    mul = {(a, b): compose(a, b) for a in elems for b in elems}
    return FiniteMonoid(elems, ident, mul)


# ---------------------------------------------------------------------------
# Branches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    """A label together with one of its ports."""

    symbol: object
    port: int


class BranchHom:
    """h : branches -> M, given per-branch; extended over terms by taking the
    product of subbranch values from the root down."""

    def __init__(self, monoid: FiniteMonoid, mapping):
        self.monoid = monoid
        self._map = mapping  # callable or dict: Branch -> element

    def of_branch(self, symbol, port) -> object:
        if callable(self._map):
            return self._map(Branch(symbol, port))
        return self._map[Branch(symbol, port)]


def branch_value(h: BranchHom, t: TermVal, port_index: int):
    """Value of the branch of ``t`` that leads to its ``port_index``-th port
    (document order): the monoid product of the subbranches along the path."""
    path = _path_to_port(t.root, port_index)
    return h.monoid.product(h.of_branch(node.label, slot) for node, slot in path)


def _path_to_port(root, port_index):
    """(node, child-slot) pairs from the root to the given port."""
    counter = [0]
    path = []

    def walk(n, acc):
        for j, c in enumerate(n.children, start=1):
            if isinstance(c, Port):
                counter[0] += 1
                if counter[0] == port_index:
                    path.extend(acc + [(n, j)])
                    return True
            else:
                if walk(c, acc + [(n, j)]):
                    return True
        return False

    if isinstance(root, Port):
        if port_index == 1:
            return []
        raise StructureError("no such port")
    if not walk(root, []):
        raise StructureError(f"no port {port_index}")
    return path


# ---------------------------------------------------------------------------
# Nested factorisations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Nested:
    """depth 1: ``content`` is a letter; depth n >= 2: ``content`` is a term
    whose labels are depth-(n-1) Nested values."""

    depth: int
    content: object

    def _arity_(self):
        if self.depth == 1:
            from .core import arity

            return arity(self.content)
        return term_arity(self.content.root)


def flatn(nt: Nested) -> TermVal:
    from .core import unit

    if nt.depth == 1:
        return unit(nt.content)
    if isinstance(nt.content.root, Port):
        return TermVal(PORT)
    inner = map_labels(nt.content.root, lambda l: flatn(l))
    return flatten(TermVal(inner))


def pad_top(nt: Nested, target_depth: int) -> Nested:
    """Raise the depth by wrapping in single-node layers (flatn-invariant;
    single-node layers are shallow, hence homogeneous)."""
    from .core import arity

    while nt.depth < target_depth:
        n = nt._arity_()
        nt = Nested(nt.depth + 1, TermVal(Node(nt, tuple(Port() for _ in range(n)))))
    if nt.depth != target_depth:
        raise StructureError("pad_top: already deeper than target")
    return nt


def _edge_values(f: TermVal, h: BranchHom):
    """Values under the extended homomorphism of the internal subbranches of
    a factorisation whose labels are Nested values (or plain letters)."""
    vals = []
    nonroot = []

    def label_branch_value(label, slot):
        if isinstance(label, Nested):
            if label.depth == 1:
                return h.of_branch(label.content, slot)
            return branch_value(h, flatn(label), slot)
        return h.of_branch(label, slot)

    def walk(n, is_root):
        for j, c in enumerate(n.children, start=1):
            if isinstance(c, Node):
                vals.append(label_branch_value(n.label, j))
                if not is_root:
                    nonroot.append(True)
                else:
                    nonroot.append(False)
                walk(c, False)

    if isinstance(f.root, Node):
        walk(f.root, True)
    return vals, nonroot


def is_homogeneous(f: TermVal, h: BranchHom):
    """Check the three homogeneity clauses for a one-level factorisation;
    returns (bool, clause or None)."""
    vals, nonroot = _edge_values(f, h)
    if not any(nonroot):
        return True, 1
    if len(set(vals)) <= 1:
        return True, 2
    if all(h.monoid.times(a, b) == a for a in set(vals) for b in set(vals)):
        return True, 3
    return False, None


def is_hereditarily_homogeneous(nt: Nested, h: BranchHom) -> bool:
    if nt.depth == 1:
        return True
    ok, _ = is_homogeneous(nt.content, h)
    if not ok:
        return False
    for n in iter_preorder(nt.content.root):
        if isinstance(n, Node) and not is_hereditarily_homogeneous(n.label, h):
            return False
    return True


# ---------------------------------------------------------------------------
# The factorisation algorithm
# ---------------------------------------------------------------------------


def _internal_edge_values(t: TermVal, h: BranchHom):
    vals = []

    def walk(n):
        for j, c in enumerate(n.children, start=1):
            if isinstance(c, Node):
                vals.append((n, j, c, h.of_branch(n.label, j)))
                walk(c)

    if isinstance(t.root, Node):
        walk(t.root)
    return vals


def _tunit(t: TermVal) -> Nested:
    if isinstance(t.root, Port):
        return Nested(2, TermVal(PORT))
    return Nested(2, TermVal(map_labels(t.root, lambda l: Nested(1, l))))


def factorise(t: TermVal, h: BranchHom, _measure_trace=None) -> Nested:
    """Factorisation Forest construction: a hereditarily homogeneous nested
    factorisation with flatn(result) = t.  Requires an aperiodic monoid."""
    if not check_aperiodic(h.monoid):
        raise MonoidError("factorise requires an aperiodic monoid")
    return _fact(t, h, _measure_trace)


def _measure(m: FiniteMonoid, A):
    return (len(m.semigroup_closure(A)) if A else 0, len(A))


def _fact(t: TermVal, h: BranchHom, trace) -> Nested:
    m = h.monoid
    edges = _internal_edge_values(t, h)
    A = frozenset(v for (_, _, _, v) in edges)
    if trace is not None:
        trace.append(_measure(m, A))
    if not edges:
        return _tunit(t)
    if len(A) == 1:
        a = next(iter(A))
        if m.mul[(a, a)] == a:
            # one idempotent value: any composition along a path is still a
            return _tunit(t)
        # one non-idempotent value: compositions along paths differ from a,
        # so a single level would not be homogeneous under composition;
        # stack shallow one-node blocks instead
        return _fact_uniform(t)
    genA = m.semigroup_closure(A)
    shrinkers = [
        a
        for a in m.elements
        if a in A and m.semigroup_closure({m.mul[(b, a)] for b in genA}) != genA
    ]
    if not shrinkers:
        # b -> ba permutes <A> for every a in A; by aperiodicity ab = a
        return _tunit(t)
    a = shrinkers[0]

    # split along post-sensitive edges
    sensitive = {(id(n), j) for (n, j, _, v) in edges if v == a}

    factors = []  # root term of each factor region, with cut points as ports

    def cut_region(node, parent_sensitive_flags):
        # returns (region_root_node, outer_children) where outer_children are
        # recursively built factor nodes (or ports of t)
        outer = []

        def walk(n, incoming_sensitive):
            ch = []
            for j, c in enumerate(n.children, start=1):
                if isinstance(c, Port):
                    outer.append(PORT)
                    ch.append(Port())
                    continue
                edge_sensitive = (id(n), j) in sensitive
                post_sensitive = incoming_sensitive and not edge_sensitive
                if post_sensitive:
                    outer.append(cut_region(c, False))
                    ch.append(Port())
                else:
                    ch.append(walk(c, edge_sensitive))
            return Node(n.label, tuple(ch))

        region = walk(node, False)
        ref = _FactorRef(len(factors), TermVal(region))
        factors.append(TermVal(region))
        return Node(ref, tuple(outer))

    split_root = cut_region(t.root, False)
    split = TermVal(split_root)

    # nested factorisation for each factor: shallow term of the non-sensitive
    # top over the all-sensitive bottoms
    factor_nested = []
    for f in factors:
        factor_nested.append(_fact_factor(f, h, a, trace))

    # the split's own factorisation, over the alphabet of factor references
    hb1 = BranchHom(m, lambda br: branch_value(h, br.symbol.term, br.port))
    split_edges = _internal_edge_values(split, hb1)
    B = frozenset(v for (_, _, _, v) in split_edges)
    if B and not _measure(m, B) < _measure(m, A):
        raise StructureError("factorisation measure did not decrease")
    split_nested = _fact(split, hb1, trace)

    # graft the factor factorisations into the split's depth-1 leaves
    target = max(n.depth for n in factor_nested) if factor_nested else 1
    padded = [pad_top(n, target) for n in factor_nested]

    def graft(nt: Nested) -> Nested:
        if nt.depth == 1:
            return padded[nt.content.index]
        if isinstance(nt.content.root, Port):
            return Nested(nt.depth - 1 + target, TermVal(PORT))
        new_root = map_labels(nt.content.root, graft)
        return Nested(nt.depth - 1 + target, TermVal(new_root))

    return graft(split_nested)


@dataclass(frozen=True)
class _FactorRef:
    index: int
    term: TermVal

    def _arity_(self):
        return term_arity(self.term.root)

    @property
    def arity(self):  # used nowhere structural; keeps arity() generic happy
        return term_arity(self.term.root)


def _fact_uniform(t: TermVal) -> Nested:
    """Nest a tree whose internal edges all carry the same value as a stack
    of one-node shallow blocks, each branching only at its root."""
    if isinstance(t.root, Port):
        return Nested(2, TermVal(PORT))
    root = t.root
    bottoms = [TermVal(c) if isinstance(c, Node) else None for c in root.children]
    if all(b is None for b in bottoms):
        return _tunit(t)
    top = _tunit(TermVal(Node(root.label, tuple(Port() for _ in root.children))))
    parts = [_fact_uniform(b) if b is not None else None for b in bottoms]
    target = max([top.depth] + [p.depth for p in parts if p is not None])
    top = pad_top(top, target)
    parts = [pad_top(p, target) if p is not None else None for p in parts]
    children = tuple(
        Port() if p is None else Node(p, tuple(Port() for _ in range(p._arity_())))
        for p in parts
    )
    return Nested(target + 1, TermVal(Node(top, children)))


def _fact_factor(f: TermVal, h: BranchHom, a, trace) -> Nested:
    """A factor of the split: non-sensitive edges on top, sensitive below.
    Cut at the first sensitive edge of each branch and recurse on both parts,
    combining with a shallow (clause 1) factorisation."""
    m = h.monoid
    if isinstance(f.root, Port):
        return Nested(2, TermVal(PORT))

    bottoms = []

    def top_walk(n):
        ch = []
        for j, c in enumerate(n.children, start=1):
            if isinstance(c, Port):
                bottoms.append(None)
                ch.append(Port())
            elif h.of_branch(n.label, j) == a:
                bottoms.append(TermVal(c))
                ch.append(Port())
            else:
                ch.append(top_walk(c))
        return Node(n.label, tuple(ch))

    top = TermVal(top_walk(f.root))
    if all(b is None for b in bottoms):
        # no sensitive edges at all: the factor only uses A - {a}
        return _fact(f, h, trace)

    n_top = _fact(top, h, trace)
    parts = [_fact(b, h, trace) if b is not None else None for b in bottoms]
    target = max([n_top.depth] + [p.depth for p in parts if p is not None])
    n_top = pad_top(n_top, target)
    parts = [pad_top(p, target) if p is not None else None for p in parts]

    children = []
    for p in parts:
        if p is None:
            children.append(Port())
        else:
            children.append(Node(p, tuple(Port() for _ in range(p._arity_()))))
    shallow = TermVal(Node(n_top, tuple(children)))
    return Nested(target + 1, shallow)
