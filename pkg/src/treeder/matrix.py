"""Matrix power of a ranked set: k parallel values packed into one symbol.

An element of the k-th matrix power M_k(Sigma) is a k-tuple of values over
Sigma, folded by k: the grouping wires every port of every tuple member to a
(outer port, slot) pair.  Unfolding T M_k(Sigma) -> M_k(T Sigma) rewires the
k incoming edges of every node with the k outgoing edges of the parent port
and drops the unreachable coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    PORT,
    Folded,
    Node,
    Port,
    StructureError,
    TermVal,
    TNode,
    arity,
    check_grouping,
    fold_flatten,
    term_arity,
)


@dataclass(frozen=True, eq=False)
class TupleVal:
    """n-fold product value; arity is the sum of member arities, ports are
    the members' ports concatenated."""

    items: tuple

    def _arity_(self):
        return sum(arity(x) for x in self.items)

    def __eq__(self, other):
        return isinstance(other, TupleVal) and self.items == other.items

    def __hash__(self):
        return hash(self.items)


@dataclass(frozen=True, eq=False)
class ShallowTerm:
    """A depth-two term: a root value whose ports are each filled by one
    child value.  Arity = sum of child arities."""

    root: object
    children: tuple

    def __post_init__(self):
        if arity(self.root) != len(self.children):
            raise StructureError("shallow term: root arity != child count")

    def _arity_(self):
        return sum(arity(c) for c in self.children)

    def __eq__(self, other):
        return (
            isinstance(other, ShallowTerm)
            and self.root == other.root
            and self.children == other.children
        )

    def __hash__(self):
        return hash((self.root, self.children))


@dataclass(frozen=True, eq=False)
class MatrixElement:
    k: int
    members: tuple  # k values over Sigma
    grouping: dict  # concatenated member-port index -> (outer port, slot)
    outer_arity: int

    def __post_init__(self):
        if len(self.members) != self.k:
            raise StructureError("matrix element: tuple length != k")
        n_ports = sum(arity(m) for m in self.members)
        check_grouping(self.grouping, n_ports, self.k, self.outer_arity)

    def _arity_(self):
        return self.outer_arity

    def member_offsets(self):
        """offsets[c] = number of concatenated ports before member c (0-based)."""
        offs = [0]
        for m in self.members:
            offs.append(offs[-1] + arity(m))
        return offs

    def as_folded(self) -> Folded:
        return Folded(TupleVal(self.members), dict(self.grouping), self.k, self.outer_arity)

    @staticmethod
    def from_folded(f: Folded) -> "MatrixElement":
        if not isinstance(f.payload, TupleVal) or len(f.payload.items) != f.k:
            raise StructureError("not a matrix power element")
        return MatrixElement(f.k, f.payload.items, dict(f.grouping), f.outer_arity)

    def __eq__(self, other):
        return (
            isinstance(other, MatrixElement)
            and self.k == other.k
            and self.outer_arity == other.outer_arity
            and self.members == other.members
            and self.grouping == other.grouping
        )

    def __hash__(self):
        return hash((self.k, self.outer_arity, self.members, frozenset(self.grouping.items())))


# ---------------------------------------------------------------------------
# Twists and monotonicity
# ---------------------------------------------------------------------------


def owner_of_port(e: MatrixElement, concat_port: int) -> int:
    """1-based index of the tuple member owning the given concatenated port."""
    offs = e.member_offsets()
    for c in range(e.k):
        if offs[c] < concat_port <= offs[c + 1]:
            return c + 1
    raise StructureError("port index out of range")


def twist_of(e: MatrixElement, port: int) -> dict:
    """Partial map slot -> coordinate: twist(q) = member owning the payload
    port that the grouping sends to (port, q)."""
    if not (1 <= port <= e.outer_arity):
        raise StructureError("port out of range")
    tw = {}
    for j, (g, s) in e.grouping.items():
        if g == port:
            tw[s] = owner_of_port(e, j)
    return tw


def is_monotone_map(tw: dict) -> bool:
    dom = sorted(tw)
    return all(tw[a] <= tw[b] for a, b in zip(dom, dom[1:]))


def is_monotone(e: MatrixElement) -> bool:
    return all(is_monotone_map(twist_of(e, p)) for p in range(1, e.outer_arity + 1))


def compose_twists(a: dict, b: dict) -> dict:
    """Product matching path order root-to-leaf: (a . b)(q) = a(b(q))."""
    return {q: a[b[q]] for q in b if b[q] in a}


# ---------------------------------------------------------------------------
# The three shallow-term distributivities f1, f2, f3
# ---------------------------------------------------------------------------


def f1_distribute_fold(s: ShallowTerm) -> Folded:
    """<Gamma> . (fold_k Sigma)  ->  fold_k (<Gamma> . Sigma):
    pull the children's folds out of a shallow term."""
    children = s.children
    if not all(isinstance(c, Folded) for c in children):
        raise StructureError("f1: children must be folds")
    ks = {c.k for c in children}
    if len(ks) > 1:
        raise StructureError("f1: children have different fold degrees")
    k = ks.pop() if ks else 1
    mapping = {}
    port_shift = 0  # ports of the unfolded children, concatenated
    group_shift = 0  # outer ports of the folded children, concatenated
    for c in children:
        for j, (p, sl) in c.grouping.items():
            mapping[port_shift + j] = (group_shift + p, sl)
        port_shift += arity(c.payload)
        group_shift += c.outer_arity
    payload = ShallowTerm(s.root, tuple(c.payload for c in children))
    return Folded(payload, mapping, k, group_shift)


def f2_match(s: ShallowTerm) -> Folded:
    """<fold_k Gamma> . (Sigma^k)  ->  fold_1 (<Gamma> . Sigma):
    route each port of the folded root to the tuple member it selects.

    The outer arity of the result is the total number of ports of *all*
    tuple members of all children; members not selected by the root's
    grouping leave unused outer ports (this is where unreachable parts of an
    unfolding disappear)."""
    root = s.root
    if not isinstance(root, Folded):
        raise StructureError("f2: root must be a fold")
    k = root.k
    children = s.children
    if not all(isinstance(c, TupleVal) and len(c.items) == k for c in children):
        raise StructureError("f2: children must be k-tuples")
    if root.outer_arity != len(children):
        raise StructureError("f2: root outer arity != child count")
    # global offsets for ports of b_{i,j}, ordered by (i, j)
    offsets = {}
    total = 0
    for i, c in enumerate(children, start=1):
        for j, b in enumerate(c.items, start=1):
            offsets[(i, j)] = total
            total += arity(b)
    m = arity(root.payload)
    chosen = []
    mapping = {}
    port_pos = 0
    for jport in range(1, m + 1):
        i, sl = root.grouping[jport]
        b = children[i - 1].items[sl - 1]
        chosen.append(b)
        for local in range(1, arity(b) + 1):
            port_pos += 1
            mapping[port_pos] = (offsets[(i, sl)] + local, 1)
    payload = ShallowTerm(root.payload, tuple(chosen))
    return Folded(payload, mapping, 1, total)


def f3_distribute_power(s: ShallowTerm) -> TupleVal:
    """<Gamma^k> . Sigma  ->  (<Gamma> . Sigma)^k:
    slice the children into blocks matching the root tuple's arities."""
    root = s.root
    if not isinstance(root, TupleVal):
        raise StructureError("f3: root must be a tuple")
    out = []
    pos = 0
    for a in root.items:
        n = arity(a)
        out.append(ShallowTerm(a, tuple(s.children[pos : pos + n])))
        pos += n
    if pos != len(s.children):
        raise StructureError("f3: child count mismatch")
    return TupleVal(tuple(out))


def shallow_unfold(s: ShallowTerm) -> MatrixElement:
    """One unfolding step on a depth-two term of matrix-power elements:
    <M_k Sigma> . M_k Gamma  ->  M_k (<Sigma> . Gamma), via f1, f2 (with the
    graded flatten) and f3."""
    root = s.root
    children = s.children
    if not isinstance(root, MatrixElement):
        raise StructureError("shallow_unfold: root must be a matrix element")
    k = root.k
    for c in children:
        if not (isinstance(c, MatrixElement) and c.k == k):
            raise StructureError("shallow_unfold: children must be matrix elements of the same k")
    step1 = f1_distribute_fold(ShallowTerm(root.as_folded(), tuple(c.as_folded() for c in children)))
    inner = step1.payload  # ShallowTerm(root.as_folded(), TupleVal children)
    step2 = f2_match(ShallowTerm(inner.root, tuple(TupleVal(tv.items) for tv in inner.children)))
    nested = Folded(step2, step1.grouping, step1.k, step1.outer_arity)
    flat = fold_flatten(nested)  # fold_k of <Sigma^k> . Gamma
    distributed = f3_distribute_power(flat.payload)
    return MatrixElement.from_folded(Folded(distributed, flat.grouping, flat.k, flat.outer_arity))


# ---------------------------------------------------------------------------
# General unfolding (direct wiring expansion, iterative)
# ---------------------------------------------------------------------------


def _port_fan(k: int) -> MatrixElement:
    """Unfolding of the identity term: k one-port terms, slot i of the single
    outer port wired to coordinate i."""
    members = tuple(TermVal(PORT) for _ in range(k))
    grouping = {i: (1, i) for i in range(1, k + 1)}
    return MatrixElement(k, members, grouping, 1)


def unfold_general(t: TNode, k: int) -> MatrixElement:
    """T M_k(Sigma) -> M_k(T Sigma).

    Coordinate c of the result grows from tuple member c of the root; a
    member port wired to (p, s) continues in coordinate s of child p, or
    becomes a result port if child p is a port of t.  Unreachable coordinates
    are dropped.  Entirely iterative: safe on chains of length 10^4.
    """
    if isinstance(t, Port):
        return _port_fan(k)

    # assign document-order indices to the ports of t
    port_index = {}

    def label_of(n):
        e = n.label
        if not isinstance(e, MatrixElement) or e.k != k:
            raise StructureError("unfold: labels must be M_k elements")
        if e.outer_arity != len(n.children):
            raise StructureError("unfold: element arity != child count")
        return e

    n_ports = 0
    stack = [t]
    while stack:
        n = stack.pop()
        if isinstance(n, Port):
            n_ports += 1
            port_index[id(n)] = n_ports  # note: ports must be distinct objects
        else:
            stack.extend(reversed(n.children))
    # Port objects may be the shared PORT singleton; fall back to a positional
    # scheme in that case.
    ports_positional = len(port_index) != n_ports

    if ports_positional:
        # rebuild with distinct Port objects once
        from .core import rebuild

        t = rebuild(t, lambda n, ch: Node(n.label, tuple(ch)), make_port=lambda i: Port())
        port_index = {}
        n_ports = 0
        stack = [t]
        while stack:
            n = stack.pop()
            if isinstance(n, Port):
                n_ports += 1
                port_index[id(n)] = n_ports
            else:
                stack.extend(reversed(n.children))

    members = []
    grouping = {}
    seen = set()
    concat = 0
    for coord in range(1, k + 1):
        tree, tags = expand_piece(t, coord, label_of, port_index)
        members.append(TermVal(tree))
        for tag in tags:
            concat += 1
            if tag in seen:
                raise StructureError("unfold: wiring not injective")
            seen.add(tag)
            grouping[concat] = tag
    return MatrixElement(k, tuple(members), grouping, n_ports)


def expand_piece(node: Node, coord: int, label_of, port_index):
    """Grow the coordinate tree rooted at tuple member ``coord`` of ``node``.
    Returns (tree, tags): tags are the (t-port, slot) pairs of the tree's
    ports in document order.  Iterative with an explicit frame stack."""

    def targets(n, c):
        e = label_of(n)
        offs = e.member_offsets()
        out = []
        for j in range(offs[c - 1] + 1, offs[c] + 1):
            p, s = e.grouping[j]
            child = n.children[p - 1]
            out.append((child, s))
        return e.members[c - 1], out

    result = []
    stack = [("visit", node, coord)]
    while stack:
        frame = stack.pop()
        if frame[0] == "visit":
            _, n, c = frame
            label, tgt = targets(n, c)
            stack.append(("build", label, len(tgt)))
            for child, s in reversed(tgt):
                if isinstance(child, Port):
                    stack.append(("port", port_index[id(child)], s))
                else:
                    stack.append(("visit", child, s))
        elif frame[0] == "port":
            _, q, s = frame
            result.append(("leaf", q, s))
        else:  # build
            _, label, nch = frame
            ch = result[len(result) - nch :] if nch else []
            if nch:
                del result[len(result) - nch :]
            result.append(("node", label, ch))

    # linearise the single result tree, collecting tags in document order
    [spec] = result
    tags = []

    def realise(spec):
        out = []
        stack = [(spec, False)]
        while stack:
            sp, done = stack.pop()
            if sp[0] == "leaf":
                _, q, s = sp
                tags.append((q, s))
                out.append(PORT)
                continue
            _, label, ch = sp
            if done:
                n = len(ch)
                taken = out[len(out) - n :] if n else []
                if n:
                    del out[len(out) - n :]
                out.append(Node(label, tuple(taken)))
            else:
                stack.append((sp, True))
                for c in reversed(ch):
                    stack.append((c, False))
        return out[0]

    tree = realise(spec)
    return tree, tags


def unfold_monotone(t: TNode, k: int):
    """Restriction of general unfolding: undefined (None) when any label is
    non-monotone."""
    if isinstance(t, Node):
        stack = [t]
        while stack:
            n = stack.pop()
            if isinstance(n, Node):
                if not is_monotone(n.label):
                    return None
                stack.extend(n.children)
    return unfold_general(t, k)
