"""Value model for ranked datatypes.

Everything in this package manipulates *ranked* values: each value has an
arity (a number of dangling edges, called ports).  The datatype grammar is

    finite ranked alphabet | terminal | term over tau | tensor | coproduct | k-fold

and the corresponding value shapes are Sym, TerminalElem, TermVal, TensorPair,
Inj and Folded.  Terms are trees whose leaves may be ports; ports carry no
index, their number is positional (left-to-right document order, 1-based).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union


class StructureError(ValueError):
    """A value is malformed with respect to the datatype invariants."""


# ---------------------------------------------------------------------------
# Ranked alphabets and type expressions
# ---------------------------------------------------------------------------


class RankedAlphabet:
    """A finite set of symbol names, each with a fixed arity."""

    def __init__(self, symbols):
        self.symbols = list(symbols)
        self.arities = {}
        for name, ar in self.symbols:
            if name in self.arities:
                raise StructureError(f"duplicate symbol {name!r}")
            if ar < 0:
                raise StructureError(f"negative arity for {name!r}")
            self.arities[name] = ar

    def __contains__(self, name):
        return name in self.arities

    def arity(self, name):
        return self.arities[name]

    def sym(self, name):
        return Sym(name, self.arities[name])

    def __eq__(self, other):
        return isinstance(other, RankedAlphabet) and self.arities == other.arities

    def __repr__(self):
        return f"RankedAlphabet({self.symbols!r})"


@dataclass(frozen=True)
class Finite:
    alphabet: RankedAlphabet


@dataclass(frozen=True)
class Terminal:
    pass


@dataclass(frozen=True)
class TermOf:
    inner: "TypeExpr"


@dataclass(frozen=True)
class Tensor:
    left: "TypeExpr"
    right: "TypeExpr"


@dataclass(frozen=True)
class Coproduct:
    left: "TypeExpr"
    right: "TypeExpr"


@dataclass(frozen=True)
class FoldOf:
    k: int
    inner: "TypeExpr"


TypeExpr = Union[Finite, Terminal, TermOf, Tensor, Coproduct, FoldOf]


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sym:
    name: str
    arity: int


@dataclass(frozen=True)
class TerminalElem:
    arity: int


@dataclass(frozen=True)
class Port:
    """The leaf of a term marking a dangling edge.  All ports are equal;
    their identity is positional."""


PORT = Port()


@dataclass(frozen=True, eq=False)
class Node:
    label: object  # any Value usable as a label; its arity = len(children)
    children: tuple

    def __eq__(self, other):
        # structural equality, iterative so that 10^4-deep chains compare fine
        if not isinstance(other, Node):
            return NotImplemented
        stack = [(self, other)]
        while stack:
            a, b = stack.pop()
            if isinstance(a, Port) and isinstance(b, Port):
                continue
            if not (isinstance(a, Node) and isinstance(b, Node)):
                return False
            if len(a.children) != len(b.children) or a.label != b.label:
                return False
            stack.extend(zip(a.children, b.children))
        return True

    def __hash__(self):
        return hash((self.label, len(self.children)))


TNode = Union[Node, Port]


@dataclass(frozen=True)
class TermVal:
    root: TNode


@dataclass(frozen=True)
class TensorPair:
    left: object
    right: object


@dataclass(frozen=True)
class Inj:
    side: int  # 1 or 2
    payload: object

    def __post_init__(self):
        if self.side not in (1, 2):
            raise StructureError("Inj side must be 1 or 2")


Grouping = dict  # port index -> (outer port, slot)


def check_grouping(mapping, n_ports, k, outer_arity):
    """Validate an injective grouping from {1..n_ports} into
    {1..outer_arity} x {1..k}."""
    seen = set()
    for p, gs in mapping.items():
        g, s = gs
        if not (1 <= p <= n_ports):
            raise StructureError(f"grouping domain {p} out of range 1..{n_ports}")
        if not (1 <= g <= outer_arity and 1 <= s <= k):
            raise StructureError(f"grouping image {gs} out of bounds")
        if gs in seen:
            raise StructureError(f"grouping not injective at {gs}")
        seen.add(gs)
    if len(mapping) != n_ports:
        raise StructureError("grouping must be total on payload ports")


@dataclass(frozen=True, eq=False)
class Folded:
    payload: object
    grouping: Grouping
    k: int
    outer_arity: int

    def __post_init__(self):
        if self.k < 1:
            raise StructureError("fold k must be positive")
        check_grouping(self.grouping, arity(self.payload), self.k, self.outer_arity)

    def __eq__(self, other):
        return (
            isinstance(other, Folded)
            and self.k == other.k
            and self.outer_arity == other.outer_arity
            and self.grouping == other.grouping
            and self.payload == other.payload
        )

    def __hash__(self):
        return hash((self.k, self.outer_arity, frozenset(self.grouping.items())))


# ---------------------------------------------------------------------------
# Term traversal helpers (iterative: deep chains must not overflow the stack)
# ---------------------------------------------------------------------------


def iter_preorder(root: TNode) -> Iterator[TNode]:
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, Node):
            stack.extend(reversed(n.children))


def term_nodes(root: TNode):
    """Non-port nodes in pre-order."""
    return [n for n in iter_preorder(root) if isinstance(n, Node)]


def term_arity(root: TNode) -> int:
    return sum(1 for n in iter_preorder(root) if isinstance(n, Port))


def rebuild(root: TNode, make: Callable[[Node, list], TNode], make_port=None) -> TNode:
    """Bottom-up rebuild of a term, iterative post-order.

    ``make(node, new_children)`` produces the replacement subtree for each
    non-port node; ``make_port(i)`` (1-based document-order port index) for
    each port, defaulting to the port itself.
    """
    out: list = []
    port_index = 0
    stack = [(root, False)]
    while stack:
        n, done = stack.pop()
        if isinstance(n, Port):
            port_index += 1
            out.append(make_port(port_index) if make_port is not None else PORT)
            continue
        if done:
            nch = len(n.children)
            ch = out[len(out) - nch :] if nch else []
            if nch:
                del out[len(out) - nch :]
            out.append(make(n, ch))
        else:
            stack.append((n, True))
            for c in reversed(n.children):
                stack.append((c, False))
    assert len(out) == 1
    return out[0]


def map_labels(root: TNode, f) -> TNode:
    return rebuild(root, lambda n, ch: Node(f(n.label), tuple(ch)))


def plug(root: TNode, fillers) -> TNode:
    """Replace the ports of ``root`` (in document order) by the given
    subtrees."""
    fillers = list(fillers)
    if term_arity(root) != len(fillers):
        raise StructureError("plug: arity mismatch")
    return rebuild(root, lambda n, ch: Node(n.label, tuple(ch)), make_port=lambda i: fillers[i - 1])


# ---------------------------------------------------------------------------
# Arity and typechecking
# ---------------------------------------------------------------------------


def arity(v) -> int:
    if isinstance(v, Sym):
        return v.arity
    if isinstance(v, TerminalElem):
        return v.arity
    if isinstance(v, TermVal):
        return term_arity(v.root)
    if isinstance(v, TensorPair):
        return arity(v.left) + arity(v.right)
    if isinstance(v, Inj):
        return arity(v.payload)
    if isinstance(v, Folded):
        return v.outer_arity
    if isinstance(v, (Node, Port)):
        # convenience: raw term nodes act like TermVal
        return term_arity(v)
    if hasattr(v, "_arity_"):  # TupleVal, ShallowTerm, MatrixElement
        return v._arity_()
    raise StructureError(f"not a value: {v!r}")


def typecheck(v, tau: TypeExpr) -> bool:
    try:
        return _typecheck(v, tau)
    except StructureError:
        return False


def _typecheck(v, tau):
    if isinstance(tau, Finite):
        return isinstance(v, Sym) and v.name in tau.alphabet and tau.alphabet.arity(v.name) == v.arity
    if isinstance(tau, Terminal):
        return isinstance(v, TerminalElem)
    if isinstance(tau, TermOf):
        if not isinstance(v, TermVal):
            return False
        for n in iter_preorder(v.root):
            if isinstance(n, Node):
                if not _typecheck(n.label, tau.inner):
                    return False
                if arity(n.label) != len(n.children):
                    return False
        return True
    if isinstance(tau, Tensor):
        return (
            isinstance(v, TensorPair)
            and _typecheck(v.left, tau.left)
            and _typecheck(v.right, tau.right)
        )
    if isinstance(tau, Coproduct):
        if not isinstance(v, Inj):
            return False
        return _typecheck(v.payload, tau.left if v.side == 1 else tau.right)
    if isinstance(tau, FoldOf):
        if not (isinstance(v, Folded) and v.k == tau.k):
            return False
        return _typecheck(v.payload, tau.inner)
    raise StructureError(f"unknown type {tau!r}")


# ---------------------------------------------------------------------------
# Monad structure
# ---------------------------------------------------------------------------


def unit(v) -> TermVal:
    """One-node term whose ports are the ports of v, in order."""
    return TermVal(Node(v, tuple(Port() for _ in range(arity(v)))))


def flatten(t: TermVal) -> TermVal:
    """Monad product: every label of t is itself a term; substitute each
    child's flattening into the corresponding port of its parent label."""
    if isinstance(t.root, Port):
        return TermVal(PORT)

    def make(n, ch):
        label = n.label
        if not isinstance(label, TermVal):
            raise StructureError("flatten: label is not a term")
        if term_arity(label.root) != len(ch):
            raise StructureError("flatten: label arity != child count")
        return plug(label.root, ch)

    return TermVal(rebuild(t.root, make))


def natural_pair_index(p1: int, p2: int, k1: int, k2: int) -> int:
    """The bijection {1..k1} x {1..k2} -> {1..k1*k2} used by fold flattening
    (lexicographic on (p2, p1): outer slot picks the block of size k1)."""
    return (p2 - 1) * k1 + p1


def fold_flatten(v: Folded) -> Folded:
    """Graded-monad product: collapse a fold-of-fold (a/f1)/f2 into a single
    fold by k1*k2, with grouping i -> (i2, pi(p1, p2))."""
    inner = v.payload
    if not isinstance(inner, Folded):
        raise StructureError("fold_flatten: payload is not a fold")
    k1, k2 = inner.k, v.k
    f1, f2 = inner.grouping, v.grouping
    mapping = {}
    for i, (i1, p1) in f1.items():
        i2, p2 = f2[i1]
        mapping[i] = (i2, natural_pair_index(p1, p2, k1, k2))
    return Folded(inner.payload, mapping, k1 * k2, v.outer_arity)
