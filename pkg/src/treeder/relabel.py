"""Tree relabellings built from a small temporal-logic-flavoured basis.

A relabelling never changes the shape of a tree, only its labels.  The
basis consists of letter-to-letter homomorphisms and the characteristic
functions of three kinds of unary queries: *child* (the node is an i-th
child), *until* (the node has a strict descendant with label in Δ, all
nodes strictly between labelled in Γ) and *since* (the ancestor dual).
Richer node decorations (parent label, descendant/ancestor membership,
root/leaf case splits) are derived on top.

Characteristic functions tag symbol names with a copy suffix: ``a.1``
for selected nodes and ``a.2`` for the rest, so that the output alphabet
is again a plain ranked alphabet and steps compose.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Tuple

from .core import Node, Port, StructureError, Sym, TermVal, TNode, term_nodes


class RelabelError(StructureError):
    pass


def _root(t) -> TNode:
    return t.root if isinstance(t, TermVal) else t


def _sym_of(n: Node) -> Sym:
    if not isinstance(n.label, Sym):
        raise RelabelError(f"relabellings act on symbol-labelled trees, got {n.label!r}")
    return n.label


def _tag(sym: Sym, selected: bool) -> Sym:
    return Sym(f"{sym.name}.{1 if selected else 2}", sym.arity)


# ---------------------------------------------------------------------------
# The basis
# ---------------------------------------------------------------------------


def char_child(t, i: int) -> TermVal:
    """Tag each node by whether it is an i-th child (1-based).  The root
    is never an i-th child, so it always lands in the second copy."""
    if i < 1:
        raise RelabelError("child positions are 1-based")

    def walk(n: TNode, selected: bool) -> TNode:
        if isinstance(n, Port):
            return n
        children = tuple(walk(c, j == i) for j, c in enumerate(n.children, start=1))
        return Node(_tag(_sym_of(n), selected), children)

    return TermVal(walk(_root(t), False))


def char_until(t, gamma: Iterable[str], delta: Iterable[str], reflexive: bool = False) -> TermVal:
    """Tag each node by whether it has a descendant labelled in ``delta``
    with every node strictly between labelled in ``gamma``.

    The descendant is strict by default; ``reflexive=True`` also accepts
    the node itself as the witness."""
    gamma, delta = frozenset(gamma), frozenset(delta)

    def walk(n: TNode):
        """Returns (rebuilt node, witness-below-including-self)."""
        if isinstance(n, Port):
            return n, False
        results = [walk(c) for c in n.children]
        sym = _sym_of(n)
        strict = any(good for _, good in results)
        here = sym.name in delta or (sym.name in gamma and strict)
        selected = (sym.name in delta or strict) if reflexive else strict
        return Node(_tag(sym, selected), tuple(r for r, _ in results)), here

    return TermVal(walk(_root(t))[0])


def char_since(t, gamma: Iterable[str], delta: Iterable[str], reflexive: bool = False) -> TermVal:
    """Tag each node by whether it has an ancestor labelled in ``delta``
    with every node strictly between labelled in ``gamma`` (dual of
    :func:`char_until`)."""
    gamma, delta = frozenset(gamma), frozenset(delta)

    def walk(n: TNode, witness: bool, chain: bool) -> TNode:
        # witness: some strict ancestor qualifies; chain: the nearest
        # ancestors form an unbroken gamma-chain up to a delta node.
        if isinstance(n, Port):
            return n
        sym = _sym_of(n)
        selected = sym.name in delta if reflexive else False
        selected = selected or witness
        below_witness = sym.name in delta or (sym.name in gamma and witness)
        children = tuple(walk(c, below_witness, False) for c in n.children)
        return Node(_tag(sym, selected), children)

    return TermVal(walk(_root(t), False, False))


def hom(t, mapping: Dict[str, str]) -> TermVal:
    """Letter-to-letter homomorphism by symbol name; arity-preserving and
    total on the labels that actually occur."""

    def walk(n: TNode) -> TNode:
        if isinstance(n, Port):
            return n
        sym = _sym_of(n)
        if sym.name not in mapping:
            raise RelabelError(f"homomorphism undefined on symbol {sym.name!r}")
        return Node(Sym(mapping[sym.name], sym.arity), tuple(walk(c) for c in n.children))

    return TermVal(walk(_root(t)))


# ---------------------------------------------------------------------------
# Programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Hom:
    mapping: Tuple[Tuple[str, str], ...]


@dataclass(frozen=True)
class CharChild:
    i: int


@dataclass(frozen=True)
class CharUntil:
    gamma: FrozenSet[str]
    delta: FrozenSet[str]
    reflexive: bool = False


@dataclass(frozen=True)
class CharSince:
    gamma: FrozenSet[str]
    delta: FrozenSet[str]
    reflexive: bool = False


Step = object
Program = Tuple[Step, ...]


def run_step(t, step) -> TermVal:
    if isinstance(step, Hom):
        return hom(t, dict(step.mapping))
    if isinstance(step, CharChild):
        return char_child(t, step.i)
    if isinstance(step, CharUntil):
        return char_until(t, step.gamma, step.delta, step.reflexive)
    if isinstance(step, CharSince):
        return char_since(t, step.gamma, step.delta, step.reflexive)
    raise RelabelError(f"unknown relabelling step {step!r}")


def run_program(t, program: Iterable[Step]) -> TermVal:
    """Apply the steps left to right.  The empty program is the identity."""
    current = t if isinstance(t, TermVal) else TermVal(t)
    for step in program:
        current = run_step(current, step)
    return current


# ---------------------------------------------------------------------------
# Derived decorations
# ---------------------------------------------------------------------------


def parent(t) -> TermVal:
    """Decorate each label with its parent's label (``-`` at the root):
    ``a`` below ``b`` becomes ``a^b``."""

    def walk(n: TNode, above: str) -> TNode:
        if isinstance(n, Port):
            return n
        sym = _sym_of(n)
        return Node(
            Sym(f"{sym.name}^{above}", sym.arity),
            tuple(walk(c, sym.name) for c in n.children),
        )

    return TermVal(walk(_root(t), "-"))


def children(t) -> TermVal:
    """Decorate each label with the list of its children's labels (ports
    shown as ``-``): ``a`` over ``b`` and a port becomes ``a^b|-``."""

    def walk(n: TNode) -> TNode:
        if isinstance(n, Port):
            return n
        sym = _sym_of(n)
        below = "|".join(
            "-" if isinstance(c, Port) else _sym_of(c).name for c in n.children
        )
        return Node(Sym(f"{sym.name}^{below}", sym.arity), tuple(walk(c) for c in n.children))

    return TermVal(walk(_root(t)))


def descendant_in(t, gamma: Iterable[str]) -> TermVal:
    """Tag each node by whether it has a strict descendant labelled in
    ``gamma``, computed through the ancestor-and-side factorisation: the
    factor blocks are constant for the reflexive version of the query
    (a block's nodes share their set of opposite-side descendants), so
    the reflexive tags are read off per block and the strict tag of a
    node is the disjunction of its children's reflexive tags."""
    from . import prime
    from .core import Inj, TermVal as TV, map_labels

    gamma = frozenset(gamma)
    root = _root(t)
    if isinstance(root, Port):
        return TermVal(root)
    sided = map_labels(
        root, lambda lbl: Inj(1, lbl) if lbl.name in gamma else Inj(2, lbl)
    )
    factored = prime.fact_down(TV(sided))

    def block_reflexive(fnode: Node) -> bool:
        inj = fnode.label
        if inj.side == 1:
            return True  # the node itself is the witness
        return len(fnode.children) > 0  # a non-leaf block sees a block below

    def rebuild_block(fnode: TNode):
        """Returns the block with reflexive tags, and the reflexive tag
        of its topmost node, threading child blocks in port order."""
        if isinstance(fnode, Port):
            return fnode, False
        refl = block_reflexive(fnode)
        subs = [rebuild_block(c) for c in fnode.children]
        slot = iter(subs)

        def walk(n: TNode) -> TNode:
            if isinstance(n, Port):
                return next(slot)[0]
            # the factor keeps the side-injected labels inside
            return Node((n.label.payload, refl), tuple(walk(c) for c in n.children))

        return walk(fnode.label.payload.root), refl

    decorated, _ = rebuild_block(factored.root)

    def strictify(n: TNode) -> TNode:
        if isinstance(n, Port):
            return n
        sym, _ = n.label
        strict = any(isinstance(c, Node) and c.label[1] for c in n.children)
        return Node(_tag(sym, strict), tuple(strictify(c) for c in n.children))

    result = TermVal(strictify(decorated))
    assert result == char_until(t, _names(root), gamma), "factorised route disagrees"
    return result


def _names(root: TNode) -> frozenset:
    return frozenset(_sym_of(n).name for n in term_nodes(root))


def ancestor_in(t, gamma: Iterable[str]) -> TermVal:
    """Tag each node by whether it has a strict ancestor labelled in
    ``gamma``."""
    return char_since(t, _names(_root(t)), gamma)


def root_map(t, f: Dict[str, str], g: Dict[str, str]) -> TermVal:
    """Apply symbol map ``f`` at the root and ``g`` everywhere else."""

    def walk(n: TNode, at_root: bool) -> TNode:
        if isinstance(n, Port):
            return n
        sym = _sym_of(n)
        mapping = f if at_root else g
        if sym.name not in mapping:
            raise RelabelError(f"map undefined on symbol {sym.name!r}")
        return Node(Sym(mapping[sym.name], sym.arity), tuple(walk(c, False) for c in n.children))

    return TermVal(walk(_root(t), True))


def leaves_map(t, f: Dict[str, str], g: Dict[str, str]) -> TermVal:
    """Apply symbol map ``f`` at the leaves (no node children — a node
    whose children are all ports counts as a leaf) and ``g`` elsewhere."""

    def walk(n: TNode) -> TNode:
        if isinstance(n, Port):
            return n
        sym = _sym_of(n)
        is_leaf = all(isinstance(c, Port) for c in n.children)
        mapping = f if is_leaf else g
        if sym.name not in mapping:
            raise RelabelError(f"map undefined on symbol {sym.name!r}")
        return Node(Sym(mapping[sym.name], sym.arity), tuple(walk(c) for c in n.children))

    return TermVal(walk(_root(t)))


# ---------------------------------------------------------------------------
# Program files
# ---------------------------------------------------------------------------


def _names_of(expr, what: str) -> FrozenSet[str]:
    if not isinstance(expr, list) or not expr or expr[0] != what:
        raise RelabelError(f"expected ({what} …) name group")
    return frozenset(expr[1:])


def parse_step(expr) -> Step:
    if not isinstance(expr, list) or not expr:
        raise RelabelError("a relabelling step must be a list")
    head = expr[0]
    if head == "child":
        if len(expr) != 2:
            raise RelabelError("(child i) takes one argument")
        return CharChild(int(expr[1]))
    if head in ("until", "since", "until-reflexive", "since-reflexive"):
        if len(expr) != 3:
            raise RelabelError(f"({head} (G …) (D …)) takes two groups")
        gamma = _names_of(expr[1], "G")
        delta = _names_of(expr[2], "D")
        cls = CharUntil if head.startswith("until") else CharSince
        return cls(gamma, delta, reflexive=head.endswith("reflexive"))
    if head == "hom":
        pairs = expr[1] if len(expr) == 2 else None
        if not isinstance(pairs, list):
            raise RelabelError("(hom ((a b) …)) takes a pair list")
        mapping = []
        for pair in pairs:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise RelabelError("hom pairs are (from to)")
            mapping.append((pair[0], pair[1]))
        return Hom(tuple(mapping))
    raise RelabelError(f"unknown relabelling step {head!r}")


def parse_program(expr) -> Program:
    if not isinstance(expr, list) or not expr or expr[0] != "relabel":
        raise RelabelError("a program is (relabel step …)")
    return tuple(parse_step(e) for e in expr[1:])
