"""Prime tree functions: coproduct plumbing, the two factorisations,
pre-order traversal, fold utilities and error raising.

These are the building blocks that the pipeline evaluator exposes by name;
everything here is a pure function over core values.
"""

from __future__ import annotations

from .core import (
    PORT,
    Folded,
    Inj,
    Node,
    Port,
    StructureError,
    Sym,
    TensorPair,
    TermVal,
    TerminalElem,
    TNode,
    arity,
    flatten,
    iter_preorder,
    map_labels,
    rebuild,
    term_arity,
    unit,
)
from .matrix import MatrixElement, ShallowTerm

# gray symbols used by the pre-order encoding; reserved names
PRE0 = Sym("pre0", 0)  # terminator / padding
PRE2 = Sym("pre2", 2)  # spine cons


# ---------------------------------------------------------------------------
# Coproducts and distribution
# ---------------------------------------------------------------------------


def coproj(side: int, v) -> Inj:
    return Inj(side, v)


def case_of(f, g):
    def run(v):
        if not isinstance(v, Inj):
            raise StructureError("case: expected an injection")
        return f(v.payload) if v.side == 1 else g(v.payload)

    return run


def plus_lift(f, g):
    def run(v):
        if not isinstance(v, Inj):
            raise StructureError("plus: expected an injection")
        return Inj(v.side, f(v.payload) if v.side == 1 else g(v.payload))

    return run


def distribute_plus_over_tensor(v: TensorPair) -> Inj:
    """(Sigma1 + Sigma2) (x) Gamma -> (Sigma1 (x) Gamma) + (Sigma2 (x) Gamma)."""
    if not (isinstance(v, TensorPair) and isinstance(v.left, Inj)):
        raise StructureError("distribute: expected (injection, value) pair")
    return Inj(v.left.side, TensorPair(v.left.payload, v.right))


# ---------------------------------------------------------------------------
# Factorisations
# ---------------------------------------------------------------------------


def _side_of(label) -> int:
    if not isinstance(label, Inj):
        raise StructureError("factorisation input labels must be injections")
    return label.side


def _factorise_by(t: TNode, key_of) -> TNode:
    """Cut ``t`` into factors: maximal connected regions of nodes sharing the
    same key.  The result is a term whose node labels are
    Inj(side, TermVal(factor)), with the original (injected) labels kept
    inside the factors, so that stripping the outer injections and
    flattening restores ``t``."""
    if isinstance(t, Port):
        return PORT

    def build_region(node):
        # returns (factor_root, outer_children): factor ports in document
        # order line up with outer_children
        outer_children = []
        my_key = key_of(node)

        def walk(n):
            ch = []
            for c in n.children:
                if isinstance(c, Port):
                    outer_children.append(PORT)
                    ch.append(Port())
                elif key_of(c) == my_key:
                    ch.append(walk(c))
                else:
                    outer_children.append(build_region(c))
                    ch.append(Port())
            return Node(n.label, tuple(ch))

        root = walk(node)
        return Node(Inj(_side_of(node.label), TermVal(root)), tuple(outer_children))

    return build_region(t)


def _opposing_ancestors(t: TNode):
    """For each node, the set of its proper ancestors of the opposing side."""
    anc = {}
    chain = []

    def walk(n):
        mine = frozenset(id(a) for a in chain if _side_of(a.label) != _side_of(n.label))
        anc[id(n)] = mine
        chain.append(n)
        for c in n.children:
            if isinstance(c, Node):
                walk(c)
        chain.pop()

    walk(t)
    return anc


def _opposing_descendants(t: TNode):
    desc = {}

    def walk(n):
        acc = set()
        for c in n.children:
            if isinstance(c, Node):
                walk(c)
                acc |= desc[id(c)][0]
                acc |= {(id(c), _side_of(c.label))}
        desc[id(n)] = (frozenset(acc), None)

    walk(t)
    out = {}
    for nid, (pairs, _) in desc.items():
        out[nid] = pairs
    return out


def fact_up(t: TermVal) -> TermVal:
    """Group nodes that have the same side and the same proper ancestors of
    the opposing side.  Equivalence classes are additionally intersected
    with connectedness so every factor is a term."""
    if isinstance(t.root, Port):
        return TermVal(PORT)
    anc = _opposing_ancestors(t.root)
    key = lambda n: (_side_of(n.label), anc[id(n)])
    return TermVal(_factorise_by(t.root, key))


def fact_down(t: TermVal) -> TermVal:
    """As fact_up, refined by also requiring the same proper descendants of
    the opposing side."""
    if isinstance(t.root, Port):
        return TermVal(PORT)
    anc = _opposing_ancestors(t.root)
    desc = _opposing_descendants(t.root)

    def opp_desc(n):
        side = _side_of(n.label)
        return frozenset(nid for (nid, s) in desc[id(n)] if s != side)

    key = lambda n: (_side_of(n.label), anc[id(n)], opp_desc(n))
    return TermVal(_factorise_by(t.root, key))


def strip_factoring(factored: TermVal) -> TermVal:
    """Undo a factorisation: drop the outer injections and flatten."""
    if isinstance(factored.root, Port):
        return TermVal(PORT)
    return flatten(TermVal(map_labels(factored.root, lambda l: l.payload)))


# ---------------------------------------------------------------------------
# Pre-order traversal
# ---------------------------------------------------------------------------


def preorder(t: TermVal) -> Folded:
    """List the nodes of a term on a right-leaning spine, in pre-order.

    Every node keeps its label; child slots are ports where the original
    child was a port, and the 0-ary gray symbol otherwise.  The k=1 fold
    reorders the output's ports back onto the input's ports.
    """
    n_ports = term_arity(t.root)
    if isinstance(t.root, Port):
        # single-port term: the spine is empty, the fold wires the port through
        return Folded(TermVal(PORT), {1: (1, 1)}, 1, 1)

    port_pos = {}
    counter = [0]

    def index_ports(n):
        for c in n.children:
            if isinstance(c, Port):
                counter[0] += 1
                port_pos[id(c)] = counter[0]
            else:
                index_ports(c)

    index_ports(t.root)

    nodes = [n for n in iter_preorder(t.root) if isinstance(n, Node)]
    out_port_targets = []  # original port index, in output document order

    def wrap(n: Node) -> Node:
        ch = []
        for c in n.children:
            if isinstance(c, Port):
                out_port_targets.append(port_pos[id(c)])
                ch.append(Port())
            else:
                ch.append(Node(PRE0, ()))
        return Node(n.label, tuple(ch))

    wrapped = [wrap(n) for n in nodes]
    spine = Node(PRE0, ())
    for w in reversed(wrapped):
        spine = Node(PRE2, (w, spine))

    grouping = {i: (q, 1) for i, q in enumerate(out_port_targets, start=1)}
    return Folded(TermVal(spine), grouping, 1, n_ports)


# ---------------------------------------------------------------------------
# Fold utilities
# ---------------------------------------------------------------------------


def increase_fold(v: Folded, k: int) -> Folded:
    if k < v.k:
        raise StructureError("increase_fold: target smaller than source")
    return Folded(v.payload, dict(v.grouping), k, v.outer_arity)


def decrease_fold(v: Folded, k: int) -> Folded:
    if any(s > k for (_, s) in v.grouping.values()):
        raise StructureError("decrease_fold: a slot exceeds the target degree")
    return Folded(v.payload, dict(v.grouping), k, v.outer_arity)


def tensor_fold_merge(a: Folded, b: Folded) -> Folded:
    """fold_k A (x) fold_k B -> fold_k (A (x) B), concatenating outer ports."""
    if a.k != b.k:
        raise StructureError("tensor_fold_merge: fold degrees differ")
    na = arity(a.payload)
    mapping = dict(a.grouping)
    for j, (g, s) in b.grouping.items():
        mapping[na + j] = (a.outer_arity + g, s)
    return Folded(TensorPair(a.payload, b.payload), mapping, a.k, a.outer_arity + b.outer_arity)


def k_unit(k: int) -> MatrixElement:
    """The unfolding of the one-port term: a k-fan of trivial wires."""
    from .matrix import _port_fan

    return _port_fan(k)


def untwist(t: TermVal) -> Folded:
    """T fold_1 Sigma -> fold_1 T Sigma: push all the node-level 1-folds of a
    term into a single outer 1-fold.

    Each node label a/f has its outer ports lined up with the node's
    children; the flattened term re-wires child j of a to the child at
    position f(j).  Children never referenced by any f are dropped; the
    outer grouping sends the ports of the result onto the untouched port
    numbering of the input.
    """
    if isinstance(t.root, Port):
        return Folded(TermVal(PORT), {1: (1, 1)}, 1, 1)

    port_pos = {}
    counter = [0]

    def index_ports(n):
        for c in n.children:
            if isinstance(c, Port):
                counter[0] += 1
                port_pos[id(c)] = counter[0]
            else:
                index_ports(c)

    index_ports(t.root)
    n_ports = counter[0]

    targets = []  # original port index per result port, in document order

    def build(n: Node) -> TNode:
        label = n.label
        if not isinstance(label, Folded) or label.k != 1:
            raise StructureError("untwist: labels must be 1-folds")
        if label.outer_arity != len(n.children):
            raise StructureError("untwist: label outer arity != child count")
        ch = []
        for j in range(1, arity(label.payload) + 1):
            outer, _ = label.grouping[j]
            c = n.children[outer - 1]
            if isinstance(c, Port):
                targets.append(port_pos[id(c)])
                ch.append(Port())
            else:
                ch.append(build(c))
        return Node(label.payload, tuple(ch))

    root = build(t.root)
    if len(set(targets)) != len(targets):
        raise StructureError("untwist: grouping collision")
    grouping = {i: (q, 1) for i, q in enumerate(targets, start=1)}
    return Folded(TermVal(root), grouping, 1, n_ports)


# ---------------------------------------------------------------------------
# Error raising
# ---------------------------------------------------------------------------


def _has_error(v) -> bool:
    if isinstance(v, Inj):
        return v.side == 2
    raise StructureError("raise_errors: expected injected components")


def _strip(v: Inj):
    return v.payload


def raise_errors(v) -> Inj:
    """C(Sigma + bottom) -> C(Sigma) + bottom for C a term, tensor, shallow
    term or fold: if any component is on the error side, the whole value
    collapses to the terminal element of matching arity."""
    n = arity(v)
    if isinstance(v, TermVal):
        labels = [x.label for x in iter_preorder(v.root) if isinstance(x, Node)]
        if any(_has_error(l) for l in labels):
            return Inj(2, TerminalElem(n))
        return Inj(1, TermVal(map_labels(v.root, _strip)))
    if isinstance(v, TensorPair):
        if _has_error(v.left) or _has_error(v.right):
            return Inj(2, TerminalElem(n))
        return Inj(1, TensorPair(_strip(v.left), _strip(v.right)))
    if isinstance(v, ShallowTerm):
        parts = [v.root, *v.children]
        if any(_has_error(p) for p in parts):
            return Inj(2, TerminalElem(n))
        return Inj(1, ShallowTerm(_strip(v.root), tuple(_strip(c) for c in v.children)))
    if isinstance(v, Folded):
        if _has_error(v.payload):
            return Inj(2, TerminalElem(n))
        return Inj(1, Folded(_strip(v.payload), dict(v.grouping), v.k, v.outer_arity))
    raise StructureError("raise_errors: unsupported shape")


# ---------------------------------------------------------------------------
# Derived library
# ---------------------------------------------------------------------------


def filter_unary(t: TermVal, erase) -> TermVal:
    """Erase the unary symbols named in ``erase`` by splicing out the node."""

    def make(n, ch):
        if isinstance(n.label, Sym) and n.label.name in erase:
            if len(n.children) != 1:
                raise StructureError("filter: erased symbols must be unary")
            return ch[0]
        return Node(n.label, tuple(ch))

    if isinstance(t.root, Port):
        return TermVal(PORT)
    root = rebuild(t.root, make)
    return TermVal(root)


def homomorphism(t: TermVal, g) -> TermVal:
    """Apply g: label -> term to every node and flatten."""
    if isinstance(t.root, Port):
        return TermVal(PORT)

    def to_term(label):
        body = g(label)
        if not isinstance(body, TermVal):
            raise StructureError("hom: images must be terms")
        if term_arity(body.root) != arity(label):
            raise StructureError("hom: image arity mismatch")
        return body

    return flatten(TermVal(map_labels(t.root, to_term)))
