"""Canonical s-expression reader/printer for all value shapes.

Grammar (whitespace-insensitive, UTF-8):

    value   ::= `_`                       port
              | `(top N)`                 terminal element of arity N
              | `(pair V V)`              tensor
              | `(in1 V)` | `(in2 V)`     coproduct injections
              | `(fold K OUTER (GRP) V)`  fold; GRP lists `(p g s)` triples
              | `(mat K OUTER (tuple V …) (GRP))`  matrix-power element
              | tree                      a term
    tree    ::= `sym` | `(sym tree …)` | `_`

Printing is canonical: one line, grouping triples sorted by port index, so
equal values print byte-identically.
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
)
from .matrix import MatrixElement, ShallowTerm, TupleVal


class SexprError(ValueError):
    """Raised when the input text is not a well-formed s-expression."""


RESERVED = {"top", "pair", "in1", "in2", "fold", "mat", "tuple", "_"}


# ---------------------------------------------------------------------------
# Generic reader
# ---------------------------------------------------------------------------


def tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            tokens.append(c)
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def read(text: str):
    """Parse a single s-expression into nested lists of atom strings."""
    exprs = read_all(text)
    if len(exprs) != 1:
        raise SexprError(f"expected exactly one expression, found {len(exprs)}")
    return exprs[0]


def read_all(text: str):
    tokens = tokenize(text)
    exprs = []
    stack = []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise SexprError("unbalanced ')'")
            done = stack.pop()
            (stack[-1] if stack else exprs).append(done)
        else:
            (stack[-1] if stack else exprs).append(tok)
    if stack:
        raise SexprError("unbalanced '('")
    return exprs


def write(expr) -> str:
    if isinstance(expr, str):
        return expr
    return "(" + " ".join(write(e) for e in expr) + ")"


def _int(atom, what) -> int:
    try:
        return int(atom)
    except (TypeError, ValueError):
        raise SexprError(f"expected an integer for {what}, got {atom!r}") from None


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


def _parse_grouping(expr):
    if isinstance(expr, str):
        raise SexprError("grouping must be a list of (p g s) triples")
    grouping = {}
    for triple in expr:
        if isinstance(triple, str) or len(triple) != 3:
            raise SexprError("grouping entries must be (p g s) triples")
        p, g, s = (_int(x, "grouping entry") for x in triple)
        if p in grouping:
            raise SexprError(f"duplicate grouping entry for port {p}")
        grouping[p] = (g, s)
    return grouping


def _grouping_expr(grouping):
    return [[str(p), str(g), str(s)] for p, (g, s) in sorted(grouping.items())]


def parse_value(expr):
    """Turn a generic s-expression into a value.  Trees become terms."""
    if isinstance(expr, str):
        if expr == "_":
            return TermVal(PORT)
        if expr in RESERVED:
            raise SexprError(f"reserved word {expr!r} cannot stand alone")
        return TermVal(Node(Sym(expr, 0), ()))
    if not expr:
        raise SexprError("empty expression")
    head = expr[0]
    if head == "top":
        if len(expr) != 2:
            raise SexprError("(top N) takes one argument")
        return TerminalElem(_int(expr[1], "top"))
    if head == "pair":
        if len(expr) != 3:
            raise SexprError("(pair V V) takes two arguments")
        return TensorPair(parse_value(expr[1]), parse_value(expr[2]))
    if head in ("in1", "in2"):
        if len(expr) != 2:
            raise SexprError(f"({head} V) takes one argument")
        return Inj(1 if head == "in1" else 2, parse_value(expr[1]))
    if head == "fold":
        if len(expr) != 5:
            raise SexprError("(fold K OUTER (GRP) V) takes four arguments")
        k = _int(expr[1], "fold degree")
        outer = _int(expr[2], "fold outer arity")
        grouping = _parse_grouping(expr[3])
        payload = parse_value(expr[4])
        try:
            return Folded(payload, grouping, k, outer)
        except StructureError as exc:
            raise SexprError(str(exc)) from None
    if head == "mat":
        if len(expr) != 5:
            raise SexprError("(mat K OUTER (tuple V …) (GRP)) takes four arguments")
        k = _int(expr[1], "matrix degree")
        outer = _int(expr[2], "matrix outer arity")
        tup = expr[3]
        if isinstance(tup, str) or not tup or tup[0] != "tuple":
            raise SexprError("matrix members must be given as (tuple V …)")
        members = tuple(parse_value(e) for e in tup[1:])
        grouping = _parse_grouping(expr[4])
        try:
            return MatrixElement(k, members, grouping, outer)
        except StructureError as exc:
            raise SexprError(str(exc)) from None
    # otherwise: a tree node
    return TermVal(_parse_tree(expr))


def _parse_tree(expr):
    if isinstance(expr, str):
        if expr == "_":
            return Port()
        if expr in RESERVED:
            raise SexprError(f"reserved word {expr!r} is not a symbol")
        return Node(Sym(expr, 0), ())
    if not expr or not isinstance(expr[0], str) or expr[0] in RESERVED:
        raise SexprError(f"bad tree node: {write(expr)}")
    children = tuple(_parse_tree(c) for c in expr[1:])
    return Node(Sym(expr[0], len(children)), children)


def parse(text: str):
    return parse_value(read(text))


def value_expr(v):
    """The s-expression (nested lists) of a value."""
    if isinstance(v, TermVal):
        return _tree_expr(v.root)
    if isinstance(v, (Node, Port)):
        return _tree_expr(v)
    if isinstance(v, Sym):
        return _tree_expr(Node(v, tuple(Port() for _ in range(v.arity))))
    if isinstance(v, TerminalElem):
        return ["top", str(v.arity)]
    if isinstance(v, TensorPair):
        return ["pair", value_expr(v.left), value_expr(v.right)]
    if isinstance(v, Inj):
        return [f"in{v.side}", value_expr(v.payload)]
    if isinstance(v, Folded):
        return [
            "fold",
            str(v.k),
            str(v.outer_arity),
            _grouping_expr(v.grouping),
            value_expr(v.payload),
        ]
    if isinstance(v, MatrixElement):
        return [
            "mat",
            str(v.k),
            str(v.outer_arity),
            ["tuple", *(value_expr(m) for m in v.members)],
            _grouping_expr(v.grouping),
        ]
    if isinstance(v, TupleVal):
        return ["tuple", *(value_expr(m) for m in v.items)]
    if isinstance(v, ShallowTerm):
        return ["pair", value_expr(v.root), ["tuple", *(value_expr(c) for c in v.children)]]
    raise SexprError(f"cannot serialize {type(v).__name__}")


def _tree_expr(node):
    if isinstance(node, Port):
        return "_"
    label = node.label
    if isinstance(label, Sym):
        head = label.name
    else:
        raise SexprError("only symbol-labelled trees are serializable")
    if not node.children:
        return head
    return [head, *(_tree_expr(c) for c in node.children)]


def dump(v) -> str:
    return write(value_expr(v))
