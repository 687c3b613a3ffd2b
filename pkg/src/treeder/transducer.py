"""Register tree transducers with single-use, order-monotone updates.

A transducer carries an ordered set of registers (one designated output
register of arity zero), a finite set of register updates, and a
relabelling program that assigns an update to every node of the input.
Running it folds the tree of updates bottom-up and reads off the output
register.

Each update is evaluated along a second, independent route: every update
becomes a tuple of λ-terms packed into a matrix-power element
(:func:`lambda_repr`), the tree of elements is unfolded, and the
resulting λ-term is β-normalised.  :func:`run_via_lambda` follows that
route and must agree with :func:`run` everywhere.

Undefined register cells are modelled by a reserved bottom letter
``_bot``; an output containing it is reported as undefined (``None``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from . import lam, relabel
from .core import (
    Node,
    Port,
    StructureError,
    Sym,
    TNode,
    TermVal,
    flatten,
    plug,
    rebuild,
    term_arity,
    term_nodes,
)
from .matrix import MatrixElement, unfold_monotone


class TransducerError(StructureError):
    pass


BOTTOM = "_bot"


def _bottom_body(reg_arity: int) -> Node:
    return Node(Sym(BOTTOM, reg_arity), tuple(Port() for _ in range(reg_arity)))


@dataclass(frozen=True)
class Placeholder:
    """The register ``reg`` of the ``copy``-th child, usable as a tree
    label of the register's arity."""

    reg: str
    copy: int
    reg_arity: int

    def _arity_(self) -> int:
        return self.reg_arity


@dataclass(frozen=True)
class RegisterSet:
    """Ordered registers (the order is the monotonicity order) plus a
    designated output register of arity zero."""

    registers: Tuple[Tuple[str, int], ...]
    output: str

    def __post_init__(self):
        names = [r for r, _ in self.registers]
        if len(set(names)) != len(names):
            raise TransducerError("duplicate register name")
        if self.output not in names:
            raise TransducerError("output register missing from the register set")
        if self.arity_of(self.output) != 0:
            raise TransducerError("output register must have arity 0")

    def __len__(self) -> int:
        return len(self.registers)

    def names(self) -> List[str]:
        return [r for r, _ in self.registers]

    def arity_of(self, reg: str) -> int:
        for r, a in self.registers:
            if r == reg:
                return a
        raise TransducerError(f"unknown register {reg!r}")

    def index(self, reg: str) -> int:
        """1-based position in the register order."""
        for i, (r, _) in enumerate(self.registers, start=1):
            if r == reg:
                return i
        raise TransducerError(f"unknown register {reg!r}")


@dataclass(frozen=True)
class RegisterUpdate:
    """For a node with ``arity`` children: one right-hand side per
    register, over the output alphabet plus placeholders.  Registers with
    no rule are filled with a bottom body (undefined cell)."""

    arity: int
    rules: Tuple[Tuple[str, TNode], ...]

    def _arity_(self) -> int:
        return self.arity

    def body_of(self, reg: str) -> Optional[TNode]:
        for r, b in self.rules:
            if r == reg:
                return b
        return None


RegisterValuation = Dict[str, TermVal]


@dataclass(frozen=True)
class Transducer:
    input_alphabet: Tuple[Sym, ...]
    output_alphabet: Tuple[Sym, ...]
    registers: RegisterSet
    updates: Tuple[Tuple[str, RegisterUpdate], ...]
    program: Tuple[object, ...]  # relabel steps

    def update_named(self, name: str) -> Optional[RegisterUpdate]:
        for n, u in self.updates:
            if n == name:
                return u
        return None


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _placeholders(body: TNode) -> List[Placeholder]:
    return [n.label for n in term_nodes(body) if isinstance(n.label, Placeholder)]


def validate_update(name: str, u: RegisterUpdate, regs: RegisterSet,
                    output_alphabet=None) -> List[str]:
    """Diagnostics (empty = clean): arity coherence, the single-use
    clause, and the monotonicity clause for every child position."""
    out = []
    letters = {s.name: s.arity for s in output_alphabet} if output_alphabet else None
    rule_regs = [r for r, _ in u.rules]
    if len(set(rule_regs)) != len(rule_regs):
        out.append(f"update {name}: register given two rules")
    for r in rule_regs:
        if r not in regs.names():
            out.append(f"update {name}: rule for unknown register {r!r}")

    seen: Dict[Tuple[str, int], str] = {}
    arrows: Dict[int, Dict[int, int]] = {i: {} for i in range(1, u.arity + 1)}
    for target, body in u.rules:
        if target not in regs.names():
            continue
        if term_arity(body) != regs.arity_of(target):
            out.append(f"update {name}: body of {target} has wrong arity")
        for n in term_nodes(body):
            lbl = n.label
            if isinstance(lbl, Placeholder):
                key = (lbl.reg, lbl.copy)
                if not (1 <= lbl.copy <= u.arity):
                    out.append(f"update {name}: placeholder copy {lbl.copy} out of range")
                    continue
                if lbl.reg not in regs.names() or regs.arity_of(lbl.reg) != lbl.reg_arity:
                    out.append(f"update {name}: bad placeholder register {lbl.reg!r}")
                    continue
                if key in seen:
                    out.append(
                        f"update {name}: placeholder {lbl.reg}_{lbl.copy} used twice"
                        + ("" if seen[key] == target else f" (in {seen[key]} and {target})")
                    )
                else:
                    seen[key] = target
                    arrows[lbl.copy][regs.index(lbl.reg)] = regs.index(target)
            elif isinstance(lbl, Sym):
                if letters is not None and lbl.name != BOTTOM and letters.get(lbl.name) != lbl.arity:
                    out.append(f"update {name}: letter {lbl.name!r} not in the output alphabet")
            else:
                out.append(f"update {name}: unexpected label {lbl!r}")
    for i, arrow in arrows.items():
        dom = sorted(arrow)
        for a, b in zip(dom, dom[1:]):
            if arrow[a] > arrow[b]:
                ra, rb = regs.registers[a - 1][0], regs.registers[b - 1][0]
                out.append(
                    f"update {name}: child {i} order crossing "
                    f"({ra} and {rb} land in decreasing registers)"
                )
    return out


def validate(tr: Transducer) -> List[str]:
    out = []
    names = [n for n, _ in tr.updates]
    if len(set(names)) != len(names):
        out.append("duplicate update name")
    for name, u in tr.updates:
        out.extend(validate_update(name, u, tr.registers, tr.output_alphabet))
    return out


def is_monotone_update(u: RegisterUpdate, regs: RegisterSet) -> bool:
    """Just the monotonicity clause (assumes the rest is coherent)."""
    diags = validate_update("u", u, regs)
    return not any("order crossing" in d for d in diags)


# ---------------------------------------------------------------------------
# Direct evaluation
# ---------------------------------------------------------------------------


def _filled(u: RegisterUpdate, regs: RegisterSet) -> Dict[str, TNode]:
    """Rule table with undefined cells replaced by bottom bodies."""
    table = {}
    for r in regs.names():
        body = u.body_of(r)
        table[r] = body if body is not None else _bottom_body(regs.arity_of(r))
    return table


def apply_update(u: RegisterUpdate, regs: RegisterSet,
                 vals: List[RegisterValuation]) -> RegisterValuation:
    """Substitute, in each right-hand side, the i-th copy of a register
    name by that register's contents in the i-th child valuation."""
    if len(vals) != u.arity:
        raise TransducerError("apply_update: arity mismatch")

    def subst(n: TNode) -> TNode:
        if isinstance(n, Port):
            return n
        lbl = n.label
        if isinstance(lbl, Placeholder):
            content = vals[lbl.copy - 1][lbl.reg]
            return plug(content.root, [subst(c) for c in n.children])
        return Node(lbl, tuple(subst(c) for c in n.children))

    return {r: TermVal(subst(body)) for r, body in _filled(u, regs).items()}


def evaluate_update_tree(t: TNode, regs: RegisterSet) -> RegisterValuation:
    """Bottom-up fold of :func:`apply_update` over a tree whose labels
    are register updates."""
    done: Dict[int, RegisterValuation] = {}
    stack = [(t, False)]
    while stack:
        n, expanded = stack.pop()
        if isinstance(n, Port):
            raise TransducerError("update trees cannot have ports")
        if not isinstance(n.label, RegisterUpdate):
            raise TransducerError(f"not a register update: {n.label!r}")
        if n.label.arity != len(n.children):
            raise TransducerError("update arity != child count")
        if expanded:
            done[id(n)] = apply_update(n.label, regs, [done[id(c)] for c in n.children])
        else:
            stack.append((n, True))
            stack.extend((c, False) for c in n.children)
    return done[id(t)]


def contains_bottom(t) -> bool:
    root = t.root if isinstance(t, TermVal) else t
    return any(
        getattr(n.label, "name", None) == BOTTOM for n in term_nodes(root)
    )


def _update_tree(tr: Transducer, t) -> Optional[TNode]:
    """Relabel the input and swap update names for updates; None when the
    relabelling fails or assigns an update of the wrong arity."""
    try:
        relabelled = relabel.run_program(t, tr.program)
    except StructureError:
        return None

    def attach(n: Node, ch) -> Node:
        u = tr.update_named(n.label.name)
        if u is None or u.arity != len(ch):
            raise TransducerError(f"no update of arity {len(ch)} named {n.label.name!r}")
        return Node(u, tuple(ch))

    try:
        return rebuild(relabelled.root, attach)
    except TransducerError:
        return None


def run(tr: Transducer, t, raise_errors: bool = False) -> Optional[TermVal]:
    """Output tree, or None when the transducer is invalid, the
    relabelling fails, or the output register ends up undefined."""
    diags = validate(tr)
    if diags:
        if raise_errors:
            raise TransducerError("; ".join(diags))
        return None
    updates = _update_tree(tr, t)
    if updates is None:
        if raise_errors:
            raise TransducerError("transition relabelling failed")
        return None
    valuation = evaluate_update_tree(updates, tr.registers)
    result = valuation[tr.registers.output]
    if contains_bottom(result):
        if raise_errors:
            raise TransducerError("output register is undefined")
        return None
    return result


# ---------------------------------------------------------------------------
# The λ-representation route
# ---------------------------------------------------------------------------


def _lambda_member(body: TNode, reg_arity: int) -> Tuple[TermVal, List[Placeholder]]:
    """λ-term for one right-hand side: the body's ports become bound
    variables x1..xm (abstracted on top), output letters keep building
    output trees, and each placeholder becomes a term port applied to its
    translated children.  Returns the placeholders in port document
    order."""
    holes: List[Placeholder] = []
    next_port = [0]

    def conv(n: TNode) -> TNode:
        if isinstance(n, Port):
            next_port[0] += 1
            return lam.var(f"x{next_port[0]}")
        lbl = n.label
        if isinstance(lbl, Placeholder):
            holes.append(lbl)
            spine: TNode = Port()
            for c in n.children:
                spine = lam.app(spine, conv(c))
            return spine
        if isinstance(lbl, Sym):
            return Node(lam.Out(lbl.name, lbl.arity), tuple(conv(c) for c in n.children))
        raise TransducerError(f"unexpected label {lbl!r}")

    term = conv(body)
    for j in range(reg_arity, 0, -1):
        term = lam.lam(f"x{j}", term)
    return TermVal(term), holes


def lambda_repr(u: RegisterUpdate, regs: RegisterSet) -> MatrixElement:
    """The update as one element of the |R|-th matrix power of λ-terms:
    member r is the λ-term of register r's right-hand side, and the
    grouping wires the port standing for placeholder s_i to sub-port s of
    outer port i."""
    k = len(regs)
    members = []
    grouping = {}
    concat = 0
    for rname, rar in regs.registers:
        body = _filled(u, regs)[rname]
        member, holes = _lambda_member(body, rar)
        members.append(member)
        for ph in holes:
            concat += 1
            grouping[concat] = (ph.copy, regs.index(ph.reg))
    try:
        return MatrixElement(k, tuple(members), grouping, u.arity)
    except StructureError as exc:
        raise TransducerError(f"invalid update: {exc}") from None


def _lambda_types(tr: Transducer):
    """All simple types occurring along the λ route: o^i -> o for i up to
    the larger of the maximal letter arity and maximal register arity."""
    m = max(
        [s.arity for s in tr.output_alphabet]
        + [a for _, a in tr.registers.registers]
        + [0]
    )
    top = lam.O
    for _ in range(m):
        top = lam.Arrow(lam.O, top)
    return lam.downward_closure([top])


def _output_tree(t: TermVal) -> TermVal:
    """Read an output-letter λ-term back as a plain tree."""

    def walk(n: TNode) -> TNode:
        if not isinstance(n, Node) or not isinstance(n.label, lam.Out):
            raise TransducerError(f"normal form is not an output tree at {n!r}")
        return Node(Sym(n.label.name, n.label.arity), tuple(walk(c) for c in n.children))

    return TermVal(walk(t.root))


def run_via_lambda(tr: Transducer, t, raise_errors: bool = False) -> Optional[TermVal]:
    """Evaluate through the λ-representation: lift every update, unfold
    the matrix power over the whole tree, flatten the output coordinate
    into one λ-term, β-normalise it, and read off the output tree.  Must
    agree with :func:`run` everywhere."""
    diags = validate(tr)
    if diags:
        if raise_errors:
            raise TransducerError("; ".join(diags))
        return None
    updates = _update_tree(tr, t)
    if updates is None:
        if raise_errors:
            raise TransducerError("transition relabelling failed")
        return None

    reprs: Dict[int, MatrixElement] = {}

    def lift(n: Node, ch) -> Node:
        key = id(n.label)
        if key not in reprs:
            reprs[key] = lambda_repr(n.label, tr.registers)
        return Node(reprs[key], tuple(ch))

    lifted = rebuild(updates, lift)
    k = len(tr.registers)
    unfolded = unfold_monotone(lifted, k)
    if unfolded is None:
        if raise_errors:
            raise TransducerError("non-monotone update")
        return None

    coord = tr.registers.index(tr.registers.output)
    member = unfolded.members[coord - 1]
    term = flatten(member)

    types = _lambda_types(tr)
    max_reg = max(a for _, a in tr.registers.registers)
    X = {f"x{j}": lam.O for j in range(1, max_reg + 1)}
    normal = lam.normalize_linear(term, types, X)
    if normal is None:
        raise TransducerError("λ-normalisation failed on a validated transducer")
    result = _output_tree(normal)
    if contains_bottom(result):
        if raise_errors:
            raise TransducerError("output register is undefined")
        return None
    return result


# ---------------------------------------------------------------------------
# Transducer files
# ---------------------------------------------------------------------------


def _parse_alphabet(expr, what: str) -> Tuple[Sym, ...]:
    if not isinstance(expr, list) or not expr or expr[0] != what:
        raise TransducerError(f"expected ({what} (a n) …)")
    out = []
    for item in expr[1:]:
        if not (isinstance(item, list) and len(item) == 2):
            raise TransducerError(f"{what}: entries are (name arity)")
        out.append(Sym(item[0], int(item[1])))
    return tuple(out)


def _parse_body(expr, regs: RegisterSet, n: int) -> TNode:
    if isinstance(expr, str):
        if expr == "_":
            return Port()
        return Node(Sym(expr, 0), ())
    if not expr or not isinstance(expr[0], str):
        raise TransducerError(f"bad term {expr!r}")
    if expr[0] == "reg":
        if len(expr) < 3:
            raise TransducerError("(reg r i …) needs a register and a copy index")
        reg, copy = expr[1], int(expr[2])
        children = tuple(_parse_body(e, regs, n) for e in expr[3:])
        if len(children) != regs.arity_of(reg):
            raise TransducerError(f"placeholder {reg} expects {regs.arity_of(reg)} arguments")
        return Node(Placeholder(reg, copy, regs.arity_of(reg)), children)
    children = tuple(_parse_body(e, regs, n) for e in expr[1:])
    return Node(Sym(expr[0], len(children)), children)


def parse_transducer(expr) -> Transducer:
    """Read a `(transducer …)` form: alphabets, ordered registers with
    the output register, `(update name n ((r term) …))` definitions, and
    the transition relabelling program."""
    if not isinstance(expr, list) or not expr or expr[0] != "transducer":
        raise TransducerError("a transducer file is (transducer …)")
    sections = {}
    updates = []
    program = ()
    for item in expr[1:]:
        if not isinstance(item, list) or not item:
            raise TransducerError(f"bad section {item!r}")
        if item[0] == "update":
            updates.append(item)
        elif item[0] == "relabel":
            program = relabel.parse_program(item)
        else:
            if item[0] in sections:
                raise TransducerError(f"duplicate section {item[0]!r}")
            sections[item[0]] = item
    for needed in ("input", "output", "registers", "out-register"):
        if needed not in sections:
            raise TransducerError(f"missing section ({needed} …)")
    input_alpha = _parse_alphabet(sections["input"], "input")
    output_alpha = _parse_alphabet(sections["output"], "output")
    reg_pairs = tuple(
        (item[0], int(item[1]))
        for item in sections["registers"][1:]
        if isinstance(item, list) and len(item) == 2
    )
    if len(reg_pairs) != len(sections["registers"]) - 1:
        raise TransducerError("registers: entries are (name arity)")
    if len(sections["out-register"]) != 2 or not isinstance(sections["out-register"][1], str):
        raise TransducerError("(out-register name) takes one name")
    regs = RegisterSet(reg_pairs, sections["out-register"][1])

    parsed_updates = []
    for item in updates:
        if len(item) != 4 or not isinstance(item[3], list):
            raise TransducerError("(update name n ((r term) …)) is malformed")
        name, n = item[1], int(item[2])
        rules = []
        for pair in item[3]:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise TransducerError("update rules are (register term)")
            rules.append((pair[0], _parse_body(pair[1], regs, n)))
        parsed_updates.append((name, RegisterUpdate(n, tuple(rules))))
    return Transducer(input_alpha, output_alpha, regs, tuple(parsed_updates), program)
