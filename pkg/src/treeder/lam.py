"""Simply typed λ-terms as ranked trees.

Terms are ordinary :class:`~treeder.core.Node` trees whose labels identify
the construct: variables (arity 0), abstractions (arity 1), application
(arity 2), and optional output letters of arbitrary arity, used when λ-terms
build trees over an output alphabet.  Ports are allowed where noted.

The module provides typing (both the usual rules and the leftmost-branch
word characterisation), linearity, a bounded-stack word automaton for
type-set membership, a reference β-normaliser, and the word-shaped
normalisation pipeline for *thin* terms (factorise into thin blocks, read
the normal form off in pre-order).
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import (
    Folded,
    Node,
    PORT,
    Port,
    StructureError,
    TermVal,
    TNode,
    iter_preorder,
    term_arity,
    term_nodes,
)


class LambdaError(StructureError):
    pass


def _deep_enough(n: int = 100_000) -> None:
    if sys.getrecursionlimit() < n:
        sys.setrecursionlimit(n)


# ---------------------------------------------------------------------------
# Simple types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    def __repr__(self):
        return "o"


O = Atom()


@dataclass(frozen=True)
class Arrow:
    src: object
    dst: object

    def __repr__(self):
        return f"({self.src!r} -> {self.dst!r})"


def type_size(tau) -> int:
    """Node count of the type expression."""
    if isinstance(tau, Atom):
        return 1
    return 1 + type_size(tau.src) + type_size(tau.dst)


def type_spine(tau) -> Tuple[object, ...]:
    """The maximal decomposition τ = σ₁→…→σₙ along the right spine,
    ending in the atom (so ``type_spine(o) == (o,)``)."""
    out = []
    while isinstance(tau, Arrow):
        out.append(tau.src)
        tau = tau.dst
    out.append(tau)
    return tuple(out)


def fold_spine(parts: Sequence[object]):
    """Inverse of :func:`type_spine` on nonempty sequences (right fold)."""
    if not parts:
        raise LambdaError("cannot fold an empty type sequence")
    tau = parts[-1]
    for sigma in reversed(parts[:-1]):
        tau = Arrow(sigma, tau)
    return tau


def subtypes(tau) -> frozenset:
    out = set()
    stack = [tau]
    while stack:
        s = stack.pop()
        if s in out:
            continue
        out.add(s)
        if isinstance(s, Arrow):
            stack.append(s.src)
            stack.append(s.dst)
    return frozenset(out)


def downward_closure(types: Iterable) -> frozenset:
    """Close a set of simple types under subterms."""
    out = set()
    for tau in types:
        out |= subtypes(tau)
    return frozenset(out)


def arrow_target(tau, n: int):
    """Strip ``n`` arrows off the front of τ, or raise."""
    for _ in range(n):
        if not isinstance(tau, Arrow):
            raise LambdaError("type has too few arrows")
        tau = tau.dst
    return tau


# ---------------------------------------------------------------------------
# Term labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str

    def _arity_(self):
        return 0


@dataclass(frozen=True)
class Lam:
    var: str

    def _arity_(self):
        return 1


@dataclass(frozen=True)
class AppLabel:
    def _arity_(self):
        return 2


APP = AppLabel()


@dataclass(frozen=True)
class Out:
    """An output letter a ∈ Γ; builds output trees, has no reduction rule."""

    name: str
    arity: int

    def _arity_(self):
        return self.arity


@dataclass(frozen=True)
class _PortMark:
    """Internal stand-in for a port while a term is being rearranged, so
    that port identities survive reordering."""

    index: int

    def _arity_(self):
        return 0


def var(name: str) -> Node:
    return Node(Var(name), ())


def lam(name: str, body: TNode) -> Node:
    return Node(Lam(name), (body,))


def app(fun: TNode, arg: TNode) -> Node:
    return Node(APP, (fun, arg))


def out(name: str, *children: TNode) -> Node:
    return Node(Out(name, len(children)), tuple(children))


def _root(t) -> TNode:
    return t.root if isinstance(t, TermVal) else t


def _check_lambda_labels(root: TNode) -> None:
    for n in term_nodes(root):
        lbl = n.label
        if isinstance(lbl, (Var, Lam, AppLabel, Out, _PortMark)):
            if lbl._arity_() != len(n.children):
                raise LambdaError(f"label {lbl!r} used with wrong arity")
        else:
            raise LambdaError(f"not a λ-term label: {lbl!r}")


# ---------------------------------------------------------------------------
# Binding structure
# ---------------------------------------------------------------------------


def free_vars(root: TNode) -> Dict[str, int]:
    """Multiset (name -> count) of free variable occurrences."""
    counts: Dict[str, int] = {}

    def walk(n, bound):
        if isinstance(n, Port):
            return
        lbl = n.label
        if isinstance(lbl, Var):
            if lbl.name not in bound:
                counts[lbl.name] = counts.get(lbl.name, 0) + 1
        elif isinstance(lbl, Lam):
            walk(n.children[0], bound | {lbl.var})
        else:
            for c in n.children:
                walk(c, bound)

    _deep_enough()
    walk(_root(root), frozenset())
    return counts


def bound_occurrences(lam_node: Node) -> List[Node]:
    """The occurrences bound by an abstraction node, in document order."""
    x = lam_node.label.var
    found: List[Node] = []

    def walk(n):
        if isinstance(n, Port):
            return
        lbl = n.label
        if isinstance(lbl, Var):
            if lbl.name == x:
                found.append(n)
            return
        if isinstance(lbl, Lam) and lbl.var == x:
            return  # inner binder shadows
        for c in n.children:
            walk(c)

    _deep_enough()
    walk(lam_node.children[0])
    return found


def is_linear(t) -> bool:
    """Every bound variable occurs exactly once in its scope.  Free
    variables may repeat."""
    root = _root(t)
    for n in term_nodes(root):
        if isinstance(n.label, Lam) and len(bound_occurrences(n)) != 1:
            return False
    return True


def _is_affine(root: TNode) -> bool:
    """Bound variables occur at most once (factors may lose an occurrence
    to a neighbouring factor behind a port)."""
    for n in term_nodes(root):
        if isinstance(n.label, Lam) and len(bound_occurrences(n)) > 1:
            return False
    return True


# ---------------------------------------------------------------------------
# Typing
# ---------------------------------------------------------------------------


def infer_types(t, X: Dict[str, object]) -> Dict[int, object]:
    """Type of every subterm, keyed by ``id`` of its root node.

    Raises :class:`LambdaError` on ill-typed input or ports."""
    env: Dict[str, object] = dict(X)
    types: Dict[int, object] = {}

    def walk(n):
        if isinstance(n, Port):
            raise LambdaError("cannot type a term with ports")
        lbl = n.label
        if isinstance(lbl, Var):
            if lbl.name not in env:
                raise LambdaError(f"variable {lbl.name} has no declared type")
            tau = env[lbl.name]
        elif isinstance(lbl, Lam):
            if lbl.var not in env:
                raise LambdaError(f"variable {lbl.var} has no declared type")
            tau = Arrow(env[lbl.var], walk(n.children[0]))
        elif isinstance(lbl, AppLabel):
            fun = walk(n.children[0])
            arg = walk(n.children[1])
            if not isinstance(fun, Arrow) or fun.src != arg:
                raise LambdaError("ill-typed application")
            tau = fun.dst
        else:  # output letter: builds trees, children and result are atoms
            for c in n.children:
                if walk(c) != O:
                    raise LambdaError("output letters take arguments of atom type")
            tau = O
        types[id(n)] = tau
        return tau

    _deep_enough()
    walk(_root(t))
    return types


def infer_type(t, X: Dict[str, object]):
    """The simple type of a (port-free) λ-term, or :class:`LambdaError`."""
    root = _root(t)
    return infer_types(root, X)[id(root)]


# ---------------------------------------------------------------------------
# Leftmost-branch words
# ---------------------------------------------------------------------------

# Word letters: ("var", name) | ("lam", name) | ("app",)


def leftmost_word(t) -> Tuple[tuple, ...]:
    """The labels along the leftmost branch, read bottom-up (leaf first)."""
    n = _root(t)
    letters = []
    while True:
        if isinstance(n, Port):
            raise LambdaError("leftmost branch ends in a port")
        lbl = n.label
        if isinstance(lbl, Var):
            letters.append(("var", lbl.name))
            break
        if isinstance(lbl, Out):
            # an output letter ends the branch like an atom-typed variable
            letters.append(("out",))
            break
        if isinstance(lbl, Lam):
            letters.append(("lam", lbl.var))
        elif isinstance(lbl, AppLabel):
            letters.append(("app",))
        else:
            raise LambdaError("leftmost words are defined over variables, λ and @")
        n = n.children[0]
    return tuple(reversed(letters))


def word_type(w: Sequence[tuple], X: Dict[str, object]):
    """The type derived for a word in X·{@, λx}*, or None.

    Rules: x : σ; if u : τ then uλx : σ→τ; if u : σ→τ then u@ : τ."""
    if not w:
        return None
    if w[0][0] == "out":
        tau = O
    elif w[0][0] == "var":
        name = w[0][1]
        if name not in X:
            return None
        tau = X[name]
    else:
        return None
    for letter in w[1:]:
        if letter[0] == "lam":
            if letter[1] not in X:
                return None
            tau = Arrow(X[letter[1]], tau)
        elif letter[0] == "app":
            if not isinstance(tau, Arrow):
                return None
            tau = tau.dst
        else:
            return None  # a variable may only start the word
    return tau


# ---------------------------------------------------------------------------
# The bounded-stack type automaton
# ---------------------------------------------------------------------------

_DEAD = ("dead",)
_INIT = ("i",)


@dataclass(frozen=True)
class TypeDFA:
    """Deterministic automaton over leftmost-branch words deciding
    membership of the word's type in a finite type set, with the stack of
    the underlying pushdown (height ≤ the longest type's size) encoded in
    the state."""

    types: frozenset  # downward-closed type set
    target: object  # the type τ being recognised
    bound: int  # maximal stack height
    states: tuple  # reachable states, _INIT first
    letters: tuple  # abstract alphabet: ("var", σ), ("lam", σ), ("app",)
    transitions: dict  # (state, letter) -> state
    accepting: frozenset


def _abstract_letters(closure) -> tuple:
    letters = [("app",)]
    for sigma in sorted(closure, key=lambda s: (type_size(s), repr(s))):
        letters.append(("var", sigma))
        letters.append(("lam", sigma))
    return tuple(letters)


def _step(state, letter, closure, bound):
    if state == _DEAD:
        return _DEAD
    kind = letter[0]
    if state == _INIT:
        if kind != "var":
            return _DEAD
        spine = type_spine(letter[1])
        if len(spine) > bound or any(s not in closure for s in spine):
            return _DEAD
        return ("p", spine)
    stack = state[1]
    if kind == "var":
        return _DEAD  # a variable may only start the word
    if kind == "lam":
        sigma = letter[1]
        if sigma not in closure or len(stack) + 1 > bound:
            return _DEAD
        return ("p", (sigma,) + stack)
    if len(stack) < 2:
        return _DEAD  # applying a word of atom type (the bottom is the atom)
    return ("p", stack[1:])


def build_type_dfa(types: Iterable, tau) -> TypeDFA:
    """Determinise the typing pushdown for the query ``word : τ``.

    The pushdown pushes the spine of the leading variable's type, one type
    per λ, and pops one per @; its stack height is bounded by the size of
    the longest type, so the stack fits in the state.  Runs that overflow
    the bound, pop an empty stack, or push a type outside the (downward
    closed) set go to a dead state."""
    closure = downward_closure(types)
    if tau not in closure:
        raise LambdaError("target type must belong to the type set")
    bound = max(type_size(s) for s in closure)
    letters = _abstract_letters(closure)
    transitions = {}
    states = [_INIT]
    queue = [_INIT]
    seen = {_INIT, _DEAD}
    while queue:
        st = queue.pop()
        for letter in letters:
            nxt = _step(st, letter, closure, bound)
            transitions[(st, letter)] = nxt
            if nxt not in seen:
                seen.add(nxt)
                states.append(nxt)
                queue.append(nxt)
    states.append(_DEAD)
    for letter in letters:
        transitions[(_DEAD, letter)] = _DEAD
    accepting = frozenset(
        st
        for st in states
        if st not in (_INIT, _DEAD) and st[1] and fold_spine(st[1]) == tau
    )
    return TypeDFA(
        types=closure,
        target=tau,
        bound=bound,
        states=tuple(states),
        letters=letters,
        transitions=transitions,
        accepting=accepting,
    )


def _abstract_word(w: Sequence[tuple], X: Dict[str, object]):
    letters = []
    for letter in w:
        if letter[0] in ("var", "lam"):
            if letter[1] not in X:
                return None
            letters.append((letter[0], X[letter[1]]))
        elif letter[0] == "out":
            letters.append(("var", O))
        else:
            letters.append(("app",))
    return letters


def dfa_accepts(dfa: TypeDFA, w: Sequence[tuple], X: Dict[str, object]) -> bool:
    """Run the automaton on a concrete word, variables typed by ``X``."""
    word = _abstract_word(w, X)
    if word is None:
        return False
    st = _INIT
    for letter in word:
        if (st, letter) not in dfa.transitions:
            return False  # letter outside the type set
        st = dfa.transitions[(st, letter)]
    return st in dfa.accepting


def check_counter_free(dfa: TypeDFA) -> bool:
    """Aperiodicity of the transition monoid: some power of every element
    is idempotent."""
    index = {st: i for i, st in enumerate(dfa.states)}
    n = len(dfa.states)
    identity = tuple(range(n))
    generators = set()
    for letter in dfa.letters:
        generators.add(
            tuple(index[dfa.transitions[(st, letter)]] for st in dfa.states)
        )
    elements = {identity} | generators
    frontier = list(elements)
    while frontier:
        f = frontier.pop()
        for g in generators:
            h = tuple(g[f[i]] for i in range(n))
            if h not in elements:
                elements.add(h)
                frontier.append(h)
    for f in elements:
        power = f
        for _ in range(len(elements) + 1):
            squared = tuple(power[f[i]] for i in range(n))
            if squared == power:
                break
            power = squared
        else:
            return False
    return True


def typable_within(t, types: Iterable, X: Dict[str, object]) -> bool:
    """Is ``t`` well-typed with every subterm's type inside the set?

    Computed twice — by the typing rules on subterms, and by classifying
    each node's leftmost-branch word with the type automata plus the local
    consistency constraints between a node and its children — and the two
    answers are asserted equal."""
    root = _root(t)
    closure = downward_closure(types)

    direct: bool
    try:
        node_types = infer_types(root, X)
        direct = all(tau in closure for tau in node_types.values())
    except LambdaError:
        direct = False

    via_dfa = _typable_via_dfa(root, closure, X)
    assert direct == via_dfa, "type-rule and automaton classification disagree"
    return direct


_DFA_CACHE: Dict[frozenset, dict] = {}


def _typable_via_dfa(root: TNode, closure, X) -> bool:
    if not closure:
        return False
    if closure not in _DFA_CACHE:
        _DFA_CACHE[closure] = {tau: build_type_dfa(closure, tau) for tau in closure}
    dfas = _DFA_CACHE[closure]
    classified: Dict[int, object] = {}
    for n in term_nodes(root):
        try:
            w = leftmost_word(TermVal(n))
        except LambdaError:
            return False  # ports on the branch
        hits = [tau for tau, d in dfas.items() if dfa_accepts(d, w, X)]
        if len(hits) != 1:
            return False
        classified[id(n)] = hits[0]
    # Local consistency: the word of a node ignores its right subtrees,
    # so application arguments are checked against the function type here.
    for n in term_nodes(root):
        tau = classified[id(n)]
        lbl = n.label
        if isinstance(lbl, Var):
            if X.get(lbl.name) != tau:
                return False
        elif isinstance(lbl, Lam):
            if tau != Arrow(X.get(lbl.var), classified[id(n.children[0])]):
                return False
        elif isinstance(lbl, AppLabel):
            fun = classified[id(n.children[0])]
            arg = classified[id(n.children[1])]
            if fun != Arrow(arg, tau):
                return False
        else:
            if any(classified[id(c)] != O for c in n.children):
                return False
    return True


# ---------------------------------------------------------------------------
# Reference β-normalisation
# ---------------------------------------------------------------------------


def _free_names(root: TNode) -> set:
    names = set()
    for n in term_nodes(root):
        if isinstance(n.label, (Var,)):
            names.add(n.label.name)
        elif isinstance(n.label, Lam):
            names.add(n.label.var)
    return names


class _FreshNames:
    def __init__(self, avoid: set):
        self.avoid = set(avoid)
        self.counter = itertools.count(1)

    def fresh(self, base: str) -> str:
        stem = base.split("_")[0]
        while True:
            cand = f"{stem}_{next(self.counter)}"
            if cand not in self.avoid:
                self.avoid.add(cand)
                return cand


def _substitute(n: TNode, x: str, arg: TNode, fresh: _FreshNames) -> TNode:
    if isinstance(n, Port):
        return n
    lbl = n.label
    if isinstance(lbl, Var):
        return arg if lbl.name == x else n
    if isinstance(lbl, Lam):
        if lbl.var == x:
            return n  # shadowed
        if lbl.var in free_vars(arg) and x in free_vars(n.children[0]):
            new = fresh.fresh(lbl.var)
            body = _rename(n.children[0], lbl.var, new)
            return Node(Lam(new), (_substitute(body, x, arg, fresh),))
        return Node(lbl, (_substitute(n.children[0], x, arg, fresh),))
    return Node(lbl, tuple(_substitute(c, x, arg, fresh) for c in n.children))


def _rename(n: TNode, old: str, new: str) -> TNode:
    if isinstance(n, Port):
        return n
    lbl = n.label
    if isinstance(lbl, Var):
        return Node(Var(new), ()) if lbl.name == old else n
    if isinstance(lbl, Lam):
        if lbl.var == old:
            return n  # inner binder shadows
        return Node(lbl, (_rename(n.children[0], old, new),))
    return Node(lbl, tuple(_rename(c, old, new) for c in n.children))


def _reduce_leftmost(n: TNode, fresh: _FreshNames):
    """One leftmost-outermost β-step, or None if ``n`` is normal."""
    if isinstance(n, Port):
        return None
    lbl = n.label
    if isinstance(lbl, AppLabel):
        fun, arg = n.children
        if isinstance(fun, Node) and isinstance(fun.label, Lam):
            return _substitute(fun.children[0], fun.label.var, arg, fresh)
    for i, c in enumerate(n.children):
        r = _reduce_leftmost(c, fresh)
        if r is not None:
            ch = list(n.children)
            ch[i] = r
            return Node(lbl, tuple(ch))
    return None


def reference_normalize(t) -> TermVal:
    """β-normal form by leftmost-outermost reduction with capture-avoiding
    substitution (fresh names by numeric suffixing).

    Handles nonlinear input; output letters have no reduction rule of
    their own but reduction proceeds inside their arguments.  Ports are
    left in place (a port can never be the head of a redex)."""
    _deep_enough()
    root = _root(t)
    _check_lambda_labels(root)
    fresh = _FreshNames(_free_names(root))
    while True:
        r = _reduce_leftmost(root, fresh)
        if r is None:
            return TermVal(root)
        root = r


def rename_apart(t, X: Dict[str, object]):
    """Make binder names pairwise distinct (first occurrence keeps its
    name; later ones get numeric suffixes, typed like the original).

    With pairwise-distinct binders a linear term never needs renaming
    during reduction, and the property is preserved by β-steps, so the
    splice-based machinery below is capture-free.  Returns the renamed
    term and the typed-variable set extended with the fresh names."""
    root = _root(t)
    fresh = _FreshNames(_free_names(root))
    seen: set = set()
    extended = dict(X)
    alias: Dict[str, str] = {}

    def walk(n, ren):
        if isinstance(n, Port):
            return n
        lbl = n.label
        if isinstance(lbl, Var):
            return Node(Var(ren.get(lbl.name, lbl.name)), ())
        if isinstance(lbl, Lam):
            name = lbl.var
            if name in seen:
                new = fresh.fresh(name)
                if name in extended:
                    extended[new] = extended[name]
                alias[new] = name
                ren = dict(ren, **{name: new})
                name = new
            seen.add(name)
            return Node(Lam(name), (walk(n.children[0], ren),))
        return Node(lbl, tuple(walk(c, ren) for c in n.children))

    _deep_enough()
    return TermVal(walk(root, {})), extended, alias


def _has_repeated_binders(root: TNode) -> bool:
    names = [n.label.var for n in term_nodes(root) if isinstance(n.label, Lam)]
    return len(names) != len(set(names))


def alpha_equal(t1, t2) -> bool:
    """Equality up to renaming of bound variables."""

    def walk(a, b, env_a, env_b, depth):
        if isinstance(a, Port) or isinstance(b, Port):
            return isinstance(a, Port) and isinstance(b, Port)
        la, lb = a.label, b.label
        if isinstance(la, Var) and isinstance(lb, Var):
            ka = env_a.get(la.name, ("free", la.name))
            kb = env_b.get(lb.name, ("free", lb.name))
            return ka == kb
        if isinstance(la, Lam) and isinstance(lb, Lam):
            ea = dict(env_a, **{la.var: ("bound", depth)})
            eb = dict(env_b, **{lb.var: ("bound", depth)})
            return walk(a.children[0], b.children[0], ea, eb, depth + 1)
        if isinstance(la, (Var, Lam)) or isinstance(lb, (Var, Lam)) or la != lb:
            return False
        return len(a.children) == len(b.children) and all(
            walk(ca, cb, env_a, env_b, depth)
            for ca, cb in zip(a.children, b.children)
        )

    _deep_enough()
    return walk(_root(t1), _root(t2), {}, {}, 0)


# ---------------------------------------------------------------------------
# Redexes and thin terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Redex:
    app_node: Node
    lam_node: Node
    var_node: Optional[Node]  # None when the occurrence is missing


def find_redexes(t, x: Optional[str] = None, sigma=None, X=None) -> List[Redex]:
    """Application nodes whose left child is an abstraction, in pre-order,
    optionally filtered by the bound variable and by the redex type (the
    type of the left subterm; requires ``X``)."""
    root = _root(t)
    types = infer_types(root, X) if sigma is not None else None
    found = []
    for n in term_nodes(root):
        if not isinstance(n.label, AppLabel):
            continue
        fun = n.children[0]
        if not (isinstance(fun, Node) and isinstance(fun.label, Lam)):
            continue
        if x is not None and fun.label.var != x:
            continue
        if sigma is not None and types[id(fun)] != sigma:
            continue
        occ = bound_occurrences(fun)
        found.append(Redex(n, fun, occ[0] if occ else None))
    return found


def _substantial(c: TNode) -> bool:
    """Only ports do not make a node branch; any non-port child does.
    (Counting just children with content below them admits terms whose
    normal form is not the pre-order word, e.g. a letter with a bound
    variable to the left of a subterm.)"""
    return isinstance(c, Node)


def is_thin(t) -> bool:
    """Every branching node (two or more non-port children) is the
    application node of a redex."""
    root = _root(t)
    for n in term_nodes(root):
        if sum(1 for c in n.children if _substantial(c)) < 2:
            continue
        fun = n.children[0] if n.children else None
        if not (
            isinstance(n.label, AppLabel)
            and isinstance(fun, Node)
            and isinstance(fun.label, Lam)
        ):
            return False
    return True


def full_redex_span(t, redex: Redex) -> List[Node]:
    """The application node, its abstraction, the bound occurrence, and
    every node between them."""
    if redex.var_node is None:
        raise LambdaError("redex has no bound occurrence")
    path = _path_to_node(redex.lam_node, redex.var_node)
    return [redex.app_node] + path


def _child_index(parent: Node, child: TNode) -> int:
    for i, c in enumerate(parent.children):
        if c is child:
            return i
    raise LambdaError("not a child")


def _path_to_node(top: Node, goal: Node) -> List[Node]:
    """Nodes from ``top`` down to ``goal`` inclusive (by identity)."""
    trail: List[Node] = []

    def walk(n) -> bool:
        if isinstance(n, Port):
            return False
        trail.append(n)
        if n is goal:
            return True
        for c in n.children:
            if walk(c):
                return True
        trail.pop()
        return False

    _deep_enough()
    if not walk(top):
        raise LambdaError("goal is not a descendant")
    return trail


# ---------------------------------------------------------------------------
# Normalisation of thin terms
# ---------------------------------------------------------------------------


def _mark_ports(root: TNode) -> TNode:
    counter = itertools.count(1)

    def walk(n):
        if isinstance(n, Port):
            return Node(_PortMark(next(counter)), ())
        return Node(n.label, tuple(walk(c) for c in n.children))

    _deep_enough()
    return walk(root)


def _contract_complete(root: TNode) -> TNode:
    """Contract every redex whose bound occurrence is present, by splicing:
    the application node yields its abstraction's body, and the occurrence
    yields the argument.  No renaming happens, so distinct binders with a
    shared name must not cross an argument boundary."""
    by_app: Dict[int, Redex] = {}
    by_var: Dict[int, Redex] = {}
    for r in find_redexes(TermVal(root)):
        if r.var_node is not None:
            by_app[id(r.app_node)] = r
            by_var[id(r.var_node)] = r

    def resolve(n: TNode) -> TNode:
        while isinstance(n, Node):
            if id(n) in by_app:
                n = by_app[id(n)].lam_node.children[0]
            elif id(n) in by_var:
                n = by_var[id(n)].app_node.children[1]
            else:
                break
        return n

    def build(n: TNode) -> TNode:
        n = resolve(n)
        if isinstance(n, Port):
            return n
        return Node(n.label, tuple(build(c) for c in n.children))

    _deep_enough()
    return build(root)


def normalize_thin(t) -> Folded:
    """Normal form of a linear thin term with ports.

    The output is word-shaped: its nodes are exactly the nodes of the
    input that are not part of a redex (neither its application or
    abstraction node nor its bound occurrence), in pre-order of the input.
    The grouping of the result records where each original port went, as
    reordering the ports may twist them."""
    root = _root(t)
    _check_lambda_labels(root)
    if not is_thin(root):
        raise LambdaError("term is not thin")
    if not is_linear(root):
        raise LambdaError("term is not linear")
    n_ports = term_arity(root)
    marked = _mark_ports(root)
    result = _contract_complete(marked)

    survivors = _survivor_labels(root)
    produced = [n.label for n in term_nodes(result) if not isinstance(n.label, _PortMark)]
    assert produced == survivors, "normal form is not the pre-order of survivors"

    grouping = {}
    position = itertools.count(1)

    def unmark(n):
        if isinstance(n.label, _PortMark):
            grouping[next(position)] = (n.label.index, 1)
            return PORT
        return Node(n.label, tuple(unmark(c) for c in n.children))

    payload = unmark(result)
    for node in term_nodes(payload):
        if sum(1 for c in node.children if _substantial(c)) > 1:
            raise LambdaError("normal form of a thin term must be word-shaped")
    return Folded(TermVal(payload), grouping, 1, n_ports)


def _survivor_labels(root: TNode) -> list:
    dead = set()
    for r in find_redexes(TermVal(root)):
        if r.var_node is not None:
            dead.update((id(r.app_node), id(r.lam_node), id(r.var_node)))
    return [n.label for n in term_nodes(root) if id(n) not in dead]


# ---------------------------------------------------------------------------
# Factorisation into thin blocks
# ---------------------------------------------------------------------------


def factorize_thin(t, x: str, sigma, types: Iterable, X: Dict[str, object], _names=None):
    """Cut a linear λ-term into thin factors such that every full x-redex
    of the given type lies entirely inside one factor.

    Each multi-child node that is not itself the application node of such
    a redex has every child edge cut, except an edge lying on the path
    from a protected redex down to its bound occurrence (at most one child
    per node can be protected, by linearity).  Returns a term whose labels
    are the factors, with ``flatten`` giving back the input; None when the
    input is not linear or not typable within the set."""
    root = _root(t)
    _check_lambda_labels(root)
    if not is_linear(root) or not typable_within(root, types, X):
        return None
    node_types = infer_types(root, X)

    protected_apps = set()
    protected_edges = set()  # (id(parent), child index)
    spans = []
    names = _names if _names is not None else {x}
    for r in find_redexes(root):
        if r.lam_node.label.var not in names:
            continue
        if node_types[id(r.lam_node)] != sigma or r.var_node is None:
            continue
        protected_apps.add(id(r.app_node))
        path = _path_to_node(r.lam_node, r.var_node)
        spans.append([r.app_node] + path)
        for parent, child in zip(path, path[1:]):
            protected_edges.add((id(parent), _child_index(parent, child)))

    def cut_here(n: Node, i: int) -> bool:
        if len(n.children) < 2 or id(n) in protected_apps:
            return False
        return (id(n), i) not in protected_edges

    for span in spans:
        for parent, child in zip(span, span[1:]):
            if cut_here(parent, _child_index(parent, child)):
                raise LambdaError("a full redex crosses a factor boundary")
    factored = _cut_edges(root, cut_here)
    for fnode in term_nodes(factored.root):
        if not is_thin(fnode.label):
            raise LambdaError("factor is not thin")
    return factored


def _cut_edges(root: TNode, cut_here) -> TermVal:
    """Split a term along the selected edges: the outer term's labels are
    the connected pieces (as terms with ports), its children the pieces
    hanging off them, in document order."""

    def region(n: TNode):
        """Returns (piece root, outer children)."""
        if isinstance(n, Port):
            return PORT, [PORT]
        inner = []
        outer = []
        for i, c in enumerate(n.children):
            if isinstance(c, Node) and cut_here(n, i):
                piece, below = region(c)
                outer.append(Node(TermVal(piece), tuple(below)))
                inner.append(PORT)
            else:
                piece, below = region(c)
                inner.append(piece)
                outer.extend(below)
        return Node(n.label, tuple(inner)), outer

    _deep_enough()
    piece, below = region(root)
    if isinstance(piece, Port):
        return TermVal(PORT)
    return TermVal(Node(TermVal(piece), tuple(below)))


def flatten_factors(factored: TermVal) -> TermVal:
    """Plug the factors back together (inverse of the factorisation)."""

    def walk(n: TNode) -> TNode:
        if isinstance(n, Port):
            return PORT
        factor = n.label.root
        fillers = [walk(c) for c in n.children]
        slot = itertools.count()

        def fill(m: TNode) -> TNode:
            if isinstance(m, Port):
                return fillers[next(slot)]
            return Node(m.label, tuple(fill(c) for c in m.children))

        return fill(factor)

    _deep_enough()
    return TermVal(walk(factored.root))


# ---------------------------------------------------------------------------
# Evaluating the redexes of one variable and type
# ---------------------------------------------------------------------------


def eval_redexes(t, x: str, sigma, types: Iterable, X: Dict[str, object]):
    """Evaluate every x-redex of the given type (and any other redex that
    happens to fall entirely inside a thin factor): factorise, contract
    the complete redexes of each factor, flatten.  None on input that is
    not linear or not typable within the set."""
    root = _root(t)
    names = {x}
    if _has_repeated_binders(root):
        renamed, X, alias = rename_apart(root, X)
        root = renamed.root
        names |= {new for new, orig in alias.items() if orig == x}
    factored = factorize_thin(root, x, sigma, types, X, _names=names)
    if factored is None:
        return None

    def normalise(fnode: TNode) -> TNode:
        if isinstance(fnode, Port):
            return PORT
        factor = fnode.label.root
        if not _is_affine(factor):
            raise LambdaError("factor binds a variable more than once")
        marked = _mark_ports(factor)
        result = _contract_complete(marked)
        children = [normalise(c) for c in fnode.children]
        reordered = []

        def unmark(n):
            if isinstance(n.label, _PortMark):
                reordered.append(children[n.label.index - 1])
                return PORT
            return Node(n.label, tuple(unmark(c) for c in n.children))

        payload = unmark(result)
        return Node(TermVal(payload), tuple(reordered))

    _deep_enough()
    return flatten_factors(TermVal(normalise(factored.root)))


def normalize_linear(t, types: Iterable, X: Dict[str, object]):
    """β-normal form of a linear term typable within the set, by sweeping
    over types in decreasing size and variables in name order; None
    otherwise.  Evaluating a redex of type σ→τ only creates redexes of
    types σ and τ, so the number of sweeps is bounded."""
    root = _root(t)
    _check_lambda_labels(root)
    closure = downward_closure(types)
    if not is_linear(root) or not typable_within(root, closure, X):
        return None
    if _has_repeated_binders(root):
        renamed, X, _ = rename_apart(root, X)
        root = renamed.root
    order = sorted(closure, key=lambda s: (-type_size(s), repr(s)))
    names = sorted(X)
    current = TermVal(root)
    passes = 0
    while find_redexes(current):
        passes += 1
        if passes > len(closure) * max(1, len(names)):
            raise LambdaError("normalisation did not converge")
        for sigma in order:
            if not isinstance(sigma, Arrow):
                continue  # a redex type is always an arrow
            for name in names:
                if X[name] != sigma.src:
                    continue
                step = eval_redexes(current, name, sigma, closure, X)
                if step is None:
                    raise LambdaError("term left the typable fragment")
                current = step
    return current


# ---------------------------------------------------------------------------
# The exponential family (nonlinear duplication)
# ---------------------------------------------------------------------------


def exponential_term(n: int) -> TermVal:
    """M₀ = x and Mₙ₊₁ = (λx. y x x) Mₙ, with x : o and y : o→o→o.
    Well-typed of type o, size linear in n, normal form of size ≥ 2ⁿ."""
    t: TNode = var("x")
    for _ in range(n):
        t = app(lam("x", app(app(var("y"), var("x")), var("x"))), t)
    return TermVal(t)


EXPONENTIAL_VARS = {"x": O, "y": Arrow(O, Arrow(O, O))}


# ---------------------------------------------------------------------------
# The file format
# ---------------------------------------------------------------------------


def parse_type(expr):
    """``o`` or ``(-> S T)``."""
    if expr == "o":
        return O
    if isinstance(expr, list) and len(expr) == 3 and expr[0] == "->":
        return Arrow(parse_type(expr[1]), parse_type(expr[2]))
    raise LambdaError(f"bad type {expr!r}")


def type_expr(tau):
    if tau == O:
        return "o"
    return ["->", type_expr(tau.src), type_expr(tau.dst)]


def parse_term(expr) -> TNode:
    """``x`` | ``(lam x M)`` | ``(app M N)`` | ``(out a M …)`` | ``_``."""
    if isinstance(expr, str):
        if expr == "_":
            return Port()
        return var(expr)
    if not expr or not isinstance(expr[0], str):
        raise LambdaError(f"bad term {expr!r}")
    head = expr[0]
    if head == "lam":
        if len(expr) != 3 or not isinstance(expr[1], str):
            raise LambdaError("(lam x M) takes a variable and a body")
        return lam(expr[1], parse_term(expr[2]))
    if head == "app":
        if len(expr) != 3:
            raise LambdaError("(app M N) takes two terms")
        return app(parse_term(expr[1]), parse_term(expr[2]))
    if head == "out":
        if len(expr) < 2 or not isinstance(expr[1], str):
            raise LambdaError("(out a M …) takes a letter name")
        return out(expr[1], *(parse_term(e) for e in expr[2:]))
    raise LambdaError(f"unknown term form {head!r}")


def term_expr(t):
    n = _root(t)
    if isinstance(n, Port):
        return "_"
    lbl = n.label
    if isinstance(lbl, Var):
        return lbl.name
    if isinstance(lbl, Lam):
        return ["lam", lbl.var, term_expr(n.children[0])]
    if isinstance(lbl, AppLabel):
        return ["app", term_expr(n.children[0]), term_expr(n.children[1])]
    if isinstance(lbl, Out):
        return ["out", lbl.name, *(term_expr(c) for c in n.children)]
    raise LambdaError(f"cannot serialize label {lbl!r}")


def parse_lambda_file(expr):
    """A bare term, or ``(lambda-file (types T …) (vars (x T) …) (term M))``.

    Returns (term, types or None, typed variables or None); the header
    sections are each optional."""
    if isinstance(expr, str) or not expr or expr[0] != "lambda-file":
        return TermVal(parse_term(expr)), None, None
    types = None
    X = None
    term = None
    for section in expr[1:]:
        if not isinstance(section, list) or not section:
            raise LambdaError(f"bad section {section!r}")
        if section[0] == "types":
            types = frozenset(parse_type(e) for e in section[1:])
        elif section[0] == "vars":
            X = {}
            for pair in section[1:]:
                if not (isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], str)):
                    raise LambdaError("vars entries are (x TYPE)")
                X[pair[0]] = parse_type(pair[1])
        elif section[0] == "term":
            if len(section) != 2:
                raise LambdaError("(term M) takes one term")
            term = TermVal(parse_term(section[1]))
        else:
            raise LambdaError(f"unknown section {section[0]!r}")
    if term is None:
        raise LambdaError("lambda-file needs a (term M) section")
    return term, types, X
