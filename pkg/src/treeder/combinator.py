"""Pipeline representation for functions built from a fixed basis.

A pipeline is a tree of combinators — composition, the liftings along
the four datatype constructors (term, fold, tensor, coproduct, in both
componentwise and case form), finite maps, the collapse to the terminal
alphabet — with named basis functions at the leaves.  Pipelines carry no
denotation of their own: :func:`infer` types them, :func:`validate`
collects static diagnostics, and :func:`evaluate` runs them on values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from . import prime
from .core import (
    Coproduct,
    Finite,
    FoldOf,
    Folded,
    Inj,
    Node,
    RankedAlphabet,
    StructureError,
    Sym,
    TNode,
    Tensor,
    TensorPair,
    Terminal,
    TerminalElem,
    TermOf,
    TermVal,
    arity,
    flatten,
    fold_flatten,
    map_labels,
    rebuild,
    typecheck,
    unit,
)


class PipelineError(StructureError):
    pass


# ---------------------------------------------------------------------------
# Pipeline shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrimeRef:
    name: str
    params: Tuple[object, ...] = ()


@dataclass(frozen=True)
class Compose:
    outer: object
    inner: object


@dataclass(frozen=True)
class LiftTerm:
    f: object


@dataclass(frozen=True)
class LiftFold:
    k: int
    f: object


@dataclass(frozen=True)
class LiftTensor:
    f: object
    g: object


@dataclass(frozen=True)
class LiftCoproduct:
    """Componentwise f+g on an injection."""

    f: object
    g: object


@dataclass(frozen=True)
class Case:
    """Co-pairing [f,g]: both branches land in the same type."""

    f: object
    g: object


@dataclass(frozen=True)
class FiniteMap:
    entries: Tuple[Tuple[object, object], ...]
    default_identity: bool = True


@dataclass(frozen=True)
class ToTerminal:
    pass


# ---------------------------------------------------------------------------
# The registered basis
# ---------------------------------------------------------------------------


def _expect(cond: bool, msg: str):
    if not cond:
        raise PipelineError(msg)


def _infer_unit(params, tau):
    return TermOf(tau)


def _infer_flatten(params, tau):
    _expect(isinstance(tau, TermOf) and isinstance(tau.inner, TermOf),
            f"flatten expects a term of terms, got {tau}")
    return tau.inner


def _infer_fold_flatten(params, tau):
    _expect(isinstance(tau, FoldOf) and isinstance(tau.inner, FoldOf),
            f"fold-flatten expects a fold of folds, got {tau}")
    return FoldOf(tau.k * tau.inner.k, tau.inner.inner)


def _infer_fact(params, tau):
    _expect(isinstance(tau, TermOf) and isinstance(tau.inner, Coproduct),
            f"factorisations expect a term over a coproduct, got {tau}")
    return TermOf(Coproduct(tau, tau))


def _infer_strip_factoring(params, tau):
    ok = (
        isinstance(tau, TermOf)
        and isinstance(tau.inner, Coproduct)
        and tau.inner.left == tau.inner.right
        and isinstance(tau.inner.left, TermOf)
    )
    _expect(ok, f"strip-factoring expects a term of injected factors, got {tau}")
    return tau.inner.left


def _infer_preorder(params, tau):
    _expect(isinstance(tau, TermOf) and isinstance(tau.inner, Finite),
            f"preorder expects a term over a finite alphabet, got {tau}")
    extended = dict(tau.inner.alphabet.arities)
    extended[prime.PRE0.name] = 0
    extended[prime.PRE2.name] = 2
    return FoldOf(1, TermOf(Finite(RankedAlphabet(sorted(extended.items())))))


def _infer_untwist(params, tau):
    ok = isinstance(tau, TermOf) and isinstance(tau.inner, FoldOf) and tau.inner.k == 1
    _expect(ok, f"untwist expects a term of 1-folds, got {tau}")
    return FoldOf(1, TermOf(tau.inner.inner))


def _infer_increase_fold(params, tau):
    (k,) = params
    _expect(isinstance(tau, FoldOf) and tau.k <= k,
            f"increase-fold {k} expects a fold of degree <= {k}, got {tau}")
    return FoldOf(k, tau.inner)


def _infer_decrease_fold(params, tau):
    (k,) = params
    _expect(isinstance(tau, FoldOf) and tau.k >= k,
            f"decrease-fold {k} expects a fold of degree >= {k}, got {tau}")
    return FoldOf(k, tau.inner)


def _infer_tensor_fold_merge(params, tau):
    ok = (
        isinstance(tau, Tensor)
        and isinstance(tau.left, FoldOf)
        and isinstance(tau.right, FoldOf)
        and tau.left.k == tau.right.k
    )
    _expect(ok, f"tensor-fold-merge expects a pair of equal-degree folds, got {tau}")
    return FoldOf(tau.left.k, Tensor(tau.left.inner, tau.right.inner))


def _infer_distribute_plus(params, tau):
    ok = isinstance(tau, Tensor) and isinstance(tau.left, Coproduct)
    _expect(ok, f"distribute-plus expects a pair with an injected left half, got {tau}")
    a, b, c = tau.left.left, tau.left.right, tau.right
    return Coproduct(Tensor(a, c), Tensor(b, c))


def _infer_raise_errors(params, tau):
    if isinstance(tau, TermOf) and isinstance(tau.inner, Coproduct) \
            and tau.inner.right == Terminal():
        return Coproduct(TermOf(tau.inner.left), Terminal())
    if isinstance(tau, FoldOf) and isinstance(tau.inner, Coproduct) \
            and tau.inner.right == Terminal():
        return Coproduct(FoldOf(tau.k, tau.inner.left), Terminal())
    if isinstance(tau, Tensor) and isinstance(tau.left, Coproduct) \
            and isinstance(tau.right, Coproduct) \
            and tau.left.right == Terminal() and tau.right.right == Terminal():
        return Coproduct(Tensor(tau.left.left, tau.right.left), Terminal())
    raise PipelineError(f"raise-errors expects error-channelled components, got {tau}")


def _infer_filter_unary(params, tau):
    _expect(isinstance(tau, TermOf) and isinstance(tau.inner, Finite),
            f"filter-unary expects a term over a finite alphabet, got {tau}")
    erase = set(params)
    for name in erase:
        if tau.inner.alphabet.arities.get(name) != 1:
            raise PipelineError(f"filter-unary: {name!r} is not a unary symbol of the alphabet")
    kept = {n: a for n, a in tau.inner.alphabet.arities.items() if n not in erase}
    return TermOf(Finite(RankedAlphabet(sorted(kept.items()))))


_Prime = Tuple[Callable, Callable, Callable]


PRIMES: Dict[str, _Prime] = {
    # name: (infer(params, tau), eval(params, v), check(params) -> diagnostics)
    "unit": (_infer_unit, lambda p, v: unit(v), lambda p: []),
    "flatten": (_infer_flatten, lambda p, v: flatten(v), lambda p: []),
    "fold-flatten": (_infer_fold_flatten, lambda p, v: fold_flatten(v), lambda p: []),
    "fact-up": (_infer_fact, lambda p, v: prime.fact_up(v), lambda p: []),
    "fact-down": (_infer_fact, lambda p, v: prime.fact_down(v), lambda p: []),
    "strip-factoring": (
        _infer_strip_factoring,
        lambda p, v: prime.strip_factoring(v),
        lambda p: [],
    ),
    "preorder": (_infer_preorder, lambda p, v: prime.preorder(v), lambda p: []),
    "untwist": (_infer_untwist, lambda p, v: prime.untwist(v), lambda p: []),
    "increase-fold": (
        _infer_increase_fold,
        lambda p, v: prime.increase_fold(v, p[0]),
        lambda p: [] if len(p) == 1 and isinstance(p[0], int) and p[0] >= 1
        else ["increase-fold needs one positive degree"],
    ),
    "decrease-fold": (
        _infer_decrease_fold,
        lambda p, v: prime.decrease_fold(v, p[0]),
        lambda p: [] if len(p) == 1 and isinstance(p[0], int) and p[0] >= 1
        else ["decrease-fold needs one positive degree"],
    ),
    "tensor-fold-merge": (
        _infer_tensor_fold_merge,
        lambda p, v: prime.tensor_fold_merge(v.left, v.right),
        lambda p: [],
    ),
    "distribute-plus": (
        _infer_distribute_plus,
        lambda p, v: prime.distribute_plus_over_tensor(v),
        lambda p: [],
    ),
    "raise-errors": (_infer_raise_errors, lambda p, v: prime.raise_errors(v), lambda p: []),
    "filter-unary": (
        _infer_filter_unary,
        lambda p, v: prime.filter_unary(v, set(p)),
        lambda p: [] if p and all(isinstance(x, str) for x in p)
        else ["filter-unary needs symbol names"],
    ),
}


# ---------------------------------------------------------------------------
# Type inference
# ---------------------------------------------------------------------------


def infer(p, tau):
    """Output type of pipeline ``p`` on input type ``tau``; raises
    :class:`PipelineError` naming the failing sub-pipeline."""
    if isinstance(p, PrimeRef):
        if p.name not in PRIMES:
            raise PipelineError(f"unknown basis function {p.name!r}")
        return PRIMES[p.name][0](p.params, tau)
    if isinstance(p, Compose):
        return infer(p.outer, infer(p.inner, tau))
    if isinstance(p, LiftTerm):
        _expect(isinstance(tau, TermOf), f"lift-term applied to {tau}")
        return TermOf(infer(p.f, tau.inner))
    if isinstance(p, LiftFold):
        _expect(isinstance(tau, FoldOf) and tau.k == p.k,
                f"lift-fold {p.k} applied to {tau}")
        return FoldOf(p.k, infer(p.f, tau.inner))
    if isinstance(p, LiftTensor):
        _expect(isinstance(tau, Tensor), f"lift-tensor applied to {tau}")
        return Tensor(infer(p.f, tau.left), infer(p.g, tau.right))
    if isinstance(p, LiftCoproduct):
        _expect(isinstance(tau, Coproduct), f"plus applied to {tau}")
        return Coproduct(infer(p.f, tau.left), infer(p.g, tau.right))
    if isinstance(p, Case):
        _expect(isinstance(tau, Coproduct), f"case applied to {tau}")
        left, right = infer(p.f, tau.left), infer(p.g, tau.right)
        _expect(left == right, f"case branches infer {left} and {right}")
        return left
    if isinstance(p, FiniteMap):
        # entries relabel within one type; arity preservation is validated
        for src, dst in p.entries:
            if isinstance(tau, Finite):
                src, dst = _as_sym(src), _as_sym(dst)
            if not typecheck(src, tau) or not typecheck(dst, tau):
                raise PipelineError(f"finite-map entry {src!r} -> {dst!r} leaves type {tau}")
        return tau
    if isinstance(p, ToTerminal):
        return Terminal()
    raise PipelineError(f"not a pipeline: {p!r}")


# ---------------------------------------------------------------------------
# Static diagnostics
# ---------------------------------------------------------------------------


def validate(p) -> List[str]:
    out: List[str] = []
    if isinstance(p, PrimeRef):
        if p.name not in PRIMES:
            out.append(f"unknown basis function {p.name!r}")
        else:
            out.extend(PRIMES[p.name][2](p.params))
    elif isinstance(p, Compose):
        out.extend(validate(p.inner))
        out.extend(validate(p.outer))
    elif isinstance(p, LiftTerm):
        out.extend(validate(p.f))
    elif isinstance(p, LiftFold):
        if p.k < 1:
            out.append(f"lift-fold degree must be positive, got {p.k}")
        out.extend(validate(p.f))
    elif isinstance(p, (LiftTensor, LiftCoproduct, Case)):
        out.extend(validate(p.f))
        out.extend(validate(p.g))
    elif isinstance(p, FiniteMap):
        for src, dst in p.entries:
            if arity(src) != arity(dst):
                out.append(f"finite-map entry {src!r} -> {dst!r} changes arity")
    elif isinstance(p, ToTerminal):
        pass
    else:
        out.append(f"not a pipeline: {p!r}")
    return out


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _as_sym(value) -> Optional[Sym]:
    """The symbol behind a one-node term whose children are all ports."""
    if isinstance(value, Sym):
        return value
    from .core import Port

    if (
        isinstance(value, TermVal)
        and isinstance(value.root, Node)
        and isinstance(value.root.label, Sym)
        and all(isinstance(c, Port) for c in value.root.children)
    ):
        return value.root.label
    return None


def _map_term_labels(f, t: TermVal) -> TermVal:
    def make(n: Node, ch) -> TNode:
        new = evaluate(f, n.label)
        if arity(new) != len(n.children):
            raise PipelineError("lift-term: label image changes arity")
        return Node(new, tuple(ch))

    from .core import Port, PORT

    if isinstance(t.root, Port):
        return TermVal(PORT)
    return TermVal(rebuild(t.root, make))


def evaluate(p, v):
    """The denotation of ``p`` on value ``v``."""
    if isinstance(p, PrimeRef):
        if p.name not in PRIMES:
            raise PipelineError(f"unknown basis function {p.name!r}")
        return PRIMES[p.name][1](p.params, v)
    if isinstance(p, Compose):
        return evaluate(p.outer, evaluate(p.inner, v))
    if isinstance(p, LiftTerm):
        _expect(isinstance(v, TermVal), f"lift-term applied to {type(v).__name__}")
        return _map_term_labels(p.f, v)
    if isinstance(p, LiftFold):
        _expect(isinstance(v, Folded) and v.k == p.k,
                f"lift-fold {p.k} applied to {type(v).__name__}")
        new = evaluate(p.f, v.payload)
        if arity(new) != arity(v.payload):
            raise PipelineError("lift-fold: payload image changes arity")
        return Folded(new, dict(v.grouping), v.k, v.outer_arity)
    if isinstance(p, LiftTensor):
        _expect(isinstance(v, TensorPair), f"lift-tensor applied to {type(v).__name__}")
        return TensorPair(evaluate(p.f, v.left), evaluate(p.g, v.right))
    if isinstance(p, LiftCoproduct):
        _expect(isinstance(v, Inj), f"plus applied to {type(v).__name__}")
        return Inj(v.side, evaluate(p.f if v.side == 1 else p.g, v.payload))
    if isinstance(p, Case):
        _expect(isinstance(v, Inj), f"case applied to {type(v).__name__}")
        return evaluate(p.f if v.side == 1 else p.g, v.payload)
    if isinstance(p, FiniteMap):
        # a one-node all-port term entry also matches the bare symbol, so
        # file-defined maps can relabel term labels
        for src, dst in p.entries:
            if src == v:
                return dst
            if isinstance(v, Sym) and _as_sym(src) == v:
                return _as_sym(dst) if _as_sym(dst) is not None else dst
        if p.default_identity:
            return v
        raise PipelineError(f"finite-map has no entry for {v!r}")
    if isinstance(p, ToTerminal):
        return TerminalElem(arity(v))
    raise PipelineError(f"not a pipeline: {p!r}")


def evaluate_partial(p, v):
    """As :func:`evaluate`, but an error-side result (the ⊥ channel of a
    partial function) is reported as None."""
    result = evaluate(p, v)
    if isinstance(result, Inj) and result.side == 2 and isinstance(result.payload, TerminalElem):
        return None
    return result


# ---------------------------------------------------------------------------
# Pipeline files
# ---------------------------------------------------------------------------


def _atom_param(a):
    try:
        return int(a)
    except (TypeError, ValueError):
        return a


def parse_pipeline(expr):
    from .sexpr import parse_value

    if isinstance(expr, str):
        if expr == "to-terminal":
            return ToTerminal()
        raise PipelineError(f"unknown pipeline atom {expr!r}")
    if not expr or not isinstance(expr[0], str):
        raise PipelineError(f"bad pipeline form {expr!r}")
    head = expr[0]
    if head == "compose":
        if len(expr) < 3:
            raise PipelineError("(compose f g …) takes at least two pipelines")
        parts = [parse_pipeline(e) for e in expr[1:]]
        acc = parts[-1]
        for outer in reversed(parts[:-1]):
            acc = Compose(outer, acc)
        return acc
    if head == "lift-term":
        if len(expr) != 2:
            raise PipelineError("(lift-term f) takes one pipeline")
        return LiftTerm(parse_pipeline(expr[1]))
    if head == "lift-fold":
        if len(expr) != 3:
            raise PipelineError("(lift-fold k f) takes a degree and a pipeline")
        return LiftFold(int(expr[1]), parse_pipeline(expr[2]))
    if head == "lift-tensor":
        if len(expr) != 3:
            raise PipelineError("(lift-tensor f g) takes two pipelines")
        return LiftTensor(parse_pipeline(expr[1]), parse_pipeline(expr[2]))
    if head == "plus":
        if len(expr) != 3:
            raise PipelineError("(plus f g) takes two pipelines")
        return LiftCoproduct(parse_pipeline(expr[1]), parse_pipeline(expr[2]))
    if head == "case":
        if len(expr) != 3:
            raise PipelineError("(case f g) takes two pipelines")
        return Case(parse_pipeline(expr[1]), parse_pipeline(expr[2]))
    if head == "finite-map":
        rest = expr[1:]
        default_identity = True
        if rest and rest[0] == "strict":
            default_identity = False
            rest = rest[1:]
        if len(rest) != 1 or not isinstance(rest[0], list):
            raise PipelineError("(finite-map ((in out) …)) takes one entry list")
        entries = []
        for pair in rest[0]:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise PipelineError("finite-map entries are (in out)")
            entries.append((parse_value(pair[0]), parse_value(pair[1])))
        return FiniteMap(tuple(entries), default_identity)
    if head == "prime":
        if len(expr) < 2 or not isinstance(expr[1], str):
            raise PipelineError("(prime name arg …) takes a name")
        return PrimeRef(expr[1], tuple(_atom_param(a) for a in expr[2:]))
    raise PipelineError(f"unknown pipeline form {head!r}")
