"""Command line front end.

One verb per module operation; all results print as canonical
s-expressions so golden tests can compare bytes.  Exit codes: 0 success,
1 undefined result, 2 validation failure, 3 parse error.
"""

from __future__ import annotations

import argparse
import os
import random
import sys

from . import combinator, factforest, gen, lam, prime, relabel, sexpr, transducer
from .core import (
    Node,
    Port,
    StructureError,
    Sym,
    TermVal,
    flatten,
    iter_preorder,
    map_labels,
    term_nodes,
    unit,
)
from .matrix import MatrixElement, is_monotone, unfold_general, unfold_monotone
from .sexpr import SexprError
from .unfold_decomp import unfold_monotone_decomposed

EXIT_OK = 0
EXIT_UNDEFINED = 1
EXIT_INVALID = 2
EXIT_PARSE = 3


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _color_enabled() -> bool:
    return os.environ.get("TREEDER_COLOR", "0") == "1"


def _status(text: str, good: bool) -> str:
    if _color_enabled():
        return f"\x1b[{'32' if good else '31'}m{text}\x1b[0m"
    return text


def _read_file(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise CliFailure(EXIT_PARSE, f"cannot read {path}: {exc}") from None
    try:
        return sexpr.read(text)
    except SexprError as exc:
        raise CliFailure(EXIT_PARSE, f"{path}: {exc}") from None


def _parse_tree(expr, path: str) -> TermVal:
    try:
        v = sexpr.parse_value(expr)
    except SexprError as exc:
        raise CliFailure(EXIT_PARSE, f"{path}: {exc}") from None
    if not isinstance(v, TermVal):
        raise CliFailure(EXIT_PARSE, f"{path}: expected a tree")
    return v


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def _cmd_normalize_lambda(args) -> int:
    expr = _read_file(args.file)
    try:
        term, types, X = lam.parse_lambda_file(expr)
    except lam.LambdaError as exc:
        raise CliFailure(EXIT_PARSE, str(exc)) from None
    if types is not None and X is not None:
        normal = lam.normalize_linear(term, types, X)
        if normal is None:
            raise CliFailure(
                EXIT_UNDEFINED,
                "undefined: the term is not linear and typable within the declared types",
            )
    else:
        try:
            normal = lam.reference_normalize(term)
        except lam.LambdaError as exc:
            raise CliFailure(EXIT_INVALID, str(exc)) from None
    print(sexpr.write(lam.term_expr(normal)))
    return EXIT_OK


def _cmd_typecheck_lambda(args) -> int:
    expr = _read_file(args.file)
    try:
        term, types, X = lam.parse_lambda_file(expr)
    except lam.LambdaError as exc:
        raise CliFailure(EXIT_PARSE, str(exc)) from None
    if X is None:
        X = {}
    try:
        tau = lam.infer_type(term, X)
    except lam.LambdaError as exc:
        raise CliFailure(EXIT_INVALID, f"ill-typed: {exc}") from None
    if types is not None and not lam.typable_within(term, types, X):
        raise CliFailure(EXIT_INVALID, "a subterm leaves the declared type set")
    print(sexpr.write(lam.type_expr(tau)))
    return EXIT_OK


def _parse_dfa_file(expr):
    if not isinstance(expr, list) or not expr or expr[0] != "type-dfa":
        raise CliFailure(EXIT_PARSE, "a type-dfa file is (type-dfa (types …) (target T) …)")
    types = target = X = term = None
    for section in expr[1:]:
        head = section[0] if isinstance(section, list) and section else None
        try:
            if head == "types":
                types = frozenset(lam.parse_type(e) for e in section[1:])
            elif head == "target":
                target = lam.parse_type(section[1])
            elif head == "vars":
                X = {p[0]: lam.parse_type(p[1]) for p in section[1:]}
            elif head == "term":
                term = TermVal(lam.parse_term(section[1]))
            else:
                raise CliFailure(EXIT_PARSE, f"unknown section {head!r}")
        except lam.LambdaError as exc:
            raise CliFailure(EXIT_PARSE, str(exc)) from None
    if types is None or target is None:
        raise CliFailure(EXIT_PARSE, "type-dfa needs (types …) and (target T)")
    closure = lam.downward_closure(types)
    if target not in closure:
        raise CliFailure(EXIT_INVALID, "the target type is outside the declared set")
    return lam.build_type_dfa(closure, target), X or {}, term


def _letter_expr(letter) -> str:
    if letter[0] == "app":
        return "@"
    return f"{letter[0]}:{sexpr.write(lam.type_expr(letter[1]))}"


def _cmd_type_dfa(args) -> int:
    dfa, X, term = _parse_dfa_file(_read_file(args.file))
    if args.action == "emit":
        index = {st: i for i, st in enumerate(dfa.states)}
        lines = [f"(states {len(dfa.states)})"]
        for (st, letter), dst in sorted(
            dfa.transitions.items(), key=lambda kv: (index[kv[0][0]], _letter_expr(kv[0][1]))
        ):
            lines.append(f"(edge {index[st]} {_letter_expr(letter)} {index[dst]})")
        accepting = sorted(index[st] for st in dfa.accepting)
        lines.append("(accepting" + "".join(f" {i}" for i in accepting) + ")")
        print("\n".join(lines))
        return EXIT_OK
    if args.action == "run":
        if term is None:
            raise CliFailure(EXIT_PARSE, "run needs a (term M) section")
        try:
            word = lam.leftmost_word(term)
        except lam.LambdaError as exc:
            raise CliFailure(EXIT_INVALID, str(exc)) from None
        print("accept" if lam.dfa_accepts(dfa, word, X) else "reject")
        return EXIT_OK
    if args.action == "counter-free-check":
        free = lam.check_counter_free(dfa)
        print("counter-free" if free else "not-counter-free")
        return EXIT_OK if free else EXIT_INVALID
    raise CliFailure(EXIT_PARSE, f"unknown action {args.action!r}")


def _cmd_run_transducer(args) -> int:
    try:
        tr = transducer.parse_transducer(_read_file(args.transducer))
    except StructureError as exc:
        raise CliFailure(EXIT_PARSE, f"{args.transducer}: {exc}") from None
    tree = _parse_tree(_read_file(args.tree), args.tree)

    diags = transducer.validate(tr)
    if diags:
        for d in diags:
            print(d, file=sys.stderr)

    results = {}
    if args.route in ("direct", "both"):
        results["direct"] = transducer.run(tr, tree)
    if args.route in ("lambda", "both"):
        results["lambda"] = transducer.run_via_lambda(tr, tree)
    if args.route == "both" and results["direct"] != results["lambda"]:
        print(_status("routes disagree", False), file=sys.stderr)
        for name, r in results.items():
            print(f"{name}: {'undefined' if r is None else sexpr.dump(r)}", file=sys.stderr)
        return EXIT_INVALID
    result = next(iter(results.values()))
    if result is None:
        print("undefined", file=sys.stderr)
        return EXIT_UNDEFINED
    print(sexpr.dump(result))
    return EXIT_OK


def _parse_matrix_tree(expr, path: str):
    """(unfold K TREE) with TREE ::= `_` | (node VALUE TREE …)."""
    if not isinstance(expr, list) or len(expr) != 3 or expr[0] != "unfold":
        raise CliFailure(EXIT_PARSE, f"{path}: an unfold file is (unfold K TREE)")
    try:
        k = int(expr[1])
    except ValueError:
        raise CliFailure(EXIT_PARSE, f"{path}: bad degree {expr[1]!r}") from None

    def tree(e):
        if e == "_":
            return Port()
        if not isinstance(e, list) or not e or e[0] != "node":
            raise CliFailure(EXIT_PARSE, f"{path}: tree nodes are (node VALUE child …)")
        try:
            label = sexpr.parse_value(e[1])
        except SexprError as exc:
            raise CliFailure(EXIT_PARSE, f"{path}: {exc}") from None
        if not isinstance(label, MatrixElement):
            raise CliFailure(EXIT_PARSE, f"{path}: labels must be (mat …) elements")
        return Node(label, tuple(tree(c) for c in e[2:]))

    return k, tree(expr[2])


def _cmd_unfold(args) -> int:
    k, root = _parse_matrix_tree(_read_file(args.file), args.file)
    if args.mode == "general":
        result = unfold_general(root, k)
    else:
        fn = unfold_monotone if args.mode == "monotone" else unfold_monotone_decomposed
        if args.mode == "decomposed":
            result = fn(TermVal(root), k)
        else:
            result = fn(root, k)
        if result is None:
            pos = 0
            for n in iter_preorder(root):
                if isinstance(n, Node):
                    pos += 1
                    if not is_monotone(n.label):
                        break
            print(f"non-monotone label at node {pos}", file=sys.stderr)
            return EXIT_UNDEFINED
    # each member is a term whose labels are member values of the inputs;
    # flatten them so the output prints as plain trees
    members = tuple(flatten(m) if isinstance(m, TermVal) else m for m in result.members)
    result = MatrixElement(result.k, members, result.grouping, result.outer_arity)
    print(sexpr.dump(result))
    return EXIT_OK


def _triples(entries):
    """Accept (head (a b c) …) and the wrapped (head ((a b c) …)) alike."""
    if len(entries) == 1 and entries[0] and isinstance(entries[0][0], list):
        return entries[0]
    return entries


def _parse_factforest_file(expr, path: str):
    if not isinstance(expr, list) or not expr or expr[0] != "factforest":
        raise CliFailure(EXIT_PARSE, f"{path}: a factforest file is (factforest …)")
    sections = {s[0]: s for s in expr[1:] if isinstance(s, list) and s}
    for needed in ("monoid", "alphabet", "hom", "term"):
        if needed not in sections:
            raise CliFailure(EXIT_PARSE, f"{path}: missing section ({needed} …)")
    msec = {s[0]: s for s in sections["monoid"][1:] if isinstance(s, list) and s}
    try:
        elements = tuple(msec["elements"][1:])
        unit_el = msec["unit"][1]
        mul = {(a, b): c for a, b, c in _triples(msec["mul"][1:])}
        monoid = factforest.FiniteMonoid(elements, unit_el, mul)
    except (KeyError, ValueError, StructureError) as exc:
        raise CliFailure(EXIT_PARSE, f"{path}: bad monoid: {exc}") from None
    arities = {a: int(n) for a, n in sections["alphabet"][1:]}
    mapping = {}
    for name, port, el in _triples(sections["hom"][1:]):
        if name not in arities:
            raise CliFailure(EXIT_PARSE, f"{path}: hom names unknown symbol {name!r}")
        mapping[factforest.Branch(Sym(name, arities[name]), int(port))] = el
    hom = factforest.BranchHom(monoid, mapping)
    term = _parse_tree(sections["term"][1], path)
    return hom, term


def _nested_expr(nt):
    if nt.depth == 1:
        return ["leaf", sexpr.value_expr(nt.content)]

    def tree(n):
        if isinstance(n, Port):
            return "_"
        return ["node", _nested_expr(n.label), *(tree(c) for c in n.children)]

    return ["level", str(nt.depth), tree(nt.content.root)]


def _cmd_factforest(args) -> int:
    hom, term = _parse_factforest_file(_read_file(args.file), args.file)
    try:
        nested = factforest.factorise(term, hom)
    except factforest.MonoidError as exc:
        raise CliFailure(EXIT_INVALID, str(exc)) from None
    if factforest.flatn(nested) != term:
        raise CliFailure(EXIT_INVALID, "internal error: factorisation does not flatten back")
    print(sexpr.write(_nested_expr(nested)))
    return EXIT_OK


def _cmd_relabel(args) -> int:
    try:
        program = relabel.parse_program(_read_file(args.program))
    except relabel.RelabelError as exc:
        raise CliFailure(EXIT_PARSE, f"{args.program}: {exc}") from None
    tree = _parse_tree(_read_file(args.tree), args.tree)
    try:
        result = relabel.run_program(tree, program)
    except relabel.RelabelError as exc:
        raise CliFailure(EXIT_INVALID, str(exc)) from None
    print(sexpr.dump(result))
    return EXIT_OK


def _cmd_pipeline_eval(args) -> int:
    try:
        pipeline = combinator.parse_pipeline(_read_file(args.pipeline))
    except combinator.PipelineError as exc:
        raise CliFailure(EXIT_PARSE, f"{args.pipeline}: {exc}") from None
    diags = combinator.validate(pipeline)
    if diags:
        raise CliFailure(EXIT_INVALID, "\n".join(diags))
    try:
        value = sexpr.parse_value(_read_file(args.value))
    except SexprError as exc:
        raise CliFailure(EXIT_PARSE, f"{args.value}: {exc}") from None
    try:
        result = combinator.evaluate_partial(pipeline, value)
    except StructureError as exc:
        raise CliFailure(EXIT_INVALID, str(exc)) from None
    if result is None:
        print("undefined", file=sys.stderr)
        return EXIT_UNDEFINED
    print(sexpr.dump(result))
    return EXIT_OK


def _cmd_validate(args) -> int:
    expr = _read_file(args.file)
    head = expr[0] if isinstance(expr, list) and expr else None
    diags = []
    try:
        if head == "transducer":
            diags = transducer.validate(transducer.parse_transducer(expr))
        elif head == "relabel":
            relabel.parse_program(expr)
        elif head == "lambda-file":
            term, types, X = lam.parse_lambda_file(expr)
            try:
                lam.infer_type(term, X or {})
            except lam.LambdaError as exc:
                diags.append(f"ill-typed: {exc}")
            else:
                if types is not None and not lam.typable_within(term, types, X or {}):
                    diags.append("a subterm leaves the declared type set")
        else:
            diags = combinator.validate(combinator.parse_pipeline(expr))
    except StructureError as exc:
        raise CliFailure(EXIT_PARSE, str(exc)) from None
    if diags:
        for d in diags:
            print(_status(d, False))
        return EXIT_INVALID
    print(_status("ok", True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Self-test
# ---------------------------------------------------------------------------


def _suite_monad(rng, cap):
    alpha = [Sym("a", 2), Sym("u", 1), Sym("b", 0)]
    n = 0
    for _ in range(40):
        t = TermVal(gen.random_tree(rng, alpha, rng.randint(1, cap)))
        assert flatten(unit(t)) == t
        one_node = map_labels(
            t.root, lambda s: TermVal(Node(s, tuple(Port() for _ in range(s.arity))))
        )
        assert flatten(TermVal(one_node)) == t
        n += 1
    return n


def _suite_unfold(rng, cap):
    n = 0
    alpha = [Sym("a", 2), Sym("u", 1), Sym("b", 0)]
    for _ in range(25):
        k = rng.randint(1, 3)
        t = gen.random_matrix_tree(rng, k, alpha, min(cap, 14))
        a = unfold_monotone(t, k)
        b = unfold_monotone_decomposed(TermVal(t), k)
        assert a is not None and b is not None and a == b
        n += 1
    return n


def _suite_preorder(rng, cap):
    n = 0
    alpha = [Sym("a", 2), Sym("u", 1), Sym("b", 0)]
    for _ in range(40):
        t = TermVal(gen.random_tree(rng, alpha, rng.randint(1, cap), rng.randint(0, 2)))
        f = prime.preorder(t)
        names = [x.label.name for x in term_nodes(t.root)]
        spine = [
            x.children[0].label.name
            for x in term_nodes(f.payload.root)
            if x.label.name == "pre2" and isinstance(x.children[0], Node)
        ]
        assert spine == names
        n += 1
    return n


def _suite_lambda(rng, cap):
    O, A = lam.O, lam.Arrow
    types = [A(O, O), A(O, A(O, O)), O]
    n = 0
    for _ in range(25):
        X = {"f1": O, "f2": A(O, O)}
        t = gen.random_linear_term(rng, types, X, letters=[("a", 2), ("e", 0)])
        got = lam.normalize_linear(t, types, X)
        want = lam.reference_normalize(t)
        assert got is not None and (got == want or lam.alpha_equal(got, want))
        n += 1
    return n


def _suite_relabel(rng, cap):
    alpha = [Sym("a", 2), Sym("u", 1), Sym("b", 0)]
    names = [s.name for s in alpha]
    n = 0
    for _ in range(40):
        t = TermVal(gen.random_tree(rng, alpha, rng.randint(1, min(cap, 12))))
        gamma = frozenset(x for x in names if rng.random() < 0.5)
        delta = frozenset(x for x in names if rng.random() < 0.5)
        got = relabel.char_until(t, gamma, delta)

        def sel(node):
            def good(c):
                if not isinstance(c, Node):
                    return False
                return c.label.name in delta or (
                    c.label.name in gamma and any(good(cc) for cc in c.children)
                )

            return any(good(c) for c in node.children)

        def check(orig, tagged):
            assert tagged.label.name.endswith(".1") == sel(orig)
            for a, b in zip(orig.children, tagged.children):
                check(a, b)

        check(t.root, got.root)
        n += 1
    return n


def _suite_transducer(rng, cap):
    mirror = transducer.parse_transducer(
        sexpr.read(
            "(transducer (input (a 2) (b 0)) (output (a 2) (b 0))"
            " (registers (r 0)) (out-register r)"
            " (update a 2 ((r (a (reg r 2) (reg r 1)))))"
            " (update b 0 ((r b)))"
            " (relabel))"
        )
    )
    alpha = [Sym("a", 2), Sym("b", 0)]
    n = 0
    for _ in range(15):
        t = gen.random_tree(rng, alpha, rng.randint(1, cap))
        assert transducer.run(mirror, t) == transducer.run_via_lambda(mirror, t) != None
        n += 1
    return n


_SUITES = [
    ("monad-laws", _suite_monad),
    ("unfold-routes", _suite_unfold),
    ("preorder-listing", _suite_preorder),
    ("lambda-normalisation", _suite_lambda),
    ("relabel-until", _suite_relabel),
    ("transducer-routes", _suite_transducer),
]


def _cmd_selftest(args) -> int:
    rng = random.Random(args.seed)
    cap = args.max_size
    failures = 0
    for name, suite in _SUITES:
        try:
            count = suite(rng, cap)
        except AssertionError:
            print(f"{name}: {_status('FAIL', False)}")
            failures += 1
        else:
            print(f"{name}: {count} {_status('ok', True)}")
    print(f"selftest: {len(_SUITES) - failures}/{len(_SUITES)} suites passed")
    return EXIT_OK if failures == 0 else EXIT_INVALID


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treeder")
    p.add_argument("--format", choices=["sexp"], default="sexp")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("normalize-lambda", help="β-normalise a λ-term file")
    s.add_argument("file")
    s.set_defaults(fn=_cmd_normalize_lambda)

    s = sub.add_parser("typecheck-lambda", help="infer the type of a λ-term file")
    s.add_argument("file")
    s.set_defaults(fn=_cmd_typecheck_lambda)

    s = sub.add_parser("type-dfa", help="work with the leftmost-branch type automaton")
    s.add_argument("action", choices=["emit", "run", "counter-free-check"])
    s.add_argument("file")
    s.set_defaults(fn=_cmd_type_dfa)

    s = sub.add_parser("run-transducer", help="run a register transducer on a tree")
    s.add_argument("transducer")
    s.add_argument("tree")
    s.add_argument("--route", choices=["direct", "lambda", "both"], default="direct")
    s.set_defaults(fn=_cmd_run_transducer)

    s = sub.add_parser("unfold", help="unfold a tree of matrix-power elements")
    s.add_argument("file")
    s.add_argument("--mode", choices=["general", "monotone", "decomposed"], default="monotone")
    s.set_defaults(fn=_cmd_unfold)

    s = sub.add_parser("factforest", help="factorise a tree along a monoid homomorphism")
    s.add_argument("file")
    s.set_defaults(fn=_cmd_factforest)

    s = sub.add_parser("relabel", help="apply a relabelling program to a tree")
    s.add_argument("program")
    s.add_argument("tree")
    s.set_defaults(fn=_cmd_relabel)

    s = sub.add_parser("pipeline-eval", help="evaluate a pipeline file on a value")
    s.add_argument("pipeline")
    s.add_argument("value")
    s.set_defaults(fn=_cmd_pipeline_eval)

    s = sub.add_parser("validate", help="check a definition file, print diagnostics")
    s.add_argument("file")
    s.set_defaults(fn=_cmd_validate)

    s = sub.add_parser("selftest", help="run the oracle suites under a size cap")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--max-size", type=int, default=20)
    s.set_defaults(fn=_cmd_selftest)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sys.setrecursionlimit(100_000)
    try:
        return args.fn(args)
    except CliFailure as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
