"""Decomposed unfolding of matrix-power terms.

``unfold_general`` expands a term of matrix-power elements in one sweep.
The functions here compute the same result by structural decomposition:

* constant branch twists: per-coordinate piece trees assembled with untwist;
* one shared branch twist alpha: induction on the power k, splitting
  disconnected twists into blocks, and reducing connected ones by bundling
  the last coordinate (or its mirror image);
* homogeneous twists: cut at the frontier where branch twists stop being
  weakly connected, unfold the constant part above, recurse below;
* arbitrary monotone terms: factorisation forest along the twist
  homomorphism, then the level-by-level unfolding g_n.

Internally everything runs over a small generalised-term structure whose
wiring targets may point at child nodes, at external tags, or at grafted
subtrees; this is what lets the recursions rewrite the problem without
re-expanding it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import (
    PORT,
    Node,
    Port,
    StructureError,
    TermVal,
    TNode,
    arity,
    flatten,
    unit,
)
from .factforest import BranchHom, Nested, factorise, monotone_partial_maps
from .matrix import (
    MatrixElement,
    ShallowTerm,
    _port_fan,
    compose_twists,
    is_monotone,
    is_monotone_map,
    shallow_unfold,
    twist_of,
    unfold_general,
)
from .prime import untwist


# ---------------------------------------------------------------------------
# Twist classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwistClass:
    kind: str  # "constant" | "equal" | "homogeneous" | "other"
    alpha: tuple = None  # for "equal": the common twist as a sorted item tuple

    def alpha_map(self):
        return dict(self.alpha) if self.alpha is not None else None


def _is_constant_map(tw: dict) -> bool:
    return len(set(tw.values())) <= 1


def _branch_twists(t: TNode, k: int):
    """All internal branch twists of a term over M_k labels, as
    (twist-of-branch, twist-of-parent-branch-or-None) pairs.  The twist of a
    branch composes edge twists deepest-first."""
    out = []

    def walk(n, btw):
        for p, c in enumerate(n.children, start=1):
            if isinstance(c, Node):
                etw = twist_of(n.label, p)
                mine = compose_twists(btw, etw) if btw is not None else etw
                out.append((mine, btw))
                walk(c, mine)

    if isinstance(t, Node):
        walk(t, None)
    return out


def classify_twists(t, k: int) -> TwistClass:
    """Strongest applicable class of the internal branch twists: constant
    beats equal beats homogeneous."""
    root = t.root if isinstance(t, TermVal) else t
    pairs = _branch_twists(root, k)
    twists = [tw for tw, _ in pairs]
    if all(_is_constant_map(tw) for tw in twists):
        return TwistClass("constant")
    distinct = {tuple(sorted(tw.items())) for tw in twists}
    if len(distinct) == 1:
        return TwistClass("equal", alpha=next(iter(distinct)))
    # parent . child = parent for every consecutive pair
    if all(
        parent is None or compose_twists(parent, tw) == parent for tw, parent in pairs
    ):
        return TwistClass("homogeneous")
    return TwistClass("other")


# ---------------------------------------------------------------------------
# Generalised terms: nodes with members, wiring to child slots / external
# tags / grafted target trees
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GTNode:
    members: list
    wiring: dict = field(default_factory=dict)  # concat port -> target
    children: list = field(default_factory=list)

    def offsets(self):
        offs = [0]
        for m in self.members:
            offs.append(offs[-1] + arity(m))
        return offs

    def member_ports(self, c):
        offs = self.offsets()
        return range(offs[c - 1] + 1, offs[c] + 1)

    def owner(self, j):
        offs = self.offsets()
        for c in range(len(self.members)):
            if offs[c] < j <= offs[c + 1]:
                return c + 1
        raise StructureError("port out of range")


# targets: ("n", gtnode, slot) | ("e", tag) | ("t", label, [targets])


def gt_of_term(t: TNode, k: int) -> tuple:
    """Turn a term over M_k labels into a GT; returns (root gt node, number
    of term ports).  External tags are (port index, slot) pairs."""
    port_counter = [0]

    def build(n: Node) -> GTNode:
        e = n.label
        if not isinstance(e, MatrixElement) or e.k != k:
            raise StructureError("labels must be M_k elements")
        if e.outer_arity != len(n.children):
            raise StructureError("element arity != child count")
        gt = GTNode(list(e.members))
        kids = {}
        # children walked left to right so port numbering is document order
        for p, c in enumerate(n.children, start=1):
            if isinstance(c, Node):
                child = build(c)
                gt.children.append(child)
                kids[p] = ("node", child)
            else:
                port_counter[0] += 1
                kids[p] = ("port", port_counter[0])
        for j, (p, s) in e.grouping.items():
            kind, val = kids[p]
            if kind == "node":
                gt.wiring[j] = ("n", val, s)
            else:
                gt.wiring[j] = ("e", (val, s))
        return gt

    if isinstance(t, Port):
        return None, 1
    root = build(t)
    return root, port_counter[0]


def expand_target(target, tags):
    """Grow the piece tree hanging off a wiring target, appending external
    tags in document order."""
    kind = target[0]
    if kind == "e":
        tags.append(target[1])
        return PORT
    if kind == "t":
        _, label, subs = target
        return Node(label, tuple(expand_target(s, tags) for s in subs))
    _, w, s = target
    member = w.members[s - 1]
    ch = tuple(expand_target(w.wiring[j], tags) for j in w.member_ports(s))
    return Node(member, ch)


def expand_pieces(root: GTNode, coords):
    """Piece (tree, tags) for each requested root coordinate."""
    out = {}
    for c in coords:
        tags = []
        tree = expand_target(("n", root, c), tags)
        out[c] = (tree, tags)
    return out


def assemble(pieces, k: int, n_ports: int) -> MatrixElement:
    members = []
    grouping = {}
    seen = set()
    concat = 0
    for c in range(1, k + 1):
        tree, tags = pieces[c]
        members.append(TermVal(tree))
        for tag in tags:
            concat += 1
            if not (isinstance(tag, tuple) and len(tag) == 2 and isinstance(tag[0], int)):
                raise StructureError(f"unresolved internal tag {tag!r}")
            if tag in seen:
                raise StructureError("wiring not injective")
            seen.add(tag)
            grouping[concat] = tag
    return MatrixElement(k, tuple(members), grouping, n_ports)


# ---------------------------------------------------------------------------
# Constant-twist route: fold-labelled piece trees + untwist
# ---------------------------------------------------------------------------

_DEAD = ("dead",)


def _piece_via_untwist(target) -> tuple:
    """Build the piece as a term whose labels are 1-folds, then collapse it
    with the untwist prime; returns (tree, tags)."""
    from .core import Folded

    tags = []

    def build(tg):
        kind = tg[0]
        if kind == "e":
            tags.append(tg[1])
            return Port()
        if kind == "t":
            _, label, subs = tg
            built = [build(s) for s in subs]
        else:
            _, w, s = tg
            label = w.members[s - 1]
            built = [build(w.wiring[j]) for j in w.member_ports(s)]
        n = arity(label)
        fold = Folded(label, {j: (j, 1) for j in range(1, n + 1)}, 1, n)
        return Node(fold, tuple(built))

    spine = build(target)
    if isinstance(spine, Port):
        return PORT, tags
    folded = untwist(TermVal(spine))
    # untwist numbers its outer ports by the fold-tree's own port order; map
    # them back onto the collected tags
    tree = folded.payload.root
    ordered = [tags[folded.grouping[i][0] - 1] for i in range(1, folded.outer_arity + 1)]
    return tree, ordered


def _unfold_constant(root: GTNode, k: int):
    return {c: _piece_via_untwist(("n", root, c)) for c in range(1, k + 1)}


# ---------------------------------------------------------------------------
# Alpha route: induction on k
# ---------------------------------------------------------------------------


def _alpha_blocks(alpha: dict, k: int):
    """A cut m such that both intervals [1..m] and [m+1..k] are closed under
    alpha, or None."""
    for m in range(1, k):
        if all(v <= m for q, v in alpha.items() if q <= m) and all(
            v > m for q, v in alpha.items() if q > m
        ):
            return m
    return None


def _project_target(tg, node_map, lo, hi):
    kind = tg[0]
    if kind == "e":
        return tg
    if kind == "t":
        _, label, subs = tg
        return ("t", label, [_project_target(s, node_map, lo, hi) for s in subs])
    _, w, s = tg
    if lo <= s <= hi:
        return ("n", node_map[id(w)], s - lo + 1)
    return ("e", _DEAD)


def _gt_project(root: GTNode, lo: int, hi: int) -> GTNode:
    """Keep members lo..hi of every node; wires into other slots become dead
    tags (they are unreachable when the blocks are twist-closed)."""
    node_map = {}

    def clone(w: GTNode) -> GTNode:
        nw = GTNode(list(w.members[lo - 1 : hi]))
        node_map[id(w)] = nw
        nw.children = [clone(c) for c in w.children]
        return nw

    def rewire(w: GTNode):
        nw = node_map[id(w)]
        offs = w.offsets()
        pos = 0
        for c in range(lo, hi + 1):
            for j in w.member_ports(c):
                pos += 1
                nw.wiring[pos] = _project_target(w.wiring[j], node_map, lo, hi)
        for c in w.children:
            rewire(c)

    clone(root)
    rewire(root)
    return node_map[id(root)]


def _mirror_target(tg, node_map, k):
    kind = tg[0]
    if kind == "e":
        return tg
    if kind == "t":
        _, label, subs = tg
        return ("t", label, [_mirror_target(s, node_map, k) for s in subs])
    _, w, s = tg
    return ("n", node_map[id(w)], k + 1 - s)


def _gt_mirror(root: GTNode, k: int) -> GTNode:
    """Reverse the member (and slot) order of every node; external tags are
    left untouched."""
    node_map = {}

    def clone(w: GTNode) -> GTNode:
        nw = GTNode(list(reversed(w.members)))
        node_map[id(w)] = nw
        nw.children = [clone(c) for c in w.children]
        return nw

    def rewire(w: GTNode):
        nw = node_map[id(w)]
        pos = 0
        for c in range(k, 0, -1):
            for j in w.member_ports(c):
                pos += 1
                nw.wiring[pos] = _mirror_target(w.wiring[j], node_map, k)
        for c in w.children:
            rewire(c)

    clone(root)
    rewire(root)
    return node_map[id(root)]


def _bundle_target(tg, node_map, bundles, k):
    kind = tg[0]
    if kind == "e":
        return tg
    if kind == "t":
        _, label, subs = tg
        return ("t", label, [_bundle_target(s, node_map, bundles, k) for s in subs])
    _, w, s = tg
    if s < k:
        return ("n", node_map[id(w)], s)
    return bundles[id(w)]


def _gt_bundle_last(root: GTNode, k: int) -> GTNode:
    """Drop member k from every node; wires into slot k are replaced by the
    grafted expansion of that member (which only chains through further last
    members before re-entering the first k-1 slots)."""
    node_map = {}

    def clone(w: GTNode) -> GTNode:
        nw = GTNode(list(w.members[: k - 1]))
        node_map[id(w)] = nw
        nw.children = [clone(c) for c in w.children]
        return nw

    clone(root)
    bundles = {}

    def bundle(w: GTNode):
        if id(w) in bundles:
            return bundles[id(w)]
        subs = []
        for j in w.member_ports(k):
            tg = w.wiring[j]
            if tg[0] == "n" and tg[2] == k:
                subs.append(bundle(tg[1]))
            else:
                subs.append(_bundle_target(tg, node_map, bundles, k))
        out = ("t", w.members[k - 1], subs)
        bundles[id(w)] = out
        return out

    def collect(w: GTNode):
        bundle(w)
        for c in w.children:
            collect(c)

    collect(root)

    def rewire(w: GTNode):
        nw = node_map[id(w)]
        pos = 0
        for c in range(1, k):
            for j in w.member_ports(c):
                pos += 1
                nw.wiring[pos] = _bundle_target(w.wiring[j], node_map, bundles, k)
        for c in w.children:
            rewire(c)

    rewire(root)
    return node_map[id(root)], bundles[id(root)]


def _unfold_alpha(root: GTNode, alpha: dict, k: int):
    """Pieces of an alpha-homogeneous GT, by induction on k."""
    if k == 1:
        return _unfold_constant(root, 1)
    m = _alpha_blocks(alpha, k)
    if m is not None:
        left = _gt_project(root, 1, m)
        right = _gt_project(root, m + 1, k)
        alpha_l = {q: v for q, v in alpha.items() if q <= m}
        alpha_r = {q - m: v - m for q, v in alpha.items() if q > m}
        pieces = {}
        pl = _unfold_alpha(left, alpha_l, m)
        pr = _unfold_alpha(right, alpha_r, k - m)
        for c in range(1, m + 1):
            pieces[c] = pl[c]
        for c in range(m + 1, k + 1):
            pieces[c] = pr[c - m]
        return pieces
    image = set(alpha.values())
    if k not in image:
        trimmed, root_bundle = _gt_bundle_last(root, k)
        alpha_t = {q: v for q, v in alpha.items() if q <= k - 1}
        pieces = _unfold_alpha(trimmed, alpha_t, k - 1)
        tags = []
        tree = expand_target(root_bundle, tags)
        pieces[k] = (tree, tags)
        return pieces
    if 1 not in image:
        mirrored = _gt_mirror(root, k)
        alpha_m = {k + 1 - q: k + 1 - v for q, v in alpha.items()}
        sub = _unfold_alpha(mirrored, alpha_m, k)
        return {c: sub[k + 1 - c] for c in range(1, k + 1)}
    raise StructureError(
        "alpha twist is weakly connected but neither 1 nor k is outside its image"
    )


# ---------------------------------------------------------------------------
# Homogeneous route: frontier cut
# ---------------------------------------------------------------------------


def _weakly_connected(tw: dict, k: int) -> bool:
    if k <= 1:
        return True
    parent = list(range(k + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for q, v in tw.items():
        parent[find(q)] = find(v)
    roots = {find(i) for i in range(1, k + 1)}
    return len(roots) == 1


def _gt_branch_twists(root: GTNode, k: int):
    """Branch twist for every internal GT edge, as {(parent id, child id):
    twist}; wiring targets must be plain node/tag targets."""
    out = {}

    def edge_twist(w: GTNode, child: GTNode) -> dict:
        tw = {}
        for j, tg in w.wiring.items():
            if tg[0] == "n" and tg[1] is child:
                tw[tg[2]] = w.owner(j)
        return tw

    def walk(w, btw):
        for c in w.children:
            etw = edge_twist(w, c)
            mine = compose_twists(btw, etw) if btw is not None else etw
            out[(id(w), id(c))] = mine
            walk(c, mine)

    walk(root, None)
    return out


def _gt_cut(root: GTNode, cut_children):
    """Truncate the GT at the given child nodes; wires into a cut subtree
    become ('cut', node, slot) tags.  Returns (top GT, cut subtrees)."""
    cut_ids = {id(c) for c in cut_children}
    node_map = {}

    def clone(w: GTNode) -> GTNode:
        nw = GTNode(list(w.members))
        node_map[id(w)] = nw
        nw.children = [clone(c) for c in w.children if id(c) not in cut_ids]
        return nw

    def rewire(w: GTNode):
        nw = node_map[id(w)]
        for j, tg in w.wiring.items():
            if tg[0] == "n" and id(tg[1]) in cut_ids:
                nw.wiring[j] = ("e", ("cut", id(tg[1]), tg[2]))
            elif tg[0] == "n":
                nw.wiring[j] = ("n", node_map[id(tg[1])], tg[2])
            else:
                nw.wiring[j] = tg
        for c in w.children:
            if id(c) not in cut_ids:
                rewire(c)

    clone(root)
    rewire(root)
    return node_map[id(root)]


def _substitute_cuts(piece, factors_pieces):
    """Replace ('cut', node id, slot) tags in a piece by the matching factor
    piece, splicing its tags in place."""
    tree, tags = piece
    cursor = [0]
    out_tags = []

    def walk(n):
        if isinstance(n, Port):
            tag = tags[cursor[0]]
            cursor[0] += 1
            if isinstance(tag, tuple) and tag and tag[0] == "cut":
                _, nid, slot = tag
                sub_tree, sub_tags = factors_pieces[nid][slot]
                out_tags.extend(sub_tags)
                return sub_tree
            out_tags.append(tag)
            return PORT
        return Node(n.label, tuple(walk(c) for c in n.children))

    new_tree = walk(tree)
    return new_tree, out_tags


def _gt_classify(root: GTNode, k: int) -> TwistClass:
    twists = _gt_branch_twists(root, k)
    vals = list(twists.values())
    if all(_is_constant_map(tw) for tw in vals):
        return TwistClass("constant")
    distinct = {tuple(sorted(tw.items())) for tw in vals}
    if len(distinct) == 1:
        return TwistClass("equal", alpha=next(iter(distinct)))
    parents = {}

    def fill(w):
        for c in w.children:
            parents[id(c)] = w
            fill(c)

    fill(root)
    ok = True
    for (pid, cid), tw in twists.items():
        gp = parents.get(pid)
        if gp is not None:
            ptw = twists[(id(gp), pid)]
            if compose_twists(ptw, tw) != ptw:
                ok = False
                break
    if ok:
        return TwistClass("homogeneous")
    return TwistClass("other")


def _unfold_homogeneous_gt(root: GTNode, k: int):
    if root is None:
        raise StructureError("empty GT")
    if k == 1:
        return _unfold_constant(root, 1)
    cls = _gt_classify(root, k)
    if cls.kind == "constant":
        return _unfold_constant(root, k)
    if cls.kind == "equal":
        alpha = cls.alpha_map()
        if is_monotone_map(alpha):
            return _unfold_alpha(root, alpha, k)
        # non-monotone shared twist: outside the decomposition lemmas
        return expand_pieces(root, range(1, k + 1))
    # frontier cut: topmost edges whose branch twist is not weakly connected
    twists = _gt_branch_twists(root, k)
    cut_children = []

    def descend(w):
        for c in w.children:
            tw = twists[(id(w), id(c))]
            if not _weakly_connected(tw, k):
                cut_children.append(c)
            else:
                descend(c)

    descend(root)
    if not cut_children:
        # every branch twist is weakly connected; the pairing argument makes
        # them constant except for pairless edges, where we expand directly
        return expand_pieces(root, range(1, k + 1))
    top = _gt_cut(root, cut_children)
    top_pieces = _unfold_homogeneous_gt(top, k)
    factors_pieces = {}
    for c in cut_children:
        factors_pieces[id(c)] = _unfold_homogeneous_gt(c, k)
    return {
        c_: _substitute_cuts(top_pieces[c_], factors_pieces) for c_ in range(1, k + 1)
    }


# ---------------------------------------------------------------------------
# Public term-level entry points
# ---------------------------------------------------------------------------


def _entry(t, k: int):
    root = t.root if isinstance(t, TermVal) else t
    if isinstance(root, Port):
        return None, None
    gt, n_ports = gt_of_term(root, k)
    return gt, n_ports


def unfold_constant_twist(t, k: int) -> MatrixElement:
    cls = classify_twists(t, k)
    if cls.kind != "constant":
        raise StructureError(f"not a constant-twist term (classified {cls.kind})")
    gt, n_ports = _entry(t, k)
    if gt is None:
        return _port_fan(k)
    return assemble(_unfold_constant(gt, k), k, n_ports)


def unfold_alpha_homogeneous(t, k: int, alpha: dict = None) -> MatrixElement:
    root = t.root if isinstance(t, TermVal) else t
    pairs = _branch_twists(root, k)
    distinct = {tuple(sorted(tw.items())) for tw, _ in pairs}
    if len(distinct) > 1:
        raise StructureError("not an alpha-homogeneous term: branch twists differ")
    inferred = dict(next(iter(distinct))) if distinct else {}
    if alpha is not None and distinct and dict(alpha) != inferred:
        raise StructureError("declared alpha does not match the branch twists")
    use = dict(alpha) if alpha is not None else inferred
    if not is_monotone_map(use):
        raise StructureError("alpha must be monotone")
    gt, n_ports = _entry(t, k)
    if gt is None:
        return _port_fan(k)
    return assemble(_unfold_alpha(gt, use, k), k, n_ports)


def unfold_homogeneous(t, k: int) -> MatrixElement:
    cls = classify_twists(t, k)
    if cls.kind == "other":
        raise StructureError("not a homogeneous term")
    gt, n_ports = _entry(t, k)
    if gt is None:
        return _port_fan(k)
    return assemble(_unfold_homogeneous_gt(gt, k), k, n_ports)


# ---------------------------------------------------------------------------
# Partial shallow unfold
# ---------------------------------------------------------------------------


class UnitSlot:
    """The unit child of a partial shallow term: an unexpanded slot."""

    def _arity_(self):
        return 1

    def __eq__(self, other):
        return isinstance(other, UnitSlot)

    def __hash__(self):
        return hash(UnitSlot)


UNIT_SLOT = UnitSlot()


def partial_shallow_unfold(s: ShallowTerm) -> MatrixElement:
    """Shallow unfolding extended to partial shallow terms: unit children
    behave like the identity element, so their slots survive as ports."""
    root = s.root
    if not isinstance(root, MatrixElement):
        raise StructureError("partial shallow unfold: root must be a matrix element")
    k = root.k
    children = tuple(
        _port_fan(k) if isinstance(c, UnitSlot) else c for c in s.children
    )
    return shallow_unfold(ShallowTerm(root, children))


# ---------------------------------------------------------------------------
# The full monotone pipeline
# ---------------------------------------------------------------------------


def twist_homomorphism(k: int) -> BranchHom:
    """Branches of M_k letters -> monotone partial maps on {1..k}; a
    non-monotone twist collapses to the nowhere-defined map."""
    monoid = monotone_partial_maps(k)

    def h(br):
        tw = twist_of(br.symbol, br.port)
        if not is_monotone_map(tw):
            return tuple(0 for _ in range(k))
        return tuple(tw.get(q, 0) for q in range(1, k + 1))

    return BranchHom(monoid, h)


def _g_base(e: MatrixElement) -> MatrixElement:
    """g_1: the unfolding of a unit term — wrap each member in a one-node
    term and keep the wiring."""
    members = tuple(
        TermVal(Node(m, tuple(Port() for _ in range(arity(m))))) for m in e.members
    )
    return MatrixElement(e.k, members, dict(e.grouping), e.outer_arity)


def _flatten_members(e: MatrixElement) -> MatrixElement:
    members = tuple(flatten(m) for m in e.members)
    return MatrixElement(e.k, members, dict(e.grouping), e.outer_arity)


def _g_n(nt: Nested, k: int) -> MatrixElement:
    if nt.depth == 1:
        return _g_base(nt.content)
    if isinstance(nt.content.root, Port):
        return _port_fan(k)
    t1 = TermVal(
        _map_tree(nt.content.root, lambda label: _g_n(label, k))
    )
    unfolded = unfold_homogeneous(t1, k)
    return _flatten_members(unfolded)


def _map_tree(n, f):
    if isinstance(n, Port):
        return Port()
    return Node(f(n.label), tuple(_map_tree(c, f) for c in n.children))


def result_twist(e: MatrixElement, port: int, k: int) -> tuple:
    tw = twist_of(e, port)
    return tuple(tw.get(q, 0) for q in range(1, k + 1))


def path_twist(t, port: int, k: int) -> tuple:
    """Composition of the twists along the path from the root of ``t`` to its
    ``port``-th port, deepest first."""
    root = t.root if isinstance(t, TermVal) else t
    if isinstance(root, Port):
        return tuple(range(1, k + 1))
    counter = [0]

    def walk(n):
        for p, c in enumerate(n.children, start=1):
            etw = twist_of(n.label, p)
            if isinstance(c, Port):
                counter[0] += 1
                if counter[0] == port:
                    return etw
            else:
                deeper = walk(c)
                if deeper is not None:
                    return compose_twists(etw, deeper)
        return None

    tw = walk(root)
    if tw is None:
        raise StructureError("no such port")
    return tuple(tw.get(q, 0) for q in range(1, k + 1))


def unfold_monotone_decomposed(t, k: int):
    """Undefined (None) when a label is non-monotone; otherwise the
    factorisation-forest route to the unfolding."""
    root = t.root if isinstance(t, TermVal) else t
    if isinstance(root, Port):
        return _port_fan(k)
    stack = [root]
    while stack:
        n = stack.pop()
        if isinstance(n, Node):
            if not is_monotone(n.label):
                return None
            stack.extend(n.children)
    h = twist_homomorphism(k)
    nested = factorise(TermVal(root), h)
    result = _g_n(nested, k)
    # consistency with the twist homomorphism: the twist read off the result
    # equals the composed twist along the corresponding path
    for p in range(1, result.outer_arity + 1):
        if result_twist(result, p, k) != path_twist(TermVal(root), p, k):
            raise StructureError("unfold result inconsistent with path twists")
    return result
