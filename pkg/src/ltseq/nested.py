"""Indexed nested sequents and the bidirectional translation to/from LTSE.

Text syntax mirrors the bracket notation: `X |-0 Y, [P |-1 Q, [U |-0 V]]`.
Children are stored in input order; equivalence treats them as unordered.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .formula import Formula, FormulaError, fmt_formula, parse_formula
from .multiset import Multiset
from .sequent import (
    LabelledSequent,
    StateVar,
    children_map,
    closure_blocks,
    equality_closure,
    graph_nodes,
    is_ltse,
    seq,
    tree_root,
)


@dataclass(frozen=True)
class IndexedNestedSequent:
    ante: Multiset
    succ: Multiset
    index: int
    children: Tuple["IndexedNestedSequent", ...] = ()

    def nodes(self) -> List["IndexedNestedSequent"]:
        out = [self]
        for c in self.children:
            out.extend(c.nodes())
        return out

    def node_count(self) -> int:
        return len(self.nodes())

    def indices(self) -> List[int]:
        return sorted({n.index for n in self.nodes()})

    def paths(self) -> List[Tuple[int, ...]]:
        out = [()]
        for i, c in enumerate(self.children):
            out.extend((i,) + p for p in c.paths())
        return out

    def at(self, path: Tuple[int, ...]) -> "IndexedNestedSequent":
        node = self
        for i in path:
            node = node.children[i]
        return node

    def replace(self, path: Tuple[int, ...], new: "IndexedNestedSequent") -> "IndexedNestedSequent":
        if not path:
            return new
        i = path[0]
        kids = list(self.children)
        kids[i] = self.children[i].replace(path[1:], new)
        return IndexedNestedSequent(self.ante, self.succ, self.index, tuple(kids))

    def __str__(self):
        return fmt_ins(self)


def ins(ante=(), succ=(), index=0, children=()) -> IndexedNestedSequent:
    return IndexedNestedSequent(Multiset(ante), Multiset(succ), index, tuple(children))


def ins_to_ltse(g: IndexedNestedSequent) -> LabelledSequent:
    """Preorder variable assignment; all pairwise equalities per shared index."""
    nodes = g.nodes()  # preorder
    var_of = {id(n): StateVar(i + 1) for i, n in enumerate(nodes)}
    rel = []

    def walk(n: IndexedNestedSequent):
        for c in n.children:
            rel.append((var_of[id(n)], var_of[id(c)]))
            walk(c)

    walk(g)
    by_index: Dict[int, List[StateVar]] = {}
    for n in nodes:
        by_index.setdefault(n.index, []).append(var_of[id(n)])
    eqs = []
    for idx in sorted(by_index):
        members = sorted(by_index[idx])
        for a, b in itertools.combinations(members, 2):
            eqs.append((a, b))
    ante, succ = [], []
    for n in nodes:
        x = var_of[id(n)]
        ante.extend((x, f) for f in n.ante)
        succ.extend((x, f) for f in n.succ)
    return seq(rel, eqs, ante, succ)


def ltse_to_ins(s: LabelledSequent) -> IndexedNestedSequent:
    """Rejects non-LTSE input; indices are 0,1,... by first preorder appearance."""
    if not is_ltse(s):
        raise ValueError("not an LTSE: %s" % s)
    ante_of: Dict[StateVar, List[Formula]] = {}
    succ_of: Dict[StateVar, List[Formula]] = {}
    for x, f in s.ante:
        ante_of.setdefault(x, []).append(f)
    for x, f in s.succ:
        succ_of.setdefault(x, []).append(f)

    if not s.rel:
        vs = s.vars()
        root = vs[0] if vs else StateVar(1)
        order = [root]
        kids: Dict[StateVar, List[StateVar]] = {}
    else:
        root = tree_root(s.rel)
        kids = children_map(s.rel)
        order = []

        def visit(v: StateVar):
            order.append(v)
            for c in kids.get(v, ()):
                visit(c)

        visit(root)

    reps = equality_closure(s.eq)
    class_index: Dict[StateVar, int] = {}
    next_index = 0
    index_of: Dict[StateVar, int] = {}
    for v in order:
        r = reps.get(v, v)
        if r not in class_index:
            class_index[r] = next_index
            next_index += 1
        index_of[v] = class_index[r]

    def build(v: StateVar) -> IndexedNestedSequent:
        return ins(
            ante_of.get(v, ()),
            succ_of.get(v, ()),
            index_of[v],
            tuple(build(c) for c in kids.get(v, ())),
        )

    return build(root)


def ins_equivalent(a: IndexedNestedSequent, b: IndexedNestedSequent) -> bool:
    """Unordered tree isomorphism matching node sequents and inducing a
    bijection between index classes."""

    def match(x: IndexedNestedSequent, y: IndexedNestedSequent, bij: Dict[int, int]) -> Optional[Dict[int, int]]:
        if x.ante != y.ante or x.succ != y.succ:
            return None
        if len(x.children) != len(y.children):
            return None
        if x.index in bij:
            if bij[x.index] != y.index:
                return None
        elif y.index in bij.values():
            return None
        out = dict(bij)
        out[x.index] = y.index
        if not x.children:
            return out
        for perm in itertools.permutations(range(len(y.children))):
            cur = out
            for i, j in enumerate(perm):
                cur = match(x.children[i], y.children[j], cur)
                if cur is None:
                    break
            if cur is not None:
                return cur
        return None

    return match(a, b, {}) is not None


def ltse_equivalent(a: LabelledSequent, b: LabelledSequent) -> bool:
    """Equality up to variable renaming and equality-mset closure equivalence."""
    return ins_equivalent(ltse_to_ins(a), ltse_to_ins(b))


# ---------------------------------------------------------------------------
# text and JSON forms


class InsError(Exception):
    def __init__(self, message: str, pos: int = 0):
        super().__init__("%s (at position %d)" % (message, pos))
        self.pos = pos


def parse_ins(text: str) -> IndexedNestedSequent:
    g, pos = _parse_node(text, 0)
    while pos < len(text) and text[pos].isspace():
        pos += 1
    if pos != len(text):
        raise InsError("unexpected trailing input", pos)
    return g


def _parse_node(text: str, pos: int) -> Tuple[IndexedNestedSequent, int]:
    turn = text.find("|-", pos)
    if turn < 0:
        raise InsError("missing '|-'", pos)
    ante = _parse_formula_list(text[pos:turn], pos)
    i = turn + 2
    start = i
    while i < len(text) and text[i].isdigit():
        i += 1
    if i == start:
        raise InsError("'|-' must carry an index, e.g. '|-0'", turn)
    index = int(text[start:i])
    succ: List[Formula] = []
    children: List[IndexedNestedSequent] = []
    chunk_start = None
    depth = 0
    while i < len(text):
        ch = text[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            if depth == 0:
                break
            depth -= 1
        elif ch == "[" and depth == 0 and text.startswith("[]", i):
            # the box operator, not a child bracket
            if chunk_start is None:
                chunk_start = i
            i += 2
            continue
        elif ch == "[" and depth == 0:
            if chunk_start is not None:
                succ.extend(_parse_formula_list(text[chunk_start:i], chunk_start))
                chunk_start = None
            child, i = _parse_node(text, i + 1)
            children.append(child)
            while i < len(text) and text[i].isspace():
                i += 1
            if i >= len(text) or text[i] != "]":
                raise InsError("expected ']'", i)
            i += 1
            continue
        elif ch == "]" and depth == 0:
            break
        elif ch == "," and depth == 0:
            if chunk_start is not None:
                succ.extend(_parse_formula_list(text[chunk_start:i], chunk_start))
                chunk_start = None
            i += 1
            continue
        if not ch.isspace() and chunk_start is None:
            chunk_start = i
        i += 1
    if chunk_start is not None:
        succ.extend(_parse_formula_list(text[chunk_start:i], chunk_start))
    return ins(ante, succ, index, tuple(children)), i


def _parse_formula_list(text: str, base: int) -> List[Formula]:
    out = []
    offset = base
    depth = 0
    cur: List[str] = []
    chunks: List[Tuple[str, int]] = []
    start = offset
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            chunks.append(("".join(cur), start))
            cur = []
            start = offset + 1
        else:
            cur.append(ch)
        offset += 1
    chunks.append(("".join(cur), start))
    for chunk, cpos in chunks:
        if not chunk.strip():
            continue
        try:
            out.append(parse_formula(chunk))
        except FormulaError as exc:
            raise InsError(str(exc), cpos) from exc
    return out


def fmt_ins(g: IndexedNestedSequent) -> str:
    left = ", ".join(fmt_formula(f) for f in g.ante)
    pieces = [fmt_formula(f) for f in g.succ]
    pieces += ["[%s]" % fmt_ins(c) for c in g.children]
    right = ", ".join(pieces)
    core = "|-%d" % g.index
    if left:
        core = left + " " + core
    if right:
        core = core + " " + right
    return core


def ins_to_json(g: IndexedNestedSequent) -> dict:
    return {
        "ante": [fmt_formula(f) for f in g.ante],
        "succ": [fmt_formula(f) for f in g.succ],
        "index": g.index,
        "children": [ins_to_json(c) for c in g.children],
    }


def ins_from_json(data: dict) -> IndexedNestedSequent:
    return ins(
        [parse_formula(f) for f in data.get("ante", [])],
        [parse_formula(f) for f in data.get("succ", [])],
        data.get("index", 0),
        tuple(ins_from_json(c) for c in data.get("children", [])),
    )


def ins_tree_dot(g: IndexedNestedSequent) -> str:
    """DOT rendering of the underlying tree with one node per bracket."""
    lines = ["digraph ins {"]
    nodes = g.nodes()
    ids = {id(n): "n%d" % i for i, n in enumerate(nodes)}
    for n in nodes:
        label = "%s |-%d %s" % (
            ", ".join(fmt_formula(f) for f in n.ante),
            n.index,
            ", ".join(fmt_formula(f) for f in n.succ),
        )
        lines.append('  %s [label="%s"];' % (ids[id(n)], label.strip()))

    def walk(n):
        for c in n.children:
            lines.append("  %s -> %s;" % (ids[id(n)], ids[id(c)]))
            walk(c)

    walk(g)
    lines.append("}")
    return "\n".join(lines)


def ins_conflated_dot(g: IndexedNestedSequent) -> str:
    """DOT rendering with same-index nodes conflated into one."""
    by_index: Dict[int, List[IndexedNestedSequent]] = {}
    for n in g.nodes():
        by_index.setdefault(n.index, []).append(n)
    lines = ["digraph ins_conflated {"]
    for idx in sorted(by_index):
        ante = Multiset()
        succ = Multiset()
        for n in by_index[idx]:
            ante = ante + n.ante
            succ = succ + n.succ
        label = "%s |-%d %s" % (
            ", ".join(fmt_formula(f) for f in ante),
            idx,
            ", ".join(fmt_formula(f) for f in succ),
        )
        lines.append('  i%d [label="%s"];' % (idx, label.strip()))
    edges = set()

    def walk(n):
        for c in n.children:
            edges.add((n.index, c.index))
            walk(c)

    walk(g)
    for a, b in sorted(edges):
        lines.append("  i%d -> i%d;" % (a, b))
    lines.append("}")
    return "\n".join(lines)


def dumps(g: IndexedNestedSequent) -> str:
    return json.dumps(ins_to_json(g), indent=2)
