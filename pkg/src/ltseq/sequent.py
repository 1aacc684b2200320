"""Labelled sequents: relation/equality multisets, LTS/LTSE predicates,
equality closure and the equality-free projection.

Text syntax: `R x1 x2, x1 = x5, x1: p & q |- x2: p`.  Bare letter names are
sugar for numbered state variables (x=x1, y=x2, z=x3, u=x4, v=x5, w=x6).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

from .formula import Formula, FormulaError, fmt_formula, parse_formula
from .multiset import Multiset

_LETTER_SUGAR = {"x": 1, "y": 2, "z": 3, "u": 4, "v": 5, "w": 6}


@dataclass(frozen=True, order=True, repr=False)
class StateVar:
    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("state variable indices start at 1")

    def sort_key(self) -> str:
        return "V%012d" % self.index

    def __repr__(self):
        return "x%d" % self.index

    def __str__(self):
        return "x%d" % self.index


def sv(index: int) -> StateVar:
    return StateVar(index)


RelTerm = Tuple[StateVar, StateVar]
EqTerm = Tuple[StateVar, StateVar]
LabFormula = Tuple[StateVar, Formula]


@dataclass(frozen=True)
class LabelledSequent:
    rel: Multiset
    eq: Multiset
    ante: Multiset
    succ: Multiset

    def vars(self) -> List[StateVar]:
        seen = set()
        for x, y in list(self.rel) + list(self.eq):
            seen.add(x)
            seen.add(y)
        for x, _ in list(self.ante) + list(self.succ):
            seen.add(x)
        return sorted(seen)

    def formula_vars(self) -> List[StateVar]:
        return sorted({x for x, _ in list(self.ante) + list(self.succ)})

    def max_index(self) -> int:
        vs = self.vars()
        return vs[-1].index if vs else 0

    def __str__(self):
        return fmt_sequent(self)


def seq(rel=(), eq=(), ante=(), succ=()) -> LabelledSequent:
    return LabelledSequent(Multiset(rel), Multiset(eq), Multiset(ante), Multiset(succ))


def distinct_edges(rel: Multiset) -> List[RelTerm]:
    return rel.support()


def graph_nodes(rel: Multiset) -> List[StateVar]:
    seen = set()
    for x, y in rel.support():
        seen.add(x)
        seen.add(y)
    return sorted(seen)


def tree_root(rel: Multiset) -> StateVar | None:
    """Unique in-degree-0 node of the collapsed graph, if any."""
    edges = distinct_edges(rel)
    nodes = graph_nodes(rel)
    targets = {y for _, y in edges}
    roots = [n for n in nodes if n not in targets]
    if len(roots) == 1:
        return roots[0]
    return None


def children_map(rel: Multiset) -> Dict[StateVar, List[StateVar]]:
    out: Dict[StateVar, List[StateVar]] = {}
    for x, y in distinct_edges(rel):
        out.setdefault(x, []).append(y)
    for k in out:
        out[k].sort()
    return out


def is_treelike(rel: Multiset) -> bool:
    """Collapsed graph is a rooted irreflexive tree (duplicates ignored)."""
    if not rel:
        raise ValueError("treelike is undefined for an empty relation mset")
    edges = distinct_edges(rel)
    nodes = graph_nodes(rel)
    indeg = {n: 0 for n in nodes}
    for x, y in edges:
        if x == y:
            return False
        indeg[y] += 1
    roots = [n for n in nodes if indeg[n] == 0]
    if len(roots) != 1:
        return False
    if any(indeg[n] != 1 for n in nodes if n != roots[0]):
        return False
    # connectivity from the root
    kids = children_map(rel)
    seen = {roots[0]}
    stack = [roots[0]]
    while stack:
        for child in kids.get(stack.pop(), ()):
            if child not in seen:
                seen.add(child)
                stack.append(child)
    return len(seen) == len(nodes)


def _grounded(s: LabelledSequent, with_eq: bool) -> bool:
    rel_vars = set(graph_nodes(s.rel))
    extra = list(s.ante) + list(s.succ)
    labels = [x for x, _ in extra]
    if with_eq:
        for a, b in s.eq:
            labels.append(a)
            labels.append(b)
    if s.rel:
        return is_treelike(s.rel) and all(x in rel_vars for x in labels)
    return len(set(labels)) <= 1


def is_lts(s: LabelledSequent) -> bool:
    return not s.eq and _grounded(s, with_eq=False)


def is_ltse(s: LabelledSequent) -> bool:
    return _grounded(s, with_eq=True)


def equality_closure(eq: Multiset) -> Dict[StateVar, StateVar]:
    """Map each variable occurring in eq to its least-index representative."""
    parent: Dict[StateVar, StateVar] = {}

    def find(a: StateVar) -> StateVar:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for a, b in eq:
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            keep, drop = (ra, rb) if ra < rb else (rb, ra)
            parent[drop] = keep
    return {v: find(v) for v in parent}


def closure_blocks(eq: Multiset) -> List[List[StateVar]]:
    reps = equality_closure(eq)
    blocks: Dict[StateVar, List[StateVar]] = {}
    for v, r in reps.items():
        blocks.setdefault(r, []).append(v)
    return [sorted(blocks[r]) for r in sorted(blocks)]


def eq_entails(eq: Multiset, a: StateVar, b: StateVar) -> bool:
    if a == b:
        return True
    reps = equality_closure(eq)
    return a in reps and b in reps and reps[a] == reps[b]


def equality_free(s: LabelledSequent) -> LabelledSequent:
    """R[E], X[E] |- Y[E]: canonical representatives substituted, E dropped."""
    reps = equality_closure(s.eq)

    def rep(v: StateVar) -> StateVar:
        return reps.get(v, v)

    return LabelledSequent(
        s.rel.map(lambda t: (rep(t[0]), rep(t[1]))),
        Multiset(),
        s.ante.map(lambda t: (rep(t[0]), t[1])),
        s.succ.map(lambda t: (rep(t[0]), t[1])),
    )


def substitute(s: LabelledSequent, mapping: Dict[StateVar, StateVar]) -> LabelledSequent:
    def m(v: StateVar) -> StateVar:
        return mapping.get(v, v)

    return LabelledSequent(
        s.rel.map(lambda t: (m(t[0]), m(t[1]))),
        s.eq.map(lambda t: (m(t[0]), m(t[1]))),
        s.ante.map(lambda t: (m(t[0]), t[1])),
        s.succ.map(lambda t: (m(t[0]), t[1])),
    )


def merge_sequents(a: LabelledSequent, b: LabelledSequent) -> LabelledSequent:
    return LabelledSequent(a.rel + b.rel, a.eq + b.eq, a.ante + b.ante, a.succ + b.succ)


# ---------------------------------------------------------------------------
# text and JSON forms


class SequentError(Exception):
    def __init__(self, message: str, pos: int = 0):
        super().__init__("%s (at position %d)" % (message, pos))
        self.pos = pos


def parse_var(name: str, pos: int = 0) -> StateVar:
    if name in _LETTER_SUGAR:
        return StateVar(_LETTER_SUGAR[name])
    if name.startswith("x") and name[1:].isdigit() and int(name[1:]) >= 1:
        return StateVar(int(name[1:]))
    raise SequentError("bad state variable %r (use x1, x2, ... or x y z u v w)" % name, pos)


def _split_top(text: str, sep: str) -> List[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _parse_side(text: str, base_pos: int, allow_structural: bool):
    rel, eqs, labelled = [], [], []
    offset = base_pos
    for raw in _split_top(text, ","):
        part = raw.strip()
        if not part:
            offset += len(raw) + 1
            continue
        tokens = part.split()
        if allow_structural and tokens and tokens[0] == "R":
            if len(tokens) != 3:
                raise SequentError("relation term must be 'R <var> <var>'", offset)
            rel.append((parse_var(tokens[1], offset), parse_var(tokens[2], offset)))
        elif allow_structural and "=" in part and ":" not in part:
            sides = part.split("=")
            if len(sides) != 2:
                raise SequentError("equality term must be '<var> = <var>'", offset)
            eqs.append((parse_var(sides[0].strip(), offset), parse_var(sides[1].strip(), offset)))
        else:
            if ":" not in part:
                raise SequentError("expected '<var>: <formula>' in %r" % part, offset)
            name, ftext = part.split(":", 1)
            try:
                f = parse_formula(ftext)
            except FormulaError as exc:
                raise SequentError(str(exc), offset) from exc
            labelled.append((parse_var(name.strip(), offset), f))
        offset += len(raw) + 1
    return rel, eqs, labelled


def parse_sequent(text: str) -> LabelledSequent:
    if "|-" not in text:
        raise SequentError("missing turnstile '|-'")
    left, right = text.split("|-", 1)
    rel, eqs, ante = _parse_side(left, 0, allow_structural=True)
    rel2, eqs2, succ = _parse_side(right, len(left) + 2, allow_structural=False)
    assert not rel2 and not eqs2
    return seq(rel, eqs, ante, succ)


def fmt_sequent(s: LabelledSequent) -> str:
    parts = ["R %s %s" % (x, y) for x, y in s.rel]
    parts += ["%s = %s" % (a, b) for a, b in s.eq]
    parts += ["%s: %s" % (x, fmt_formula(f)) for x, f in s.ante]
    right = ", ".join("%s: %s" % (x, fmt_formula(f)) for x, f in s.succ)
    return "%s |- %s" % (", ".join(parts), right)


def sequent_to_json(s: LabelledSequent) -> dict:
    return {
        "rel": [[x.index, y.index] for x, y in s.rel],
        "eq": [[x.index, y.index] for x, y in s.eq],
        "ante": [[x.index, fmt_formula(f)] for x, f in s.ante],
        "succ": [[x.index, fmt_formula(f)] for x, f in s.succ],
    }


def sequent_from_json(data: dict) -> LabelledSequent:
    return seq(
        [(StateVar(x), StateVar(y)) for x, y in data.get("rel", [])],
        [(StateVar(x), StateVar(y)) for x, y in data.get("eq", [])],
        [(StateVar(x), parse_formula(f)) for x, f in data.get("ante", [])],
        [(StateVar(x), parse_formula(f)) for x, f in data.get("succ", [])],
    )


def dumps(s: LabelledSequent) -> str:
    return json.dumps(sequent_to_json(s), indent=2)
