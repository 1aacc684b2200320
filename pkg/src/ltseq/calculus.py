"""Rule schemas with eigenvariable side conditions, pattern matching for
labelled and indexed nested sequents, the five built-in calculi, and rule
generation from Geach parameters and geometric rule specs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

from .formula import (
    And,
    Bottom,
    Box,
    Diamond,
    Formula,
    Implies,
    NegVar,
    Or,
    PropVar,
    Top,
    boxes,
    diamonds,
    fmt_formula,
)
from .multiset import Multiset
from .nested import IndexedNestedSequent
from .sequent import LabelledSequent, StateVar

BOT = Bottom()


# ---------------------------------------------------------------------------
# schematic variables


@dataclass(frozen=True, repr=False)
class SV:
    """State-variable metavariable."""

    name: str

    def sort_key(self):
        return "M" + self.name

    def __repr__(self):
        return self.name


@dataclass(frozen=True, repr=False)
class FVar(Formula):
    """Formula metavariable (patterns only)."""

    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True, repr=False)
class PAtom(Formula):
    """Propositional-variable metavariable; matches atoms only."""

    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True, repr=False)
class NPAtom(Formula):
    """Negated propositional-variable metavariable (one-sided patterns)."""

    name: str

    def __repr__(self):
        return "~" + self.name


# ---------------------------------------------------------------------------
# patterns


@dataclass(frozen=True)
class LabPattern:
    """Explicit schematic terms plus named context metavariables per slot."""

    rel: Tuple = ()
    eq: Tuple = ()
    ante: Tuple = ()
    succ: Tuple = ()
    rel_ctx: Tuple[str, ...] = ("R",)
    eq_ctx: Tuple[str, ...] = ("E",)
    ante_ctx: Tuple[str, ...] = ("G",)
    succ_ctx: Tuple[str, ...] = ("D",)


@dataclass(frozen=True)
class NodePat:
    """One node of an indexed-nested-sequent pattern.

    `ref` names the matched subject node (None for nodes a premise creates);
    the `*_rest` fields name this node's context metavariables."""

    ref: Optional[str]
    ante: Tuple = ()
    succ: Tuple = ()
    index: str = "n"
    children: Tuple["NodePat", ...] = ()
    ante_rest: Optional[str] = None
    succ_rest: Optional[str] = None
    child_rest: Optional[str] = None

    def with_children(self, children) -> "NodePat":
        return NodePat(
            self.ref, self.ante, self.succ, self.index, tuple(children),
            self.ante_rest, self.succ_rest, self.child_rest,
        )

    def with_index(self, index: str) -> "NodePat":
        return NodePat(
            self.ref, self.ante, self.succ, index, self.children,
            self.ante_rest, self.succ_rest, self.child_rest,
        )


def NP(ref: str, ante=(), succ=(), index="n", children=()) -> NodePat:
    """Matched node with full rests derived from its ref."""
    return NodePat(
        ref,
        tuple(ante),
        tuple(succ),
        index,
        tuple(children),
        ante_rest="X_" + ref,
        succ_rest="Y_" + ref,
        child_rest="C_" + ref,
    )


def NEW(ante=(), succ=(), index="m", children=()) -> NodePat:
    """Premise-only node: created fresh, no surrounding context."""
    return NodePat(None, tuple(ante), tuple(succ), index, tuple(children))


@dataclass(frozen=True)
class RuleSchema:
    name: str
    kind: str  # "labelled" | "one-sided" | "ins"
    premises: Tuple = ()  # labelled: LabPatterns; ins: tuples of NodePat holes
    conclusion: object = None  # labelled: LabPattern; ins: tuple of NodePat holes
    fresh: frozenset = frozenset()  # state-var metas absent from the conclusion
    fresh_indices: frozenset = frozenset()  # index metas absent from conclusion
    distinct: Tuple = ()  # pairs of var metas that must differ
    structural: bool = False
    geach: Optional[Tuple[int, int, int, int]] = None

    def arity(self) -> int:
        return len(self.premises)


@dataclass(frozen=True)
class Calculus:
    name: str
    kind: str
    rules: Tuple[RuleSchema, ...]

    def rule(self, name: str) -> RuleSchema:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError("no rule %r in calculus %s" % (name, self.name))

    def has_rule(self, name: str) -> bool:
        return any(r.name == name for r in self.rules)

    def extend(self, extra) -> "Calculus":
        names = {r.name for r in self.rules}
        added = tuple(r for r in extra if r.name not in names)
        if not added:
            return self
        return Calculus(self.name + "*", self.kind, self.rules + added)


# ---------------------------------------------------------------------------
# unification of single terms


class MatchError(Exception):
    pass


def _bind(binding: Optional[Dict], name: str, value) -> Optional[Dict]:
    if binding is None:
        return None
    if name in binding:
        return binding if binding[name] == value else None
    out = dict(binding)
    out[name] = value
    return out


def unify_var(pat, concrete: StateVar, binding: Optional[Dict]) -> Optional[Dict]:
    if binding is None:
        return None
    if isinstance(pat, SV):
        return _bind(binding, pat.name, concrete)
    return binding if pat == concrete else None


def unify_formula(pat: Formula, concrete: Formula, binding: Optional[Dict]) -> Optional[Dict]:
    if binding is None:
        return None
    if isinstance(pat, FVar):
        return _bind(binding, pat.name, concrete)
    if isinstance(pat, PAtom):
        if isinstance(concrete, PropVar):
            return _bind(binding, pat.name, concrete.name)
        return None
    if isinstance(pat, NPAtom):
        if isinstance(concrete, NegVar):
            return _bind(binding, pat.name, concrete.name)
        return None
    if isinstance(pat, (PropVar, NegVar, Bottom, Top)):
        return binding if pat == concrete else None
    if isinstance(pat, (Box, Diamond)):
        if type(pat) is type(concrete):
            return unify_formula(pat.arg, concrete.arg, binding)
        return None
    if isinstance(pat, (And, Or, Implies)):
        if type(pat) is type(concrete):
            return unify_formula(
                pat.right, concrete.right, unify_formula(pat.left, concrete.left, binding)
            )
        return None
    return None


def inst_var(pat, binding: Dict) -> StateVar:
    if isinstance(pat, SV):
        value = binding.get(pat.name)
        if not isinstance(value, StateVar):
            raise MatchError("unbound state-variable meta %r" % pat.name)
        return value
    return pat


def inst_formula(pat: Formula, binding: Dict) -> Formula:
    if isinstance(pat, FVar):
        value = binding.get(pat.name)
        if not isinstance(value, Formula):
            raise MatchError("unbound formula meta %r" % pat.name)
        return value
    if isinstance(pat, PAtom):
        value = binding.get(pat.name)
        if not isinstance(value, str):
            raise MatchError("unbound atom meta %r" % pat.name)
        return PropVar(value)
    if isinstance(pat, NPAtom):
        value = binding.get(pat.name)
        if not isinstance(value, str):
            raise MatchError("unbound atom meta %r" % pat.name)
        return NegVar(value)
    if isinstance(pat, (PropVar, NegVar, Bottom, Top)):
        return pat
    if isinstance(pat, Box):
        return Box(inst_formula(pat.arg, binding))
    if isinstance(pat, Diamond):
        return Diamond(inst_formula(pat.arg, binding))
    if isinstance(pat, And):
        return And(inst_formula(pat.left, binding), inst_formula(pat.right, binding))
    if isinstance(pat, Or):
        return Or(inst_formula(pat.left, binding), inst_formula(pat.right, binding))
    if isinstance(pat, Implies):
        return Implies(inst_formula(pat.left, binding), inst_formula(pat.right, binding))
    raise MatchError("bad formula pattern %r" % (pat,))


# ---------------------------------------------------------------------------
# labelled matching


def _match_terms(patterns, pool: Multiset, binding, unifier, symmetric=False):
    """Assign each pattern term a distinct pool occurrence; yields
    (binding, remainder) for every consistent assignment."""
    if not patterns:
        yield binding, pool
        return
    head, rest = patterns[0], patterns[1:]
    for item in pool.support():
        attempts = [item]
        if symmetric and item[0] != item[1]:
            attempts.append((item[1], item[0]))
        for candidate in attempts:
            b = unifier(head, candidate, binding)
            if b is not None:
                yield from _match_terms(rest, pool.remove(item), b, unifier, symmetric)


def _unify_rel(pat, term, binding):
    return unify_var(pat[1], term[1], unify_var(pat[0], term[0], binding))


def _unify_lab(pat, term, binding):
    return unify_formula(pat[1], term[1], unify_var(pat[0], term[0], binding))


def _ctx_assign(names: Tuple[str, ...], remainder: Multiset, binding: Dict) -> Optional[Dict]:
    if not names:
        return binding if not remainder else None
    if len(names) == 1:
        return _bind(binding, names[0], remainder)
    # multi-context slots (only the cut rule) are verified against stored
    # bindings rather than enumerated
    combined = Multiset()
    for n in names:
        v = binding.get(n)
        if not isinstance(v, Multiset):
            return None
        combined = combined + v
    return binding if combined == remainder else None


def _rule_var_metas(rule: RuleSchema) -> List[str]:
    if rule.kind == "ins":
        return []
    names = set()

    def scan(p: LabPattern):
        for a, b in tuple(p.rel) + tuple(p.eq):
            for t in (a, b):
                if isinstance(t, SV):
                    names.add(t.name)
        for a, _ in tuple(p.ante) + tuple(p.succ):
            if isinstance(a, SV):
                names.add(a.name)

    scan(rule.conclusion)
    for p in rule.premises:
        scan(p)
    return sorted(names)


def _distinct_ok(rule: RuleSchema, binding: Dict) -> bool:
    for a, b in rule.distinct:
        if a in binding and b in binding and binding[a] == binding[b]:
            return False
    return True


def match_lab_pattern(pat: LabPattern, subject: LabelledSequent, seed: Optional[Dict] = None) -> Iterator[Dict]:
    """All ways a sequent pattern matches the subject sequent."""
    start = dict(seed or {})
    for b1, rel_rest in _match_terms(pat.rel, subject.rel, start, _unify_rel):
        b1 = _ctx_assign(pat.rel_ctx, rel_rest, b1)
        if b1 is None:
            continue
        for b2, eq_rest in _match_terms(pat.eq, subject.eq, b1, _unify_rel, symmetric=True):
            b2 = _ctx_assign(pat.eq_ctx, eq_rest, b2)
            if b2 is None:
                continue
            for b3, ante_rest in _match_terms(pat.ante, subject.ante, b2, _unify_lab):
                b3 = _ctx_assign(pat.ante_ctx, ante_rest, b3)
                if b3 is None:
                    continue
                for b4, succ_rest in _match_terms(pat.succ, subject.succ, b3, _unify_lab):
                    b4 = _ctx_assign(pat.succ_ctx, succ_rest, b4)
                    if b4 is not None:
                        yield b4


def match_lab_conclusion(rule: RuleSchema, subject: LabelledSequent, seed: Optional[Dict] = None) -> Iterator[Dict]:
    """All ways the conclusion pattern matches the subject sequent."""
    for b in match_lab_pattern(rule.conclusion, subject, seed):
        yield from _enumerate_free(rule, subject, b)


def _enumerate_free(rule: RuleSchema, subject: LabelledSequent, binding: Dict) -> Iterator[Dict]:
    """Var metas the conclusion leaves open range over the subject's
    variables; fresh metas stay unbound here."""
    open_names = [
        n for n in _rule_var_metas(rule) if n not in binding and n not in rule.fresh
    ]
    if not open_names:
        if _distinct_ok(rule, binding):
            yield binding
        return
    pool = sorted(subject.vars())
    for combo in itertools.product(pool, repeat=len(open_names)):
        b = dict(binding)
        b.update(dict(zip(open_names, combo)))
        if _distinct_ok(rule, b):
            yield b


def instantiate_lab(pat: LabPattern, binding: Dict, one_sided: bool = False) -> LabelledSequent:
    def ctx(names):
        out = Multiset()
        for n in names:
            v = binding.get(n, Multiset())
            if not isinstance(v, Multiset):
                raise MatchError("context %r bound to a non-multiset" % n)
            out = out + v
        return out

    rel = ctx(pat.rel_ctx) + Multiset(
        (inst_var(a, binding), inst_var(b, binding)) for a, b in pat.rel
    )
    eqm = ctx(pat.eq_ctx) + Multiset(
        (inst_var(a, binding), inst_var(b, binding)) for a, b in pat.eq
    )
    ante = ctx(pat.ante_ctx) + Multiset(
        (inst_var(a, binding), inst_formula(f, binding)) for a, f in pat.ante
    )
    succ = ctx(pat.succ_ctx) + Multiset(
        (inst_var(a, binding), inst_formula(f, binding)) for a, f in pat.succ
    )
    if one_sided:
        rel = rel.dedup()
    return LabelledSequent(rel, eqm, ante, succ)


def fresh_vars_for(rule: RuleSchema, subject_max: int, binding: Dict) -> Dict:
    out = dict(binding)
    nxt = subject_max + 1
    for name in sorted(rule.fresh):
        if name not in out:
            out[name] = StateVar(nxt)
            nxt += 1
    return out


def apply_lab(rule: RuleSchema, binding: Dict) -> List[LabelledSequent]:
    one_sided = rule.kind == "one-sided"
    return [instantiate_lab(p, binding, one_sided) for p in rule.premises]


def lab_instances(rule: RuleSchema, subject: LabelledSequent, seed=None) -> Iterator[Tuple[Dict, List[LabelledSequent]]]:
    subject_max = subject.max_index()
    for binding in match_lab_conclusion(rule, subject, seed):
        full = fresh_vars_for(rule, subject_max, binding)
        yield full, apply_lab(rule, full)


# ---------------------------------------------------------------------------
# INS matching


def match_nodepat(pat: NodePat, root: IndexedNestedSequent, path: Tuple[int, ...], binding: Optional[Dict]) -> Iterator[Dict]:
    """Match a hole pattern at a fixed node of the subject tree."""
    if binding is None:
        return
    node = root.at(path)
    b0 = binding
    if pat.ref is not None:
        b0 = _bind(b0, "@" + pat.ref, path)
    b0 = _bind(b0, "#" + pat.index, node.index)
    if b0 is None:
        return
    fterm = lambda p, c, b: unify_formula(p, c, b)
    for b1, ante_rest in _match_terms(pat.ante, node.ante, b0, fterm):
        b1a = _rest_assign(pat.ante_rest, ante_rest, b1)
        if b1a is None:
            continue
        for b2, succ_rest in _match_terms(pat.succ, node.succ, b1a, fterm):
            b2a = _rest_assign(pat.succ_rest, succ_rest, b2)
            if b2a is None:
                continue
            yield from _match_children(pat, root, path, node, b2a)


def _rest_assign(name: Optional[str], remainder: Multiset, binding: Dict) -> Optional[Dict]:
    if name is None:
        return binding if not remainder else None
    return _bind(binding, name, remainder)


def _match_children(pat: NodePat, root, path, node: IndexedNestedSequent, binding: Dict) -> Iterator[Dict]:
    slots = list(range(len(node.children)))

    def assign(pats, used, b):
        if not pats:
            rest = tuple(i for i in slots if i not in used)
            if pat.child_rest is None:
                if rest:
                    return
                yield b
            else:
                b2 = _bind(b, pat.child_rest, tuple(path + (i,) for i in rest))
                if b2 is not None:
                    yield b2
            return
        head, tail = pats[0], pats[1:]
        seeded = b.get("@" + head.ref) if head.ref else None
        for i in slots:
            if i in used:
                continue
            if seeded is not None and seeded != path + (i,):
                continue
            for b2 in match_nodepat(head, root, path + (i,), b):
                yield from assign(tail, used | {i}, b2)

    yield from assign(list(pat.children), set(), binding)


def match_ins_holes(holes: Tuple[NodePat, ...], subject: IndexedNestedSequent, seed: Optional[Dict] = None) -> Iterator[Dict]:
    paths = subject.paths()
    start = dict(seed or {})

    def choose(i, binding):
        if i == len(holes):
            yield binding
            return
        hole = holes[i]
        seeded = binding.get("@" + hole.ref) if hole.ref else None
        options = [seeded] if seeded is not None else paths
        prior = {binding.get("@" + holes[j].ref) for j in range(i) if holes[j].ref}
        for p in options:
            if p in prior:
                continue  # the displayed occurrences must be distinct nodes
            for b in match_nodepat(hole, subject, p, binding):
                yield from choose(i + 1, b)

    yield from choose(0, start)


def match_ins_conclusion(rule: RuleSchema, subject: IndexedNestedSequent, seed: Optional[Dict] = None) -> Iterator[Dict]:
    yield from match_ins_holes(rule.conclusion, subject, seed)


def fresh_indices_for(rule: RuleSchema, subject: IndexedNestedSequent, binding: Dict) -> Dict:
    out = dict(binding)
    used = set(subject.indices())
    nxt = max(used) + 1 if used else 0
    for name in sorted(rule.fresh_indices):
        key = "#" + name
        if key not in out:
            out[key] = nxt
            used.add(nxt)
            nxt += 1
    return out


def instantiate_nodepat(pat: NodePat, binding: Dict, subject: IndexedNestedSequent) -> IndexedNestedSequent:
    ante = Multiset(inst_formula(f, binding) for f in pat.ante)
    if pat.ante_rest is not None:
        ante = ante + binding.get(pat.ante_rest, Multiset())
    succ = Multiset(inst_formula(f, binding) for f in pat.succ)
    if pat.succ_rest is not None:
        succ = succ + binding.get(pat.succ_rest, Multiset())
    index = binding.get("#" + pat.index)
    if not isinstance(index, int):
        raise MatchError("unbound index meta %r" % pat.index)

    placed = []
    appended = []
    for child in pat.children:
        built = instantiate_nodepat(child, binding, subject)
        pos = binding.get("@" + child.ref) if child.ref else None
        if pos is not None:
            placed.append((pos, built))
        else:
            appended.append(built)
    if pat.child_rest is not None:
        for cp in binding.get(pat.child_rest, ()):
            placed.append((cp, subject.at(cp)))
    placed.sort(key=lambda t: t[0])
    children = tuple(t[1] for t in placed) + tuple(appended)
    return IndexedNestedSequent(ante, succ, index, children)


def apply_ins(rule: RuleSchema, subject: IndexedNestedSequent, binding: Dict) -> List[IndexedNestedSequent]:
    """Premise trees: the subject with each hole rebuilt."""
    hole_paths = [binding["@" + h.ref] for h in rule.conclusion]
    out = []
    for premise_holes in rule.premises:
        tree = subject
        order = sorted(
            range(len(premise_holes)), key=lambda i: len(hole_paths[i]), reverse=True
        )
        for i in order:
            rebuilt = instantiate_nodepat(premise_holes[i], binding, subject)
            tree = tree.replace(hole_paths[i], rebuilt)
        out.append(tree)
    return out


def ins_instances(rule: RuleSchema, subject: IndexedNestedSequent, seed=None) -> Iterator[Tuple[Dict, List[IndexedNestedSequent]]]:
    for binding in match_ins_conclusion(rule, subject, seed):
        full = fresh_indices_for(rule, subject, binding)
        yield full, apply_ins(rule, subject, full)


def verify_ins_conclusion(rule: RuleSchema, subject: IndexedNestedSequent, binding: Dict) -> bool:
    """Deterministic re-match of a stored binding against the conclusion."""
    for b in match_ins_conclusion(rule, subject, seed=binding):
        if all(b.get(k) == v for k, v in binding.items() if k in b):
            return True
    return False


# ---------------------------------------------------------------------------
# built-in calculi

x_, y_, z_, u_, v_, w_ = SV("x"), SV("y"), SV("z"), SV("u"), SV("v"), SV("w")
A_, B_ = FVar("A"), FVar("B")
p_ = PAtom("p")


def _rule(name, premises, conclusion, fresh=(), fresh_indices=(), distinct=(),
          structural=False, kind="labelled", geach=None):
    return RuleSchema(
        name=name,
        kind=kind,
        premises=tuple(premises),
        conclusion=conclusion,
        fresh=frozenset(fresh),
        fresh_indices=frozenset(fresh_indices),
        distinct=tuple(distinct),
        structural=structural,
        geach=geach,
    )


def _lseqk_rules() -> List[RuleSchema]:
    LP = LabPattern
    return [
        _rule("init-bot", [], LP(ante=[(x_, BOT)])),
        _rule("init", [], LP(ante=[(x_, p_)], succ=[(x_, p_)])),
        _rule("or-l", [LP(ante=[(x_, A_)]), LP(ante=[(x_, B_)])], LP(ante=[(x_, Or(A_, B_))])),
        _rule("or-r", [LP(succ=[(x_, A_), (x_, B_)])], LP(succ=[(x_, Or(A_, B_))])),
        _rule("and-l", [LP(ante=[(x_, A_), (x_, B_)])], LP(ante=[(x_, And(A_, B_))])),
        _rule("and-r", [LP(succ=[(x_, A_)]), LP(succ=[(x_, B_)])], LP(succ=[(x_, And(A_, B_))])),
        _rule("imp-l", [LP(succ=[(x_, A_)]), LP(ante=[(x_, B_)])], LP(ante=[(x_, Implies(A_, B_))])),
        _rule("imp-r", [LP(ante=[(x_, A_)], succ=[(x_, B_)])], LP(succ=[(x_, Implies(A_, B_))])),
        _rule(
            "box-l",
            [LP(rel=[(x_, y_)], ante=[(x_, Box(A_)), (y_, A_)])],
            LP(rel=[(x_, y_)], ante=[(x_, Box(A_))]),
        ),
        _rule("box-r", [LP(rel=[(x_, y_)], succ=[(y_, A_)])], LP(succ=[(x_, Box(A_))]), fresh=["y"]),
        _rule("dia-l", [LP(rel=[(x_, y_)], ante=[(y_, A_)])], LP(ante=[(x_, Diamond(A_))]), fresh=["y"]),
        _rule(
            "dia-r",
            [LP(rel=[(x_, y_)], succ=[(x_, Diamond(A_)), (y_, A_)])],
            LP(rel=[(x_, y_)], succ=[(x_, Diamond(A_))]),
        ),
        _rule(
            "rep-l",
            [LP(eq=[(x_, y_)], ante=[(x_, A_), (y_, A_)])],
            LP(eq=[(x_, y_)], ante=[(x_, A_)]),
        ),
        _rule(
            "rep-r",
            [LP(eq=[(x_, y_)], succ=[(x_, A_), (y_, A_)])],
            LP(eq=[(x_, y_)], succ=[(x_, A_)]),
        ),
        _rule(
            "rep-R1",
            [LP(rel=[(x_, z_), (y_, z_)], eq=[(x_, y_)])],
            LP(rel=[(x_, z_)], eq=[(x_, y_)]),
            structural=True,
        ),
        _rule(
            "rep-R2",
            [LP(rel=[(z_, x_), (z_, y_)], eq=[(x_, y_)])],
            LP(rel=[(z_, x_)], eq=[(x_, y_)]),
            structural=True,
        ),
        # Fig. 1 prints y=v inside the (ls-sc) conclusion, contradicting the
        # rule's own freshness condition on v; only x=u is kept here, which is
        # what simulating (sc) requires.
        _rule(
            "ls-sc",
            [LP(rel=[(x_, y_), (u_, v_)], eq=[(x_, u_), (y_, v_)])],
            LP(rel=[(x_, y_)], eq=[(x_, u_)]),
            fresh=["v"],
            distinct=[("x", "u")],
            structural=True,
        ),
    ]


def _lseqip_rules() -> List[RuleSchema]:
    LP = LabPattern
    shared = {r.name: r for r in _lseqk_rules()}
    return [
        shared["init-bot"],
        _rule("init", [], LP(rel=[(x_, y_)], ante=[(x_, p_)], succ=[(y_, p_)])),
        shared["or-l"],
        shared["or-r"],
        shared["and-l"],
        shared["and-r"],
        _rule(
            "imp-l",
            [
                LP(rel=[(x_, y_)], ante=[(x_, Implies(A_, B_))], succ=[(y_, A_)]),
                LP(rel=[(x_, y_)], ante=[(x_, Implies(A_, B_)), (y_, B_)]),
            ],
            LP(rel=[(x_, y_)], ante=[(x_, Implies(A_, B_))]),
        ),
        _rule(
            "imp-r",
            [LP(rel=[(x_, y_)], ante=[(y_, A_)], succ=[(y_, B_)])],
            LP(succ=[(x_, Implies(A_, B_))]),
            fresh=["y"],
        ),
        _rule("ref", [LP(rel=[(x_, u_)], eq=[(u_, x_)])], LP(), fresh=["u"], structural=True),
        _rule(
            "trans",
            [LP(rel=[(x_, y_), (y_, z_), (x_, u_)], eq=[(u_, z_)])],
            LP(rel=[(x_, y_), (y_, z_)]),
            fresh=["u"],
            structural=True,
        ),
        shared["rep-l"],
        shared["rep-r"],
        shared["rep-R1"],
        shared["rep-R2"],
        shared["ls-sc"],
    ]


def _ls1k_rules() -> List[RuleSchema]:
    def LP1(rel=(), ante=()):
        return LabPattern(rel=tuple(rel), ante=tuple(ante), eq_ctx=(), succ_ctx=())

    np_ = NPAtom("p")
    return [
        _rule("init", [], LP1(ante=[(x_, p_), (x_, np_)]), kind="one-sided"),
        # Fig. 5 drops Gamma from the (box) conclusion; restored here
        _rule(
            "box",
            [LP1(rel=[(x_, y_)], ante=[(y_, A_)])],
            LP1(ante=[(x_, Box(A_))]),
            fresh=["y"],
            kind="one-sided",
        ),
        _rule(
            "dia",
            [LP1(rel=[(x_, y_)], ante=[(x_, Diamond(A_)), (y_, A_)])],
            LP1(rel=[(x_, y_)], ante=[(x_, Diamond(A_))]),
            kind="one-sided",
        ),
        _rule(
            "and",
            [LP1(ante=[(x_, A_)]), LP1(ante=[(x_, B_)])],
            LP1(ante=[(x_, And(A_, B_))]),
            kind="one-sided",
        ),
        _rule("or", [LP1(ante=[(x_, A_), (x_, B_)])], LP1(ante=[(x_, Or(A_, B_))]), kind="one-sided"),
    ]


def _insk_rules() -> List[RuleSchema]:
    return [
        _rule("init-bot", [], (NP("h", ante=[BOT]),), kind="ins"),
        _rule("init", [], (NP("h", ante=[p_], succ=[p_]),), kind="ins"),
        _rule(
            "or-l",
            [(NP("h", ante=[A_]),), (NP("h", ante=[B_]),)],
            (NP("h", ante=[Or(A_, B_)]),),
            kind="ins",
        ),
        _rule("or-r", [(NP("h", succ=[A_, B_]),)], (NP("h", succ=[Or(A_, B_)]),), kind="ins"),
        _rule("and-l", [(NP("h", ante=[A_, B_]),)], (NP("h", ante=[And(A_, B_)]),), kind="ins"),
        _rule(
            "and-r",
            [(NP("h", succ=[A_]),), (NP("h", succ=[B_]),)],
            (NP("h", succ=[And(A_, B_)]),),
            kind="ins",
        ),
        _rule(
            "imp-l",
            [(NP("h", ante=[Implies(A_, B_)], succ=[A_]),), (NP("h", ante=[Implies(A_, B_), B_]),)],
            (NP("h", ante=[Implies(A_, B_)]),),
            kind="ins",
        ),
        _rule("imp-r", [(NP("h", ante=[A_], succ=[B_]),)], (NP("h", succ=[Implies(A_, B_)]),), kind="ins"),
        _rule(
            "box-l",
            [(NP("h", ante=[Box(A_)], children=[NP("c", ante=[A_], index="m")]),)],
            (NP("h", ante=[Box(A_)], children=[NP("c", index="m")]),),
            kind="ins",
        ),
        _rule(
            "box-r",
            [(NP("h", children=[NEW(succ=[A_], index="m")]),)],
            (NP("h", succ=[Box(A_)]),),
            fresh_indices=["m"],
            kind="ins",
        ),
        _rule(
            "fc-l",
            [(NP("h1", ante=[A_], index="n"), NP("h2", ante=[A_], index="n"))],
            (NP("h1", ante=[A_], index="n"), NP("h2", index="n")),
            kind="ins",
        ),
        _rule(
            "fc-r",
            [(NP("h1", succ=[A_], index="n"), NP("h2", succ=[A_], index="n"))],
            (NP("h1", succ=[A_], index="n"), NP("h2", index="n")),
            kind="ins",
        ),
        _rule(
            "sc",
            [(
                NP("h1", index="n", children=[NP("c", index="m")]),
                NP("h2", index="n", children=[NEW(index="m")]),
            )],
            (NP("h1", index="n", children=[NP("c", index="m")]), NP("h2", index="n")),
            kind="ins",
            structural=True,
        ),
    ]


def _insip_rules() -> List[RuleSchema]:
    shared = {r.name: r for r in _insk_rules()}
    return [
        _rule("init-bot", [], (NP("h", ante=[BOT]),), kind="ins"),
        _rule(
            "init",
            [],
            (NP("h", ante=[p_], children=[NP("c", succ=[p_], index="m")]),),
            kind="ins",
        ),
        shared["or-l"],
        shared["or-r"],
        shared["and-l"],
        shared["and-r"],
        _rule(
            "imp-l",
            [
                (NP("h", ante=[Implies(A_, B_)], children=[NP("c", succ=[A_], index="m")]),),
                (NP("h", ante=[Implies(A_, B_)], children=[NP("c", ante=[B_], index="m")]),),
            ],
            (NP("h", ante=[Implies(A_, B_)], children=[NP("c", index="m")]),),
            kind="ins",
        ),
        _rule(
            "imp-r",
            [(NP("h", children=[NEW(ante=[A_], succ=[B_], index="m")]),)],
            (NP("h", succ=[Implies(A_, B_)]),),
            fresh_indices=["m"],
            kind="ins",
        ),
        _rule(
            "ref",
            [(NP("h", index="n", children=[NEW(index="n")]),)],
            (NP("h", index="n"),),
            kind="ins",
            structural=True,
        ),
        _rule(
            "trans",
            [(NP("h", index="n", children=[
                NP("c", index="m", children=[NP("g", index="s")]),
                NEW(index="s"),
            ]),)],
            (NP("h", index="n", children=[NP("c", index="m", children=[NP("g", index="s")])]),),
            kind="ins",
            structural=True,
        ),
        shared["fc-l"],
        shared["fc-r"],
        shared["sc"],
    ]


_BUILTINS: Dict[str, Calculus] = {}


def builtin(name: str) -> Calculus:
    if not _BUILTINS:
        _BUILTINS["LSEqK"] = Calculus("LSEqK", "labelled", tuple(_lseqk_rules()))
        _BUILTINS["LSEqIp"] = Calculus("LSEqIp", "labelled", tuple(_lseqip_rules()))
        _BUILTINS["LS1K"] = Calculus("LS1K", "one-sided", tuple(_ls1k_rules()))
        _BUILTINS["INSK"] = Calculus("INSK", "ins", tuple(_insk_rules()))
        _BUILTINS["INSIp"] = Calculus("INSIp", "ins", tuple(_insip_rules()))
    if name not in _BUILTINS:
        raise KeyError("unknown calculus %r (expected LSEqK, LSEqIp, LS1K, INSK, INSIp)" % name)
    return _BUILTINS[name]


# ---------------------------------------------------------------------------
# Geach rule generation


@dataclass(frozen=True)
class GeachParams:
    h: int
    i: int
    j: int
    k: int

    def __post_init__(self):
        if min(self.h, self.i, self.j, self.k) < 0:
            raise ValueError("Geach parameters must be non-negative")

    def as_tuple(self):
        return (self.h, self.i, self.j, self.k)

    def __str__(self):
        return "%d,%d,%d,%d" % self.as_tuple()


def geach_axiom(p: GeachParams) -> Formula:
    return Implies(
        diamonds(p.h, boxes(p.i, PropVar("p"))),
        boxes(p.j, diamonds(p.k, PropVar("p"))),
    )


def chain_terms(n: int, frm, to, mids: List) -> List[Tuple]:
    """R^n terms from `frm` to `to` through the given n-1 intermediates."""
    if n == 0:
        return []
    if n == 1:
        return [(frm, to)]
    assert len(mids) == n - 1
    terms = [(frm, mids[0])]
    terms += list(zip(mids, mids[1:]))
    terms.append((mids[-1], to))
    return terms


def chain_mset(n: int, frm: StateVar, to: StateVar, start_index: Optional[int] = None) -> Multiset:
    """Concrete R^n chain; intermediates are numbered from start_index."""
    if n <= 1:
        return Multiset(chain_terms(n, frm, to, []))
    base = start_index if start_index is not None else max(frm.index, to.index) + 1
    mids = [StateVar(base + t) for t in range(n - 1)]
    return Multiset(chain_terms(n, frm, to, mids))


def geach_rule(p: GeachParams) -> RuleSchema:
    h, i, j, k = p.as_tuple()
    y_end = SV("y") if h else x_
    z_end = SV("z") if j else x_
    concl_rel = chain_terms(h, x_, y_end, [SV("y%d" % t) for t in range(1, h)])
    concl_rel += chain_terms(j, x_, z_end, [SV("z%d" % t) for t in range(1, j)])

    prem_rel = list(concl_rel)
    fresh = []
    if i:
        prem_rel += chain_terms(i, y_end, SV("u"), [SV("u%d" % t) for t in range(1, i)])
        fresh += ["u%d" % t for t in range(1, i)] + ["u"]
    if k:
        prem_rel += chain_terms(k, z_end, SV("v"), [SV("v%d" % t) for t in range(1, k)])
        fresh += ["v%d" % t for t in range(1, k)] + ["v"]

    left = SV("u") if i else y_end
    right = SV("v") if k else z_end
    return _rule(
        "rho(%s)" % p,
        [LabPattern(rel=tuple(prem_rel), eq=((left, right),))],
        LabPattern(rel=tuple(concl_rel)),
        fresh=fresh,
        structural=True,
        geach=p.as_tuple(),
    )


def _matched_chain(specs: List[Tuple[str, str]], tail: Optional[NodePat]) -> NodePat:
    """[r1 |-i1 X1, [r2 |-i2 X2, [... tail]]] over matched nodes."""
    node = None
    for ref, idx in reversed(specs):
        if node is not None:
            kids = (node,)
        elif tail is not None:
            kids = (tail,)
        else:
            kids = ()
        node = NP(ref, index=idx, children=kids)
        tail = None
    return node


def _new_chain(indices: List[str]) -> NodePat:
    node = None
    for idx in reversed(indices):
        node = NEW(index=idx, children=(node,) if node is not None else ())
    return node


def ins_rule_from_geach(p: GeachParams) -> RuleSchema:
    h, i, j, k = p.as_tuple()
    y_specs = [("hy%d" % t, "a%d" % t) for t in range(1, h + 1)]
    z_specs = [("hz%d" % t, "b%d" % t) for t in range(1, j + 1)]

    fresh_idx: List[str] = []
    y_tail = z_tail = None
    z_override = x_override = None
    if i and k:
        idxs_u = ["c%d" % t for t in range(1, i)] + ["c"]
        idxs_v = ["d%d" % t for t in range(1, k)] + ["c"]
        fresh_idx = idxs_u[:-1] + idxs_v[:-1] + ["c"]
        y_tail, z_tail = _new_chain(idxs_u), _new_chain(idxs_v)
    elif i:
        link = ("b%d" % j) if j else "nx"
        idxs_u = ["c%d" % t for t in range(1, i)] + [link]
        fresh_idx = idxs_u[:-1]
        y_tail = _new_chain(idxs_u)
    elif k:
        link = ("a%d" % h) if h else "nx"
        idxs_v = ["d%d" % t for t in range(1, k)] + [link]
        fresh_idx = idxs_v[:-1]
        z_tail = _new_chain(idxs_v)
    else:
        # the generated equality links two existing nodes; the z-side node
        # takes the y-side index (the dia p -> box p shape)
        if j:
            z_override = ("a%d" % h) if h else "nx"
        elif h:
            x_override = "a%d" % h

    def hole(premise: bool) -> NodePat:
        kids = []
        if h:
            kids.append(_matched_chain(y_specs, y_tail if premise else None))
        if j:
            specs = list(z_specs)
            if premise and z_override is not None:
                specs[-1] = (specs[-1][0], z_override)
            kids.append(_matched_chain(specs, z_tail if premise else None))
        base = NP("hx", index=(x_override if premise and x_override else "nx"), children=kids)
        extras = []
        if not h and premise and y_tail is not None:
            extras.append(y_tail)
        if not j and premise and z_tail is not None:
            extras.append(z_tail)
        if extras:
            base = base.with_children(base.children + tuple(extras))
        return base

    return _rule(
        "rho-ins(%s)" % p,
        [(hole(premise=True),)],
        (hole(premise=False),),
        fresh_indices=fresh_idx,
        structural=True,
        kind="ins",
        geach=p.as_tuple(),
    )


# ---------------------------------------------------------------------------
# geometric rule specs


@dataclass(frozen=True)
class GeometricRuleSpec:
    """Eq. 2 shape: conclusion atoms P1..Pm; one (atoms, eigenvars) block per
    existential disjunct."""

    name: str
    conclusion_atoms: Tuple
    premises: Tuple


class RuleSpecError(Exception):
    pass


def grs_from_spec(spec: GeometricRuleSpec, kind: str = "labelled") -> RuleSchema:
    def conv(atoms):
        rels, eqs = [], []
        for op, a, b in atoms:
            pair = (SV(a), SV(b))
            if op == "R":
                rels.append(pair)
            elif op == "=":
                if kind == "one-sided":
                    raise RuleSpecError("one-sided rules cannot carry equality atoms")
                eqs.append(pair)
            else:
                raise RuleSpecError("unknown atom kind %r" % (op,))
        return rels, eqs

    def mk(rels, eqs):
        if kind == "one-sided":
            return LabPattern(rel=tuple(rels), eq_ctx=(), succ_ctx=())
        return LabPattern(rel=tuple(rels), eq=tuple(eqs))

    crel, ceq = conv(spec.conclusion_atoms)
    prem_pats = []
    fresh = set()
    for atoms, eigen in spec.premises:
        prel, peq = conv(atoms)
        prem_pats.append(mk(crel + prel, ceq + peq))
        fresh.update(eigen)
    concl_vars = {v for _, a, b in spec.conclusion_atoms for v in (a, b)}
    bad = fresh & concl_vars
    if bad:
        raise RuleSpecError("eigenvariables occur in the conclusion: %s" % sorted(bad))
    return _rule(spec.name, prem_pats, mk(crel, ceq), fresh=sorted(fresh), structural=True, kind=kind)


def parse_rulespec(text: str) -> List[GeometricRuleSpec]:
    """Blank-line separated blocks:

    rule t31
    conclusion: R x y, R y z, R z w
    premise: R x w
    """
    specs = []
    block: List[str] = []
    for line in text.splitlines() + [""]:
        line = line.split("#", 1)[0].strip()
        if not line:
            if block:
                specs.append(_parse_block(block))
                block = []
            continue
        block.append(line)
    return specs


def _parse_atoms(text: str):
    if "|-" in text:
        raise RuleSpecError("rule specs are single-sided: no '|-' allowed")
    atoms = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if part.startswith("R "):
            bits = part.split()
            if len(bits) != 3:
                raise RuleSpecError("bad relation atom %r" % part)
            atoms.append(("R", bits[1], bits[2]))
        elif "=" in part:
            a, b = (s.strip() for s in part.split("=", 1))
            if not a or not b:
                raise RuleSpecError("bad equality atom %r" % part)
            atoms.append(("=", a, b))
        else:
            raise RuleSpecError("bad atom %r" % part)
    return tuple(atoms)


def _parse_block(lines: List[str]) -> GeometricRuleSpec:
    if not lines[0].startswith("rule "):
        raise RuleSpecError("block must start with 'rule <name>'")
    name = lines[0][5:].strip()
    conclusion: Tuple = ()
    premises = []
    for line in lines[1:]:
        if line.startswith("conclusion:"):
            conclusion = _parse_atoms(line[len("conclusion:"):])
        elif line.startswith("premise:"):
            body = line[len("premise:"):]
            eigen: Tuple = ()
            if "[fresh:" in body:
                body, tail = body.split("[fresh:", 1)
                tail = tail.rstrip()
                if not tail.endswith("]"):
                    raise RuleSpecError("unterminated fresh list")
                eigen = tuple(tail[:-1].split())
            premises.append((_parse_atoms(body), eigen))
        else:
            raise RuleSpecError("unexpected line %r" % line)
    if not premises:
        raise RuleSpecError("rule %s has no premises" % name)
    return GeometricRuleSpec(name, conclusion, tuple(premises))


T31_SPEC = GeometricRuleSpec(
    "t31",
    (("R", "x", "y"), ("R", "y", "z"), ("R", "z", "w")),
    (((("R", "x", "w"),), ()),),
)


def t31_rule(kind: str = "one-sided") -> RuleSchema:
    return grs_from_spec(T31_SPEC, kind=kind)


# ---------------------------------------------------------------------------
# rendering and schema comparison


def fmt_lab_pattern(pat: LabPattern) -> str:
    parts = list(pat.rel_ctx)
    parts += ["R%s%s" % (a, b) for a, b in pat.rel]
    parts += list(pat.eq_ctx)
    parts += ["%s=%s" % (a, b) for a, b in pat.eq]
    parts += list(pat.ante_ctx)
    parts += ["%s:%s" % (a, fmt_formula(f)) for a, f in pat.ante]
    right = list(pat.succ_ctx) + ["%s:%s" % (a, fmt_formula(f)) for a, f in pat.succ]
    return "%s |- %s" % (", ".join(parts), ", ".join(right))


def fmt_nodepat(pat: NodePat) -> str:
    left = [fmt_formula(f) for f in pat.ante]
    if pat.ante_rest:
        left.insert(0, pat.ante_rest)
    bits = [fmt_formula(f) for f in pat.succ]
    if pat.succ_rest:
        bits.insert(0, pat.succ_rest)
    bits += ["[%s]" % fmt_nodepat(c) for c in pat.children]
    if pat.child_rest:
        bits.append(pat.child_rest)
    core = "|-%s" % pat.index
    if left:
        core = ", ".join(left) + " " + core
    if bits:
        core += " " + ", ".join(bits)
    return core


def fmt_rule(rule: RuleSchema) -> str:
    if rule.kind == "ins":
        def holes(hs):
            return "G" + "".join("{ %s }" % fmt_nodepat(h) for h in hs)

        prem = "    ".join(holes(prem) for prem in rule.premises)
        concl = holes(rule.conclusion)
    else:
        prem = "    ".join(fmt_lab_pattern(pr) for pr in rule.premises)
        concl = fmt_lab_pattern(rule.conclusion)
    side = []
    if rule.fresh:
        side.append("%s not in conclusion" % ",".join(sorted(rule.fresh)))
    if rule.fresh_indices:
        side.append("index %s not in conclusion" % ",".join(sorted(rule.fresh_indices)))
    for a, b in rule.distinct:
        side.append("%s is not %s" % (a, b))
    width = max(len(prem), len(concl), 4)
    label = rule.name + ("   [%s]" % "; ".join(side) if side else "")
    return "%s\n%s %s\n%s" % (prem, "-" * width, label, concl)


def _canon_string(rule: RuleSchema, rel_orders=None) -> str:
    """Serialize with metas renamed in first-occurrence order.  rel_orders
    optionally permutes each pattern's rel-term tuple before naming."""
    mapping: Dict[str, str] = {}

    def name_of(kind, n):
        key = kind + ":" + n
        if key not in mapping:
            mapping[key] = "%s%d" % (kind, len(mapping))
        return mapping[key]

    def cf(f):
        if isinstance(f, FVar):
            return name_of("F", f.name)
        if isinstance(f, PAtom):
            return name_of("P", f.name)
        if isinstance(f, NPAtom):
            return "~" + name_of("P", f.name)
        if isinstance(f, (Box, Diamond)):
            return type(f).__name__ + "(" + cf(f.arg) + ")"
        if isinstance(f, (And, Or, Implies)):
            return type(f).__name__ + "(" + cf(f.left) + "," + cf(f.right) + ")"
        return fmt_formula(f)

    def cv(v):
        return name_of("V", v.name) if isinstance(v, SV) else str(v)

    def clab(pat: LabPattern, which):
        rel = list(pat.rel)
        if rel_orders and which in rel_orders:
            rel = [rel[t] for t in rel_orders[which]]
        rels = [(cv(a), cv(b)) for a, b in rel]
        eqs = [tuple(sorted((cv(a), cv(b)))) for a, b in pat.eq]
        antes = sorted((cv(a), cf(f)) for a, f in pat.ante)
        succs = sorted((cv(a), cf(f)) for a, f in pat.succ)
        return repr((sorted(rels), sorted(eqs), antes, succs,
                     len(pat.rel_ctx), len(pat.eq_ctx), len(pat.ante_ctx), len(pat.succ_ctx)))

    def cnode(np: NodePat):
        return repr((
            sorted(cf(f) for f in np.ante),
            sorted(cf(f) for f in np.succ),
            name_of("I", np.index),
            sorted(cnode(c) for c in np.children),
            np.ante_rest is not None,
            np.succ_rest is not None,
            np.child_rest is not None,
            np.ref is not None,
        ))

    if rule.kind == "ins":
        body = repr((
            [sorted(cnode(hh) for hh in prem) for prem in rule.premises],
            sorted(cnode(hh) for hh in rule.conclusion),
        ))
    else:
        parts = [clab(rule.conclusion, ("c",))]
        parts += [clab(rp, ("p", t)) for t, rp in enumerate(rule.premises)]
        body = repr(parts)
    fresh = sorted(name_of("V", f) for f in rule.fresh)
    fresh_idx = sorted(name_of("I", f) for f in rule.fresh_indices)
    distinct = sorted(tuple(sorted((name_of("V", a), name_of("V", b)))) for a, b in rule.distinct)
    return repr((rule.kind, len(rule.premises), body, fresh, fresh_idx, distinct))


def rules_equal_up_to_renaming(r1: RuleSchema, r2: RuleSchema) -> bool:
    """Structural equality modulo bijective renaming of metavariables.

    The canonical serialization names metas by first occurrence, which depends
    on term order inside the patterns; small rules permit searching over
    rel-term orders of r1 when the direct comparison fails."""
    if (r1.kind, len(r1.premises)) != (r2.kind, len(r2.premises)):
        return False
    target = _canon_string(r2)
    if _canon_string(r1) == target:
        return True
    if r1.kind == "ins":
        return False
    keys = [("c",)] + [("p", t) for t in range(len(r1.premises))]
    lens = [len(r1.conclusion.rel)] + [len(p.rel) for p in r1.premises]
    if any(n > 5 for n in lens):
        return False
    spaces = [list(itertools.permutations(range(n))) for n in lens]
    for combo in itertools.product(*spaces):
        orders = dict(zip(keys, combo))
        if _canon_string(r1, orders) == target:
            return True
    return False
