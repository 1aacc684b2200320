"""Bounded backward proof search over any loaded calculus.

Rule application order: zero-premise rules, then consuming logical rules,
then saturating copy rules (guarded so they only fire when they add new
material), then eigenvariable rules, then structural rules on a separate
budget.  Branches are pruned when a sequent repeats up to order-preserving
variable renaming, and failure distinguishes refuted-within-bounds from
running out of depth or budget."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .calculus import (
    Calculus,
    LabPattern,
    RuleSchema,
    ins_instances,
    lab_instances,
)
from .derivation import Derivation
from .formula import Formula
from .multiset import Multiset
from .nested import IndexedNestedSequent, fmt_ins
from .sequent import LabelledSequent, StateVar, fmt_sequent, is_ltse, substitute

PROVED = "proved"
REFUTED = "refuted"
EXHAUSTED = "exhausted"

LEAF, LOGICAL, COPY, FRESH, STRUCTURAL = range(5)


@dataclass(frozen=True)
class Bounds:
    depth: int
    structural_budget: int = 4


@dataclass
class SearchResult:
    status: str
    derivation: Optional[Derivation] = None

    @property
    def found(self) -> bool:
        return self.status == PROVED

    def __bool__(self):
        return self.found


def _is_copy_rule(rule: RuleSchema) -> bool:
    """Rules whose premises each contain the whole conclusion; they only add
    material, so saturation guards and per-branch memoization apply."""
    if rule.structural or rule.fresh or rule.fresh_indices or not rule.premises:
        return False
    if rule.kind == "ins":
        return False
    pat: LabPattern = rule.conclusion
    for prem in rule.premises:
        for slot in ("rel", "eq", "ante", "succ"):
            pterms = list(getattr(prem, slot))
            for t in getattr(pat, slot):
                if t in pterms:
                    pterms.remove(t)
                else:
                    return False
    return True


_INS_COPY = {"box-l", "fc-l", "fc-r", "imp-l"}
_INS_COPY_K = {"box-l", "fc-l", "fc-r"}


def _classify(rule: RuleSchema, calc: Calculus) -> int:
    if not rule.premises:
        return LEAF
    if rule.structural:
        return STRUCTURAL
    if rule.fresh or rule.fresh_indices:
        return FRESH
    if rule.kind == "ins":
        copy = _INS_COPY if calc.name.startswith("INSIp") else _INS_COPY_K
        return COPY if rule.name in copy else LOGICAL
    if _is_copy_rule(rule):
        return COPY
    if calc.name.startswith("LSEqIp") and rule.name == "imp-l":
        return COPY  # keeps its principal; saturating
    return LOGICAL


def _canonical_sig(s) -> str:
    """Sequent signature stable under order-preserving variable renaming."""
    if isinstance(s, LabelledSequent):
        ren = {v: StateVar(i + 1) for i, v in enumerate(s.vars())}
        t = substitute(s, ren)
        eq = Multiset(tuple(sorted(pair)) for pair in t.eq)
        return fmt_sequent(LabelledSequent(t.rel, eq, t.ante, t.succ))
    ren: Dict[int, int] = {}

    def walk(g: IndexedNestedSequent) -> IndexedNestedSequent:
        if g.index not in ren:
            ren[g.index] = len(ren)
        return IndexedNestedSequent(
            g.ante, g.succ, ren[g.index], tuple(walk(c) for c in g.children)
        )

    return fmt_ins(walk(s))


def _memo_key(rule: RuleSchema, binding: Dict) -> Tuple[str, str]:
    """Instance identity for per-branch deduplication; fresh metas and
    context/rest bindings are excluded."""
    skip = set(rule.fresh) | {"#" + n for n in rule.fresh_indices}
    bits = []
    for k in sorted(binding):
        if k in skip or k.startswith(("C_", "X_", "Y_")):
            continue
        v = binding[k]
        if isinstance(v, (StateVar, Formula, str, int)):
            bits.append("%s=%s" % (k, v))
        elif isinstance(v, tuple):
            bits.append("%s=%r" % (k, v))
    return (rule.name, ";".join(bits))


def _sort_key(binding: Dict) -> str:
    bits = []
    for k in sorted(binding):
        v = binding[k]
        if isinstance(v, (StateVar, Formula, str, int, tuple)):
            bits.append("%s=%r" % (k, str(v)))
    return ";".join(bits)


def _pure_additions(base: Multiset, have: Multiset) -> Optional[Multiset]:
    try:
        return have - base
    except KeyError:
        return None


def _adds_nothing_new(concl, premises) -> bool:
    """True when every premise only duplicates terms the conclusion already
    carries; such copy-rule instances can never help."""
    for prem in premises:
        if isinstance(prem, LabelledSequent):
            pairs = (
                (concl.rel, prem.rel), (concl.eq, prem.eq),
                (concl.ante, prem.ante), (concl.succ, prem.succ),
            )
            for base, have in pairs:
                diff = _pure_additions(base, have)
                if diff is None:
                    return False
                if any(base.count(t) == 0 for t in diff.support()):
                    return False
        else:
            if not _ins_adds_nothing_new(concl, prem):
                return False
    return True


def _ins_adds_nothing_new(concl: IndexedNestedSequent, prem: IndexedNestedSequent) -> bool:
    if len(concl.children) != len(prem.children) or concl.index != prem.index:
        return False
    for side in ("ante", "succ"):
        base, have = getattr(concl, side), getattr(prem, side)
        diff = _pure_additions(base, have)
        if diff is None:
            return False
        if any(base.count(t) == 0 for t in diff.support()):
            return False
    return all(
        _ins_adds_nothing_new(c, p2) for c, p2 in zip(concl.children, prem.children)
    )


class _Searcher:
    def __init__(self, calc: Calculus, bounds: Bounds, ltse_only: bool):
        self.calc = calc
        self.bounds = bounds
        self.ltse_only = ltse_only
        rules = [(_classify(r, calc), r) for r in calc.rules]
        rules.sort(key=lambda t: t[0])
        self.rules = rules
        self.labelled = calc.kind in ("labelled", "one-sided")

    def instances(self, rule: RuleSchema, sequent):
        gen = lab_instances(rule, sequent) if self.labelled else ins_instances(rule, sequent)
        out = list(gen)
        out.sort(key=lambda t: _sort_key(t[0]))
        return out

    def has_instance(self, rule: RuleSchema, sequent) -> bool:
        gen = lab_instances(rule, sequent) if self.labelled else ins_instances(rule, sequent)
        for _ in gen:
            return True
        return False

    def run(self, sequent, depth: int, budget: int, history: frozenset, memo: frozenset):
        if depth <= 0:
            return EXHAUSTED, None
        sig = _canonical_sig(sequent)
        if sig in history:
            return REFUTED, None
        history = history | {sig}
        exhausted = False
        for group, rule in self.rules:
            if group == LEAF:
                for binding, _ in self.instances(rule, sequent):
                    return PROVED, Derivation(sequent, rule.name, (), binding)
                continue
            if group == STRUCTURAL and budget <= 0:
                if self.has_instance(rule, sequent):
                    exhausted = True
                continue
            for binding, premises in self.instances(rule, sequent):
                if self.ltse_only and not all(is_ltse(t) for t in premises):
                    continue
                if group in (COPY, STRUCTURAL):
                    key = _memo_key(rule, binding)
                    if key in memo:
                        continue
                    if group == COPY and _adds_nothing_new(sequent, premises):
                        continue
                    new_memo = memo | {key}
                else:
                    new_memo = memo
                new_budget = budget - 1 if group == STRUCTURAL else budget
                subtrees = []
                status_here = PROVED
                for prem in premises:
                    st, dv = self.run(prem, depth - 1, new_budget, history, new_memo)
                    if st == PROVED:
                        subtrees.append(dv)
                    else:
                        status_here = st
                        break
                if status_here == PROVED:
                    return PROVED, Derivation(sequent, rule.name, tuple(subtrees), binding)
                if status_here == EXHAUSTED:
                    exhausted = True
        return (EXHAUSTED, None) if exhausted else (REFUTED, None)


def prove(calc: Calculus, goal, bounds: Bounds) -> SearchResult:
    """Complete relative to bounds: REFUTED means no non-looping derivation
    exists within the depth and structural budget."""
    if calc.kind in ("labelled", "one-sided"):
        if not isinstance(goal, LabelledSequent):
            raise TypeError("calculus %s needs a labelled goal" % calc.name)
    elif not isinstance(goal, IndexedNestedSequent):
        raise TypeError("calculus %s needs an indexed nested sequent goal" % calc.name)
    searcher = _Searcher(calc, bounds, ltse_only=False)
    status, d = searcher.run(goal, bounds.depth, bounds.structural_budget, frozenset(), frozenset())
    return SearchResult(status, d)


def prove_ltse(calc: Calculus, goal: LabelledSequent, bounds: Bounds) -> SearchResult:
    """As prove, but every expanded sequent must be an LTSE (rule instances
    violating it, e.g. rep-R1, are never applied)."""
    if not isinstance(goal, LabelledSequent):
        raise TypeError("prove_ltse needs a labelled goal")
    if not is_ltse(goal):
        raise ValueError("goal is not an LTSE: %s" % fmt_sequent(goal))
    searcher = _Searcher(calc, bounds, ltse_only=True)
    status, d = searcher.run(goal, bounds.depth, bounds.structural_budget, frozenset(), frozenset())
    return SearchResult(status, d)
