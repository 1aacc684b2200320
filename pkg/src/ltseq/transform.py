"""Constructive metatheory over labelled derivations: renaming, the nuanced
substitution that merges two siblings, weakening, invertibility, the four
contractions, and cut-elimination restricted so LTSE-derivations stay inside
the fragment.

All transforms rebuild full derivation trees; rule instances are re-inferred
from the surrounding sequents, so every output is checkable."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .calculus import (
    Calculus,
    RuleSchema,
    apply_lab,
    instantiate_lab,
    match_lab_conclusion,
)
from .derivation import (
    CUT_RULE,
    Derivation,
    _lookup_rule,
    infer_bindings,
    is_ltse_derivation,
    sequents_match,
)
from .formula import Bottom, Formula, fmt_formula, size
from .multiset import Multiset
from .sequent import LabelledSequent, StateVar, fmt_sequent, substitute

BOT = Bottom()


class TransformError(Exception):
    pass


# ---------------------------------------------------------------------------
# variable plumbing


def derivation_vars(d: Derivation) -> Set[StateVar]:
    out: Set[StateVar] = set()
    for n in d.nodes():
        out.update(n.sequent.vars())
    return out


def max_var_index(d: Derivation) -> int:
    vs = derivation_vars(d)
    return max((v.index for v in vs), default=0)


class Fresh:
    def __init__(self, start: int):
        self.next_index = start + 1

    def take(self) -> StateVar:
        v = StateVar(self.next_index)
        self.next_index += 1
        return v

    def absorb(self, d: Derivation):
        self.next_index = max(self.next_index, max_var_index(d) + 1)


def _subst_binding_value(v, mapping):
    if isinstance(v, StateVar):
        return mapping.get(v, v)
    if isinstance(v, Multiset):
        def m(item):
            if isinstance(item, tuple) and len(item) == 2:
                a, b = item
                a2 = mapping.get(a, a) if isinstance(a, StateVar) else a
                b2 = mapping.get(b, b) if isinstance(b, StateVar) else b
                return (a2, b2)
            return item
        return v.map(m)
    return v


def substitute_vars(d: Derivation, mapping: Dict[StateVar, StateVar]) -> Derivation:
    """Textual variable substitution through sequents and bindings."""
    if not mapping:
        return d
    b = None
    if d.bindings is not None:
        b = {k: _subst_binding_value(v, mapping) for k, v in d.bindings.items()}
    return Derivation(
        substitute(d.sequent, mapping),
        d.rule,
        tuple(substitute_vars(p, mapping) for p in d.premises),
        b,
    )


def refresh_eigens(d: Derivation, avoid: Set[StateVar], calc: Calculus, fresh: Optional[Fresh] = None) -> Derivation:
    """Rename eigenvariables clashing with `avoid` to globally fresh ones."""
    if fresh is None:
        fresh = Fresh(max(max_var_index(d), max((v.index for v in avoid), default=0)))

    def walk(node: Derivation) -> Derivation:
        prems = [walk(p) for p in node.premises]
        b = node.bindings
        rule = _lookup_rule(calc, node.rule)
        if b is not None and rule is not None and rule.fresh:
            mapping = {}
            newb = dict(b)
            for f in sorted(rule.fresh):
                v = b.get(f)
                if isinstance(v, StateVar) and v in avoid:
                    w = fresh.take()
                    mapping[v] = w
                    newb[f] = w
            if mapping:
                prems = [substitute_vars(p, mapping) for p in prems]
                b = newb
        return Derivation(node.sequent, node.rule, tuple(prems), b)

    return walk(d)


def _node(calc: Calculus, sequent: LabelledSequent, rule_name: str, premises: Sequence[Derivation], what: str = "") -> Derivation:
    b = infer_bindings(calc, rule_name, sequent, [p.sequent for p in premises])
    if b is None:
        raise TransformError(
            "cannot rebuild %s as %s from %s"
            % (fmt_sequent(sequent), rule_name, what or "premises")
        )
    return Derivation(sequent, rule_name, tuple(premises), b)


def _leaf_on(calc: Calculus, sequent: LabelledSequent, preferred: str = "") -> Derivation:
    names = [preferred] if preferred else []
    names += [r.name for r in calc.rules if not r.premises and r.name not in names]
    for name in names:
        if not name:
            continue
        b = infer_bindings(calc, name, sequent, [])
        if b is not None:
            return Derivation(sequent, name, (), b)
    raise TransformError("no initial sequent matches %s" % fmt_sequent(sequent))


# ---------------------------------------------------------------------------
# renaming (Lemma 2) and weakening (Lemma 4)


def rename(d: Derivation, x: StateVar, y: StateVar, calc: Calculus) -> Derivation:
    """Substitute y for x; y must not occur in the endsequent."""
    if y in d.sequent.vars():
        raise ValueError("%s already occurs in the endsequent" % y)
    d2 = refresh_eigens(d, {y}, calc)
    return substitute_vars(d2, {x: y})


def weaken(d: Derivation, calc: Calculus, rel=(), eq=(), ante=(), succ=()) -> Derivation:
    """Add material to every sequent; height is preserved exactly."""
    extra_rel, extra_eq = Multiset(rel), Multiset(eq)
    extra_ante, extra_succ = Multiset(ante), Multiset(succ)
    if not (extra_rel or extra_eq or extra_ante or extra_succ):
        return d
    avoid: Set[StateVar] = set()
    for a, b in list(extra_rel) + list(extra_eq):
        avoid.update((a, b))
    for a, _ in list(extra_ante) + list(extra_succ):
        avoid.add(a)
    d2 = refresh_eigens(d, avoid, calc)

    def walk(node: Derivation) -> Derivation:
        s = node.sequent
        new_seq = LabelledSequent(
            s.rel + extra_rel, s.eq + extra_eq, s.ante + extra_ante, s.succ + extra_succ
        )
        b = node.bindings
        if b is not None:
            rule = _lookup_rule(calc, node.rule)
            pat = rule.conclusion
            b = dict(b)
            for names, extra in (
                (pat.rel_ctx, extra_rel), (pat.eq_ctx, extra_eq),
                (pat.ante_ctx, extra_ante), (pat.succ_ctx, extra_succ),
            ):
                if not extra:
                    continue
                if not names:
                    raise TransformError(
                        "rule %s has no slot for this weakening" % node.rule
                    )
                b[names[0]] = b.get(names[0], Multiset()) + extra
        return Derivation(new_seq, node.rule, tuple(walk(p) for p in node.premises), b)

    return walk(d2)


# ---------------------------------------------------------------------------
# invertibility (Lemma 5)


def _scalar_seed(binding: Dict, rule: RuleSchema, include_fresh: bool) -> Dict:
    out = {}
    for k, v in binding.items():
        if isinstance(v, (StateVar, Formula, str)):
            if not include_fresh and k in rule.fresh:
                continue
            out[k] = v
    return out


def invert(d: Derivation, rule_name: str, binding: Dict, calc: Calculus) -> List[Derivation]:
    """Same-height derivations of every premise of the given rule instance,
    whose conclusion must be d's endsequent."""
    rule = _lookup_rule(calc, rule_name)
    if rule is None:
        raise TransformError("unknown rule %r" % rule_name)
    if not sequents_match(instantiate_lab(rule.conclusion, binding, rule.kind == "one-sided"), d.sequent):
        raise TransformError("instance conclusion does not match the endsequent")
    fresh_vals = {binding[f] for f in rule.fresh if f in binding}
    d = refresh_eigens(d, fresh_vals, calc)
    return _invert(d, rule, binding, calc)


def _invert(d: Derivation, rule: RuleSchema, binding: Dict, calc: Calculus) -> List[Derivation]:
    targets = apply_lab(rule, binding)
    if d.rule == rule.name:
        own = [p.sequent for p in d.premises]
        if len(own) == len(targets) and all(sequents_match(a, b) for a, b in zip(own, targets)):
            return list(d.premises)
        if rule.fresh and d.bindings is not None:
            mapping = {}
            ok = True
            for f in sorted(rule.fresh):
                a, b = d.bindings.get(f), binding.get(f)
                if isinstance(a, StateVar) and isinstance(b, StateVar) and a != b:
                    mapping[a] = b
                elif a != b:
                    ok = False
            if ok and mapping:
                renamed = [substitute_vars(p, mapping) for p in d.premises]
                if all(sequents_match(p.sequent, t) for p, t in zip(renamed, targets)):
                    return renamed
    if not d.premises:
        return [_leaf_on(calc, t, preferred=d.rule) for t in targets]
    seed = _scalar_seed(binding, rule, include_fresh=True)
    lifted = []
    for p in d.premises:
        got = None
        for b in match_lab_conclusion(rule, p.sequent, seed=seed):
            got = b
            break
        if got is None:
            raise TransformError(
                "cannot lift %s instance over %s" % (rule.name, d.rule)
            )
        lifted.append(_invert(p, rule, got, calc))
    out = []
    for j, t in enumerate(targets):
        out.append(_node(calc, t, d.rule, [sub[j] for sub in lifted], "inversion"))
    return out


# ---------------------------------------------------------------------------
# contraction (Lemma 6)

_SLOTS = {"rel": "rel", "eq": "eq", "ante": "ante", "succ": "succ",
          "left-formula": "ante", "right-formula": "succ", "left": "ante", "right": "succ"}


def _seq_replace(s: LabelledSequent, slot: str, value: Multiset) -> LabelledSequent:
    parts = {"rel": s.rel, "eq": s.eq, "ante": s.ante, "succ": s.succ}
    parts[slot] = value
    return LabelledSequent(parts["rel"], parts["eq"], parts["ante"], parts["succ"])


def _slot_of(s: LabelledSequent, slot: str) -> Multiset:
    return getattr(s, slot)


def _count_in(s: LabelledSequent, slot: str, term) -> int:
    m = _slot_of(s, slot)
    if slot == "eq" and isinstance(term, tuple):
        n = m.count(term)
        if term[0] != term[1]:
            n += m.count((term[1], term[0]))
        return n
    return m.count(term)


def _remove_one(s: LabelledSequent, slot: str, term) -> LabelledSequent:
    m = _slot_of(s, slot)
    if term not in m and slot == "eq":
        term = (term[1], term[0])
    return _seq_replace(s, slot, m.remove(term))


def contract(d: Derivation, which: str, term, calc: Calculus) -> Derivation:
    """Height-non-increasing contraction of a duplicated term."""
    slot = _SLOTS.get(which)
    if slot is None:
        raise ValueError("which must be rel, eq, left-formula or right-formula")
    if _count_in(d.sequent, slot, term) < 2:
        raise ValueError("term %r is not duplicated in the endsequent" % (term,))
    return _contract(d, slot, term, calc)


def _contract(d: Derivation, slot: str, term, calc: Calculus) -> Derivation:
    target = _remove_one(d.sequent, slot, term)
    if not d.premises:
        return _leaf_on(calc, target, preferred=d.rule)
    if all(_count_in(p.sequent, slot, term) >= 2 for p in d.premises):
        prems = [_contract(p, slot, term, calc) for p in d.premises]
        return _node(calc, target, d.rule, prems, "contraction")
    # the last rule consumed one duplicate as its principal formula
    rule = _lookup_rule(calc, d.rule)
    if rule is None or d.bindings is None:
        raise TransformError("cannot contract through %s" % d.rule)
    if rule.fresh:
        return _contract_through_eigen(d, slot, term, rule, calc)
    return _contract_through_logical(d, slot, term, rule, calc)


def _shrunk_instance(d: Derivation, rule: RuleSchema, slot: str, term) -> Dict:
    """The rule's instance on the contracted conclusion: same scalars, the
    spare duplicate dropped from the context."""
    b = dict(d.bindings)
    pat = rule.conclusion
    names = getattr(pat, slot + "_ctx")
    for name in names:
        ctx = b.get(name)
        if isinstance(ctx, Multiset) and term in ctx:
            b[name] = ctx.remove(term)
            return b
        if slot == "eq" and isinstance(ctx, Multiset) and (term[1], term[0]) in ctx:
            b[name] = ctx.remove((term[1], term[0]))
            return b
    raise TransformError("spare duplicate not found in the %s context" % slot)


def _other_copy_instance(rule: RuleSchema, premise_seq: LabelledSequent, d: Derivation, fresh: Optional[Fresh], calc: Calculus) -> Dict:
    """Instance of the same rule on the surviving duplicate inside a premise."""
    seed = _scalar_seed(d.bindings, rule, include_fresh=False)
    for b in match_lab_conclusion(rule, premise_seq, seed=seed):
        full = dict(b)
        for f in sorted(rule.fresh):
            if f not in full:
                full[f] = fresh.take()
        return full
    raise TransformError("no %s instance on the surviving duplicate" % rule.name)


def _contract_down(d: Derivation, target: LabelledSequent, calc: Calculus) -> Derivation:
    """Contract duplicated material until the endsequent equals target."""
    cur = d
    for slot in ("rel", "eq", "ante", "succ"):
        while True:
            have, want = _slot_of(cur.sequent, slot), _slot_of(target, slot)
            excess = None
            for t in have.support():
                if have.count(t) > _count_in_ms(want, slot, t):
                    excess = t
                    break
            if excess is None:
                break
            cur = _contract(cur, slot, excess, calc)
    if not sequents_match(cur.sequent, target):
        raise TransformError(
            "contraction cannot reach %s from %s"
            % (fmt_sequent(target), fmt_sequent(cur.sequent))
        )
    return cur


def _count_in_ms(m: Multiset, slot: str, term) -> int:
    n = m.count(term)
    if slot == "eq" and isinstance(term, tuple) and term[0] != term[1]:
        n += m.count((term[1], term[0]))
    return n


def _contract_through_logical(d: Derivation, slot: str, term, rule: RuleSchema, calc: Calculus) -> Derivation:
    target = _remove_one(d.sequent, slot, term)
    shrunk = _shrunk_instance(d, rule, slot, term)
    expected = apply_lab(rule, shrunk)
    fresh = Fresh(max_var_index(d))
    new_premises = []
    for i, p in enumerate(d.premises):
        other = _other_copy_instance(rule, p.sequent, d, fresh, calc)
        q = invert(p, rule.name, other, calc)[i]
        new_premises.append(_contract_down(q, expected[i], calc))
    return Derivation(target, d.rule, tuple(new_premises),
                      infer_bindings(calc, d.rule, target, expected) or shrunk)


def _contract_through_eigen(d: Derivation, slot: str, term, rule: RuleSchema, calc: Calculus) -> Derivation:
    """The (box-r)-style case: invert on the other copy with a fresh
    eigenvariable, weaken in an equality, merge by substitution, contract the
    doubled actives, and reapply the rule."""
    target = _remove_one(d.sequent, slot, term)
    p = d.premises[0]
    fresh = Fresh(max_var_index(d))
    other = _other_copy_instance(rule, p.sequent, d, fresh, calc)
    z = other[sorted(rule.fresh)[0]]
    y_old = d.bindings[sorted(rule.fresh)[0]]
    x_anchor = d.bindings.get("x")
    q = invert(p, rule.name, other, calc)[0]
    wk = weaken(q, calc, eq=[(y_old, z)])
    sub = substitute_merge(wk, x_anchor, y_old, z, calc)
    shrunk = _shrunk_instance(d, rule, slot, term)
    shrunk[sorted(rule.fresh)[0]] = z
    expected = apply_lab(rule, shrunk)[0]
    ctr = _contract_down(sub, expected, calc)
    return _node(calc, target, d.rule, [ctr], "eigen contraction")


# ---------------------------------------------------------------------------
# nuanced substitution (Lemma 3)


def _merge_target(s: LabelledSequent, x: StateVar, y: StateVar, z: StateVar) -> LabelledSequent:
    t = _remove_one(s, "rel", (x, y))
    t = _remove_one(t, "eq", (y, z))
    return substitute(t, {y: z})


def substitute_merge(d: Derivation, x: StateVar, y: StateVar, z: StateVar, calc: Calculus) -> Derivation:
    """From R,Rxy,Rxz,E,y=z,Γ ⊢ Δ derive its y-into-z merge: Rxy and y=z are
    removed and y is replaced by z throughout."""
    s = d.sequent
    if (x, y) not in s.rel:
        raise ValueError("endsequent lacks the relation term R%s%s" % (x, y))
    if (x, z) not in s.rel:
        raise ValueError("endsequent lacks the relation term R%s%s" % (x, z))
    if _count_in(s, "eq", (y, z)) == 0:
        raise ValueError("endsequent lacks the equality %s = %s" % (y, z))
    if s.rel.count((x, y)) != 1:
        raise ValueError("R%s%s occurs more than once" % (x, y))
    if _count_in(s, "eq", (y, z)) != 1:
        raise ValueError("%s = %s occurs more than once" % (y, z))
    return _subs(d, x, y, z, calc)


def _subs(d: Derivation, x: StateVar, y: StateVar, z: StateVar, calc: Calculus) -> Derivation:
    target = _merge_target(d.sequent, x, y, z)
    if not d.premises:
        return _leaf_on(calc, target, preferred=d.rule)
    prems = [_subs(p, x, y, z, calc) for p in d.premises]
    b = infer_bindings(calc, d.rule, target, [p.sequent for p in prems])
    if b is not None:
        return Derivation(target, d.rule, tuple(prems), b)
    # the rule was a replacement on exactly the merged equality: its premise
    # maps to the target plus one spare copy, which contracts away
    if d.rule in ("rep-l", "rep-r"):
        slot = "ante" if d.rule == "rep-l" else "succ"
        spare = _slot_of(prems[0].sequent, slot) - _slot_of(target, slot)
        if len(spare) == 1:
            ((sp, n),) = spare.counts().items()
            if n == 1:
                return _contract(prems[0], slot, sp, calc)
    raise TransformError(
        "substitution cannot pass rule %s at %s" % (d.rule, fmt_sequent(d.sequent))
    )


# ---------------------------------------------------------------------------
# equality-path utilities for cut reduction


def _eq_path(s: LabelledSequent, frm: StateVar, to: StateVar) -> Optional[List[StateVar]]:
    """Shortest path from frm to to in the equality-term graph."""
    if frm == to:
        return [frm]
    adj: Dict[StateVar, Set[StateVar]] = {}
    for a, b in s.eq.support():
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen = {frm: None}
    queue = [frm]
    while queue:
        cur = queue.pop(0)
        for nxt in sorted(adj.get(cur, ())):
            if nxt in seen:
                continue
            seen[nxt] = cur
            if nxt == to:
                path = [to]
                while path[-1] is not None and seen[path[-1]] is not None:
                    path.append(seen[path[-1]])
                path.append(frm) if path[-1] != frm else None
                return list(reversed(path))
            queue.append(nxt)
    return None


def _transport(d: Derivation, slot: str, frm: StateVar, to: StateVar, f: Formula, calc: Calculus) -> Derivation:
    """Move a formula copy along an equality path: from a derivation of
    S + (frm,f) produce one of S + (to,f); rep rules absorb the intermediate
    copies below."""
    if frm == to:
        return d
    path = _eq_path(d.sequent, frm, to)
    if path is None:
        raise TransformError(
            "no syntactic equality path links %s and %s" % (frm, to)
        )
    rep = "rep-l" if slot == "ante" else "rep-r"
    extras = [(v, f) for v in path[1:]]  # intermediate nodes plus the target
    top = weaken(d, calc, **{slot: extras})
    cur = top
    seq = top.sequent
    # absorb copies from frm outward: each step removes the copy at path[i]
    for i in range(len(path) - 1):
        seq = _remove_one(seq, slot, (path[i], f))
        cur = _node(calc, seq, rep, [cur], "transport")
    return cur


def _absorb_copy(d: Derivation, slot: str, at: StateVar, source: StateVar, f: Formula, calc: Calculus) -> Derivation:
    """Remove one (at,f) copy from the endsequent, justified by a copy at an
    equality-connected source: rep chain below, or contraction when at==source."""
    if at == source:
        return _contract(d, slot, (at, f), calc)
    path = _eq_path(d.sequent, source, at)
    if path is None:
        raise TransformError("no equality path from %s to %s" % (source, at))
    rep = "rep-l" if slot == "ante" else "rep-r"
    inter = path[1:-1]
    cur = weaken(d, calc, **{slot: [(v, f) for v in inter]})
    seq = cur.sequent
    for i in range(len(path) - 1, 0, -1):
        seq = _remove_one(seq, slot, (path[i], f))
        cur = _node(calc, seq, rep, [cur], "absorb")
    return cur


# ---------------------------------------------------------------------------
# cut elimination (the shared-relation cut, LTSE-preserving)


@dataclass
class ReductionRecorder:
    """One entry per reduction step: (cut-formula size, premise height sum).
    Every recursive reduction must decrease the pair lexicographically."""

    steps: List[Tuple[int, int]] = field(default_factory=list)

    def enter(self, measure: Tuple[int, int], parent: Optional[Tuple[int, int]]):
        self.steps.append(measure)
        if parent is not None and not measure < parent:
            raise TransformError(
                "cut-reduction measure did not decrease: %s vs parent %s"
                % (measure, parent)
            )


def _mix_conclusion(sL: LabelledSequent, sR: LabelledSequent, a: Formula, L: Multiset, Z: Multiset) -> LabelledSequent:
    succ = sL.succ
    for w in L:
        succ = succ.remove((w, a))
    ante = sR.ante
    for z in Z:
        ante = ante.remove((z, a))
    return LabelledSequent(sL.rel, sL.eq + sR.eq, sL.ante + ante, succ + sR.succ)


def _instantiated_principals(rule: RuleSchema, binding: Dict, side: str):
    """Conclusion-side explicit terms that at least one premise drops."""
    from .calculus import inst_formula, inst_var

    out = []
    for vp, fp in getattr(rule.conclusion, side):
        consumed = any((vp, fp) not in getattr(prem, side) for prem in rule.premises)
        out.append((inst_var(vp, binding), inst_formula(fp, binding), consumed))
    return out


def _blocked(rule: RuleSchema, binding: Dict, side: str, a: Formula, C: LabelledSequent):
    """The instance's side-principal is a mix copy with no survivor in C."""
    for v, f, _consumed in _instantiated_principals(rule, binding, side):
        if f == a and _slot_of(C, side).count((v, a)) == 0:
            return v
    return None


def _drop_succ_term(d: Derivation, term, calc: Calculus) -> Derivation:
    """Remove one succedent occurrence of a bottom-labelled formula; sound
    because no rule can introduce bottom on the right."""
    target = _remove_one(d.sequent, "succ", term)
    if not d.premises:
        return _leaf_on(calc, target, preferred=d.rule)
    if all(term in p.sequent.succ for p in d.premises):
        prems = [_drop_succ_term(p, term, calc) for p in d.premises]
        b = infer_bindings(calc, d.rule, target, [p.sequent for p in prems])
        if b is not None:
            return Derivation(target, d.rule, tuple(prems), b)
        if d.rule == "rep-r":
            other = (d.bindings["y"], d.bindings["A"])
            cur = _drop_succ_term(d.premises[0], term, calc)
            return _drop_succ_term(cur, other, calc)
    raise TransformError("cannot drop %r below %s" % (term, d.rule))


def _is_ip_init(rule: RuleSchema) -> bool:
    return bool(rule.conclusion.rel)


class _Mixer:
    def __init__(self, calc: Calculus, recorder: ReductionRecorder, fresh: Fresh):
        self.calc = calc
        self.rec = recorder
        self.fresh = fresh

    # -- helpers ----------------------------------------------------------

    def _plain_leaf(self, C, preferred):
        return _leaf_on(self.calc, C, preferred=preferred)

    def _weaken_to_mix(self, dSide: Derivation, other: LabelledSequent, a, copies: Multiset, side: str) -> Derivation:
        """Lift one premise into the mix conclusion by pure weakening (the
        single-copy route: the other branch contributes context only)."""
        if side == "left":
            ante = other.ante
            for z in copies:
                ante = ante.remove((z, a))
            return weaken(dSide, self.calc, eq=other.eq, ante=ante, succ=other.succ)
        succ = other.succ
        for w in copies:
            succ = succ.remove((w, a))
        return weaken(dSide, self.calc, eq=other.eq, ante=other.ante, succ=succ)

    def _align_right(self, dL: Derivation, rel_extra: Multiset) -> Derivation:
        if not rel_extra:
            return dL
        return weaken(dL, self.calc, rel=rel_extra)

    def _left_piece(self, dL, dLp, dR, a, L, yi, Z, measure):
        """Derivation of C (+ dLp's active additions): mixes away the other
        copies, or plain weakening when yi was the only one."""
        L2 = L.remove(yi)
        if L2:
            dR2 = self._align_right(dR, dLp.sequent.rel - dR.sequent.rel)
            return self.mix(dLp, dR2, a, L2, Z, measure)
        return self._weaken_to_mix(dLp, dR.sequent, a, Z, side="left")

    def _right_piece(self, dL, dR, dRp, a, L, Z, zj, measure):
        Z2 = Z.remove(zj)
        if Z2:
            dL2 = self._align_right(dL, dRp.sequent.rel - dL.sequent.rel)
            return self.mix(dL2, dRp, a, L, Z2, measure)
        return self._weaken_to_mix(dRp, dL.sequent, a, L, side="right")

    def _bridge(self, C: LabelledSequent, parent_from: StateVar, child: StateVar, parent_to: StateVar):
        """ls-sc chain transferring `child` of `parent_from` to a fresh
        equality-linked sibling under `parent_to`.  Returns (C_plus, wrap,
        final_child); wrap turns a derivation of C_plus into one of C."""
        if parent_from == parent_to:
            return C, (lambda dd: dd), child
        path = _eq_path(C, parent_from, parent_to)
        if path is None:
            raise TransformError(
                "no syntactic equality path links %s and %s" % (parent_from, parent_to)
            )
        steps = []
        cur = C
        prev_parent, prev_child = parent_from, child
        for nxt in path[1:]:
            f = self.fresh.take()
            stepped = LabelledSequent(
                cur.rel.add((nxt, f)),
                cur.eq.add((prev_child, f)),
                cur.ante,
                cur.succ,
            )
            steps.append((cur, stepped))
            cur = stepped
            prev_parent, prev_child = nxt, f

        def wrap(dd: Derivation) -> Derivation:
            out = dd
            for concl, prem in reversed(steps):
                out = _node(self.calc, concl, "ls-sc", [out], "bridge")
            return out

        return cur, wrap, prev_child

    def _contract_to(self, d: Derivation, target: LabelledSequent) -> Derivation:
        return _contract_down(d, target, self.calc)

    # -- main dispatch -----------------------------------------------------

    def mix(self, dL: Derivation, dR: Derivation, a: Formula, L: Multiset, Z: Multiset, parent: Optional[Tuple[int, int]]) -> Derivation:
        if dL.sequent.rel != dR.sequent.rel:
            raise TransformError("mix premises must share the relation mset")
        measure = (size(a), dL.height() + dR.height())
        self.rec.enter(measure, parent)
        C = _mix_conclusion(dL.sequent, dR.sequent, a, L, Z)

        ruleL = _lookup_rule(self.calc, dL.rule)
        ruleR = _lookup_rule(self.calc, dR.rule)
        if ruleL is None or ruleR is None:
            raise TransformError("mix premises must be cutfree rule trees")

        if not dL.premises:
            return self._left_leaf(dL, dR, a, L, Z, C, ruleL, measure)
        if not dR.premises:
            return self._right_leaf(dL, dR, a, L, Z, C, ruleR, measure)

        stuck_l = any(
            p.sequent.succ.count((w, a)) < L.count(w)
            for p in dL.premises
            for w in L.support()
        )
        vL = _blocked(ruleL, dL.bindings, "succ", a, C)
        if not stuck_l and vL is None:
            return self._permute_left(dL, dR, a, L, Z, C, measure)
        if dL.rule == "rep-r" and vL is not None:
            y2 = dL.bindings["y"] if dL.bindings["x"] == vL else dL.bindings["x"]
            return self.mix(dL.premises[0], dR, a, L.add(y2), Z, measure)
        stuck_r = any(
            p.sequent.ante.count((z2, a)) < Z.count(z2)
            for p in dR.premises
            for z2 in Z.support()
        )
        vR = _blocked(ruleR, dR.bindings, "ante", a, C)
        if not stuck_r and vR is None:
            return self._permute_right(dL, dR, a, L, Z, C, measure)
        if dR.rule == "rep-l" and vR is not None:
            y2 = dR.bindings["y"] if dR.bindings["x"] == vR else dR.bindings["x"]
            return self.mix(dL, dR.premises[0], a, L, Z.add(y2), measure)
        yi = dL.bindings.get("x") if vL is None else vL
        zj = dR.bindings.get("x") if vR is None else vR
        return self._logical(dL, dR, a, L, Z, yi, zj, C, measure)

    # -- leaves -------------------------------------------------------------

    def _left_leaf(self, dL, dR, a, L, Z, C, ruleL, measure):
        b = dL.bindings or infer_bindings(self.calc, dL.rule, dL.sequent, [])
        vL = _blocked(ruleL, b or {}, "succ", a, C)
        if vL is None:
            return self._plain_leaf(C, dL.rule)
        if _is_ip_init(ruleL):
            raise TransformError(
                "atomic cut against the monotone initial sequent is outside the"
                " implemented reduction (intuitionistic leaf case)"
            )
        # classical init: the antecedent copy at the same label survives
        W = self._weaken_to_mix(dR, dL.sequent, a, L, side="right")
        for z in Z:
            W = _absorb_copy(W, "ante", z, vL, a, self.calc)
        return self._contract_to(W, C)

    def _right_leaf(self, dL, dR, a, L, Z, C, ruleR, measure):
        b = dR.bindings or infer_bindings(self.calc, dR.rule, dR.sequent, [])
        vR = _blocked(ruleR, b, "ante", a, C)
        if vR is None:
            return self._plain_leaf(C, dR.rule)
        if dR.rule == "init-bot":
            W = self._weaken_to_mix(dL, dR.sequent, a, Z, side="left")
            for w in L:
                W = _drop_succ_term(W, (w, a), self.calc)
            return self._contract_to(W, C)
        if _is_ip_init(ruleR):
            raise TransformError(
                "atomic cut against the monotone initial sequent is outside the"
                " implemented reduction (intuitionistic leaf case)"
            )
        # classical init consumed its antecedent atom: its succedent twin at
        # the same label survives into C and absorbs the left copies
        W = self._weaken_to_mix(dL, dR.sequent, a, Z, side="left")
        for w in L:
            W = _absorb_copy(W, "succ", w, b["x"], a, self.calc)
        return self._contract_to(W, C)

    # -- permutations ------------------------------------------------------

    def _permute_left(self, dL, dR, a, L, Z, C, measure):
        dL = refresh_eigens(dL, set(dR.sequent.vars()), self.calc, self.fresh)
        subs = []
        for p in dL.premises:
            dR2 = self._align_right(dR, p.sequent.rel - dR.sequent.rel)
            subs.append(self.mix(p, dR2, a, L, Z, measure))
        return _node(self.calc, C, dL.rule, subs, "permute-left")

    def _permute_right(self, dL, dR, a, L, Z, C, measure):
        dR = refresh_eigens(dR, set(dL.sequent.vars()), self.calc, self.fresh)
        subs = []
        for p in dR.premises:
            dL2 = self._align_right(dL, p.sequent.rel - dL.sequent.rel)
            subs.append(self.mix(dL2, p, a, L, Z, measure))
        return _node(self.calc, C, dR.rule, subs, "permute-right")

    # -- logical reductions --------------------------------------------------

    def _logical(self, dL, dR, a, L, Z, yi, zj, C, measure):
        from .formula import And, Box, Diamond, Implies, Or

        pair = (dL.rule, dR.rule)
        if isinstance(a, And) and pair == ("and-r", "and-l"):
            return self._reduce_and(dL, dR, a, L, Z, yi, zj, C, measure)
        if isinstance(a, Or) and pair == ("or-r", "or-l"):
            return self._reduce_or(dL, dR, a, L, Z, yi, zj, C, measure)
        if isinstance(a, Implies) and pair == ("imp-r", "imp-l"):
            if self.calc.name.startswith("LSEqIp"):
                return self._reduce_imp_ip(dL, dR, a, L, Z, yi, zj, C, measure)
            return self._reduce_imp_k(dL, dR, a, L, Z, yi, zj, C, measure)
        if isinstance(a, Box) and pair == ("box-r", "box-l"):
            return self._reduce_box(dL, dR, a, L, Z, yi, zj, C, measure)
        if isinstance(a, Diamond) and pair == ("dia-r", "dia-l"):
            return self._reduce_dia(dL, dR, a, L, Z, yi, zj, C, measure)
        raise TransformError("unreducible principal pair %s / %s on %s" % (dL.rule, dR.rule, fmt_formula(a)))

    def _reduce_and(self, dL, dR, a, L, Z, yi, zj, C, measure):
        b, c = a.left, a.right
        rp = self._right_piece(dL, dR, dR.premises[0], a, L, Z, zj, measure)
        lp1 = self._left_piece(dL, dL.premises[0], dR, a, L, yi, Z, measure)
        lp2 = self._left_piece(dL, dL.premises[1], dR, a, L, yi, Z, measure)
        lp1 = _transport(lp1, "succ", yi, zj, b, self.calc)
        lp2 = _transport(lp2, "succ", yi, zj, c, self.calc)
        cut1 = self.mix(lp1, rp, b, Multiset([zj]), Multiset([zj]), measure)
        cut2 = self.mix(lp2, cut1, c, Multiset([zj]), Multiset([zj]), measure)
        return self._contract_to(cut2, C)

    def _reduce_or(self, dL, dR, a, L, Z, yi, zj, C, measure):
        b, c = a.left, a.right
        lp = self._left_piece(dL, dL.premises[0], dR, a, L, yi, Z, measure)
        lp = _transport(lp, "succ", yi, zj, b, self.calc)
        lp = _transport(lp, "succ", yi, zj, c, self.calc)
        rp1 = self._right_piece(dL, dR, dR.premises[0], a, L, Z, zj, measure)
        rp2 = self._right_piece(dL, dR, dR.premises[1], a, L, Z, zj, measure)
        cut1 = self.mix(lp, rp1, b, Multiset([zj]), Multiset([zj]), measure)
        cut2 = self.mix(cut1, rp2, c, Multiset([zj]), Multiset([zj]), measure)
        return self._contract_to(cut2, C)

    def _reduce_imp_k(self, dL, dR, a, L, Z, yi, zj, C, measure):
        b, c = a.left, a.right
        lp = self._left_piece(dL, dL.premises[0], dR, a, L, yi, Z, measure)
        lp = _transport(lp, "ante", yi, zj, b, self.calc)
        lp = _transport(lp, "succ", yi, zj, c, self.calc)
        rp1 = self._right_piece(dL, dR, dR.premises[0], a, L, Z, zj, measure)
        rp2 = self._right_piece(dL, dR, dR.premises[1], a, L, Z, zj, measure)
        cutb = self.mix(rp1, lp, b, Multiset([zj]), Multiset([zj]), measure)
        cutc = self.mix(cutb, rp2, c, Multiset([zj]), Multiset([zj]), measure)
        return self._contract_to(cutc, C)

    def _reduce_box(self, dL, dR, a, L, Z, yi, zj, C, measure):
        body = a.arg
        w = dL.bindings["y"]
        vhat = dR.bindings["y"]
        Cp, wrap, f = self._bridge(C, zj, vhat, yi)
        bridge_rel = Cp.rel - C.rel
        bridge_eq = Cp.eq - C.eq

        lp = self._left_piece(dL, dL.premises[0], dR, a, L, yi, Z, measure)
        lp = weaken(lp, self.calc, rel=bridge_rel, eq=bridge_eq + Multiset([(w, f)]))
        sub = substitute_merge(lp, yi, w, f, self.calc)

        rp = self._right_piece(dL, dR, dR.premises[0], a, L, Z, zj, measure)
        rp = weaken(rp, self.calc, rel=bridge_rel, eq=bridge_eq)
        rp = _transport(rp, "ante", vhat, f, body, self.calc)

        cutb = self.mix(sub, rp, body, Multiset([f]), Multiset([f]), measure)
        return wrap(self._contract_to(cutb, Cp))

    def _reduce_dia(self, dL, dR, a, L, Z, yi, zj, C, measure):
        body = a.arg
        vhat = dL.bindings["y"]
        w = dR.bindings["y"]
        Cp, wrap, f = self._bridge(C, yi, vhat, zj)
        bridge_rel = Cp.rel - C.rel
        bridge_eq = Cp.eq - C.eq

        rp = self._right_piece(dL, dR, dR.premises[0], a, L, Z, zj, measure)
        rp = weaken(rp, self.calc, rel=bridge_rel, eq=bridge_eq + Multiset([(w, f)]))
        sub = substitute_merge(rp, zj, w, f, self.calc)

        lp = self._left_piece(dL, dL.premises[0], dR, a, L, yi, Z, measure)
        lp = weaken(lp, self.calc, rel=bridge_rel, eq=bridge_eq)
        lp = _transport(lp, "succ", vhat, f, body, self.calc)

        cutb = self.mix(lp, sub, body, Multiset([f]), Multiset([f]), measure)
        return wrap(self._contract_to(cutb, Cp))

    def _reduce_imp_ip(self, dL, dR, a, L, Z, yi, zj, C, measure):
        b, c = a.left, a.right
        w = dL.bindings["y"]
        vhat = dR.bindings["y"]
        Cp, wrap, f = self._bridge(C, zj, vhat, yi)
        bridge_rel = Cp.rel - C.rel
        bridge_eq = Cp.eq - C.eq

        lp = self._left_piece(dL, dL.premises[0], dR, a, L, yi, Z, measure)
        lp = weaken(lp, self.calc, rel=bridge_rel, eq=bridge_eq + Multiset([(w, f)]))
        sub = substitute_merge(lp, yi, w, f, self.calc)

        rp1 = self._right_piece(dL, dR, dR.premises[0], a, L, Z, zj, measure)
        rp1 = weaken(rp1, self.calc, rel=bridge_rel, eq=bridge_eq)
        rp1 = _transport(rp1, "succ", vhat, f, b, self.calc)
        rp2 = self._right_piece(dL, dR, dR.premises[1], a, L, Z, zj, measure)
        rp2 = weaken(rp2, self.calc, rel=bridge_rel, eq=bridge_eq)
        rp2 = _transport(rp2, "ante", vhat, f, c, self.calc)

        cutb = self.mix(rp1, sub, b, Multiset([f]), Multiset([f]), measure)
        cutc = self.mix(cutb, rp2, c, Multiset([f]), Multiset([f]), measure)
        return wrap(self._contract_to(cutc, Cp))


def _find_topmost_cut(d: Derivation, path=()):
    """Preorder-first cut node whose subderivations are cutfree."""
    for i, p in enumerate(d.premises):
        found = _find_topmost_cut(p, path + (i,))
        if found is not None:
            return found
    if d.rule == "cut":
        return path, d
    return None


def _replace_at(d: Derivation, path: Tuple[int, ...], new: Derivation) -> Derivation:
    if not path:
        return new
    prems = list(d.premises)
    prems[path[0]] = _replace_at(prems[path[0]], path[1:], new)
    return Derivation(d.sequent, d.rule, tuple(prems), d.bindings)


def eliminate_cuts(d: Derivation, calc: Calculus, require_ltse: bool = False, recorder: Optional[ReductionRecorder] = None) -> Derivation:
    """Remove every cut node, always reducing a topmost cut first.  With
    require_ltse the input must be an LTSE-derivation and the output is one."""
    if require_ltse and not is_ltse_derivation(d):
        raise ValueError("input is not an LTSE-derivation")
    rec = recorder if recorder is not None else ReductionRecorder()
    while True:
        found = _find_topmost_cut(d)
        if found is None:
            break
        path, node = found
        b = node.bindings
        if b is None:
            b = infer_bindings(calc, "cut", node.sequent, [p.sequent for p in node.premises])
            if b is None:
                raise TransformError("cut node does not match the shared-relation cut rule")
        x, a = b["x"], b["A"]
        fresh = Fresh(max(max_var_index(node.premises[0]), max_var_index(node.premises[1])))
        mixer = _Mixer(calc, rec, fresh)
        reduced = mixer.mix(
            node.premises[0], node.premises[1], a, Multiset([x]), Multiset([x]), None
        )
        if not sequents_match(reduced.sequent, node.sequent):
            raise TransformError("cut reduction changed the endsequent")
        d = _replace_at(d, path, reduced)
    if require_ltse and not is_ltse_derivation(d):
        raise TransformError("cut elimination left the LTSE fragment")
    return d
