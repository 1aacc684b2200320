"""Derivation trees, instance checking against a calculus, identity
derivations, JSON/pretty forms, and the derivation-level translation between
indexed nested and labelled calculi."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from .calculus import (
    Calculus,
    FVar,
    LabPattern,
    PAtom,
    RuleSchema,
    SV,
    apply_ins,
    apply_lab,
    builtin,
    fresh_indices_for,
    fresh_vars_for,
    instantiate_lab,
    match_ins_holes,
    match_lab_conclusion,
    match_lab_pattern,
)
from .formula import Bottom, Box, Diamond, Formula, Implies, NegVar, PropVar, Top, And, Or, fmt_formula, parse_formula
from .multiset import Multiset
from .nested import IndexedNestedSequent, fmt_ins, ins_from_json, ins_to_json, ins_to_ltse
from .sequent import (
    LabelledSequent,
    StateVar,
    children_map,
    eq_entails,
    fmt_sequent,
    is_ltse,
    seq,
    sequent_from_json,
    sequent_to_json,
    tree_root,
)

Sequent = Union[LabelledSequent, IndexedNestedSequent]

x_, u_ = SV("x"), SV("u")
A_ = FVar("A")

# The shared-relation cut rule (the right-hand variant of the two displayed):
# both premises carry the same relation mset, so LTSE-ness of the premises
# carries to the conclusion.
CUT_RULE = RuleSchema(
    name="cut",
    kind="labelled",
    premises=(
        LabPattern(succ=((x_, A_),), eq_ctx=("E1",), ante_ctx=("G1",), succ_ctx=("D1",)),
        LabPattern(ante=((x_, A_),), eq_ctx=("E2",), ante_ctx=("G2",), succ_ctx=("D2",)),
    ),
    conclusion=LabPattern(
        eq_ctx=("E1", "E2"), ante_ctx=("G1", "G2"), succ_ctx=("D1", "D2")
    ),
    structural=False,
)


@dataclass(frozen=True, eq=False)
class Derivation:
    sequent: Sequent
    rule: str
    premises: Tuple["Derivation", ...] = ()
    bindings: Optional[Dict] = None

    def height(self) -> int:
        return 1 + max((p.height() for p in self.premises), default=0)

    def nodes(self):
        yield self
        for p in self.premises:
            yield from p.nodes()

    def rule_count(self, name: str) -> int:
        return sum(1 for n in self.nodes() if n.rule == name)

    def is_labelled(self) -> bool:
        return isinstance(self.sequent, LabelledSequent)


def mk(sequent: Sequent, rule: str, premises=(), bindings=None) -> Derivation:
    return Derivation(sequent, rule, tuple(premises), bindings)


def height(d: Derivation) -> int:
    return d.height()


def is_ltse_derivation(d: Derivation) -> bool:
    if not d.is_labelled():
        raise TypeError("LTSE-derivations are a labelled-sequent notion")
    return all(is_ltse(n.sequent) for n in d.nodes())


# ---------------------------------------------------------------------------
# checking


@dataclass
class Verdict:
    ok: bool
    message: str = ""
    path: Tuple[int, ...] = ()

    def __bool__(self):
        return self.ok


def _lookup_rule(calc: Calculus, name: str) -> Optional[RuleSchema]:
    if name == "cut" and calc.kind in ("labelled", "one-sided"):
        return CUT_RULE
    try:
        return calc.rule(name)
    except KeyError:
        return None


def _eqnorm(s: LabelledSequent) -> LabelledSequent:
    """Equality terms denote unordered pairs; canonicalize for comparison."""
    return LabelledSequent(
        s.rel, Multiset(tuple(sorted(t)) for t in s.eq), s.ante, s.succ
    )


def sequents_match(a: Sequent, b: Sequent) -> bool:
    if isinstance(a, LabelledSequent) and isinstance(b, LabelledSequent):
        return _eqnorm(a) == _eqnorm(b)
    return a == b


def _fresh_ok_lab(rule: RuleSchema, binding: Dict, concl: LabelledSequent) -> bool:
    used = set(concl.vars())
    for name in rule.fresh:
        v = binding.get(name)
        if not isinstance(v, StateVar) or v in used:
            return False
    for a, b in rule.distinct:
        if binding.get(a) == binding.get(b):
            return False
    return True


def _fresh_ok_ins(rule: RuleSchema, binding: Dict, concl: IndexedNestedSequent) -> bool:
    used = set(concl.indices())
    for name in rule.fresh_indices:
        v = binding.get("#" + name)
        if not isinstance(v, int) or v in used:
            return False
    return True


def check_instance(calc: Calculus, rule_name: str, concl: Sequent, premises: List[Sequent], binding: Optional[Dict]) -> Verdict:
    rule = _lookup_rule(calc, rule_name)
    if rule is None:
        return Verdict(False, "unknown rule %r" % rule_name)
    if len(premises) != rule.arity():
        return Verdict(False, "rule %s expects %d premises, got %d" % (rule_name, rule.arity(), len(premises)))
    if binding is None:
        binding = infer_bindings(calc, rule_name, concl, premises)
        if binding is None:
            return Verdict(False, "no instantiation of %s matches this inference" % rule_name)
    try:
        if rule.kind == "ins":
            if not isinstance(concl, IndexedNestedSequent):
                return Verdict(False, "rule %s needs an indexed nested sequent" % rule_name)
            if not _fresh_ok_ins(rule, binding, concl):
                return Verdict(False, "side condition violated for %s (fresh index in conclusion)" % rule_name)
            ok = False
            for b in match_ins_holes(rule.conclusion, concl, seed=binding):
                if all(b.get(k) == v for k, v in binding.items() if k in b):
                    binding = b
                    ok = True
                    break
            if not ok:
                return Verdict(False, "conclusion is not an instance of %s under the recorded bindings" % rule_name)
            built = apply_ins(rule, concl, binding)
            if list(built) != list(premises):
                return Verdict(False, "premises do not match the %s instance" % rule_name)
        else:
            if not isinstance(concl, LabelledSequent):
                return Verdict(False, "rule %s needs a labelled sequent" % rule_name)
            if not _fresh_ok_lab(rule, binding, concl):
                return Verdict(False, "side condition violated for %s" % rule_name)
            one_sided = rule.kind == "one-sided"
            if not sequents_match(instantiate_lab(rule.conclusion, binding, one_sided), concl):
                return Verdict(False, "conclusion is not an instance of %s under the recorded bindings" % rule_name)
            built = apply_lab(rule, binding)
            if len(built) != len(premises) or not all(
                sequents_match(u, w) for u, w in zip(built, premises)
            ):
                return Verdict(False, "premises do not match the %s instance" % rule_name)
    except Exception as exc:  # incomplete bindings and the like
        return Verdict(False, "cannot instantiate %s: %s" % (rule_name, exc))
    return Verdict(True)


def check(d: Derivation, calc: Calculus) -> Verdict:
    """Accepts iff every node is a correct instance of a rule of the calculus
    (plus the shared-relation cut for labelled kinds)."""
    expected = LabelledSequent if calc.kind in ("labelled", "one-sided") else IndexedNestedSequent
    if not isinstance(d.sequent, expected):
        return Verdict(False, "sequent kind does not match calculus %s" % calc.name)

    def walk(node: Derivation, path: Tuple[int, ...]) -> Verdict:
        v = check_instance(calc, node.rule, node.sequent, [p.sequent for p in node.premises], node.bindings)
        if not v:
            return Verdict(False, v.message, path)
        for i, p in enumerate(node.premises):
            sub = walk(p, path + (i,))
            if not sub:
                return sub
        return Verdict(True)

    return walk(d, ())


def infer_bindings(calc: Calculus, rule_name: str, concl: Sequent, premises: List[Sequent]) -> Optional[Dict]:
    """First instantiation (in canonical matcher order) that explains the
    inference; None when it is not an instance."""
    rule = _lookup_rule(calc, rule_name)
    if rule is None or len(premises) != rule.arity():
        return None
    if rule.name == "cut":
        return _infer_cut(concl, premises)
    if rule.kind == "ins":
        for b in match_ins_holes(rule.conclusion, concl, None):
            b2 = b
            for holes, prem in zip(rule.premises, premises):
                got = None
                for cand in match_ins_holes(holes, prem, seed=_strip_rests(b2, rule)):
                    got = cand
                    break
                if got is None:
                    b2 = None
                    break
                b2 = _merge_consistent(b2, got)
                if b2 is None:
                    break
            if b2 is None:
                continue
            if not _fresh_ok_ins(rule, b2, concl):
                continue
            if apply_ins(rule, concl, b2) == list(premises):
                return b2
        return None
    for b in match_lab_conclusion(rule, concl, None):
        b2 = b
        for pat, prem in zip(rule.premises, premises):
            got = None
            for cand in match_lab_pattern(pat, prem, seed=b2):
                got = cand
                break
            if got is None:
                b2 = None
                break
            b2 = got
        if b2 is None:
            continue
        if not _fresh_ok_lab(rule, b2, concl):
            continue
        one_sided = rule.kind == "one-sided"
        built = [instantiate_lab(p, b2, one_sided) for p in rule.premises]
        if all(sequents_match(u, w) for u, w in zip(built, premises)):
            return b2
    return None


def _strip_rests(binding: Dict, rule: RuleSchema) -> Dict:
    """Premise-hole matching re-derives child-rest paths against the premise
    tree; conclusion-bound rest values (same positions) stay consistent, so
    only the @paths and scalar metas are worth seeding."""
    return {
        k: v
        for k, v in binding.items()
        if k.startswith("@") or k.startswith("#") or isinstance(v, (Formula, str, StateVar))
    }


def _merge_consistent(a: Dict, b: Dict) -> Optional[Dict]:
    out = dict(a)
    for k, v in b.items():
        if k in out and out[k] != v:
            if k.startswith("C_"):
                continue  # child-rest positions differ between trees; harmless
            return None
        out.setdefault(k, v)
    return out


def _infer_cut(concl: Sequent, premises: List[Sequent]) -> Optional[Dict]:
    left, right = premises
    if left.rel != right.rel or left.rel != concl.rel:
        return None
    for x, f in left.succ.support():
        if (x, f) not in right.ante:
            continue
        b = {
            "x": x,
            "A": f,
            "R": concl.rel,
            "E1": left.eq,
            "E2": right.eq,
            "G1": left.ante,
            "G2": right.ante.remove((x, f)),
            "D1": left.succ.remove((x, f)),
            "D2": right.succ,
        }
        if sequents_match(instantiate_lab(CUT_RULE.conclusion, b), concl):
            return b
    return None


def ensure_bindings(d: Derivation, calc: Calculus) -> Derivation:
    """Fill in missing instantiations (e.g. after JSON import)."""
    prems = tuple(ensure_bindings(p, calc) for p in d.premises)
    b = d.bindings
    if b is None:
        b = infer_bindings(calc, d.rule, d.sequent, [p.sequent for p in prems])
        if b is None:
            raise ValueError("cannot infer an instantiation for rule %r" % d.rule)
    return Derivation(d.sequent, d.rule, prems, b)


# ---------------------------------------------------------------------------
# identity derivations (Lemma 1 construction)


def identity_derivation(target: LabelledSequent, x: StateVar, a: Formula, calc: Optional[Calculus] = None) -> Derivation:
    """Derivation of R,E, x:A,Γ ⊢ x:A,Δ by recursion on the size of A."""
    calc = calc or builtin("LSEqK")
    if (x, a) not in target.ante or (x, a) not in target.succ:
        raise ValueError("target must carry x:A on both sides")
    return _identity(target, x, a)


def _identity(s: LabelledSequent, x: StateVar, a: Formula) -> Derivation:
    base = {"R": s.rel, "E": s.eq}

    def ctxs(ante_out, succ_out):
        return dict(base, G=ante_out, D=succ_out)

    if isinstance(a, PropVar):
        b = dict(ctxs(s.ante.remove((x, a)), s.succ.remove((x, a))), x=x, p=a.name)
        return mk(s, "init", (), b)
    if isinstance(a, Bottom):
        b = dict(ctxs(s.ante.remove((x, a)), s.succ), x=x)
        return mk(s, "init-bot", (), b)
    if isinstance(a, (Top, NegVar)):
        raise ValueError("no identity derivation for %s in LSEqK" % fmt_formula(a))
    if isinstance(a, And):
        l, r = a.left, a.right
        s1 = LabelledSequent(s.rel, s.eq, s.ante, s.succ.remove((x, a)).add((x, l)))
        s2 = LabelledSequent(s.rel, s.eq, s.ante, s.succ.remove((x, a)).add((x, r)))
        d1 = _and_l_then_identity(s1, x, a, l)
        d2 = _and_l_then_identity(s2, x, a, r)
        b = dict(ctxs(s.ante, s.succ.remove((x, a))), x=x, A=l, B=r)
        return mk(s, "and-r", (d1, d2), b)
    if isinstance(a, Or):
        l, r = a.left, a.right
        t1 = LabelledSequent(s.rel, s.eq, s.ante.remove((x, a)).add((x, l)), s.succ)
        t2 = LabelledSequent(s.rel, s.eq, s.ante.remove((x, a)).add((x, r)), s.succ)
        d1 = _or_r_then_identity(t1, x, a, l)
        d2 = _or_r_then_identity(t2, x, a, r)
        b = dict(ctxs(s.ante.remove((x, a)), s.succ), x=x, A=l, B=r)
        return mk(s, "or-l", (d1, d2), b)
    if isinstance(a, Implies):
        l, r = a.left, a.right
        s1 = LabelledSequent(s.rel, s.eq, s.ante.add((x, l)), s.succ.remove((x, a)).add((x, r)))
        u1 = LabelledSequent(s1.rel, s1.eq, s1.ante.remove((x, a)), s1.succ.add((x, l)))
        u2 = LabelledSequent(s1.rel, s1.eq, s1.ante.remove((x, a)).add((x, r)), s1.succ)
        d1 = _identity(u1, x, l)
        d2 = _identity(u2, x, r)
        bl = dict(base, G=s1.ante.remove((x, a)), D=s1.succ, x=x, A=l, B=r)
        dl = mk(s1, "imp-l", (d1, d2), bl)
        b = dict(ctxs(s.ante, s.succ.remove((x, a))), x=x, A=l, B=r)
        return mk(s, "imp-r", (dl,), b)
    if isinstance(a, Box):
        arg = a.arg
        y = StateVar(s.max_index() + 1)
        s1 = LabelledSequent(s.rel.add((x, y)), s.eq, s.ante, s.succ.remove((x, a)).add((y, arg)))
        s2 = LabelledSequent(s1.rel, s1.eq, s1.ante.add((y, arg)), s1.succ)
        d2 = _identity(s2, y, arg)
        bl = {"R": s1.rel.remove((x, y)), "E": s1.eq, "G": s1.ante.remove((x, a)), "D": s1.succ, "x": x, "y": y, "A": arg}
        d1 = mk(s1, "box-l", (d2,), bl)
        b = dict(ctxs(s.ante, s.succ.remove((x, a))), x=x, y=y, A=arg)
        return mk(s, "box-r", (d1,), b)
    if isinstance(a, Diamond):
        arg = a.arg
        y = StateVar(s.max_index() + 1)
        s1 = LabelledSequent(s.rel.add((x, y)), s.eq, s.ante.remove((x, a)).add((y, arg)), s.succ)
        s2 = LabelledSequent(s1.rel, s1.eq, s1.ante, s1.succ.add((y, arg)))
        d2 = _identity(s2, y, arg)
        br = {"R": s1.rel.remove((x, y)), "E": s1.eq, "G": s1.ante, "D": s1.succ.remove((x, a)), "x": x, "y": y, "A": arg}
        d1 = mk(s1, "dia-r", (d2,), br)
        b = dict(ctxs(s.ante.remove((x, a)), s.succ), x=x, y=y, A=arg)
        return mk(s, "dia-l", (d1,), b)
    raise ValueError("unsupported formula %r" % (a,))


def _and_l_then_identity(s: LabelledSequent, x: StateVar, a, piece) -> Derivation:
    inner = LabelledSequent(s.rel, s.eq, s.ante.remove((x, a)).add((x, a.left)).add((x, a.right)), s.succ)
    d = _identity(inner, x, piece)
    b = {"R": s.rel, "E": s.eq, "G": s.ante.remove((x, a)), "D": s.succ, "x": x, "A": a.left, "B": a.right}
    return mk(s, "and-l", (d,), b)


def _or_r_then_identity(s: LabelledSequent, x: StateVar, a, piece) -> Derivation:
    inner = LabelledSequent(s.rel, s.eq, s.ante, s.succ.remove((x, a)).add((x, a.left)).add((x, a.right)))
    d = _identity(inner, x, piece)
    b = {"R": s.rel, "E": s.eq, "G": s.ante, "D": s.succ.remove((x, a)), "x": x, "A": a.left, "B": a.right}
    return mk(s, "or-r", (d,), b)


# ---------------------------------------------------------------------------
# JSON and pretty printing


def _encode_binding_value(v):
    if isinstance(v, StateVar):
        return {"t": "var", "v": v.index}
    if isinstance(v, Formula):
        return {"t": "formula", "v": fmt_formula(v)}
    if isinstance(v, str):
        return {"t": "atom", "v": v}
    if isinstance(v, int):
        return {"t": "int", "v": v}
    if isinstance(v, tuple):
        return {"t": "paths", "v": [list(p) for p in v]} if all(
            isinstance(p, tuple) for p in v
        ) else {"t": "path", "v": list(v)}
    if isinstance(v, Multiset):
        items = []
        for item in v:
            if isinstance(item, tuple) and len(item) == 2 and isinstance(item[0], StateVar):
                if isinstance(item[1], StateVar):
                    items.append(["rel", item[0].index, item[1].index])
                else:
                    items.append(["lab", item[0].index, fmt_formula(item[1])])
            else:
                items.append(["f", fmt_formula(item)])
        return {"t": "mset", "v": items}
    raise TypeError("cannot encode binding value %r" % (v,))


def _decode_binding_value(data):
    t, v = data["t"], data["v"]
    if t == "var":
        return StateVar(v)
    if t == "formula":
        return parse_formula(v)
    if t == "atom":
        return v
    if t == "int":
        return v
    if t == "path":
        return tuple(v)
    if t == "paths":
        return tuple(tuple(p) for p in v)
    if t == "mset":
        items = []
        for entry in v:
            if entry[0] == "rel":
                items.append((StateVar(entry[1]), StateVar(entry[2])))
            elif entry[0] == "lab":
                items.append((StateVar(entry[1]), parse_formula(entry[2])))
            else:
                items.append(parse_formula(entry[1]))
        return Multiset(items)
    raise TypeError("cannot decode binding value %r" % (data,))


def derivation_to_json(d: Derivation) -> dict:
    if d.is_labelled():
        kind, sequent = "labelled", sequent_to_json(d.sequent)
    else:
        kind, sequent = "ins", ins_to_json(d.sequent)
    out = {
        "rule": d.rule,
        "kind": kind,
        "sequent": sequent,
        "premises": [derivation_to_json(p) for p in d.premises],
    }
    if d.bindings is not None:
        out["bindings"] = {k: _encode_binding_value(v) for k, v in d.bindings.items()}
    return out


def derivation_from_json(data: dict) -> Derivation:
    kind = data.get("kind", "labelled")
    if kind == "ins":
        sequent = ins_from_json(data["sequent"])
    else:
        sequent = sequent_from_json(data["sequent"])
    bindings = None
    if "bindings" in data:
        bindings = {k: _decode_binding_value(v) for k, v in data["bindings"].items()}
    return Derivation(
        sequent,
        data["rule"],
        tuple(derivation_from_json(p) for p in data.get("premises", [])),
        bindings,
    )


def dumps(d: Derivation) -> str:
    return json.dumps(derivation_to_json(d), indent=2)


def loads(text: str) -> Derivation:
    return derivation_from_json(json.loads(text))


def pretty(d: Derivation) -> str:
    """Stacked-inference rendering, premises above their rule line."""

    def block(node: Derivation) -> List[str]:
        concl = fmt_sequent(node.sequent) if node.is_labelled() else fmt_ins(node.sequent)
        top: List[str] = []
        if node.premises:
            blocks = [block(p) for p in node.premises]
            height_ = max(len(b) for b in blocks)
            blocks = [[" " * len(b[0])] * (height_ - len(b)) + b for b in blocks]
            top = ["   ".join(row) for row in zip(*blocks)]
        width = max([len(concl)] + [len(r) for r in top] + [4])
        rule_line = "-" * width + " " + node.rule
        lines = [row.ljust(width) for row in top]
        lines.append(rule_line)
        lines.append(concl.ljust(width))
        return lines

    return "\n".join(line.rstrip() for line in block(d))


# ---------------------------------------------------------------------------
# derivation translation (the section-5 maps, node by node)


class TranslationError(Exception):
    pass


_INS_TO_LAB = {
    "init": "init", "init-bot": "init-bot",
    "and-l": "and-l", "and-r": "and-r", "or-l": "or-l", "or-r": "or-r",
    "imp-l": "imp-l", "imp-r": "imp-r", "box-l": "box-l", "box-r": "box-r",
    "fc-l": "rep-l", "fc-r": "rep-r", "sc": "ls-sc",
    "ref": "ref", "trans": "trans",
}


def _image_rule_name(name: str, to_lab: bool) -> str:
    if name.startswith("rho-ins("):
        return "rho(" + name[len("rho-ins("):] if to_lab else name
    if name.startswith("rho("):
        return name if to_lab else "rho-ins(" + name[len("rho("):]
    table = _INS_TO_LAB if to_lab else {v: k for k, v in _INS_TO_LAB.items()}
    if name not in table:
        raise TranslationError("rule %r has no counterpart under the translation" % name)
    return table[name]


# seed tables: which metavariables carry over, and how hole refs pair with
# state-variable metas
_HOLE_VARS = {
    # rule name (ins side) -> list of (hole/child ref, labelled var meta)
    "init": [("h", "x")],
    "init-bot": [("h", "x")],
    "and-l": [("h", "x")], "and-r": [("h", "x")],
    "or-l": [("h", "x")], "or-r": [("h", "x")],
    "imp-r": [("h", "x")],
    "imp-l": [("h", "x")],
    "box-l": [("h", "x"), ("c", "y")],
    "box-r": [("h", "x")],
    "fc-l": [("h1", "x"), ("h2", "y")],
    "fc-r": [("h1", "x"), ("h2", "y")],
    "sc": [("h1", "x"), ("c", "y"), ("h2", "u")],
    "ref": [("h", "x")],
    "trans": [("h", "x"), ("c", "y"), ("g", "z")],
}

_IP_EXTRA = {"init": [("c", "y")], "imp-l": [("c", "y")]}


def _hole_pairs(ins_name: str, lab_calc_name: str, geach=None):
    if geach is not None:
        h, i, j, k = geach
        pairs = [("hx", "x")]
        pairs += [("hy%d" % t, "y%d" % t) for t in range(1, h)] + ([("hy%d" % h, "y")] if h else [])
        pairs += [("hz%d" % t, "z%d" % t) for t in range(1, j)] + ([("hz%d" % j, "z")] if j else [])
        return pairs
    pairs = list(_HOLE_VARS[ins_name])
    if lab_calc_name.startswith("LSEqIp") and ins_name in _IP_EXTRA:
        pairs = pairs + _IP_EXTRA[ins_name]
    return pairs


def _scalar_metas(binding: Dict) -> Dict:
    out = {}
    for k, v in (binding or {}).items():
        if not k.startswith("@") and not k.startswith("#") and isinstance(v, (Formula, str)):
            if not k.startswith("X_") and not k.startswith("Y_"):
                out[k] = v
    return out


def _require_eq_term(lab: LabelledSequent, a: StateVar, b: StateVar, what: str):
    if (a, b) in lab.eq or (b, a) in lab.eq:
        return
    if eq_entails(lab.eq, a, b):
        raise TranslationError(
            "%s links nodes whose equality is entailed but not a syntactic term; "
            "the rule correspondence is term-local" % what
        )
    raise TranslationError("%s requires an equality between the displayed nodes" % what)


def _align_new_nodes(premise_tree: IndexedNestedSequent, old_paths, var_of: Dict, new_edges) -> Dict:
    """Assign fresh labelled variables to the premise tree's new nodes so the
    parent edges mirror the rule's added relation terms."""
    out = dict(var_of)
    edges = list(new_edges)

    def reach(v, pool):
        seen, stack = {v}, [v]
        while stack:
            cur = stack.pop()
            for a, b in pool:
                if a == cur and b not in seen:
                    seen.add(b)
                    stack.append(b)
        return len(seen)

    for p in premise_tree.paths():
        if p in old_paths or p in out:
            continue
        parent_var = out.get(p[:-1])
        if parent_var is None:
            raise TranslationError("new node with untranslated parent")
        want = premise_tree.at(p).node_count()
        cands = sorted(
            b for a, b in edges if a == parent_var and b not in out.values()
            and reach(b, edges) == want
        )
        if not cands:
            raise TranslationError("cannot align new node at %r with a fresh variable" % (p,))
        out[p] = cands[0]
    return out


def _translate_ins_to_lab(d: Derivation, src: Calculus, dst: Calculus, lab_seq: LabelledSequent, var_of: Dict, counter: List[int]) -> Derivation:
    binding = d.bindings
    if binding is None:
        raise TranslationError("derivation nodes need instantiations; run ensure_bindings first")
    rule_ins = src.rule(d.rule)
    lab_name = _image_rule_name(d.rule, to_lab=True)
    lab_rule = _lookup_rule(dst, lab_name)
    if lab_rule is None:
        raise TranslationError("target calculus lacks rule %r" % lab_name)

    seed = _scalar_metas(binding)
    for ref, meta in _hole_pairs(d.rule, dst.name, rule_ins.geach):
        path = binding.get("@" + ref)
        if path is None:
            raise TranslationError("missing hole binding @%s for %s" % (ref, d.rule))
        seed[meta] = var_of[path]

    if lab_name in ("rep-l", "rep-r"):
        _require_eq_term(lab_seq, seed["x"], seed["y"], d.rule)
    if lab_name == "ls-sc":
        _require_eq_term(lab_seq, seed["x"], seed["u"], d.rule)

    chosen = None
    for b in match_lab_conclusion(lab_rule, lab_seq, seed=seed):
        chosen = b
        break
    if chosen is None:
        raise TranslationError("no %s instance matches the translated conclusion" % lab_name)
    full = dict(chosen)
    for name in sorted(lab_rule.fresh):
        if name not in full:
            counter[0] += 1
            full[name] = StateVar(counter[0])
    prem_labs = apply_lab(lab_rule, full)

    new_premises = []
    old_paths = set(p for p in var_of)
    for prem_d, prem_lab in zip(d.premises, prem_labs):
        if isinstance(prem_d.sequent, LabelledSequent):
            raise TranslationError("mixed-kind derivation")
        new_edges = list((prem_lab.rel - lab_seq.rel))
        var_of2 = _align_new_nodes(prem_d.sequent, old_paths, var_of, new_edges)
        new_premises.append(
            _translate_ins_to_lab(prem_d, src, dst, prem_lab, var_of2, counter)
        )
    return Derivation(lab_seq, lab_name, tuple(new_premises), full)


def _translate_lab_to_ins(d: Derivation, src: Calculus, dst: Calculus, ins_seq: IndexedNestedSequent, var_of: Dict, path_of: Dict) -> Derivation:
    binding = d.bindings
    if binding is None:
        raise TranslationError("derivation nodes need instantiations; run ensure_bindings first")
    lab_rule = src.rule(d.rule)
    ins_name = _image_rule_name(d.rule, to_lab=False)
    ins_rule = dst.rule(ins_name)

    seed = _scalar_metas(binding)
    for ref, meta in _hole_pairs(ins_name, src.name, lab_rule.geach):
        var = binding.get(meta)
        if var is None:
            raise TranslationError("missing var binding %s for %s" % (meta, d.rule))
        if var not in path_of:
            raise TranslationError("variable %s has no node in the INS image" % var)
        seed["@" + ref] = path_of[var]

    chosen = None
    for b in match_ins_holes(ins_rule.conclusion, ins_seq, seed=seed):
        chosen = b
        break
    if chosen is None:
        raise TranslationError("no %s instance matches the translated conclusion" % ins_name)
    full = dict(chosen)
    used = set(ins_seq.indices())
    nxt = max(used) + 1 if used else 0
    for name in sorted(ins_rule.fresh_indices):
        if "#" + name not in full:
            full["#" + name] = nxt
            nxt += 1
    prem_trees = apply_ins(ins_rule, ins_seq, full)

    new_premises = []
    for prem_d, prem_tree in zip(d.premises, prem_trees):
        prem_lab = prem_d.sequent
        new_edges = list(prem_lab.rel - d.sequent.rel)
        old_paths = set(path_of.values())
        var_aligned = _align_new_nodes(
            prem_tree, old_paths, {p: v for v, p in path_of.items()}, new_edges
        )
        path_of2 = {v: p for p, v in var_aligned.items()}
        new_premises.append(
            _translate_lab_to_ins(prem_d, src, dst, prem_tree, var_aligned, path_of2)
        )
    return Derivation(ins_seq, ins_name, tuple(new_premises), full)


def translate_derivation(d: Derivation, src: Calculus, dst: Calculus) -> Derivation:
    """Node-by-node image of a derivation under the INS/LTSE correspondence.

    INS -> labelled starts from the canonical sequent translation of the
    endsequent; labelled -> INS additionally requires an LTSE-derivation."""
    d = ensure_bindings(d, src)
    if src.kind == "ins" and dst.kind == "labelled":
        lab0 = ins_to_ltse(d.sequent)
        var_of = {p: StateVar(i + 1) for i, p in enumerate(d.sequent.paths())}
        counter = [max(v.index for v in var_of.values())]
        return _translate_ins_to_lab(d, src, dst, lab0, var_of, counter)
    if src.kind == "labelled" and dst.kind == "ins":
        if not is_ltse_derivation(d):
            raise TranslationError("labelled derivation is not an LTSE-derivation")
        from .nested import ltse_to_ins

        s = d.sequent
        ins0 = ltse_to_ins(s)
        # the canonical translation enumerates tree nodes in preorder; recover
        # which variable sits at which path
        if s.rel:
            root = tree_root(s.rel)
            kids = children_map(s.rel)
        else:
            vs = s.vars()
            root = vs[0] if vs else StateVar(1)
            kids = {}
        path_of: Dict[StateVar, Tuple[int, ...]] = {}

        def visit(v, path):
            path_of[v] = path
            for idx, c in enumerate(kids.get(v, ())):
                visit(c, path + (idx,))

        visit(root, ())
        var_of = {p: v for v, p in path_of.items()}
        return _translate_lab_to_ins(d, src, dst, ins0, var_of, path_of)
    raise TranslationError("unsupported translation %s -> %s" % (src.kind, dst.kind))
