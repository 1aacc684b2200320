import random

import pytest

from ltseq.calculus import GeachParams, builtin, geach_rule
from ltseq.derivation import (
    Derivation,
    check,
    identity_derivation,
    infer_bindings,
    is_ltse_derivation,
    mk,
)
from ltseq.formula import Box, Implies, PropVar, parse_formula
from ltseq.multiset import Multiset
from ltseq.search import Bounds, prove, prove_ltse
from ltseq.sequent import parse_sequent, seq, sv
from ltseq.transform import (
    ReductionRecorder,
    TransformError,
    contract,
    eliminate_cuts,
    invert,
    refresh_eigens,
    rename,
    substitute_merge,
    substitute_vars,
    weaken,
)

LSEqK = builtin("LSEqK")
LSEqIp = builtin("LSEqIp")
p, q = PropVar("p"), PropVar("q")
x, y, z = sv(1), sv(2), sv(3)


def proved(calc, text, depth=12, budget=2):
    r = prove(calc, seq(succ=[(sv(1), parse_formula(text))]), Bounds(depth, budget))
    assert r.found, text
    return r.derivation


def k_axiom():
    return proved(LSEqK, "[](p -> q) -> ([]p -> []q)")


class TestRename:
    def test_k_axiom_rename(self):
        d = k_axiom()
        d2 = rename(d, sv(1), sv(9), LSEqK)
        assert check(d2, LSEqK).ok
        assert d2.height() == d.height()
        assert sv(9) in d2.sequent.vars() and sv(1) not in d2.sequent.vars()

    def test_absent_variable_is_identity(self):
        d = k_axiom()
        d2 = rename(d, sv(7), sv(9), LSEqK)
        assert d2.sequent == d.sequent
        assert check(d2, LSEqK).ok

    def test_eigenvariable_clash_refreshed(self):
        # the searched derivation introduces x2 internally via box-r
        d = k_axiom()
        internal = {v for n in d.nodes() for v in n.sequent.vars()} - set(d.sequent.vars())
        target = sorted(internal)[0]
        d2 = rename(d, sv(1), target, LSEqK)
        assert check(d2, LSEqK).ok
        assert d2.height() == d.height()

    def test_rejects_occurring_target(self):
        d = k_axiom()
        with pytest.raises(ValueError):
            rename(d, sv(1), sv(1), LSEqK)


class TestWeaken:
    def test_empty_extras_identity(self):
        d = k_axiom()
        assert weaken(d, LSEqK).sequent == d.sequent

    def test_formula_both_sides(self):
        d = k_axiom()
        d2 = weaken(d, LSEqK, ante=[(x, q)], succ=[(x, q)])
        assert check(d2, LSEqK).ok
        assert d2.height() == d.height()
        assert (x, q) in d2.sequent.ante and (x, q) in d2.sequent.succ

    def test_relational_and_equality_extras(self):
        d = proved(LSEqK, "p -> p", depth=6)
        d2 = weaken(d, LSEqK, rel=[(x, y)], eq=[(x, y)])
        assert check(d2, LSEqK).ok
        assert d2.height() == d.height()

    def test_eigen_collision_with_extras(self):
        d = k_axiom()
        internal = {v for n in d.nodes() for v in n.sequent.vars()} - set(d.sequent.vars())
        v = sorted(internal)[0]
        d2 = weaken(d, LSEqK, succ=[(v, q)])
        assert check(d2, LSEqK).ok
        assert d2.height() == d.height()


class TestInvert:
    def test_invert_and_r(self):
        d = proved(LSEqK, "(p -> p) & (q -> q)", depth=8)
        rule = LSEqK.rule("and-r")
        b = {
            "x": sv(1), "A": parse_formula("p -> p"), "B": parse_formula("q -> q"),
            "R": Multiset(), "E": Multiset(), "G": Multiset(), "D": Multiset(),
        }
        outs = invert(d, "and-r", b, LSEqK)
        assert len(outs) == 2
        for o in outs:
            assert check(o, LSEqK).ok
            assert o.height() <= d.height()

    def test_invert_box_r_produces_fresh_premise(self):
        d = proved(LSEqK, "[] (p -> p)", depth=8)
        b = {
            "x": sv(1), "A": parse_formula("p -> p"), "y": sv(5),
            "R": Multiset(), "E": Multiset(), "G": Multiset(), "D": Multiset(),
        }
        (o,) = invert(d, "box-r", b, LSEqK)
        assert check(o, LSEqK).ok
        assert (sv(1), sv(5)) in o.sequent.rel
        assert o.height() == d.height() - 1 or o.height() <= d.height()

    def test_invert_through_other_rules(self):
        # endsequent |- x: (p&q) -> (q&p); invert the imp-r instance
        d = proved(LSEqK, "p & q -> q & p", depth=8)
        b = {
            "x": sv(1), "A": parse_formula("p & q"), "B": parse_formula("q & p"),
            "R": Multiset(), "E": Multiset(), "G": Multiset(), "D": Multiset(),
        }
        (o,) = invert(d, "imp-r", b, LSEqK)
        assert check(o, LSEqK).ok
        assert o.sequent == parse_sequent("x1: p & q |- x1: q & p")

    def test_invert_weakened_identity(self):
        base = identity_derivation(seq(ante=[(x, p)], succ=[(x, p)]), x, p)
        d = weaken(base, LSEqK, ante=[(x, Implies(p, q))])
        b = {
            "x": x, "A": p, "B": q,
            "R": Multiset(), "E": Multiset(),
            "G": Multiset([(x, p)]), "D": Multiset([(x, p)]),
        }
        outs = invert(d, "imp-l", b, LSEqK)
        assert len(outs) == 2
        for o in outs:
            assert check(o, LSEqK).ok
            assert o.height() <= d.height()


class TestContract:
    def test_weaken_contract_round_trip(self):
        d = k_axiom()
        dup = weaken(d, LSEqK, succ=[d.sequent.succ.support()[0]])
        term = d.sequent.succ.support()[0]
        back = contract(dup, "right-formula", term, LSEqK)
        assert check(back, LSEqK).ok
        assert back.sequent == d.sequent
        assert back.height() <= dup.height()

    def test_contract_rel_duplicate(self):
        d = proved(LSEqK, "[]p -> []p", depth=8)
        dup = weaken(d, LSEqK, rel=[(x, sv(8))])
        dup2 = weaken(dup, LSEqK, rel=[(x, sv(8))])
        back = contract(dup2, "rel", (x, sv(8)), LSEqK)
        assert check(back, LSEqK).ok
        assert back.sequent == dup.sequent

    def test_contract_eq_duplicate(self):
        d = proved(LSEqK, "p -> p", depth=6)
        dup = weaken(d, LSEqK, rel=[(x, y)], eq=[(x, y), (x, y)])
        back = contract(dup, "eq", (x, y), LSEqK)
        assert check(back, LSEqK).ok

    def test_contract_through_principal_and(self):
        # duplicate succedent p & q where and-r consumed one copy
        g = seq(ante=[(x, p), (x, q)], succ=[(x, parse_formula("p & q")), (x, parse_formula("p & q"))])
        b = infer_bindings  # noqa: F841  (readability)
        leaf1 = mk(seq(ante=[(x, p), (x, q)], succ=[(x, parse_formula("p & q")), (x, p)]), "init")
        leaf2 = mk(seq(ante=[(x, p), (x, q)], succ=[(x, parse_formula("p & q")), (x, q)]), "init")
        d = mk(g, "and-r", (leaf1, leaf2))
        from ltseq.derivation import ensure_bindings
        d = ensure_bindings(d, LSEqK)
        assert check(d, LSEqK).ok
        out = contract(d, "right-formula", (x, parse_formula("p & q")), LSEqK)
        assert check(out, LSEqK).ok
        assert out.sequent == seq(ante=[(x, p), (x, q)], succ=[(x, parse_formula("p & q"))])
        assert out.height() <= d.height()

    def test_contract_through_box_r_lemma6_case(self):
        # the displayed LTSE (box r) contraction case
        goal = seq(ante=[(x, Box(p))], succ=[(x, Box(p)), (x, Box(p))])
        r = prove(LSEqK, goal, Bounds(8))
        assert r.found
        d = r.derivation
        out = contract(d, "right-formula", (x, Box(p)), LSEqK)
        assert check(out, LSEqK).ok
        assert out.sequent == seq(ante=[(x, Box(p))], succ=[(x, Box(p))])
        assert out.height() <= d.height()
        assert is_ltse_derivation(out)


class TestSubstituteMerge:
    def _setup(self):
        """Derivation of R x1 x2, R x1 x3, x2 = x3, x2: p |- x3: p."""
        s = parse_sequent("R x1 x2, R x1 x3, x2 = x3, x2: p |- x3: p, x2: p")
        leaf = mk(s, "init")
        concl = parse_sequent("R x1 x2, R x1 x3, x2 = x3, x2: p |- x3: p")
        d = mk(concl, "rep-r", (leaf,))
        from ltseq.derivation import ensure_bindings
        return ensure_bindings(d, LSEqK)

    def test_merge_basic(self):
        d = self._setup()
        assert check(d, LSEqK).ok
        out = substitute_merge(d, sv(1), sv(2), sv(3), LSEqK)
        assert check(out, LSEqK).ok
        assert out.sequent == parse_sequent("R x1 x3, x3: p |- x3: p")
        assert out.height() <= d.height()
        assert is_ltse_derivation(out)

    def test_merge_only_relation_changes(self):
        d = proved(LSEqK, "p -> p", depth=6)
        d2 = weaken(d, LSEqK, rel=[(x, y), (x, z)], eq=[(y, z)])
        out = substitute_merge(d2, x, y, z, LSEqK)
        assert check(out, LSEqK).ok
        assert out.sequent.rel == Multiset([(x, z)])
        assert not out.sequent.eq
        assert out.height() == d2.height()

    def test_merge_through_box_l(self):
        # box-l uses the very R x y term being merged away
        s_top = parse_sequent("R x y, R x z, y = z, x: []p, y: p |- y: p")
        leaf = mk(s_top, "init")
        mid = mk(parse_sequent("R x y, R x z, y = z, x: []p |- y: p"), "box-l", (leaf,))
        from ltseq.derivation import ensure_bindings
        d = ensure_bindings(mid, LSEqK)
        assert check(d, LSEqK).ok
        out = substitute_merge(d, sv(1), sv(2), sv(3), LSEqK)
        assert check(out, LSEqK).ok
        assert out.sequent == parse_sequent("R x z, x: []p |- z: p")

    def test_preconditions(self):
        d = self._setup()
        with pytest.raises(ValueError):
            substitute_merge(d, sv(1), sv(4), sv(2), LSEqK)  # no R x1 x4 term
        with pytest.raises(ValueError):
            substitute_merge(d, sv(2), sv(1), sv(3), LSEqK)  # no R x2 x1 term
        # symmetric orientation of the equality is fine
        out = substitute_merge(d, sv(1), sv(3), sv(2), LSEqK)
        assert check(out, LSEqK).ok
        assert out.sequent == parse_sequent("R x1 x2, x2: p |- x2: p")

    def test_ltse_preserved_on_corpus(self):
        rng = random.Random(51)
        for _ in range(20):
            d = proved(LSEqK, rng.choice(["p -> p", "p & q -> p", "[]p -> []p"]), depth=8)
            d2 = weaken(d, LSEqK, rel=[(x, sv(8)), (x, sv(9))], eq=[(sv(8), sv(9))])
            if not is_ltse_derivation(d2):
                continue
            out = substitute_merge(d2, x, sv(8), sv(9), LSEqK)
            assert is_ltse_derivation(out)
            assert check(out, LSEqK).ok


def make_cut(calc, left, right):
    """Assemble a cut node from derivations of ... |- x:A and x:A, ... |- ..."""
    from ltseq.derivation import _infer_cut
    from ltseq.sequent import LabelledSequent

    for xa in left.sequent.succ.support():
        if xa in right.sequent.ante:
            concl = LabelledSequent(
                left.sequent.rel,
                left.sequent.eq + right.sequent.eq,
                left.sequent.ante + right.sequent.ante.remove(xa),
                left.sequent.succ.remove(xa) + right.sequent.succ,
            )
            bb = _infer_cut(concl, [left.sequent, right.sequent])
            assert bb is not None
            return Derivation(concl, "cut", (left, right), bb)
    raise AssertionError("no shared cut formula")


class TestCutElimination:
    def test_modus_ponens_simulation(self):
        # |- x:p->p and x:p->p |- x:(p->p)  gives |- x:(p->p) via cut
        dL = proved(LSEqK, "p -> p", depth=6)
        f = parse_formula("p -> p")
        dR = identity_derivation(seq(ante=[(x, f)], succ=[(x, f)]), x, f)
        d = make_cut(LSEqK, dL, dR)
        assert check(d, LSEqK).ok
        rec = ReductionRecorder()
        out = eliminate_cuts(d, LSEqK, recorder=rec)
        assert check(out, LSEqK).ok
        assert out.rule_count("cut") == 0
        assert out.sequent == d.sequent
        assert rec.steps

    def test_box_principal_cut(self):
        dL = proved(LSEqK, "[](p -> p)", depth=8)
        f = parse_formula("[](p -> p)")
        dR = identity_derivation(seq(ante=[(x, f)], succ=[(x, f)]), x, f)
        d = make_cut(LSEqK, dL, dR)
        out = eliminate_cuts(d, LSEqK, require_ltse=True)
        assert check(out, LSEqK).ok
        assert out.rule_count("cut") == 0
        assert out.sequent == d.sequent
        assert is_ltse_derivation(out)

    def test_cut_inside_larger_derivation(self):
        dL = proved(LSEqK, "p & q -> p", depth=8)
        f = parse_formula("p & q -> p")
        dR = identity_derivation(seq(ante=[(x, f)], succ=[(x, f)]), x, f)
        cut_node = make_cut(LSEqK, dL, dR)
        # wrap below with an or-r to exercise in-place replacement
        wrapped_concl = seq(succ=[(x, parse_formula("(p & q -> p) | p"))])
        from ltseq.derivation import ensure_bindings
        top = mk(
            seq(succ=[(x, f), (x, p)]), "cut",
            (weaken(dL, LSEqK, succ=[(x, p)]), weaken(dR, LSEqK, succ=[(x, p)])),
        )
        top = Derivation(
            top.sequent, "cut", top.premises,
            infer_bindings(LSEqK, "cut", top.sequent, [pr.sequent for pr in top.premises]),
        )
        d = mk(wrapped_concl, "or-r", (top,))
        d = ensure_bindings(d, LSEqK)
        assert check(d, LSEqK).ok
        out = eliminate_cuts(d, LSEqK)
        assert check(out, LSEqK).ok
        assert out.rule_count("cut") == 0
        assert out.sequent == wrapped_concl

    def test_measure_decreases(self):
        dL = proved(LSEqK, "((p -> q) & p) -> q", depth=10)
        f = parse_formula("((p -> q) & p) -> q")
        dR = identity_derivation(seq(ante=[(x, f)], succ=[(x, f)]), x, f)
        d = make_cut(LSEqK, dL, dR)
        rec = ReductionRecorder()
        out = eliminate_cuts(d, LSEqK, recorder=rec)
        assert check(out, LSEqK).ok
        assert len(rec.steps) > 1

    def test_geach_extension_cut(self):
        calc = LSEqK.extend([geach_rule(GeachParams(1, 1, 1, 1))])
        dL = prove_ltse(calc, seq(succ=[(x, parse_formula("<>[]p -> []<>p"))]), Bounds(12, 2)).derivation
        f = parse_formula("<>[]p -> []<>p")
        dR = identity_derivation(seq(ante=[(x, f)], succ=[(x, f)]), x, f)
        d = make_cut(calc, dL, dR)
        out = eliminate_cuts(d, calc, require_ltse=True)
        assert check(out, calc).ok
        assert out.rule_count("cut") == 0
        assert is_ltse_derivation(out)
