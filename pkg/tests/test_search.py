import pytest

from ltseq.calculus import GeachParams, builtin, geach_axiom, geach_rule, ins_rule_from_geach
from ltseq.derivation import check, is_ltse_derivation
from ltseq.formula import PropVar, parse_formula
from ltseq.nested import ins, parse_ins
from ltseq.search import Bounds, prove, prove_ltse
from ltseq.sequent import parse_sequent, seq, sv

LSEqK = builtin("LSEqK")
LSEqIp = builtin("LSEqIp")


def goal(formula_text):
    return seq(succ=[(sv(1), parse_formula(formula_text))])


class TestProve:
    def test_k_axiom(self):
        r = prove(LSEqK, goal("[](p -> q) -> ([]p -> []q)"), Bounds(12))
        assert r.found
        assert check(r.derivation, LSEqK).ok

    def test_t_axiom_refuted_in_k(self):
        r = prove(LSEqK, goal("[]p -> p"), Bounds(10))
        assert r.status == "refuted"

    def test_simple_theorems(self):
        for text in ["p -> p", "p & q -> p", "p -> p | q", "bot -> p",
                     "((p -> q) & p) -> q", "[] (p -> p)"]:
            r = prove(LSEqK, goal(text), Bounds(10))
            assert r.found, text
            assert check(r.derivation, LSEqK).ok

    def test_non_theorems_refuted(self):
        for text in ["p -> q", "p | q -> p", "<>p -> []p"]:
            r = prove(LSEqK, goal(text), Bounds(8))
            assert r.status == "refuted", text

    def test_intuitionistic_identity(self):
        r = prove(LSEqIp, goal("p -> p"), Bounds(8, structural_budget=2))
        assert r.found
        assert check(r.derivation, LSEqIp).ok

    def test_excluded_middle_fails_in_ip_within_bounds(self):
        r = prove(LSEqIp, goal("p | (p -> bot)"), Bounds(7, structural_budget=1))
        assert not r.found

    def test_ins_k_axiom(self):
        insk = builtin("INSK")
        g = ins([], [parse_formula("[](p -> q) -> ([]p -> []q)")], 0)
        r = prove(insk, g, Bounds(12))
        assert r.found
        assert check(r.derivation, insk).ok

    def test_monotonicity(self):
        g = goal("[](p -> q) -> ([]p -> []q)")
        r1 = prove(LSEqK, g, Bounds(12))
        r2 = prove(LSEqK, g, Bounds(16))
        assert r1.found and r2.found

    def test_determinism(self):
        g = goal("p & q -> q & p")
        d1 = prove(LSEqK, g, Bounds(10)).derivation
        d2 = prove(LSEqK, g, Bounds(10)).derivation
        assert [n.rule for n in d1.nodes()] == [n.rule for n in d2.nodes()]
        assert [str(n.sequent) for n in d1.nodes()] == [str(n.sequent) for n in d2.nodes()]


class TestProveLtse:
    def test_geach_1111(self):
        calc = LSEqK.extend([geach_rule(GeachParams(1, 1, 1, 1))])
        r = prove_ltse(calc, goal("<>[]p -> []<>p"), Bounds(12, 2))
        assert r.found
        assert check(r.derivation, calc).ok
        assert is_ltse_derivation(r.derivation)

    def test_weak_excluded_middle(self):
        calc = LSEqIp.extend([geach_rule(GeachParams(1, 1, 1, 1))])
        r = prove_ltse(calc, goal("(p -> bot) | ((p -> bot) -> bot)"), Bounds(12, 2))
        assert r.found
        assert check(r.derivation, calc).ok
        assert is_ltse_derivation(r.derivation)
        assert r.derivation.rule_count("rho(1,1,1,1)") >= 1

    def test_outputs_always_ltse(self):
        calc = LSEqK.extend([geach_rule(GeachParams(0, 1, 0, 0))])
        r = prove_ltse(calc, goal("[]p -> p"), Bounds(10, 2))
        assert r.found
        assert is_ltse_derivation(r.derivation)

    def test_geach_sample(self):
        for params in [(0, 1, 2, 0), (1, 1, 1, 1), (2, 0, 1, 0), (0, 2, 1, 1)]:
            p = GeachParams(*params)
            calc = LSEqK.extend([geach_rule(p)])
            g = seq(succ=[(sv(1), geach_axiom(p))])
            depth = sum(params) + 8
            r = prove_ltse(calc, g, Bounds(depth, 3))
            assert r.found, params
            assert check(r.derivation, calc).ok
            assert is_ltse_derivation(r.derivation)

    def test_rejects_non_ltse_goal(self):
        with pytest.raises(ValueError):
            prove_ltse(LSEqK, parse_sequent("x = z, x: p |- x: p"), Bounds(5))


class TestInsSearch:
    def test_ins_geach_rule_used(self):
        # INSK has no diamond rules, so exercise a box-language Geach axiom
        calc = builtin("INSK").extend([ins_rule_from_geach(GeachParams(0, 1, 2, 0))])
        g = parse_ins("|-0 []p -> [][]p")
        r = prove(calc, g, Bounds(12, 2))
        assert r.found
        assert check(r.derivation, calc).ok
        assert r.derivation.rule_count("rho-ins(0,1,2,0)") >= 1

    def test_insip_theorem(self):
        insip = builtin("INSIp")
        g = parse_ins("|-0 p -> p")
        r = prove(insip, g, Bounds(8, 2))
        assert r.found
        assert check(r.derivation, insip).ok
