import pytest

from ltseq.calculus import GeachParams, builtin, geach_rule
from ltseq.derivation import (
    CUT_RULE,
    Derivation,
    check,
    derivation_from_json,
    derivation_to_json,
    ensure_bindings,
    identity_derivation,
    infer_bindings,
    is_ltse_derivation,
    mk,
    pretty,
)
from ltseq.formula import Box, Implies, PropVar, parse_formula
from ltseq.sequent import parse_sequent, seq, sv

LSEqK = builtin("LSEqK")
p, q = PropVar("p"), PropVar("q")
x, y = sv(1), sv(2)


def k_axiom_derivation():
    """The normal-axiom derivation: |- x1: [](p->q) -> ([]p -> []q)."""
    s = parse_sequent
    leaf1 = mk(s("R x1 x2, x1: [](p->q), x1: []p, x2: p |- x2: q, x2: p"), "init")
    leaf2 = mk(s("R x1 x2, x1: [](p->q), x1: []p, x2: p, x2: q |- x2: q"), "init")
    d_impl = mk(
        s("R x1 x2, x1: [](p->q), x1: []p, x2: p, x2: p -> q |- x2: q"),
        "imp-l", (leaf1, leaf2),
    )
    d_boxl2 = mk(
        s("R x1 x2, x1: [](p->q), x1: []p, x2: p |- x2: q"), "box-l", (d_impl,)
    )
    d_boxl1 = mk(s("R x1 x2, x1: [](p->q), x1: []p |- x2: q"), "box-l", (d_boxl2,))
    d_boxr = mk(s("x1: [](p->q), x1: []p |- x1: []q"), "box-r", (d_boxl1,))
    d_impr2 = mk(s("x1: [](p->q) |- x1: []p -> []q"), "imp-r", (d_boxr,))
    return mk(s("|- x1: [](p->q) -> ([]p -> []q)"), "imp-r", (d_impr2,))


class TestCheck:
    def test_k_axiom_accepts(self):
        d = k_axiom_derivation()
        v = check(d, LSEqK)
        assert v.ok, v.message
        assert is_ltse_derivation(d)
        assert d.height() == 7

    def test_eigenvariable_violation_rejected(self):
        bad = mk(
            seq(succ=[(x, Box(p))]),
            "box-r",
            (mk(seq(rel=[(x, x)], succ=[(x, p)]), "init"),),
        )
        v = check(bad, LSEqK)
        assert not v.ok

    def test_unknown_rule_reported(self):
        d = mk(seq(ante=[(x, p)], succ=[(x, p)]), "axiom")
        v = check(d, LSEqK)
        assert not v.ok and "unknown rule" in v.message

    def test_failure_carries_path(self):
        good_leaf = mk(parse_sequent("x1: p, x1: q |- x1: p & q, x1: p"), "init")
        bad_leaf = mk(parse_sequent("x1: p, x1: q |- x1: p & q, x1: q, x1: q"), "init")
        d = mk(
            parse_sequent("x1: p, x1: q |- x1: p & q"),
            "and-r", (good_leaf, bad_leaf),
        )
        v = check(d, LSEqK)
        assert not v.ok
        assert v.path == (1,) or v.path == ()

    def test_wem_derivation_in_lseqip_extended(self):
        calc = builtin("LSEqIp").extend([geach_rule(GeachParams(1, 1, 1, 1))])
        s = parse_sequent
        ctx = "R x1 x2, R x1 x3, R x2 x4, R x3 x5, x4 = x5, x2: p, x3: p -> bot"
        leaf_init = mk(s(ctx + " |- x2: bot, x3: bot, x5: p, x4: p"), "init")
        d_repr = mk(s(ctx + " |- x2: bot, x3: bot, x5: p"), "rep-r", (leaf_init,))
        leaf_bot = mk(s(ctx + ", x5: bot |- x2: bot, x3: bot"), "init-bot")
        d_impl = mk(s(ctx + " |- x2: bot, x3: bot"), "imp-l", (d_repr, leaf_bot))
        d_rho = mk(
            s("R x1 x2, R x1 x3, x2: p, x3: p -> bot |- x2: bot, x3: bot"),
            "rho(1,1,1,1)", (d_impl,),
        )
        d_impr2 = mk(
            s("R x1 x2, x2: p |- x2: bot, x1: (p -> bot) -> bot"), "imp-r", (d_rho,)
        )
        d_impr1 = mk(s("|- x1: p -> bot, x1: (p -> bot) -> bot"), "imp-r", (d_impr2,))
        d = mk(s("|- x1: (p -> bot) | ((p -> bot) -> bot)"), "or-r", (d_impr1,))
        v = check(d, calc)
        assert v.ok, v.message
        assert is_ltse_derivation(d)

    def test_cut_instance_checks(self):
        left = mk(parse_sequent("x1: p |- x1: p"), "init")
        right = mk(parse_sequent("x1: p |- x1: p"), "init")
        d = mk(parse_sequent("x1: p |- x1: p"), "cut", (left, right))
        v = check(d, LSEqK)
        assert v.ok, v.message

    def test_ins_derivation_checks(self):
        from ltseq.nested import parse_ins

        insk = builtin("INSK")
        leaf = mk(parse_ins("p |-0 q, p"), "init")
        d = mk(parse_ins("p |-0 q | p"), "or-r", (leaf,))
        v = check(d, insk)
        assert v.ok, v.message


class TestInfer:
    def test_infer_box_r(self):
        concl = parse_sequent("|- x1: []p")
        prem = parse_sequent("R x1 x2 |- x2: p")
        b = infer_bindings(LSEqK, "box-r", concl, [prem])
        assert b is not None and b["y"] == sv(2)

    def test_infer_rejects_non_instance(self):
        concl = parse_sequent("|- x1: []p")
        prem = parse_sequent("R x1 x1 |- x1: p")
        assert infer_bindings(LSEqK, "box-r", concl, [prem]) is None

    def test_ensure_bindings_round_trip(self):
        d = ensure_bindings(k_axiom_derivation(), LSEqK)
        assert all(n.bindings is not None for n in d.nodes())
        assert check(d, LSEqK).ok


class TestIdentity:
    def test_atomic(self):
        t = seq(ante=[(x, p)], succ=[(x, p)])
        d = identity_derivation(t, x, p)
        assert d.rule == "init" and d.height() == 1
        assert check(d, LSEqK).ok

    def test_box(self):
        f = Box(p)
        t = seq(rel=[(x, y)], ante=[(x, f)], succ=[(x, f)])
        d = identity_derivation(t, x, f)
        v = check(d, LSEqK)
        assert v.ok, v.message
        rules = [n.rule for n in d.nodes()]
        assert rules[0] == "box-r" and "box-l" in rules and rules[-1] == "init"
        assert is_ltse_derivation(d)

    def test_conjunction(self):
        f = parse_formula("p & q")
        t = seq(ante=[(x, f)], succ=[(x, f)])
        d = identity_derivation(t, x, f)
        assert d.rule == "and-r"
        assert check(d, LSEqK).ok

    def test_nested_formula_heights(self):
        from ltseq.formula import size

        for text in ["p -> q", "<>p", "[](p | q) -> <>p & p", "(p -> bot) | p"]:
            f = parse_formula(text)
            t = seq(ante=[(x, f)], succ=[(x, f)])
            d = identity_derivation(t, x, f)
            assert check(d, LSEqK).ok
            assert d.height() <= 3 * size(f)

    def test_top_rejected(self):
        f = parse_formula("top")
        t = seq(ante=[(x, f)], succ=[(x, f)])
        with pytest.raises(ValueError):
            identity_derivation(t, x, f)


class TestJsonAndPretty:
    def test_json_round_trip(self):
        d = ensure_bindings(k_axiom_derivation(), LSEqK)
        d2 = derivation_from_json(derivation_to_json(d))
        assert check(d2, LSEqK).ok
        assert d2.height() == d.height()

    def test_json_without_bindings_still_checks(self):
        d = k_axiom_derivation()
        blob = derivation_to_json(d)
        assert "bindings" not in blob
        d2 = derivation_from_json(blob)
        assert check(d2, LSEqK).ok

    def test_pretty_smoke(self):
        text = pretty(k_axiom_derivation())
        assert "imp-r" in text and "init" in text
        assert text.count("\n") >= 10
