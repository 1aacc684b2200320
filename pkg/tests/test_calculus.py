import pytest

from ltseq.calculus import (
    BOT,
    FVar,
    GeachParams,
    GeometricRuleSpec,
    LabPattern,
    NEW,
    NP,
    PAtom,
    RuleSpecError,
    SV,
    apply_ins,
    apply_lab,
    builtin,
    chain_mset,
    fmt_rule,
    fresh_vars_for,
    geach_axiom,
    geach_rule,
    grs_from_spec,
    ins_instances,
    ins_rule_from_geach,
    lab_instances,
    match_lab_conclusion,
    parse_rulespec,
    rules_equal_up_to_renaming,
    t31_rule,
)
from ltseq.formula import Box, Diamond, Implies, PropVar, parse_formula
from ltseq.multiset import Multiset
from ltseq.nested import ins, ins_to_ltse, parse_ins
from ltseq.sequent import is_ltse, parse_sequent, seq, sv

x, y, z, u, v = sv(1), sv(2), sv(3), sv(4), sv(5)
p, q = PropVar("p"), PropVar("q")
x_, y_, z_, u_, v_ = SV("x"), SV("y"), SV("z"), SV("u"), SV("v")
A_, B_ = FVar("A"), FVar("B")


class TestBuiltins:
    def test_names(self):
        for name, count in [("LSEqK", 17), ("LSEqIp", 15), ("LS1K", 5), ("INSK", 13), ("INSIp", 13)]:
            assert len(builtin(name).rules) == count

    def test_unknown(self):
        with pytest.raises(KeyError):
            builtin("LK")

    def test_ls_sc_side_conditions(self):
        r = builtin("LSEqK").rule("ls-sc")
        assert r.distinct == (("x", "u"),)
        assert r.fresh == frozenset(["v"])

    def test_ls1k_box_side_condition(self):
        r = builtin("LS1K").rule("box")
        assert r.fresh == frozenset(["y"])

    def test_insip_has_ref(self):
        r = builtin("INSIp").rule("ref")
        # premise adds an empty child carrying the hole's own index
        prem_hole = r.premises[0][0]
        added = [c for c in prem_hole.children if c.ref is None]
        assert len(added) == 1 and added[0].index == prem_hole.index


class TestLabMatching:
    def test_imp_r_backward(self):
        rule = builtin("LSEqK").rule("imp-r")
        goal = seq(succ=[(x, Implies(p, q))])
        out = list(lab_instances(rule, goal))
        assert len(out) == 1
        binding, prems = out[0]
        assert prems == [seq(ante=[(x, p)], succ=[(x, q)])]

    def test_box_r_fresh_variable(self):
        rule = builtin("LSEqK").rule("box-r")
        goal = seq(rel=[(x, y)], succ=[(x, Box(p))], ante=[(y, q)])
        ((binding, prems),) = list(lab_instances(rule, goal))
        fresh = binding["y"]
        assert fresh not in goal.vars()
        assert prems[0].rel.count((x, fresh)) == 1

    def test_init_matches_in_context(self):
        rule = builtin("LSEqK").rule("init")
        s = seq(rel=[(x, y)], ante=[(x, p), (y, q)], succ=[(y, p), (x, p)])
        matches = list(match_lab_conclusion(rule, s))
        assert len(matches) == 1  # only x:p |- x:p pairs up

    def test_eq_matching_is_symmetric(self):
        rule = builtin("LSEqK").rule("rep-l")
        s = seq(rel=[(x, y)], eq=[(y, x)], ante=[(x, p)])
        outs = list(lab_instances(rule, s))
        # term (y,x) matched in both orientations, but only x has p
        assert any(b["x"] == x and b["y"] == y for b, _ in outs)

    def test_free_choice_meta_in_ref(self):
        rule = builtin("LSEqIp").rule("ref")
        s = seq(rel=[(x, y)], succ=[(y, p)])
        outs = list(lab_instances(rule, s))
        assert {b["x"] for b, _ in outs} == {x, y}
        for b, prems in outs:
            assert prems[0].eq == Multiset([(b["u"], b["x"])])

    def test_ls_sc_distinctness_enforced(self):
        rule = builtin("LSEqK").rule("ls-sc")
        s = seq(rel=[(x, y)], eq=[(x, x)])
        assert not list(lab_instances(rule, s))

    def test_one_sided_dedups_rel(self):
        rule = builtin("LS1K").rule("box")
        s = seq(rel=[(x, y)], ante=[(x, Box(p)), (y, q)])
        ((b, prems),) = list(lab_instances(rule, s))
        assert prems[0].rel.count((x, b["y"])) == 1


class TestInsMatching:
    def test_imp_r_ins(self):
        rule = builtin("INSK").rule("imp-r")
        g = ins([], [Implies(p, q)], 0)
        ((b, prems),) = list(ins_instances(rule, g))
        assert prems == [ins([p], [q], 0)]

    def test_box_r_fresh_index(self):
        rule = builtin("INSK").rule("box-r")
        g = ins([], [Box(p)], 0, (ins([], [], 1),))
        outs = list(ins_instances(rule, g))
        assert len(outs) == 1
        b, prems = outs[0]
        tree = prems[0]
        assert len(tree.children) == 2
        new = tree.children[1]
        assert new.index == 2 and list(new.succ) == [p]

    def test_box_l_targets_child(self):
        rule = builtin("INSK").rule("box-l")
        g = ins([Box(p)], [], 0, (ins([], [], 1), ins([q], [], 2)))
        outs = list(ins_instances(rule, g))
        assert len(outs) == 2  # either child
        for b, prems in outs:
            child_path = b["@c"]
            assert prems[0].at(child_path).ante.count(p) == 1

    def test_fc_l_requires_shared_index(self):
        rule = builtin("INSK").rule("fc-l")
        g = ins([p], [], 3, (ins([], [], 3), ins([], [], 1)))
        outs = list(ins_instances(rule, g))
        paths = {(b["@h1"], b["@h2"]) for b, _ in outs}
        assert ((), (0,)) in paths
        assert all(g.at(p1).index == g.at(p2).index for p1, p2 in paths)

    def test_sc_adds_empty_child_with_shared_index(self):
        rule = builtin("INSK").rule("sc")
        g = ins([], [], 0, (ins([], [], 1, (ins([p], [q], 2),)), ins([], [], 1)))
        outs = [(b, prems) for b, prems in ins_instances(rule, g)]
        good = [
            (b, prems) for b, prems in outs
            if b["@h1"] == (0,) and b["@h2"] == (1,)
        ]
        assert good
        b, prems = good[0]
        second = prems[0].children[1]
        assert any(c.index == 2 and not c.ante and not c.succ for c in second.children)

    def test_two_holes_must_be_distinct(self):
        rule = builtin("INSK").rule("fc-l")
        g = ins([p], [], 0)
        assert not list(ins_instances(rule, g))


class TestChain:
    def test_zero(self):
        assert chain_mset(0, x, y) == Multiset()

    def test_one(self):
        assert chain_mset(1, x, y) == Multiset([(x, y)])

    def test_two(self):
        m = chain_mset(2, x, y, start_index=6)
        assert m == Multiset([(x, sv(6)), (sv(6), y)])


class TestGeachAxiom:
    def test_examples(self):
        assert geach_axiom(GeachParams(0, 1, 0, 0)) == parse_formula("[]p -> p")
        assert geach_axiom(GeachParams(0, 1, 2, 0)) == parse_formula("[]p -> [][]p")
        assert geach_axiom(GeachParams(1, 1, 1, 1)) == parse_formula("<>[]p -> []<>p")


class TestGeachRule:
    def test_1111_is_eq6(self):
        rule = geach_rule(GeachParams(1, 1, 1, 1))
        expected = grs_from_spec(GeometricRuleSpec(
            "rho(1,1,1,1)",
            (("R", "a", "b"), ("R", "a", "c")),
            (((("R", "b", "d"), ("R", "c", "e"), ("=", "d", "e")), ("d", "e")),),
        ))
        assert rules_equal_up_to_renaming(rule, expected)

    def test_0100_reflexivity(self):
        rule = geach_rule(GeachParams(0, 1, 0, 0))
        assert rule.conclusion.rel == ()
        ((l, r),) = rule.premises[0].eq
        assert rule.premises[0].rel == ((SV("x"), SV("u")),)
        assert (l, r) == (SV("u"), SV("x"))
        assert rule.fresh == frozenset(["u"])

    def test_2210_example11(self):
        rule = geach_rule(GeachParams(2, 2, 1, 0))
        expected = grs_from_spec(GeometricRuleSpec(
            "rho(2,2,1,0)",
            (("R", "x", "y1"), ("R", "y1", "y"), ("R", "x", "z")),
            (((("R", "y", "u1"), ("R", "u1", "u"), ("=", "u", "z")), ("u1", "u")),),
        ))
        assert rules_equal_up_to_renaming(rule, expected)

    def test_0000_degenerate_reflexive_equality(self):
        rule = geach_rule(GeachParams(0, 0, 0, 0))
        ((l, r),) = rule.premises[0].eq
        assert l == r == SV("x")

    def test_fresh_absent_from_conclusion(self):
        for h in range(3):
            for i in range(3):
                for j in range(3):
                    for k in range(3):
                        rule = geach_rule(GeachParams(h, i, j, k))
                        concl_vars = {t.name for pair in rule.conclusion.rel for t in pair if isinstance(t, SV)}
                        assert not (rule.fresh & concl_vars)


class TestInsRuleFromGeach:
    def test_eq5_for_1111(self):
        rule = ins_rule_from_geach(GeachParams(1, 1, 1, 1))
        expected_concl = (NP("hx", index="nx", children=[
            NP("hy1", index="a1"),
            NP("hz1", index="b1"),
        ]),)
        expected_prem = (NP("hx", index="nx", children=[
            NP("hy1", index="a1", children=[NEW(index="c")]),
            NP("hz1", index="b1", children=[NEW(index="c")]),
        ]),)
        assert rules_equal_up_to_renaming(
            rule,
            rule.__class__(
                name="expected", kind="ins", premises=(expected_prem,),
                conclusion=expected_concl, fresh=frozenset(),
                fresh_indices=frozenset(["c"]), distinct=(), structural=True,
            ),
        )

    def test_example12_for_2210(self):
        rule = ins_rule_from_geach(GeachParams(2, 2, 1, 0))
        # premise: G[[X1 |-a1 Y1, [X2 |-a2 Y2, [ |-c1 , [ |-b1 ]]]], [L1 |-b1 M1]]
        expected_concl = (NP("hx", index="nx", children=[
            NP("hy1", index="a1", children=[NP("hy2", index="a2")]),
            NP("hz1", index="b1"),
        ]),)
        expected_prem = (NP("hx", index="nx", children=[
            NP("hy1", index="a1", children=[
                NP("hy2", index="a2", children=[NEW(index="c1", children=[NEW(index="b1")])]),
            ]),
            NP("hz1", index="b1"),
        ]),)
        assert rules_equal_up_to_renaming(
            rule,
            rule.__class__(
                name="expected", kind="ins", premises=(expected_prem,),
                conclusion=expected_concl, fresh=frozenset(),
                fresh_indices=frozenset(["c1"]), distinct=(), structural=True,
            ),
        )

    def test_1010_replaces_index_across_siblings(self):
        rule = ins_rule_from_geach(GeachParams(1, 0, 1, 0))
        g = ins([], [], 0, (ins([p], [], 1), ins([q], [], 2)))
        outs = [
            (b, prems) for b, prems in ins_instances(rule, g)
            if b["@hy1"] == (0,) and b["@hz1"] == (1,)
        ]
        assert outs
        _, prems = outs[0]
        assert prems[0].children[0].index == 1
        assert prems[0].children[1].index == 1  # b replaced by a

    def test_ref_shape_matches_insip_ref(self):
        generated = ins_rule_from_geach(GeachParams(0, 1, 0, 0))
        assert rules_equal_up_to_renaming(generated, builtin("INSIp").rule("ref"))


class TestGeachCommutesWithTranslation:
    """Applying the INS rule and translating yields an instance of the
    labelled rule (tested over all parameters <= 2 on a canonical subject)."""

    def _subject(self, h, j):
        def chain_nodes(n, base_index):
            node = None
            for t in range(n, 0, -1):
                node = ins([], [], base_index + t, (node,) if node else ())
            return node

        kids = []
        if h:
            kids.append(chain_nodes(h, 10))
        if j:
            kids.append(chain_nodes(j, 20))
        return ins([p], [q], 0, tuple(kids))

    def test_all_params_up_to_two(self):
        for h in range(3):
            for i in range(3):
                for j in range(3):
                    for k in range(3):
                        params = GeachParams(h, i, j, k)
                        ins_rule = ins_rule_from_geach(params)
                        lab_rule = geach_rule(params)
                        subject = self._subject(h, j)
                        outs = list(ins_instances(ins_rule, subject))
                        assert outs, params
                        binding, prems = outs[0]
                        concl_lab = ins_to_ltse(subject)
                        prem_lab = ins_to_ltse(prems[0])
                        found = False
                        for b2 in match_lab_conclusion(lab_rule, concl_lab):
                            b2 = fresh_vars_for(lab_rule, concl_lab.max_index(), b2)
                            candidate = apply_lab(lab_rule, b2)[0]
                            from ltseq.nested import ltse_equivalent
                            if is_ltse(candidate) and ltse_equivalent(candidate, prem_lab):
                                found = True
                                break
                        assert found, params


class TestGrsFromSpec:
    def test_eq6_from_geometric_spec(self):
        spec = GeometricRuleSpec(
            "dirge",
            (("R", "x", "y"), ("R", "x", "z")),
            (((("R", "y", "u"), ("R", "z", "v"), ("=", "u", "v")), ("u", "v")),),
        )
        rule = grs_from_spec(spec)
        assert rules_equal_up_to_renaming(rule, geach_rule(GeachParams(1, 1, 1, 1)))

    def test_two_disjuncts_two_premises(self):
        spec = GeometricRuleSpec(
            "branch",
            (("R", "x", "y"),),
            (
                ((("R", "y", "u"),), ("u",)),
                ((("=", "y", "x"),), ()),
            ),
        )
        rule = grs_from_spec(spec)
        assert rule.arity() == 2
        assert rule.fresh == frozenset(["u"])

    def test_t31(self):
        rule = t31_rule()
        assert rule.kind == "one-sided"
        assert len(rule.conclusion.rel) == 3
        assert len(rule.premises[0].rel) == 4
        assert not rule.fresh

    def test_one_sided_rejects_equalities(self):
        spec = GeometricRuleSpec(
            "bad", (("R", "x", "y"),), (((("=", "x", "y"),), ()),)
        )
        with pytest.raises(RuleSpecError):
            grs_from_spec(spec, kind="one-sided")

    def test_eigenvariable_in_conclusion_rejected(self):
        spec = GeometricRuleSpec(
            "bad", (("R", "x", "y"),), (((("R", "y", "x"),), ("x",)),)
        )
        with pytest.raises(RuleSpecError):
            grs_from_spec(spec)

    def test_parse_rulespec(self):
        specs = parse_rulespec(
            """
            rule t31
            conclusion: R x y, R y z, R z w
            premise: R x w

            rule dir
            conclusion: R x y, R x z
            premise: R y u, R z v, u = v [fresh: u v]
            """
        )
        assert [s.name for s in specs] == ["t31", "dir"]
        assert rules_equal_up_to_renaming(grs_from_spec(specs[0]), t31_rule(kind="labelled"))
        assert rules_equal_up_to_renaming(grs_from_spec(specs[1]), geach_rule(GeachParams(1, 1, 1, 1)))

    def test_rejects_turnstile(self):
        with pytest.raises(RuleSpecError):
            parse_rulespec("rule bad\nconclusion: R x y\npremise: R x y |- x = y")


class TestLtsePreservationOfRules:
    """Every LSEqK rule except rep-R1 and non-trivial rep-R2 sends an LTSE
    conclusion to LTSE premises."""

    def test_enumerate_small_instances(self):
        calc = builtin("LSEqK")
        subjects = [
            parse_sequent("R x y, x: []p, x: p -> q |- y: p | q, x: <>p"),
            parse_sequent("R x y, R x z, y = z, x: []p |- z: p, x: p & q"),
            parse_sequent("R x y, R y z, y = z |- x: p"),
            parse_sequent("x = x, x: p |- x: p -> bot"),
        ]
        saw_breaking_rep = 0
        for s in subjects:
            assert is_ltse(s)
            for rule in calc.rules:
                for binding, prems in lab_instances(rule, s):
                    for t in prems:
                        if rule.name in ("rep-R1", "rep-R2"):
                            # trivial instances only contract a relation term:
                            # the collapsed graph is unchanged and LTSE survives
                            trivial = set(t.rel.support()) == set(s.rel.support())
                            assert is_ltse(t) == trivial, (rule.name, str(s), str(t))
                            if not trivial:
                                saw_breaking_rep += 1
                        else:
                            assert is_ltse(t), (rule.name, str(t))
        assert saw_breaking_rep > 0


def test_fmt_rule_smoke():
    text = fmt_rule(geach_rule(GeachParams(1, 1, 1, 1)))
    assert "rho(1,1,1,1)" in text and "u,v not in conclusion" in text
    text2 = fmt_rule(ins_rule_from_geach(GeachParams(1, 1, 1, 1)))
    assert "rho-ins" in text2
