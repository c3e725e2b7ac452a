"""Risk measure, acceptance/step cones, pastings and the three checkers."""

import itertools
import random
from fractions import Fraction

import pytest

from conerisk.cones import PolyCone, cone_equal, dual_cone, member
from conerisk.fixtures import (
    all_measures_scenario,
    avar_scenario_set,
    singleton_scenario,
)
from conerisk.risk import (
    DeadNode,
    EmptySet,
    NumeraireVector,
    ScenarioSet,
    UndefinedConditional,
    acceptance_portfolio_cone,
    build_stability_witness,
    claim_dim,
    compose_rho,
    decompose,
    dual_generator_cone,
    embed_portfolio,
    generic_scenario_set,
    is_optionally_stable,
    is_representable,
    optional_preimage,
    paste,
    portfolio_value,
    rho,
    rho0,
    stabilization_hull,
    step_cone_sum,
    step_cones,
)
from conerisk.tree import TerminalClaim

from oracles import compose_by_recursion, rho_lp_oracle

F = Fraction


# -- rho ---------------------------------------------------------------------


def test_rho_single_measure_is_expectation(f1):
    s = singleton_scenario(f1)
    assert rho0(s, TerminalClaim.scalar([4, -2])) == 1


def test_rho_avar_coin_and_cash_invariance(avar_f1):
    x = TerminalClaim.scalar([4, -2])
    assert rho0(avar_f1, x) == 4
    shifted = TerminalClaim.scalar([4 + 3, -2 + 3])
    assert rho0(avar_f1, shifted) == 7


def test_rho_of_zero_is_zero_everywhere(f2, avar_f2):
    zero = TerminalClaim.scalar([0, 0, 0, 0])
    for t in range(3):
        assert all(v == 0 for v in rho(avar_f2, zero, t).scalars())


def test_rho_matches_lp_oracle_on_random_instances(f2, avar_f2):
    rng = random.Random(7)
    for _ in range(25):
        x = TerminalClaim.scalar([F(rng.randint(-6, 6), rng.randint(1, 3)) for _ in range(4)])
        t = rng.randint(0, 2)
        got = {n.id: v[0] for n, v in zip(f2.nodes_at(t), rho(avar_f2, x, t).values)}
        assert got == rho_lp_oracle(avar_f2, x, t)


def test_scenario_set_requires_full_cover(f1):
    with pytest.raises(DeadNode):
        ScenarioSet(f1, ((F(2), F(0)),))


# -- compose -----------------------------------------------------------------


def test_compose_singleton_equals_expectation(f2):
    s = singleton_scenario(f2)
    x = TerminalClaim.scalar([0, 12, 12, 0])
    assert compose_rho(s, x) == rho0(s, x) == 6


def test_compose_constant_claim(f2, avar_f2):
    c = TerminalClaim.scalar([5, 5, 5, 5])
    assert compose_rho(avar_f2, c) == 5


def test_compose_strict_witness_found_by_search(avar_f2, f2):
    # exhaustive search over integer claims with entries in [-3, 3]
    witness = None
    for vals in itertools.product(range(-3, 4), repeat=4):
        x = TerminalClaim.scalar(vals)
        if compose_rho(avar_f2, x) > rho0(avar_f2, x):
            witness = vals
            break
    assert witness is not None


def test_compose_matches_direct_recursion(avar_f2):
    rng = random.Random(11)
    for _ in range(20):
        x = TerminalClaim.scalar([F(rng.randint(-5, 5)) for _ in range(4)])
        assert compose_rho(avar_f2, x) == compose_by_recursion(avar_f2, x)


# -- acceptance and step cones -------------------------------------------------


def test_acceptance_cone_single_measure_halfspace(f1):
    s = singleton_scenario(f1)
    v = NumeraireVector.unit(f1)
    acc = acceptance_portfolio_cone(s, v)
    # facets: one halfspace, the plain expectation
    assert len(acc.facet_rows()) == 1
    assert acc.contains((-1, 1)) and not acc.contains((1, F(-1, 2)))


def test_acceptance_dual_matches_weighted_densities(f3):
    tree, v = f3
    s = avar_scenario_set(tree, F(1, 2))
    eq, _ = cone_equal(dual_cone(acceptance_portfolio_cone(s, v)), dual_generator_cone(s, v))
    assert eq


def test_value_null_portfolios_in_both_cones(f3):
    tree, v = f3
    s = singleton_scenario(tree)
    acc = acceptance_portfolio_cone(s, v)
    # y with y.V == 0 leafwise: alpha (v1, -v0) per leaf
    y = []
    for vals in v.values:
        y.extend((vals[1], -vals[0]))
    assert acc.contains(tuple(y)) and acc.contains(tuple(-q for q in y))


def test_step_cones_contain_disposal(f3):
    tree, v = f3
    s = avar_scenario_set(tree, F(1, 2))
    fam = step_cones(s, v)
    for node in tree.nodes:
        cone = fam.cone(node.id)
        assert cone.contains((-1, 0)) and cone.contains((0, -1))


def test_step_cone_at_leaf_is_value_halfspace(f3):
    tree, v = f3
    s = singleton_scenario(tree)
    fam = step_cones(s, v)
    for i, leaf in enumerate(tree.leaves):
        cone = fam.cone(leaf.id)
        facets = cone.facet_rows()
        assert len(facets) == 1
        h = facets[0]
        # the facet normal is positively proportional to the numeraire value
        ratio = v.values[i][0] / h[0]
        assert ratio > 0 and tuple(ratio * q for q in h) == v.values[i]


def test_step_cone_at_root_matches_mean_value(f3):
    tree, v = f3
    s = singleton_scenario(tree)
    cone = step_cones(s, v).cone("root")
    assert cone.contains((F(5, 4), -1)) and cone.contains((-1, F(4, 5)))
    assert not cone.contains((F(5, 4), F(-9, 10)))  # strictly outside the line
    h = cone.facet_rows()
    assert len(h) == 1 and h[0][1] / h[0][0] == F(5, 4)


# -- optional preimage and stabilization ---------------------------------------


def test_preimage_contains_the_cone(f2):
    s = avar_scenario_set(f2, F(1, 2))
    v = NumeraireVector.unit(f2)
    d_cone = dual_generator_cone(s, v)
    for t in range(3):
        pre = optional_preimage(f2, d_cone, t, 1)
        for g in d_cone.generators():
            assert pre.contains(g)


def test_preimage_at_root_single_ray(f1):
    s = singleton_scenario(f1)
    v = NumeraireVector.unit(f1)
    d_cone = dual_generator_cone(s, v)
    pre = optional_preimage(f1, d_cone, 0, 1)
    # membership depends only on the total sum pointing the right way
    assert pre.contains((1, 0)) and pre.contains((2, -1))
    assert not pre.contains((-1, 0))


def test_step_cone_sum_is_dual_of_preimage(f2):
    s = avar_scenario_set(f2, F(1, 2))
    v = NumeraireVector.unit(f2)
    d_cone = dual_generator_cone(s, v)
    fam = step_cones(s, v)
    for t in range(3):
        gens = []
        for node in f2.nodes_at(t):
            for g in fam.cone(node.id).generators():
                gens.append(embed_portfolio(f2, 1, node.id, g))
        level = PolyCone.from_generators(gens, claim_dim(f2, 1))
        eq, _ = cone_equal(level, dual_cone(optional_preimage(f2, d_cone, t, 1)))
        assert eq


def test_stabilization_hull_idempotent_and_increasing(f2):
    s = avar_scenario_set(f2, F(1, 2))
    v = NumeraireVector.unit(f2)
    d_cone = dual_generator_cone(s, v)
    hull = stabilization_hull(f2, d_cone, 1)
    for g in d_cone.generators():
        assert hull.contains(g)
    hull2 = stabilization_hull(f2, hull, 1)
    eq, _ = cone_equal(hull, hull2)
    assert eq


def test_singleton_with_nonconstant_value_destabilizes(f2):
    # scaling freedom at the leaves adds directions the one-point set lacks
    s = singleton_scenario(f2)
    v = NumeraireVector(f2, ((F(1),), (F(2),), (F(1),), (F(2),)))
    d_cone = dual_generator_cone(s, v)
    hull = stabilization_hull(f2, d_cone, 1)
    eq, witness = cone_equal(d_cone, hull)
    assert not eq


def test_stability_hull_minimality_on_random_stable_supersets(f2):
    rng = random.Random(3)
    s = avar_scenario_set(f2, F(1, 2))
    v = NumeraireVector.unit(f2)
    d_cone = dual_generator_cone(s, v)
    hull = stabilization_hull(f2, d_cone, 1)
    big = all_measures_scenario(f2)
    d_big = dual_generator_cone(big, v)
    # the all-measures cone is stable and contains the small cone, so it
    # must contain the stabilization hull as well
    for g in hull.generators():
        assert d_big.contains(g)


# -- pastings -------------------------------------------------------------------


def test_paste_measure_with_itself(f2, avar_f2):
    lam = avar_f2.densities[0]
    # Delbaen reweighting: continuation density over its time-1 restriction
    r = []
    for i, leaf in enumerate(f2.leaves):
        anc = f2.ancestor_at(leaf.id, 1)
        mass = sum(
            avar_f2.densities[0][j] * f2.leaf_probs[j]
            for j in f2.descendant_leaves(anc)
        ) / f2.path_prob(anc)
        r.append(mass)
    pasted = paste(avar_f2, lam, lam, ["root"], r)
    assert pasted == lam


def test_paste_at_horizon_returns_first_measure(f2, avar_f2):
    lam1 = avar_f2.densities[0]
    lam2 = avar_f2.densities[1]
    tau = [leaf.id for leaf in f2.leaves]
    r = (F(1),) * 4
    assert paste(avar_f2, lam1, lam2, tau, r) == lam1


def test_paste_product_formula_by_hand(f2, avar_f2):
    # first measure P, second the (2,0,2,0) vertex, rule at the root,
    # one-step reweighting (3/2, 3/2, 1/2, 1/2): by the product formula the
    # pasted density is (3, 0, 1, 0)
    lam_p = (F(1),) * 4
    lam_q = next(d for d in avar_f2.densities if d == (F(2), F(0), F(2), F(0)))
    r = (F(3, 2), F(3, 2), F(1, 2), F(1, 2))
    pasted = paste(avar_f2, lam_p, lam_q, ["root"], r)
    assert pasted == (F(3), F(0), F(1), F(0))
    probs = f2.leaf_probs
    assert sum(a * p for a, p in zip(pasted, probs)) == 1


def test_paste_rejects_vanishing_continuation(f2, avar_f2):
    lam_p = (F(1),) * 4
    lam_q = next(d for d in avar_f2.densities if d == (F(2), F(2), F(0), F(0)))
    r = (F(1),) * 4
    with pytest.raises(UndefinedConditional):
        paste(avar_f2, lam_p, lam_q, ["root"], r)


# -- checkers -------------------------------------------------------------------


def test_all_measures_stable_and_representable_for_any_numeraire(f2):
    rng = random.Random(5)
    s = all_measures_scenario(f2)
    for d in (0, 1):
        v = NumeraireVector(
            f2, tuple(tuple(F(rng.randint(1, 5)) for _ in range(d + 1)) for _ in range(4))
        )
        assert is_optionally_stable(s, v, rng=random.Random(1)).verdict
        assert is_representable(s, v).verdict


def test_trinomial_emm_fixture_passes_all_checkers(trinomial):
    tree, scen, v, x = trinomial
    st = is_optionally_stable(scen, v, rng=random.Random(2))
    rep = is_representable(scen, v)
    assert st.verdict and rep.verdict
    for check in st.cross_checks:
        assert check.get("inHull", True)


def test_avar_unit_numeraire_fails_all_checkers(f2, avar_f2):
    v = NumeraireVector.unit(f2)
    st = is_optionally_stable(avar_f2, v)
    rep = is_representable(avar_f2, v)
    assert not st.verdict and not rep.verdict
    assert st.certificate is not None and rep.certificate is not None
    # certificates re-verify: the hull generator is separated from the cone
    sep = st.certificate["separation"]
    point = [F(q) for q in sep["point"]]
    y = [F(q) for q in sep["separator"]]
    assert sum(a * b for a, b in zip(point, y)) > 0


def test_generic_scenario_vacuous_boxes_give_simplex(f1):
    x = TerminalClaim.vector([[4], [-2]])
    scen, flags = generic_scenario_set(f1, x, {"root": [(-2, 4)]})
    assert scen.n_generators == 2  # the two point masses
    assert set(flags) == {False}


def test_generic_scenario_martingale_boxes_contain_reference(f2):
    # terminal value of the reference-measure martingale with X_t = E[X_T | F_t]
    x = TerminalClaim.vector([[4], [0], [2], [2]])
    boxes = {"root": [(2, 2)]}
    for node in f2.nodes_at(1):
        idxs = f2.descendant_leaves(node.id)
        mean = sum(x.values[i][0] for i in idxs) / len(idxs)
        boxes[node.id] = [(mean, mean)]
    scen, flags = generic_scenario_set(f2, x, boxes)
    probs = f2.leaf_probs
    uniform = (F(1),) * 4
    # the reference density is a convex combination of the generators
    from conerisk.risk import _in_convex_hull

    assert _in_convex_hull(scen, uniform)


def test_generic_scenario_recovers_emm_vertices(trinomial):
    tree, scen, v, x = trinomial
    assert sorted(scen.densities) == sorted(
        [(F(0), F(3), F(0)), (F(2), F(0), F(1))]
    )


def test_generic_scenario_empty_boxes_raise(f1):
    x = TerminalClaim.vector([[4], [-2]])
    with pytest.raises(EmptySet):
        generic_scenario_set(f1, x, {"root": [(10, 11)]})


# -- decomposition ----------------------------------------------------------------


def test_decompose_nonpositive_claim(f2, avar_f2):
    v = NumeraireVector.unit(f2)
    x = TerminalClaim.scalar([-1, 0, -2, 0])
    dec, cert = decompose(avar_f2, v, x)
    assert dec is not None
    fam = step_cones(avar_f2, v)
    for adj in dec.adjustments:
        for node, val in zip(f2.nodes_at(adj.time), adj.values):
            assert fam.cone(node.id).contains(val)


def test_decompose_reserve_trajectory(f2, avar_f2):
    v = NumeraireVector.unit(f2)
    x = TerminalClaim.scalar([-1, 0, -2, 0])
    dec, _ = decompose(avar_f2, v, x)
    assert dec is not None
    # increments of the reserves are exactly the dated adjustments
    for t in range(1, 3):
        res_t = {n.id: val for n, val in zip(f2.nodes_at(t), dec.reserves[t].values)}
        res_prev = {
            n.id: val for n, val in zip(f2.nodes_at(t - 1), dec.reserves[t - 1].values)
        }
        adj_t = {n.id: val for n, val in zip(f2.nodes_at(t), dec.adjustments[t].values)}
        for node in f2.nodes_at(t):
            parent = f2.node(node.id).parent
            got = tuple(a - b for a, b in zip(res_t[node.id], res_prev[parent]))
            assert got == adj_t[node.id]
    # the terminal reserve funds the claim exactly
    term = dec.reserves[-1]
    for i, leaf in enumerate(f2.leaves):
        val = sum(a * b for a, b in zip(term.values[i], v.values[i]))
        assert val == x.scalars()[i]


def test_decompose_constant_step(f3):
    tree, v = f3
    s = singleton_scenario(tree)
    y0 = (F(5, 4), F(-1))  # in the root step cone, value (5/4) - v1
    x = TerminalClaim.scalar(
        [y0[0] * vv[0] + y0[1] * vv[1] for vv in v.values]
    )
    dec, cert = decompose(s, v, x)
    assert dec is not None


def test_decompose_generators_of_representable_fixture(trinomial):
    tree, scen, v, _ = trinomial
    acc = acceptance_portfolio_cone(scen, v)
    for g in acc.generators():
        y = TerminalClaim(2, tuple(tuple(g[2 * i + j] for j in range(2)) for i in range(3)))
        dec, cert = decompose(scen, v, portfolio_value(v, y))
        assert dec is not None, g


def test_decompose_failure_carries_separator(f2, avar_f2):
    v = NumeraireVector.unit(f2)
    acc = acceptance_portfolio_cone(avar_f2, v)
    failed = False
    for g in acc.generators():
        x = TerminalClaim.scalar(list(g))
        dec, cert = decompose(avar_f2, v, x)
        if dec is None:
            failed = True
            y = [F(q) for q in cert["separator"]]
            # separating functional: positive on the claim...
            assert sum(a * b for a, b in zip(y, x.scalars())) > 0
            # ...and nonpositive against every step-cone value
            fam = step_cones(avar_f2, v)
            for node in f2.nodes:
                for gen in fam.cone(node.id).generators():
                    val = sum(
                        y[i] * gen[0] * v.values[i][0]
                        for i in f2.descendant_leaves(node.id)
                    )
                    assert val <= 0
    assert failed


# -- stability witness ------------------------------------------------------------


def test_stability_witness_direct_member(f2):
    s = all_measures_scenario(f2)
    v = NumeraireVector.unit(f2)
    d_cone = dual_generator_cone(s, v)
    z = d_cone.generators()[0]
    w = build_stability_witness(f2, d_cone, z, 1)
    assert tuple(w.beta0 * q for q in w.xi0) == z


def test_stability_witness_scaling(f2):
    s = all_measures_scenario(f2)
    v = NumeraireVector.unit(f2)
    d_cone = dual_generator_cone(s, v)
    g = d_cone.generators()[1]
    z = tuple(2 * q for q in g)
    w = build_stability_witness(f2, d_cone, z, 1)
    assert tuple(w.beta0 * q for q in w.xi0) == z


def test_stability_witness_on_stable_fixture_members(trinomial):
    tree, scen, v, _ = trinomial
    d_cone = dual_generator_cone(scen, v)
    rng = random.Random(13)
    gens = d_cone.generators()
    for _ in range(5):
        coeffs = [F(rng.randint(0, 3)) for _ in gens]
        z = [F(0)] * d_cone.dim
        for c, g in zip(coeffs, gens):
            for j in range(d_cone.dim):
                z[j] += c * g[j]
        w = build_stability_witness(tree, d_cone, tuple(z), 2)
        assert tuple(w.beta0 * q for q in w.xi0) == tuple(z)
        ok, _ = member(d_cone, w.xi0, certificate=False)
        assert ok
