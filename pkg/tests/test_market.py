"""Bid-ask markets, the cash-out augmentation and the equivalence check."""

import random
from fractions import Fraction

import pytest

from conerisk.fixtures import coin_tree
from conerisk.ftap import consistent_price_system
from conerisk.market import (
    ArbitrageInInput,
    BadEpsilon,
    BidAskProcess,
    NotInterior,
    augment_market,
    extend_price_system,
    market_scenario_set,
    pairwise_trade_generators,
    trading_cones,
    verify_market_equivalence,
)
from conerisk.risk import is_optionally_stable
from conerisk.sweep import random_market
from conerisk.tree import build_tree

F = Fraction


def one_node_market(pi01, pi10):
    tree = build_tree([{"id": "root", "parent": None, "time": 0, "prob": 1}])
    return BidAskProcess(tree, 1, {"root": ((F(1), F(pi01)), (F(pi10), F(1)))})


def test_trade_generators_d0():
    gens = pairwise_trade_generators(((F(1),),), 1)
    assert gens == [(F(-1),)]


def test_trade_generators_frictionless_line():
    market = one_node_market(1, 1)
    cone = trading_cones(market).cone("root")
    assert cone.lineality_dim() == 1


def test_trade_generators_with_spread():
    market = one_node_market(2, 1)
    gens = set(trading_cones(market).cone("root").generator_list_raw())
    assert gens == {(-F(1), F(0)), (F(0), -F(1)), (-F(2), F(1)), (F(1), -F(1))}


def test_augment_rejects_bad_epsilon(f4):
    for eps in (0, 1, F(3, 2), -F(1, 2)):
        with pytest.raises(BadEpsilon):
            augment_market(f4, eps)


def test_augment_example_values():
    # spread [1/2, 3] widened by 10 percent: tails 9/20, heads 33/10
    market = one_node_market(3, 2)
    aug = augment_market(market, F(1, 10))
    assert [tuple(map(str, v)) for v in aug.vtilde] == [("1", "9/20"), ("1", "33/10")]


def test_augment_d0_is_deterministic_period(f1):
    pi = {n.id: ((F(1),),) for n in f1.nodes}
    market = BidAskProcess(f1, 0, pi)
    aug = augment_market(market, F(1, 10))
    assert aug.tree.horizon == 2 and aug.tree.n_leaves == 2
    assert all(v == (F(1),) for v in aug.vtilde)


def test_augment_bracket_property(f4):
    aug = augment_market(f4, F(1, 10))
    for leaf in f4.tree.leaves:
        pi_T = f4.pi[leaf.id]
        tails = aug.vtilde[aug.tree.leaf_index(aug.coin_leaf_id(leaf.id, (0,)))][1]
        heads = aug.vtilde[aug.tree.leaf_index(aug.coin_leaf_id(leaf.id, (1,)))][1]
        assert tails < 1 / pi_T[1][0] <= pi_T[0][1] < heads


def test_augmented_numeraires_normalized(f4):
    aug = augment_market(f4, F(1, 10))
    for v in aug.v.values:
        assert sum(v) == 1 and all(q > 0 for q in v)


def test_final_period_cone_is_frictionless(f4):
    aug = augment_market(f4, F(1, 10))
    for leaf in aug.tree.leaves:
        assert aug.cones.cone(leaf.id).lineality_dim() == f4.d


def test_extension_midpoint_is_fair_coin(f4):
    aug = augment_market(f4, F(1, 10))
    zstar = consistent_price_system(trading_cones(f4))
    ext = extend_price_system(zstar, aug)
    # coin weights at the u-leaf average the two coin values back exactly
    zu = zstar.value("u")
    up0 = ext.value(aug.coin_leaf_id("u", (0,)))
    up1 = ext.value(aug.coin_leaf_id("u", (1,)))
    assert tuple((a + b) / 2 for a, b in zip(up0, up1)) == zu


def test_extension_requires_strict_interior(f4):
    aug = augment_market(f4, F(1, 10))
    from conerisk.ftap import PriceSystem

    # touch the ask boundary at the u-leaf: ratio 3 = pi01(u) stays inside
    # the widened bracket, but ratio above heads price must fail
    bad_vals = {
        "root": (F(1), F(7, 2)),
        "u": (F(1), F(7, 2)),
        "d": (F(1), F(7, 2)),
    }
    bad = PriceSystem(f4.tree, 2, bad_vals, F(0), True)
    with pytest.raises(NotInterior):
        extend_price_system(bad, aug)


def test_extension_theta_half_gives_unit_weights():
    market = one_node_market(3, 2)
    aug = augment_market(market, F(1, 10))
    lo, hi = F(9, 20), F(33, 10)
    mid = (lo + hi) / 2
    from conerisk.ftap import PriceSystem

    z = PriceSystem(market.tree, 2, {"root": (F(1), mid)}, F(1), True)
    ext = extend_price_system(z, aug)
    v0 = ext.value(aug.coin_leaf_id("root", (0,)))
    v1 = ext.value(aug.coin_leaf_id("root", (1,)))
    # unit coin reweighting: each branch carries exactly the terminal prices
    assert v0 == (F(1), lo) and v1 == (F(1), hi)


def test_scenario_set_d0_spans_all_measures(f1):
    # with one currency the attainable claims are exactly the nonpositive
    # ones, so the scenario set must cut that cone out: the full simplex
    # of measures, including the reference measure in its hull
    pi = {n.id: ((F(1),),) for n in f1.nodes}
    market = BidAskProcess(f1, 0, pi)
    scen = market_scenario_set(augment_market(market, F(1, 10)))
    assert scen.numeraire.values == ((F(1),), (F(1),))
    densities = set(scen.scenario_set.densities)
    assert (F(2), F(0)) in densities and (F(0), F(2)) in densities
    from conerisk.risk import _in_convex_hull

    assert _in_convex_hull(scen.scenario_set, (F(1), F(1)))


def test_scenario_densities_are_probabilities(f4):
    scen = market_scenario_set(augment_market(f4, F(1, 10)))
    probs = scen.market.tree.leaf_probs
    for lam in scen.scenario_set.densities:
        assert all(q >= 0 for q in lam)
        assert sum(l * p for l, p in zip(lam, probs)) == 1


def test_scenario_set_is_stable_for_returned_numeraire(f4):
    scen = market_scenario_set(augment_market(f4, F(1, 10)))
    report = is_optionally_stable(
        scen.scenario_set, scen.numeraire, rng=random.Random(5), samples=4
    )
    assert report.verdict
    for check in report.cross_checks:
        assert check.get("inHull", True)


def test_scenario_step_cones_contain_trading_cone_duals(f4):
    """Weighted conditional numeraire values of the scenario set span, at
    every original node, at most the dual of that node's trading cone;
    hence each step cone contains the trading cone."""
    from conerisk.risk import step_cone_generators

    aug = augment_market(f4, F(1, 10))
    scen = market_scenario_set(aug)
    cones = trading_cones(f4)
    for node in f4.tree.nodes:
        dual_gens = step_cone_generators(
            scen.scenario_set, scen.numeraire, node.id
        )
        for z in dual_gens:
            for g in cones.cone(node.id).generators():
                assert sum(a * b for a, b in zip(z, g)) <= 0


def test_arbitrage_input_rejected(f1):
    from conerisk.market import BidAskProcess

    pi = {n.id: ((F(1), F(1, 2)), (F(1), F(1))) for n in f1.nodes}
    bad = BidAskProcess(f1, 1, pi)
    with pytest.raises(ArbitrageInInput):
        market_scenario_set(augment_market(bad, F(1, 10)))


def test_equivalence_d0_nonpositive_claims(f1):
    pi = {n.id: ((F(1),),) for n in f1.nodes}
    market = BidAskProcess(f1, 0, pi)
    report = verify_market_equivalence(market, F(1, 10))
    assert report.verdict


def test_equivalence_frictionless_binomial_matches_emm():
    # pi01 * pi10 == 1 everywhere: the classical one-martingale market
    tree = coin_tree()
    pi = {
        "root": ((F(1), F(2)), (F(1, 2), F(1))),
        "u": ((F(1), F(3)), (F(1, 3), F(1))),
        "d": ((F(1), F(1)), (F(1), F(1))),
    }
    market = BidAskProcess(tree, 1, pi)
    report = verify_market_equivalence(market, F(1, 10))
    assert report.verdict


def test_equivalence_f4_with_certificates(f4):
    report = verify_market_equivalence(f4, F(1, 10))
    assert report.verdict
    assert len(report.inclusion_checks) == 2


def test_equivalence_random_markets():
    rng = random.Random(23)
    for _ in range(4):
        market = random_market(rng, rng.randint(1, 2), rng.randint(0, 1))
        assert verify_market_equivalence(market, F(1, 10)).verdict
