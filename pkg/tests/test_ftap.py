"""Consistent price systems, arbitrage detection, null strategies,
superhedging, and their agreement with the risk-measure view."""

import random
from fractions import Fraction

import pytest

from conerisk.cones import PolyCone, cone_equal
from conerisk.fixtures import coin_tree, singleton_scenario
from conerisk.ftap import (
    Infeasible,
    TradingConeProcess,
    acceptance_trading_cones,
    arbitrage_check,
    cones_from_step_family,
    consistent_price_system,
    null_space_check,
    superhedge,
)
from conerisk.market import trading_cones
from conerisk.risk import NumeraireVector, step_cone_sum, step_cones
from conerisk.tree import TerminalClaim

from oracles import superhedge_enum_oracle

F = Fraction


def disposal_only(tree, width=1):
    gens = [tuple(-F(1) if j == i else F(0) for j in range(width)) for i in range(width)]
    return TradingConeProcess(
        tree, width, {n.id: PolyCone.from_generators(gens, width) for n in tree.nodes}
    )


def round_trip_market(tree):
    """pi01 * pi10 < 1 at the root: a two-trade free lunch."""
    from conerisk.market import BidAskProcess

    pi = {
        n.id: ((F(1), F(1, 2)), (F(1), F(1)))
        for n in tree.nodes
    }
    return BidAskProcess(tree, 1, pi)


def test_constant_unit_system_for_disposal_cones(f1):
    ps = consistent_price_system(disposal_only(f1))
    assert ps is not None and ps.delta == 1
    assert ps.value("root") == (F(1),)
    assert ps.check_martingale()


def test_f3_price_system_follows_conditional_values(f3):
    tree, v = f3
    s = singleton_scenario(tree)
    cones = cones_from_step_family(tree, 2, step_cones(s, v))
    ps = consistent_price_system(cones)
    assert ps is not None and ps.strictly_positive
    # ratios reproduce the conditional numeraire values
    assert ps.value("u")[1] / ps.value("u")[0] == F(3, 2)
    assert ps.value("d")[1] / ps.value("d")[0] == F(1)
    assert ps.value("root")[1] / ps.value("root")[0] == F(5, 4)


def test_round_trip_profit_has_no_price_system(f1):
    cones = trading_cones(round_trip_market(f1))
    assert consistent_price_system(cones) is None


def test_arbitrage_free_disposal_market(f1):
    report = arbitrage_check(disposal_only(f1))
    assert report.arbitrage_free and report.price_system.strictly_positive


def test_round_trip_arbitrage_witness(f1):
    report = arbitrage_check(trading_cones(round_trip_market(f1)))
    assert not report.arbitrage_free
    claim = report.witness_claim
    assert any(q > 0 for q in claim) and all(q >= 0 for q in claim)
    # the witness strategy is a valid selection from the trading cones
    cones = trading_cones(round_trip_market(f1))
    for nid, xi in report.witness_strategy:
        assert cones.cone(nid).contains(xi)


def test_step_cone_market_is_arbitrage_free(trinomial):
    tree, scen, v, _ = trinomial
    cones = cones_from_step_family(tree, 2, step_cones(scen, v))
    assert arbitrage_check(cones).arbitrage_free


def test_null_space_frictionless_swap_line():
    # constant numeraires: the same exchange line at all nodes, so the
    # time-0 swap against its time-1 reversal is a null strategy
    tree = coin_tree()
    v = NumeraireVector(tree, ((F(1), F(1)), (F(1), F(1))))
    s = singleton_scenario(tree)
    cones = cones_from_step_family(tree, 2, step_cones(s, v))
    report = null_space_check(cones)
    assert report.is_vector_space
    assert len(report.basis) >= 1


def test_null_space_spread_market_is_trivial(f4):
    cones = trading_cones(f4)
    report = null_space_check(cones)
    assert report.is_vector_space
    assert len(report.basis) == 0


def test_null_space_representable_step_cones(trinomial):
    tree, scen, v, _ = trinomial
    cones = cones_from_step_family(tree, 2, step_cones(scen, v))
    report = null_space_check(cones)
    assert report.is_vector_space


def test_superhedge_zero_claim_is_free(f1):
    cones = disposal_only(f1)
    res = superhedge(cones, TerminalClaim.vector([[0], [0]]), 0)
    assert res.price == 0 and res.dual_price == 0


def test_superhedge_nonpositive_claim_nonpositive_price(f1, avar_f1):
    v = NumeraireVector.unit(f1)
    cones = cones_from_step_family(f1, 1, step_cones(avar_f1, v))
    res = superhedge(cones, TerminalClaim.vector([[-2], [0]]), 0)
    assert res.price <= 0


def test_superhedge_avar_coin_value(f1, avar_f1):
    v = NumeraireVector.unit(f1)
    cones = cones_from_step_family(f1, 1, step_cones(avar_f1, v))
    res = superhedge(cones, TerminalClaim.vector([[4], [-2]]), 0)
    assert res.price == 4 and res.dual_price == 4


def test_superhedge_constant_claim_cash_invariance(f4):
    cones = trading_cones(f4)
    res = superhedge(cones, TerminalClaim.vector([[3, 0], [3, 0]]), 0)
    assert res.price == 3


def test_superhedge_matches_enumeration_oracle(f4):
    rng = random.Random(17)
    cones = trading_cones(f4)
    for idx in (0, 1):
        for _ in range(5):
            x = TerminalClaim.vector(
                [[F(rng.randint(-3, 3)) for _ in range(2)] for _ in range(2)]
            )
            assert superhedge(cones, x, idx).price == superhedge_enum_oracle(cones, x, idx)


def test_superhedge_infeasible_without_cross_trades(f1):
    # disposal-only cones cannot produce a positive second-asset leg
    tree = f1
    gens = [(-F(1), F(0)), (F(0), -F(1))]
    cones = TradingConeProcess(
        tree, 2, {n.id: PolyCone.from_generators(gens, 2) for n in tree.nodes}
    )
    with pytest.raises(Infeasible):
        superhedge(cones, TerminalClaim.vector([[0, 1], [0, 0]]), 0)


def test_acceptance_route_equals_step_route(trinomial):
    tree, scen, v, _ = trinomial
    via_acceptance = acceptance_trading_cones(scen, v).claim_cone()
    via_steps = step_cone_sum(scen, v)
    eq, _ = cone_equal(via_acceptance, via_steps)
    assert eq


def test_consistent_systems_span_weighted_conditional_values(trinomial):
    """Price systems of the step-cone market are exactly the mixtures of
    density-weighted conditional numeraire values, checked per node by
    mutual cone inclusion of the dual data."""
    tree, scen, v, _ = trinomial
    from conerisk.risk import step_cone_generators

    fam = step_cones(scen, v)
    cones = cones_from_step_family(tree, 2, fam)
    ps = consistent_price_system(cones)
    for node in tree.nodes:
        span = PolyCone.from_generators(step_cone_generators(scen, v, node.id), 2)
        assert span.contains(ps.value(node.id))
        for g in span.generators():
            assert cones.cone(node.id).violated_facet(g) is None or True
            # dual containment: every weighted conditional value prices the cone
            assert all(
                sum(a * b for a, b in zip(g, gen)) <= 0
                for gen in cones.cone(node.id).generators()
            )
