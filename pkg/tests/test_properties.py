"""Randomized exact invariants spanning the whole engine."""

import random
from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from conerisk.fixtures import all_measures_scenario
from conerisk.risk import (
    NumeraireVector,
    acceptance_portfolio_cone,
    compose_rho,
    is_optionally_stable,
    rho0,
)
from conerisk.simplex import LinearProgram
from conerisk.sweep import (
    prop_bipolar,
    prop_compose_dominates,
    prop_dual_of_acceptance,
    prop_main_agreement,
    prop_market_construction,
    prop_risk_axioms,
    prop_step_cone_duality,
    prop_superhedge_duality,
    prop_trading_cone_consistency,
    random_scalar_claim,
    random_scenario_set,
    random_tree,
)
from conerisk.tree import cond_expect, embed_adapted

F = Fraction


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=20, deadline=None)
def test_tower_property_on_random_trees(seed):
    rng = random.Random(seed)
    tree = random_tree(rng, max_leaves=10)
    x = random_scalar_claim(rng, tree)
    s = rng.randint(0, tree.horizon)
    t = rng.randint(0, s)
    inner = embed_adapted(tree, cond_expect(tree, x, s))
    assert cond_expect(tree, inner, t).scalars() == cond_expect(tree, x, t).scalars()


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=15, deadline=None)
def test_acceptance_cone_is_arbitrage_free(seed):
    """No nonnegative nonzero claim is acceptable: per-coordinate LPs."""
    rng = random.Random(seed)
    tree = random_tree(rng, max_leaves=6)
    s = random_scenario_set(rng, tree, 4)
    width = rng.randint(1, 2)
    v = NumeraireVector(
        tree,
        tuple(
            tuple(F(rng.randint(1, 4)) for _ in range(width)) for _ in tree.leaves
        ),
    )
    acc = acceptance_portfolio_cone(s, v)
    n = tree.n_leaves * width
    for coord in range(n):
        lp = LinearProgram(n, nonneg=[True] * n)  # X >= 0 componentwise
        for h in acc.facet_rows():
            lp.add_constraint(list(h), "<=", 0)
        row = [F(0)] * n
        row[coord] = F(1)
        lp.add_constraint(row, "<=", 1)
        lp.set_objective(row, "max")
        res = lp.solve()
        assert res.status == "optimal" and res.value == 0


def test_compose_equals_static_for_stable_unit_scenarios():
    """Backward composition collapses whenever the set is stable for the
    constant numeraire.

    Unstructured random sets are almost never stable, so the guaranteed
    stable family is the all-measures set on random trees; random sets
    still run through the same check whenever they happen to pass.
    """
    rng = random.Random(42)
    checked = 0
    for _ in range(12):
        tree = random_tree(rng, max_leaves=8)
        candidates = [all_measures_scenario(tree), random_scenario_set(rng, tree, 4)]
        v = NumeraireVector.unit(tree)
        for s in candidates:
            if not is_optionally_stable(s, v).verdict:
                continue
            checked += 1
            for _ in range(5):
                x = random_scalar_claim(rng, tree)
                assert compose_rho(s, x) == rho0(s, x)
    assert checked >= 12  # every all-measures instance is stable


def test_property_battery_other_seeds():
    for seed, prop, n in [
        (101, prop_bipolar, 6),
        (102, prop_dual_of_acceptance, 3),
        (103, prop_step_cone_duality, 3),
        (104, prop_main_agreement, 3),
        (105, prop_compose_dominates, 6),
        (106, prop_superhedge_duality, 3),
        (107, prop_trading_cone_consistency, 3),
        (108, prop_risk_axioms, 6),
        (109, prop_market_construction, 1),
    ]:
        result = prop(random.Random(seed), n)
        assert result.passed, (prop.__name__, result.failures[:1])
