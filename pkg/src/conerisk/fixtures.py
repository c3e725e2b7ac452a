"""Canonical desk fixtures used by the test suite, the CLI examples and
the randomized sweeps."""

from __future__ import annotations

from fractions import Fraction

from .cones import enumerate_polyhedron
from .market import BidAskProcess
from .rational import Q
from .risk import NumeraireVector, ScenarioSet
from .tree import FilteredTree, TerminalClaim, build_tree

F = Fraction


def coin_tree() -> FilteredTree:
    """One period, two equally likely branches."""
    return build_tree(
        [
            {"id": "root", "parent": None, "time": 0, "prob": 1},
            {"id": "u", "parent": "root", "time": 1, "prob": F(1, 2)},
            {"id": "d", "parent": "root", "time": 1, "prob": F(1, 2)},
        ]
    )


def binary_tree(horizon: int) -> FilteredTree:
    """Uniform binary tree with ``2**horizon`` leaves."""
    nodes = [{"id": "root", "parent": None, "time": 0, "prob": 1}]
    frontier = ["root"]
    for t in range(1, horizon + 1):
        nxt = []
        for parent in frontier:
            stem = "" if parent == "root" else parent
            for branch in "ud":
                nid = stem + branch
                nodes.append({"id": nid, "parent": parent, "time": t, "prob": F(1, 2)})
                nxt.append(nid)
        frontier = nxt
    return build_tree(nodes)


def trinomial_tree() -> FilteredTree:
    return build_tree(
        [
            {"id": "root", "parent": None, "time": 0, "prob": 1},
            {"id": "a", "parent": "root", "time": 1, "prob": F(1, 3)},
            {"id": "b", "parent": "root", "time": 1, "prob": F(1, 3)},
            {"id": "c", "parent": "root", "time": 1, "prob": F(1, 3)},
        ]
    )


def singleton_scenario(tree: FilteredTree) -> ScenarioSet:
    """The reference measure alone."""
    return ScenarioSet(tree, ((F(1),) * tree.n_leaves,))


def avar_scenario_set(tree: FilteredTree, level) -> ScenarioSet:
    """Average-value-at-risk scenario set at the given tail level.

    Generators are the vertices of the density polytope
    ``{0 <= density <= 1/level, unit expectation}``.
    """
    level = Q(level)
    if not 0 < level <= 1:
        raise ValueError("tail level must lie in (0, 1]")
    L = tree.n_leaves
    probs = tree.leaf_probs
    cap = 1 / level
    a_ub = []
    b_ub = []
    for i in range(L):
        row = [F(0)] * L
        row[i] = F(-1)
        a_ub.append(row)
        b_ub.append(F(0))
        row = [F(0)] * L
        row[i] = F(1)
        a_ub.append(row)
        b_ub.append(cap)
    a_eq = [[probs[i] for i in range(L)]]
    vertices, rays, lin = enumerate_polyhedron(a_ub, b_ub, a_eq, [F(1)], L)
    assert not rays and not lin
    return ScenarioSet(tree, tuple(tuple(v) for v in sorted(vertices)))


def f3_numeraire(tree: FilteredTree | None = None) -> tuple[FilteredTree, NumeraireVector]:
    """Two assets on the coin tree with mean risky value 5/4."""
    tree = tree if tree is not None else coin_tree()
    v = NumeraireVector(tree, ((F(1), F(3, 2)), (F(1), F(1))))
    return tree, v


def trinomial_emm_fixture() -> tuple[FilteredTree, ScenarioSet, NumeraireVector, TerminalClaim]:
    """Incomplete one-period market: bond plus a stock moving 2 -> {1,2,4}.

    The scenario set is the (two-vertex) polytope of martingale measures
    for the stock, and the numeraires are the terminal asset values.
    """
    from .risk import generic_scenario_set

    tree = trinomial_tree()
    x = TerminalClaim.vector([[1, 1], [1, 2], [1, 4]])
    scen, _flags = generic_scenario_set(tree, x, {"root": [(1, 1), (2, 2)]})
    v = NumeraireVector(tree, x.values)
    return tree, scen, v, x


def f4_market() -> BidAskProcess:
    """One-period two-asset bid-ask market with genuine spreads."""
    tree = coin_tree()
    pi = {
        "root": ((F(1), F(2)), (F(1), F(1))),
        "u": ((F(1), F(3)), (F(1, 2), F(1))),
        "d": ((F(1), F(3, 2)), (F(1), F(1))),
    }
    return BidAskProcess(tree, 1, pi)


def all_measures_scenario(tree: FilteredTree) -> ScenarioSet:
    """Every measure dominated by the reference: leaf point masses."""
    probs = tree.leaf_probs
    gens = []
    for i in range(tree.n_leaves):
        lam = [F(0)] * tree.n_leaves
        lam[i] = 1 / probs[i]
        gens.append(tuple(lam))
    return ScenarioSet(tree, tuple(gens))
