"""Bid-ask markets with proportional transaction costs and their risk view.

A bid-ask process gives each node a positive exchange-rate matrix; its
trading cones are spanned by free disposal and the pairwise trades.  The
market is mapped to a coherent-risk model by appending one cash-out
period: every original leaf spins one fair coin per risky asset, the
coin pushes the final price just outside the last bid-ask interval, and
the resulting terminal prices (normalized to sum to one) become the
numeraire vector.  Scenario measures are read off consistent price
systems of the augmented market; the attainable-claim cone of the
original market then coincides with the terminal slice of the induced
acceptance cone, and the construction is checked with certificates.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .cones import PolyCone, member
from .ftap import PriceSystem, TradingConeProcess, consistent_price_system
from .rational import Q, Vec, dot, qstr, vec, vzero
from .risk import NumeraireVector, ScenarioSet, claim_dim
from .tree import FilteredTree, build_tree, tree_from_json

_ZERO = Fraction(0)
_ONE = Fraction(1)


class BadEpsilon(ValueError):
    pass


class ArbitrageInInput(ValueError):
    """The construction requires an arbitrage-free input market."""


class NotInterior(ValueError):
    """Price system touches the bid-ask boundary; extension undefined."""


@dataclass(frozen=True)
class BidAskProcess:
    """Adapted (d+1)x(d+1) exchange-rate matrices, unit diagonal.

    ``pi[node][i][j]`` is the number of units of asset ``i`` surrendered
    per unit of asset ``j`` acquired at that node.  Strict positivity is
    required; no cross-rate consistency is imposed.
    """

    tree: FilteredTree
    d: int
    pi: Mapping[str, tuple[Vec, ...]]

    def __post_init__(self):
        w = self.d + 1
        for node in self.tree.nodes:
            m = self.pi[node.id]
            if len(m) != w or any(len(r) != w for r in m):
                raise ValueError(f"matrix at {node.id!r} is not {w}x{w}")
            for i in range(w):
                if m[i][i] != 1:
                    raise ValueError(f"pi[{i}][{i}] != 1 at {node.id!r}")
                for j in range(w):
                    if m[i][j] <= 0:
                        raise ValueError(f"nonpositive rate at {node.id!r}")

    @property
    def width(self) -> int:
        return self.d + 1

    def rate(self, node_id: str, i: int, j: int) -> Fraction:
        return self.pi[node_id][i][j]

    def to_json_dict(self) -> dict:
        return {
            "T": self.tree.horizon,
            "d": self.d,
            "tree": self.tree.to_json_dict(),
            "pi": [
                {"node": nid, "matrix": [[qstr(x) for x in row] for row in m]}
                for nid, m in ((n.id, self.pi[n.id]) for n in self.tree.nodes)
            ],
        }

    @staticmethod
    def from_json(data) -> "BidAskProcess":
        data = json.loads(data) if isinstance(data, str) else data
        tree = tree_from_json(data["tree"])
        d = int(data["d"])
        pi = {
            entry["node"]: tuple(vec(row) for row in entry["matrix"])
            for entry in data["pi"]
        }
        missing = [n.id for n in tree.nodes if n.id not in pi]
        if missing:
            raise ValueError(f"missing bid-ask matrices for nodes {missing}")
        return BidAskProcess(tree, d, pi)


def pairwise_trade_generators(matrix: Sequence[Sequence[Fraction]], width: int) -> list[Vec]:
    """Free disposal plus every pairwise trade of a bid-ask matrix."""
    gens: list[Vec] = []
    for i in range(width):
        e = [_ZERO] * width
        e[i] = Fraction(-1)
        gens.append(tuple(e))
    for i in range(width):
        for j in range(width):
            if i == j:
                continue
            g = [_ZERO] * width
            g[j] += _ONE
            g[i] -= matrix[i][j]
            gens.append(tuple(g))
    return gens


def trading_cones(market: BidAskProcess) -> TradingConeProcess:
    width = market.width
    cones = {
        node.id: PolyCone.from_generators(
            pairwise_trade_generators(market.pi[node.id], width), width
        )
        for node in market.tree.nodes
    }
    return TradingConeProcess(market.tree, width, cones)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentedMarket:
    """Original market plus the frictionless cash-out period.

    Each original leaf gains ``2^d`` equally likely children labelled by
    the coin outcomes; terminal prices ``vtilde`` put the final value of
    each asset strictly outside its last bid-ask interval, and ``v`` is
    the normalization with components summing to one leafwise.
    """

    market: BidAskProcess
    epsilon: Fraction
    tree: FilteredTree  # horizon T + 1
    vtilde: tuple[Vec, ...]  # per augmented leaf
    v: NumeraireVector
    cones: TradingConeProcess  # lifted cones plus the frictionless final period

    @property
    def width(self) -> int:
        return self.market.width

    def coin_leaf_id(self, leaf_id: str, outcome: tuple[int, ...]) -> str:
        return f"{leaf_id}#b{''.join(str(b) for b in outcome)}"


def coin_outcomes(d: int) -> list[tuple[int, ...]]:
    return [tuple(bits) for bits in itertools.product((0, 1), repeat=d)]


def augment_market(market: BidAskProcess, epsilon) -> AugmentedMarket:
    """Append the cash-out period with coin-driven frictionless prices."""
    eps = Q(epsilon)
    if not 0 < eps < 1:
        raise BadEpsilon(f"epsilon must lie in (0,1), got {eps}")
    tree = market.tree
    d = market.d
    width = market.width
    outcomes = coin_outcomes(d)
    coin_prob = Fraction(1, 2 ** d)
    spec = [
        {"id": n.id, "parent": n.parent, "time": n.time, "prob": n.prob}
        for n in tree.nodes
    ]
    vtilde: list[Vec] = []
    leaf_ids: list[str] = []
    for leaf in tree.leaves:
        pi_T = market.pi[leaf.id]
        for outcome in outcomes:
            nid = f"{leaf.id}#b{''.join(str(b) for b in outcome)}"
            spec.append(
                {"id": nid, "parent": leaf.id, "time": tree.horizon + 1, "prob": coin_prob}
            )
            vals = [_ONE]
            for i in range(1, width):
                if outcome[i - 1]:
                    vals.append((1 + eps) * pi_T[0][i])
                else:
                    vals.append((1 - eps) / pi_T[i][0])
            vtilde.append(tuple(vals))
            leaf_ids.append(nid)
    aug_tree = build_tree(spec)
    # normalized numeraires, leafwise unit sum
    v_vals = []
    for vals in vtilde:
        total = sum(vals)
        v_vals.append(tuple(x / total for x in vals))
    v = NumeraireVector(aug_tree, tuple(v_vals))

    base = trading_cones(market)
    cones: dict[str, PolyCone] = {n.id: base.cone(n.id) for n in tree.nodes}
    for nid, vals in zip(leaf_ids, vtilde):
        matrix = tuple(
            tuple(vals[j] / vals[i] for j in range(width)) for i in range(width)
        )
        cone = PolyCone.from_generators(pairwise_trade_generators(matrix, width), width)
        assert cone.lineality_dim() == d, "final period must be frictionless"
        cones[nid] = cone
    aug_cones = TradingConeProcess(aug_tree, width, cones)
    return AugmentedMarket(market, eps, aug_tree, tuple(vtilde), v, aug_cones)


def extend_price_system(z: PriceSystem, aug: AugmentedMarket) -> PriceSystem:
    """Extend a strictly consistent price system through the cash-out
    period via the unique product-form coin reweighting.

    The coin probability per asset is the martingale weight placing the
    deflated terminal price inside its widened bid-ask bracket; the
    extension is verified to have unit conditional reweighting mass and
    to keep the martingale property, exactly.
    """
    market = aug.market
    tree = market.tree
    width = market.width
    d = market.d
    outcomes = coin_outcomes(d)
    values: dict[str, Vec] = dict(z.values)
    for leaf in tree.leaves:
        zt = z.value(leaf.id)
        if zt[0] <= 0:
            raise NotInterior(f"zero base price at {leaf.id!r}")
        thetas: list[Fraction] = []
        lows: list[Fraction] = []
        highs: list[Fraction] = []
        pi_T = market.pi[leaf.id]
        for i in range(1, width):
            lo = (1 - aug.epsilon) / pi_T[i][0]
            hi = (1 + aug.epsilon) * pi_T[0][i]
            ratio = zt[i] / zt[0]
            if not lo < ratio < hi:
                raise NotInterior(
                    f"deflated price {ratio} outside ({lo},{hi}) at {leaf.id!r}"
                )
            thetas.append((ratio - lo) / (hi - lo))
            lows.append(lo)
            highs.append(hi)
        total_weight = _ZERO
        coin_prob = Fraction(1, 2 ** d)
        for outcome in outcomes:
            lam = Fraction(2 ** d)
            for i in range(1, width):
                th = thetas[i - 1]
                lam *= th if outcome[i - 1] else (1 - th)
            total_weight += lam * coin_prob
            nid = aug.coin_leaf_id(leaf.id, outcome)
            vt = aug.vtilde[_aug_leaf_index(aug, nid)]
            values[nid] = tuple(zt[0] * lam * x for x in vt)
        assert total_weight == 1, "coin reweighting must average to one"
        agg = vzero(width)
        for outcome in outcomes:
            nid = aug.coin_leaf_id(leaf.id, outcome)
            agg = tuple(a + coin_prob * b for a, b in zip(agg, values[nid]))
        assert agg == zt, "extension must preserve the martingale property"
    return PriceSystem(aug.tree, width, values, z.delta, z.strictly_positive)


def _aug_leaf_index(aug: AugmentedMarket, nid: str) -> int:
    for i, leaf in enumerate(aug.tree.leaves):
        if leaf.id == nid:
            return i
    raise KeyError(nid)


# ---------------------------------------------------------------------------
# Scenario extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarketScenarios:
    scenario_set: ScenarioSet
    numeraire: NumeraireVector
    market: AugmentedMarket
    interior_index: int  # generator built from the max-delta system

    def to_json_dict(self) -> dict:
        return {
            "densities": self.scenario_set.to_json_dict()["densities"],
            "V": self.numeraire.to_json_dict()["V"],
            "interiorIndex": self.interior_index,
        }


def market_scenario_set(aug: AugmentedMarket) -> MarketScenarios:
    """Scenario measures spanning all consistent price systems.

    Terminal values of consistent price systems for the augmented market
    are leafwise scalings of the terminal prices; the admissible scaling
    profiles form a polytope cut out by the node dual constraints and a
    total-mass normalization.  Its vertices, mapped linearly to density
    form, generate the scenario set; the strictly consistent max-delta
    system (extended through the coins) is appended so every branch is
    charged by an interior generator.
    """
    market = aug.market
    base_cones = trading_cones(market)
    zstar = consistent_price_system(base_cones)
    if zstar is None or not zstar.strictly_positive:
        raise ArbitrageInInput("input market admits arbitrage")
    tree = aug.tree
    width = aug.width
    leaves = tree.leaves
    L = len(leaves)
    probs = tree.leaf_probs

    # variables: one scaling per augmented leaf
    a_ub: list[list[Fraction]] = []
    b_ub: list[Fraction] = []
    for i in range(L):
        row = [_ZERO] * L
        row[i] = Fraction(-1)
        a_ub.append(row)
        b_ub.append(_ZERO)
    for node in market.tree.nodes:
        cone = base_cones.cone(node.id)
        members = tree.descendant_leaves(node.id)
        for g in cone.generators():
            row = [_ZERO] * L
            for i in members:
                w = probs[i] * dot(g, aug.vtilde[i])
                row[i] = w
            a_ub.append(row)
            b_ub.append(_ZERO)
    a_eq = [[probs[i] * sum(aug.vtilde[i]) for i in range(L)]]
    b_eq = [_ONE]
    from .cones import enumerate_polyhedron

    vertices, rays, lin = enumerate_polyhedron(a_ub, b_ub, a_eq, b_eq, L)
    assert not rays and not lin, "scaling polytope must be bounded"
    densities = []
    for c in vertices:
        lam = tuple(c[i] * sum(aug.vtilde[i]) for i in range(L))
        assert sum(l * p for l, p in zip(lam, probs)) == 1
        densities.append(lam)
    interior = extend_price_system(zstar, aug)
    total0 = sum(zstar.value(market.tree.root.id))
    lam_star = tuple(
        sum(interior.value(leaf.id)) / total0 for leaf in leaves
    )
    assert sum(l * p for l, p in zip(lam_star, probs)) == 1
    densities.append(lam_star)
    scen = ScenarioSet(tree, tuple(densities))
    return MarketScenarios(scen, aug.v, aug, len(densities) - 1)


# ---------------------------------------------------------------------------
# The market/risk-measure equivalence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    verdict: bool
    certificate: dict | None
    inclusion_checks: tuple[dict, ...]

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "certificate": self.certificate,
            "crossChecks": list(self.inclusion_checks),
        }


def verify_market_equivalence(
    market: BidAskProcess, epsilon, scenarios: MarketScenarios | None = None
) -> EquivalenceReport:
    """Attainable claims of the market against the induced acceptance cone.

    Left side: the sum of embedded trading cones on the original tree.
    Right side: original-leaf claims whose density-weighted numeraire
    value is nonpositive under every extracted scenario generator.  Both
    cones live on the original claim space and are compared by mutual
    generator membership with certificates both ways.
    """
    if scenarios is None:
        aug = augment_market(market, epsilon)
        scenarios = market_scenario_set(aug)
    scen = scenarios
    aug = scen.market
    tree = market.tree
    width = market.width
    n = claim_dim(tree, width)
    base_cones = trading_cones(market)
    lhs = base_cones.claim_cone()

    # facet normals: aggregate each generator's facet over coin outcomes
    facets: list[Vec] = []
    aug_tree = aug.tree
    aug_probs = aug_tree.leaf_probs
    for k in range(scen.scenario_set.n_generators):
        lam = scen.scenario_set.densities[k]
        row = [_ZERO] * n
        for ai, aug_leaf in enumerate(aug_tree.leaves):
            orig_leaf = aug_tree.node(aug_leaf.id).parent
            i = tree.leaf_index(orig_leaf)
            w = lam[ai] * aug_probs[ai]
            if w:
                for j in range(width):
                    row[i * width + j] += w * scen.numeraire.values[ai][j]
        facets.append(tuple(row))
    rhs = PolyCone.from_facets(facets, n)

    checks = []
    for g in lhs.generators():
        if not rhs.contains(g):
            _, cert = member(rhs, g)
            return EquivalenceReport(
                False,
                {"side": "market claim not acceptable", "claim": [qstr(x) for x in g],
                 "separation": cert.to_json_dict()},
                tuple(checks),
            )
    checks.append({"inclusion": "market in acceptance", "generators": len(lhs.generators())})
    for g in rhs.generators():
        if not lhs.contains(g):
            _, cert = member(lhs, g)
            return EquivalenceReport(
                False,
                {"side": "acceptable claim not attainable", "claim": [qstr(x) for x in g],
                 "separation": cert.to_json_dict()},
                tuple(checks),
            )
    checks.append({"inclusion": "acceptance in market", "generators": len(rhs.generators())})
    return EquivalenceReport(True, None, tuple(checks))
