"""Randomized property battery and instance generators.

Each property is an exact identity or equivalence at desk scale; a
failure is a finding, not an error, and is reported verbatim with the
instance that produced it.  All randomness flows through one seeded
generator, so reports are reproducible bit for bit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .cones import PolyCone, cone_equal, cone_intersect, cone_sum, dual_cone
from .fixtures import binary_tree
from .ftap import (
    acceptance_trading_cones,
    cones_from_step_family,
    consistent_price_system,
    superhedge,
)
from .market import (
    BidAskProcess,
    augment_market,
    extend_price_system,
    market_scenario_set,
    trading_cones,
    verify_market_equivalence,
)
from .rational import qstr
from .risk import (
    NumeraireVector,
    ScenarioSet,
    acceptance_portfolio_cone,
    compose_rho,
    decompose,
    dual_generator_cone,
    embed_portfolio,
    claim_dim,
    is_optionally_stable,
    is_representable,
    optional_preimage,
    rho,
    rho0,
    step_cone_sum,
    step_cones,
)
from .tree import FilteredTree, TerminalClaim, build_tree

F = Fraction


# ---------------------------------------------------------------------------
# Instance generators
# ---------------------------------------------------------------------------


def random_fraction(rng: random.Random, lo: int = -3, hi: int = 3, den: int = 4) -> Fraction:
    return Fraction(rng.randint(lo * den, hi * den), den)


def random_positive_fraction(rng: random.Random, hi: int = 3, den: int = 4) -> Fraction:
    return Fraction(rng.randint(1, hi * den), den)


def random_tree(rng: random.Random, max_leaves: int = 8, max_depth: int = 3) -> FilteredTree:
    nodes = [{"id": "n0", "parent": None, "time": 0, "prob": 1}]
    counter = [0]
    leaves = [("n0", 0)]
    horizon = rng.randint(1, max_depth)
    for t in range(1, horizon + 1):
        nxt = []
        budget = max_leaves
        for nid, _ in leaves:
            k = rng.randint(2 if t == 1 else 1, 3)
            k = min(k, max(1, budget // max(1, len(leaves))))
            if k == 1:
                weights = [Fraction(1)]
            else:
                raw = [rng.randint(1, 4) for _ in range(k)]
                total = sum(raw)
                weights = [Fraction(w, total) for w in raw]
            for w in weights:
                counter[0] += 1
                child = f"n{counter[0]}"
                nodes.append({"id": child, "parent": nid, "time": t, "prob": w})
                nxt.append((child, t))
        leaves = nxt
    return build_tree(nodes)


def random_scenario_set(rng: random.Random, tree: FilteredTree, max_gens: int = 5) -> ScenarioSet:
    """Random generators with full joint support (their maximum charges
    every leaf), so every conditional expectation is defined."""
    L = tree.n_leaves
    probs = tree.leaf_probs
    k = rng.randint(1, max_gens)
    gens = []
    for _ in range(k):
        raw = [Fraction(rng.randint(0, 5)) for _ in range(L)]
        if sum(raw) == 0:
            raw[rng.randrange(L)] = Fraction(1)
        mass = sum(r * p for r, p in zip(raw, probs))
        gens.append(tuple(r / mass for r in raw))
    for i in range(L):
        if all(g[i] == 0 for g in gens):
            raw = [Fraction(1)] * L
            mass = sum(probs)
            gens.append(tuple(Fraction(1) for _ in range(L)))
            break
    return ScenarioSet(tree, tuple(gens))


def random_numeraire(rng: random.Random, tree: FilteredTree, d: int) -> NumeraireVector:
    vals = tuple(
        tuple(random_positive_fraction(rng) for _ in range(d + 1)) for _ in tree.leaves
    )
    return NumeraireVector(tree, vals)


def random_scalar_claim(rng: random.Random, tree: FilteredTree, span: int = 4) -> TerminalClaim:
    return TerminalClaim.scalar([random_fraction(rng, -span, span) for _ in tree.leaves])


def random_vector_claim(rng: random.Random, tree: FilteredTree, width: int, span: int = 3) -> TerminalClaim:
    return TerminalClaim.vector(
        [[random_fraction(rng, -span, span) for _ in range(width)] for _ in tree.leaves]
    )


def random_cone(rng: random.Random, dim: int, max_gens: int = 6) -> PolyCone:
    k = rng.randint(0, max_gens)
    gens = [
        tuple(random_fraction(rng, -2, 2, 3) for _ in range(dim)) for _ in range(k)
    ]
    return PolyCone.from_generators(gens, dim)


def random_market(rng: random.Random, horizon: int, d: int) -> BidAskProcess:
    """Arbitrage-free by construction: rates are a strictly positive
    martingale's cross rates widened by random factors >= 1.

    Spreads for two risky assets are kept on a coarse grid; wide spreads
    on every pair blow up the scenario polytope far beyond desk scale.
    """
    tree = binary_tree(horizon)
    width = d + 1
    spreads = (
        [Fraction(1), Fraction(9, 8), Fraction(5, 4), Fraction(3, 2)]
        if width <= 2
        else [Fraction(1), Fraction(9, 8)]
    )
    z_leaf = [
        [random_positive_fraction(rng, 3, 2) for _ in range(width)] for _ in tree.leaves
    ]
    z: dict[str, list[Fraction]] = {}
    for i, leaf in enumerate(tree.leaves):
        z[leaf.id] = z_leaf[i]
    for t in range(tree.horizon - 1, -1, -1):
        for node in tree.nodes_at(t):
            agg = [Fraction(0)] * width
            for child in tree.children(node.id):
                for j in range(width):
                    agg[j] += child.prob * z[child.id][j]
            z[node.id] = agg
    pi = {}
    for node in tree.nodes:
        m = [[Fraction(1)] * width for _ in range(width)]
        for i in range(width):
            for j in range(width):
                if i == j:
                    continue
                m[i][j] = z[node.id][j] / z[node.id][i] * rng.choice(spreads)
        pi[node.id] = tuple(tuple(r) for r in m)
    return BidAskProcess(tree, d, pi)


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------


@dataclass
class PropertyResult:
    name: str
    instances: int = 0
    failures: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "instances": self.instances,
            "passed": self.passed,
            "failures": self.failures,
        }


def _record(result: PropertyResult, ok: bool, detail: Callable[[], dict]) -> None:
    result.instances += 1
    if not ok:
        result.failures.append(detail())


def prop_bipolar(rng: random.Random, n_instances: int) -> PropertyResult:
    """dual(dual(C)) == C for random cones."""
    out = PropertyResult("bipolar")
    for _ in range(n_instances):
        dim = rng.randint(1, 5)
        c = random_cone(rng, dim)
        eq, _ = cone_equal(dual_cone(dual_cone(c)), c, certificate=False)
        _record(out, eq, lambda: {"cone": c.to_json_dict()})
    return out


def prop_dual_interchange(rng: random.Random, n_instances: int) -> PropertyResult:
    """dual of sum == intersection of duals, and dually."""
    out = PropertyResult("dual-interchange")
    for _ in range(n_instances):
        dim = rng.randint(1, 4)
        cs = [random_cone(rng, dim, 4) for _ in range(rng.randint(2, 3))]
        lhs = dual_cone(cone_sum(cs))
        rhs = cone_intersect([dual_cone(c) for c in cs])
        eq1, _ = cone_equal(lhs, rhs, certificate=False)
        lhs2 = dual_cone(cone_intersect(cs))
        rhs2 = cone_sum([dual_cone(c) for c in cs])
        eq2, _ = cone_equal(lhs2, rhs2, certificate=False)
        _record(out, eq1 and eq2, lambda: {"cones": [c.to_json_dict() for c in cs]})
    return out


def prop_risk_axioms(rng: random.Random, n_instances: int, max_leaves: int = 16,
                     max_gens: int = 8) -> PropertyResult:
    """Exact coherence identities at every node and time."""
    out = PropertyResult("risk-axioms")
    for _ in range(n_instances):
        tree = random_tree(rng, max_leaves=max_leaves)
        s = random_scenario_set(rng, tree, max_gens)
        x = random_scalar_claim(rng, tree)
        y = random_scalar_claim(rng, tree)
        t = rng.randint(0, tree.horizon)
        ok = True
        nodes = tree.nodes_at(t)
        rx = rho(s, x, t).scalars()
        ry = rho(s, y, t).scalars()
        # cash invariance with a time-t measurable shift
        shift = [random_fraction(rng) for _ in nodes]
        xm_leaf = []
        for i, leaf in enumerate(tree.leaves):
            anc = tree.ancestor_at(leaf.id, t)
            j = next(k for k, node in enumerate(nodes) if node.id == anc)
            xm_leaf.append(x.scalars()[i] + shift[j])
        rxm = rho(s, TerminalClaim.scalar(xm_leaf), t).scalars()
        ok &= all(rxm[j] == rx[j] + shift[j] for j in range(len(nodes)))
        # monotonicity
        bump = [abs(random_fraction(rng)) for _ in tree.leaves]
        xup = TerminalClaim.scalar([a + b for a, b in zip(x.scalars(), bump)])
        ok &= all(a >= b for a, b in zip(rho(s, xup, t).scalars(), rx))
        # positive homogeneity with a time-t measurable factor
        lam = [abs(random_fraction(rng)) for _ in nodes]
        xs_leaf = []
        for i, leaf in enumerate(tree.leaves):
            anc = tree.ancestor_at(leaf.id, t)
            j = next(k for k, node in enumerate(nodes) if node.id == anc)
            xs_leaf.append(x.scalars()[i] * lam[j])
        rxs = rho(s, TerminalClaim.scalar(xs_leaf), t).scalars()
        ok &= all(rxs[j] == lam[j] * rx[j] for j in range(len(nodes)))
        # subadditivity and normalisation
        rxy = rho(s, x + y, t).scalars()
        ok &= all(rxy[j] <= rx[j] + ry[j] for j in range(len(nodes)))
        zero = TerminalClaim.scalar([0] * tree.n_leaves)
        ok &= all(v == 0 for v in rho(s, zero, t).scalars())
        _record(out, ok, lambda: {"tree": tree.to_json_dict(), "scenario": s.to_json_dict(),
                                  "t": t})
    return out


def prop_dual_of_acceptance(rng: random.Random, n_instances: int) -> PropertyResult:
    """The dual of the acceptance cone is generated by the weighted densities."""
    out = PropertyResult("acceptance-dual")
    for _ in range(n_instances):
        tree = random_tree(rng, max_leaves=6)
        s = random_scenario_set(rng, tree, 4)
        v = random_numeraire(rng, tree, rng.randint(0, 2))
        lhs = dual_cone(acceptance_portfolio_cone(s, v))
        rhs = dual_generator_cone(s, v)
        eq, _ = cone_equal(lhs, rhs, certificate=False)
        _record(out, eq, lambda: {"tree": tree.to_json_dict(), "scenario": s.to_json_dict(),
                                  "V": v.to_json_dict()})
    return out


def prop_step_cone_duality(rng: random.Random, n_instances: int) -> PropertyResult:
    """Each time level of the step-cone sum is the dual of the scaling
    pre-image hull of the acceptance dual at that time."""
    out = PropertyResult("step-cone-duality")
    for _ in range(n_instances):
        tree = random_tree(rng, max_leaves=6)
        s = random_scenario_set(rng, tree, 4)
        v = random_numeraire(rng, tree, rng.randint(0, 1))
        d_cone = dual_generator_cone(s, v)
        family = step_cones(s, v)
        ok = True
        for t in range(tree.horizon + 1):
            gens = []
            for node in tree.nodes_at(t):
                for g in family.cone(node.id).generators():
                    gens.append(embed_portfolio(tree, v.width, node.id, g))
            level = PolyCone.from_generators(gens, claim_dim(tree, v.width))
            pre = optional_preimage(tree, d_cone, t, v.width)
            eq, _ = cone_equal(level, dual_cone(pre), certificate=False)
            ok &= eq
        _record(out, ok, lambda: {"tree": tree.to_json_dict(), "scenario": s.to_json_dict(),
                                  "V": v.to_json_dict()})
    return out


def prop_main_agreement(rng: random.Random, n_instances: int) -> PropertyResult:
    """Stability, representability and generator decomposability agree."""
    out = PropertyResult("main-agreement")
    for _ in range(n_instances):
        tree = random_tree(rng, max_leaves=6)
        s = random_scenario_set(rng, tree, 4)
        v = random_numeraire(rng, tree, rng.randint(0, 1))
        stable = is_optionally_stable(s, v).verdict
        representable = is_representable(s, v).verdict
        decomposable = _all_generators_decompose(s, v)
        ok = stable == representable == decomposable
        _record(out, ok, lambda: {"tree": tree.to_json_dict(), "scenario": s.to_json_dict(),
                                  "V": v.to_json_dict(), "stable": stable,
                                  "representable": representable,
                                  "decomposable": decomposable})
    return out


def _all_generators_decompose(s: ScenarioSet, v: NumeraireVector) -> bool:
    from .risk import portfolio_value

    acc = acceptance_portfolio_cone(s, v)
    for g in acc.generators():
        y = TerminalClaim(v.width, tuple(
            tuple(g[i * v.width + j] for j in range(v.width))
            for i in range(s.tree.n_leaves)
        ))
        dec, _cert = decompose(s, v, portfolio_value(v, y))
        if dec is None:
            return False
    return True


def prop_compose_dominates(rng: random.Random, n_instances: int) -> PropertyResult:
    """Composed one-step risks dominate the static risk."""
    out = PropertyResult("compose-dominates")
    for _ in range(n_instances):
        tree = random_tree(rng, max_leaves=10)
        s = random_scenario_set(rng, tree, 5)
        x = random_scalar_claim(rng, tree)
        ok = compose_rho(s, x) >= rho0(s, x)
        _record(out, ok, lambda: {"tree": tree.to_json_dict(), "scenario": s.to_json_dict(),
                                  "claim": [qstr(q) for q in x.scalars()]})
    return out


def prop_superhedge_duality(rng: random.Random, n_instances: int) -> PropertyResult:
    """Superhedge primal equals its dual exactly on step-cone markets."""
    out = PropertyResult("superhedge-duality")
    for _ in range(n_instances):
        tree = random_tree(rng, max_leaves=6)
        s = random_scenario_set(rng, tree, 3)
        v = random_numeraire(rng, tree, rng.randint(0, 1))
        cones = cones_from_step_family(tree, v.width, step_cones(s, v))
        x = random_vector_claim(rng, tree, v.width, 2)
        try:
            res = superhedge(cones, x, rng.randrange(v.width))
        except Exception as exc:  # Infeasible counts as a finding here
            _record(out, False, lambda: {"error": repr(exc)})
            continue
        _record(out, res.price == res.dual_price, lambda: {"price": qstr(res.price)})
    return out


def prop_trading_cone_consistency(rng: random.Random, n_instances: int) -> PropertyResult:
    """Acceptance-extracted trading cones match the step cones, summed."""
    out = PropertyResult("trading-cone-consistency")
    for _ in range(n_instances):
        tree = random_tree(rng, max_leaves=6)
        s = random_scenario_set(rng, tree, 3)
        v = random_numeraire(rng, tree, rng.randint(0, 1))
        via_acceptance = acceptance_trading_cones(s, v).claim_cone()
        via_steps = step_cone_sum(s, v)
        eq, _ = cone_equal(via_acceptance, via_steps, certificate=False)
        _record(out, eq, lambda: {"tree": tree.to_json_dict(), "scenario": s.to_json_dict()})
    return out


def prop_market_construction(rng: random.Random, n_instances: int) -> PropertyResult:
    """Bracket bounds, exact coin reweighting, stability and equivalence
    for random arbitrage-free bid-ask markets."""
    out = PropertyResult("market-construction")
    for _ in range(n_instances):
        horizon = rng.randint(1, 2)
        d = rng.randint(0, 2) if horizon == 1 else rng.randint(0, 1)
        market = random_market(rng, horizon, d)
        eps = Fraction(rng.randint(1, 5), 10)
        ok = True
        detail: dict = {}
        aug = augment_market(market, eps)
        # bracket: tails price < bid <= ask < heads price per leaf and asset
        for leaf in market.tree.leaves:
            pi_T = market.pi[leaf.id]
            for i in range(1, market.width):
                lo = (1 - eps) / pi_T[i][0]
                hi = (1 + eps) * pi_T[0][i]
                if not (lo < 1 / pi_T[i][0] and pi_T[0][i] < hi):
                    ok = False
                    detail = {"bracket": leaf.id}
        zstar = consistent_price_system(trading_cones(market))
        if zstar is None or not zstar.strictly_positive:
            ok = False
            detail = {"noStrictSystem": True}
        else:
            extend_price_system(zstar, aug)  # raises on any exact-identity failure
            scen = market_scenario_set(aug)
            if not is_optionally_stable(scen.scenario_set, scen.numeraire).verdict:
                ok = False
                detail = {"unstable": True}
            if not verify_market_equivalence(market, eps, scen).verdict:
                ok = False
                detail = {"inequivalent": True}
        _record(out, ok, lambda: {"market": market.to_json_dict(), **detail})
    return out


# ---------------------------------------------------------------------------
# The sweep driver
# ---------------------------------------------------------------------------


@dataclass
class SweepReport:
    seed: int
    results: list[PropertyResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "properties": [r.to_json_dict() for r in self.results],
        }


_DEFAULT_BATTERY: tuple[tuple[Callable, int], ...] = (
    (prop_bipolar, 10),
    (prop_dual_interchange, 6),
    (prop_risk_axioms, 10),
    (prop_dual_of_acceptance, 5),
    (prop_step_cone_duality, 4),
    (prop_main_agreement, 4),
    (prop_compose_dominates, 10),
    (prop_superhedge_duality, 5),
    (prop_trading_cone_consistency, 4),
    (prop_market_construction, 2),
)


def sweep(seed: int, n_instances: int | None = None) -> SweepReport:
    """Run the full property battery with one seed; deterministic."""
    results = []
    for prop, default_n in _DEFAULT_BATTERY:
        rng = random.Random(f"{seed}:{prop.__name__}")
        results.append(prop(rng, n_instances if n_instances is not None else default_n))
    return SweepReport(seed, results)
