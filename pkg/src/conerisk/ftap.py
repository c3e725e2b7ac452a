"""Trading cones, consistent price systems, arbitrage and superhedging.

A trading cone process assigns each tree node a cone of costless
portfolio changes (always containing free disposal).  Its dual objects
are consistent price systems: componentwise nonnegative martingales
valued in the node duals.  A strictly positive one certifies absence of
arbitrage; superhedging prices come from an exact LP whose dual optimum
is attained by such a system, and the two values must agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .cones import PolyCone, cone_from_generators
from .rational import Vec, dot, qstr, vzero
from .risk import (
    NumeraireVector,
    ScenarioSet,
    claim_dim,
    embed_portfolio,
)
from .simplex import LinearProgram
from .tree import FilteredTree, TerminalClaim

_ZERO = Fraction(0)
_ONE = Fraction(1)


class ArbitrageError(RuntimeError):
    """Operation requires an arbitrage-free cone process."""


@dataclass(frozen=True)
class TradingConeProcess:
    """Per-node cones of costlessly attainable portfolio changes."""

    tree: FilteredTree
    width: int  # d + 1
    cones: Mapping[str, PolyCone]

    def __post_init__(self):
        for node in self.tree.nodes:
            c = self.cones[node.id]
            if c.dim != self.width:
                raise ValueError("cone dimension mismatch")
            for i in range(self.width):
                e = [_ZERO] * self.width
                e[i] = Fraction(-1)
                if not c.contains(e):
                    raise ValueError(f"cone at {node.id!r} lacks free disposal")

    def cone(self, node_id: str) -> PolyCone:
        return self.cones[node_id]

    def claim_cone_generators(self) -> list[tuple[str, Vec]]:
        """Embedded generators of the attainable-claim cone, tagged by node."""
        out = []
        for node in self.tree.nodes:
            for g in self.cone(node.id).generators():
                out.append((node.id, embed_portfolio(self.tree, self.width, node.id, g)))
        return out

    def claim_cone(self) -> PolyCone:
        n = claim_dim(self.tree, self.width)
        return cone_from_generators([g for _, g in self.claim_cone_generators()], n)


def cones_from_step_family(tree: FilteredTree, width: int, family) -> TradingConeProcess:
    return TradingConeProcess(tree, width, dict(family.cones))


def acceptance_trading_cones(s: ScenarioSet, v: NumeraireVector) -> TradingConeProcess:
    """Per-node cones extracted from the acceptance cone by scaling
    stability: a portfolio belongs at a node iff its embedding under any
    nonnegative node scaling stays acceptable, i.e. iff it satisfies the
    acceptance facets aggregated over the node's atom."""
    tree = s.tree
    probs = tree.leaf_probs
    cones = {}
    for node in tree.nodes:
        leaves = tree.descendant_leaves(node.id)
        facets = []
        for k in range(s.n_generators):
            acc = list(vzero(v.width))
            for i in leaves:
                w = s.densities[k][i] * probs[i]
                for j in range(v.width):
                    acc[j] += w * v.values[i][j]
            facets.append(tuple(acc))
        cones[node.id] = PolyCone.from_facets(facets, v.width)
    return TradingConeProcess(tree, v.width, cones)


# ---------------------------------------------------------------------------
# Consistent price systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriceSystem:
    """Adapted price vectors per node; a martingale valued in node duals."""

    tree: FilteredTree
    width: int
    values: Mapping[str, Vec]
    delta: Fraction  # certified uniform lower bound on all components
    strictly_positive: bool

    def value(self, node_id: str) -> Vec:
        return self.values[node_id]

    def terminal(self) -> tuple[Vec, ...]:
        return tuple(self.values[leaf.id] for leaf in self.tree.leaves)

    def to_json_dict(self) -> dict:
        return {
            "Z": {nid: [qstr(x) for x in v] for nid, v in self.values.items()},
            "delta": qstr(self.delta),
            "strictlyPositive": self.strictly_positive,
        }

    def check_martingale(self) -> bool:
        for node in self.tree.nodes:
            kids = self.tree.children(node.id)
            if not kids:
                continue
            agg = vzero(self.width)
            for child in kids:
                agg = tuple(a + child.prob * b for a, b in zip(agg, self.values[child.id]))
            if agg != self.values[node.id]:
                return False
        return True

    def check_duals(self, cones: TradingConeProcess) -> bool:
        return all(
            dot(g, self.values[node.id]) <= 0
            for node in self.tree.nodes
            for g in cones.cone(node.id).generators()
        )


def consistent_price_system(cones: TradingConeProcess):
    """Best-effort strictly positive consistent price system.

    Maximizes the uniform lower bound ``delta`` on all price components
    subject to the martingale equations, the per-node dual facets and the
    normalization that root components sum to one.  Returns a
    :class:`PriceSystem` (``delta > 0`` iff strictly consistent ones
    exist) or ``None`` when no nonzero consistent system exists.
    """
    tree = cones.tree
    width = cones.width
    node_ids = [n.id for n in tree.nodes]
    pos = {nid: i * width for i, nid in enumerate(node_ids)}
    nvars = width * len(node_ids) + 1  # prices plus delta
    delta_col = nvars - 1
    lp = LinearProgram(nvars, nonneg=[False] * (nvars - 1) + [True])

    def unit(col: int, val: Fraction, row: list[Fraction]) -> None:
        row[col] += val

    for node in tree.nodes:
        kids = tree.children(node.id)
        if kids:
            for j in range(width):
                row = [_ZERO] * nvars
                unit(pos[node.id] + j, _ONE, row)
                for child in kids:
                    unit(pos[child.id] + j, -child.prob, row)
                lp.add_constraint(row, "=", 0)
        for g in cones.cone(node.id).generators():
            row = [_ZERO] * nvars
            for j in range(width):
                if g[j]:
                    unit(pos[node.id] + j, g[j], row)
            lp.add_constraint(row, "<=", 0)
        for j in range(width):  # component dominates delta
            row = [_ZERO] * nvars
            unit(pos[node.id] + j, -_ONE, row)
            unit(delta_col, _ONE, row)
            lp.add_constraint(row, "<=", 0)
    row = [_ZERO] * nvars
    for j in range(width):
        unit(pos[tree.root.id] + j, _ONE, row)
    lp.add_constraint(row, "=", 1)
    obj = [_ZERO] * nvars
    obj[delta_col] = _ONE
    lp.set_objective(obj, "max")
    res = lp.solve()
    if res.status == "infeasible":
        return None
    assert res.status == "optimal", "delta is bounded by the normalization"
    delta = res.x[delta_col]
    values = {
        nid: tuple(res.x[pos[nid] + j] for j in range(width)) for nid in node_ids
    }
    return PriceSystem(tree, width, values, delta, delta > 0)


# ---------------------------------------------------------------------------
# Arbitrage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArbitrageReport:
    arbitrage_free: bool
    price_system: PriceSystem | None
    witness_claim: Vec | None  # nonnegative nonzero attainable claim
    witness_strategy: tuple[tuple[str, Vec], ...] | None

    def to_json_dict(self) -> dict:
        out: dict = {"arbitrageFree": self.arbitrage_free}
        if self.price_system is not None:
            out["priceSystem"] = self.price_system.to_json_dict()
        if self.witness_claim is not None:
            out["claim"] = [qstr(x) for x in self.witness_claim]
            out["strategy"] = [
                {"node": nid, "xi": [qstr(x) for x in xi]}
                for nid, xi in (self.witness_strategy or ())
            ]
        return out


def arbitrage_check(cones: TradingConeProcess) -> ArbitrageReport:
    """No-arbitrage iff a strictly positive consistent price system exists.

    On arbitrage an explicit nonnegative nonzero attainable claim is
    produced by per-coordinate maximization over the attainable cone.
    """
    ps = consistent_price_system(cones)
    if ps is not None and ps.strictly_positive:
        return ArbitrageReport(True, ps, None, None)
    witness = _search_positive_claim(cones)
    if witness is None:
        raise ArbitrageError(
            "no strictly positive price system and no positive attainable claim; "
            "finite-space separation violated"
        )
    claim, strategy = witness
    return ArbitrageReport(False, ps, claim, strategy)


def _search_positive_claim(cones: TradingConeProcess):
    tagged = cones.claim_cone_generators()
    gens = [g for _, g in tagged]
    n = claim_dim(cones.tree, cones.width)
    for coord in range(n):
        lp = LinearProgram(len(gens), nonneg=[True] * len(gens))
        for j in range(n):
            row = [g[j] for g in gens]
            if j == coord:
                lp.add_constraint(row, "=", 1)
            else:
                lp.add_constraint(row, ">=", 0)
        lp.set_objective([_ZERO] * len(gens), "min")
        res = lp.solve()
        if res.status == "optimal":
            claim = [_ZERO] * n
            node_totals: dict[str, list[Fraction]] = {}
            for lam, (nid, g) in zip(res.x, tagged):
                if lam:
                    for j in range(n):
                        claim[j] += lam * g[j]
                    tot = node_totals.setdefault(nid, list(vzero(cones.width)))
                    local = _local_part(cones.tree, cones.width, nid, g)
                    for j in range(cones.width):
                        tot[j] += lam * local[j]
            strat = tuple((nid, tuple(v)) for nid, v in sorted(node_totals.items()))
            return tuple(claim), strat
    return None


def _local_part(tree: FilteredTree, width: int, nid: str, embedded: Vec) -> Vec:
    i = tree.descendant_leaves(nid)[0]
    return tuple(embedded[i * width + j] for j in range(width))


# ---------------------------------------------------------------------------
# Null strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NullSpaceReport:
    is_vector_space: bool
    basis: tuple[tuple[tuple[str, Vec], ...], ...]
    witness: tuple[tuple[str, Vec], ...] | None  # a null strategy with -xi not null

    def to_json_dict(self) -> dict:
        return {
            "vectorSpace": self.is_vector_space,
            "basisSize": len(self.basis),
        }


def null_space_check(cones: TradingConeProcess) -> NullSpaceReport:
    """Whether selections from the node cones summing to zero form a
    vector space (then equal to the kernel of all facet rows).

    For each facet row, an LP probes for a null strategy violating it
    strictly; if none exists every null strategy is facet-tight, so the
    null set is the rational kernel, whose basis is returned.
    """
    tree = cones.tree
    width = cones.width
    node_ids = [n.id for n in tree.nodes]
    pos = {nid: i * width for i, nid in enumerate(node_ids)}
    nvars = width * len(node_ids)

    facet_rows: list[tuple[str, Vec]] = []
    for nid in node_ids:
        for h in cones.cone(nid).facet_rows():
            facet_rows.append((nid, h))

    def add_common(lp: LinearProgram) -> None:
        for nid, h in facet_rows:
            row = [_ZERO] * nvars
            for j in range(width):
                if h[j]:
                    row[pos[nid] + j] += h[j]
            lp.add_constraint(row, "<=", 0)
        for i, leaf in enumerate(tree.leaves):
            for j in range(width):
                row = [_ZERO] * nvars
                for t in range(tree.horizon + 1):
                    anc = tree.ancestor_at(leaf.id, t)
                    row[pos[anc] + j] += _ONE
                lp.add_constraint(row, "=", 0)

    for nid, h in facet_rows:
        lp = LinearProgram(nvars, nonneg=[False] * nvars)
        add_common(lp)
        row = [_ZERO] * nvars
        for j in range(width):
            if h[j]:
                row[pos[nid] + j] += h[j]
        lp.add_constraint(row, "=", -1)
        lp.set_objective([_ZERO] * nvars, "min")
        res = lp.solve()
        if res.status == "optimal":
            strategy = tuple(
                (m, tuple(res.x[pos[m] + j] for j in range(width))) for m in node_ids
            )
            return NullSpaceReport(False, (), strategy)

    # every null strategy is tight on every facet: the kernel is the answer
    from .cones import nullspace_basis

    rows = []
    for nid, h in facet_rows:
        row = [_ZERO] * nvars
        for j in range(width):
            row[pos[nid] + j] = h[j]
        rows.append(tuple(row))
    for i, leaf in enumerate(tree.leaves):
        for j in range(width):
            row = [_ZERO] * nvars
            for t in range(tree.horizon + 1):
                anc = tree.ancestor_at(leaf.id, t)
                row[pos[anc] + j] += _ONE
            rows.append(tuple(row))
    basis_vecs = nullspace_basis(rows, nvars)
    basis = tuple(
        tuple((m, tuple(b[pos[m] + j] for j in range(width))) for m in node_ids)
        for b in basis_vecs
    )
    return NullSpaceReport(True, basis, None)


# ---------------------------------------------------------------------------
# Superhedging
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuperhedgeResult:
    price: Fraction
    strategy: tuple[tuple[str, Vec], ...]
    dual_price: Fraction
    dual_system: PriceSystem

    def to_json_dict(self) -> dict:
        return {
            "price": qstr(self.price),
            "strategy": [
                {"node": nid, "xi": [qstr(x) for x in xi]} for nid, xi in self.strategy
            ],
            "dual": {
                "Z": self.dual_system.to_json_dict()["Z"],
                "value": qstr(self.dual_price),
            },
        }


class Infeasible(RuntimeError):
    """The claim cannot be reached from any endowment in the chosen asset."""


def superhedge(
    cones: TradingConeProcess, x: TerminalClaim, numeraire_index: int
) -> SuperhedgeResult:
    """Minimal reserve in one asset whose trades reach the claim exactly.

    Solves ``min r`` over ``r e_i + sum of node trades = x`` with each
    trade in its node's cone; the LP duals yield a consistent price
    system attaining the same value, and both are returned after an exact
    strong-duality check.
    """
    tree = cones.tree
    width = cones.width
    if x.width != width:
        raise ValueError("claim width mismatch")
    if not 0 <= numeraire_index < width:
        raise ValueError("bad numeraire index")
    tagged = cones.claim_cone_generators()
    gens = [g for _, g in tagged]
    n = claim_dim(tree, width)
    nvars = len(gens) + 1  # conic weights + the reserve
    lp = LinearProgram(nvars, nonneg=[True] * len(gens) + [False])
    flat = x.flatten()
    for j in range(n):
        row = [g[j] for g in gens]
        row.append(_ONE if j % width == numeraire_index else _ZERO)
        lp.add_constraint(row, "=", flat[j])
    obj = [_ZERO] * len(gens) + [_ONE]
    lp.set_objective(obj, "min")
    res = lp.solve()
    if res.status != "optimal":
        raise Infeasible("claim unreachable from the chosen numeraire")
    price = res.value
    node_totals: dict[str, list[Fraction]] = {
        node.id: list(vzero(width)) for node in tree.nodes
    }
    for lam, (nid, g) in zip(res.x, tagged):
        if lam:
            local = _local_part(tree, width, nid, g)
            for j in range(width):
                node_totals[nid][j] += lam * local[j]
    strategy = tuple((node.id, tuple(node_totals[node.id])) for node in tree.nodes)

    # dual: y per leaf equality row is the terminal value of a consistent
    # system weighted by leaf probabilities
    y = res.duals
    probs = tree.leaf_probs
    z_term: list[Vec] = []
    for i in range(tree.n_leaves):
        z_term.append(tuple(y[i * width + j] / probs[i] for j in range(width)))
    values: dict[str, Vec] = {}
    for node in tree.nodes:
        acc = list(vzero(width))
        for i in tree.descendant_leaves(node.id):
            w = probs[i] / tree.path_prob(node.id)
            for j in range(width):
                acc[j] += w * z_term[i][j]
        values[node.id] = tuple(acc)
    dual_system = PriceSystem(tree, width, values, _ZERO, all(
        all(v > 0 for v in z) for z in z_term
    ))
    dual_value = sum(dot(y[i * width:(i + 1) * width], x.values[i]) for i in range(tree.n_leaves))
    assert dual_value == price, "strong duality violated"
    assert dual_system.check_martingale()
    assert dual_system.check_duals(cones)
    assert values[tree.root.id][numeraire_index] == 1
    return SuperhedgeResult(price, strategy, dual_value, dual_system)
