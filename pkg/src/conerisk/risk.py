"""Conditional coherent risk measures from finite scenario sets.

A scenario set is a finite list of probability densities on the leaves of
a tree; the modeled set of pricing measures is their closed convex hull.
The induced dynamic risk of a claim is, node by node, the worst
conditional expectation over the generators, which is exact because
conditional expectations are affine in the measure.

Claim-space geometry is flattened: a portfolio-valued terminal claim with
``d+1`` components on a tree with ``L`` leaves is a vector in
``Q^{(d+1)*L}`` (leaf-major); densities weighted by leaf probabilities
and numeraire values act on it by the plain dot product.  All cones below
live in that space or, for per-node step cones, in ``Q^{d+1}``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .cones import (
    PolyCone,
    cone_equal,
    cone_intersect,
    dual_cone,
    enumerate_polyhedron,
    member,
)
from .rational import Q, Vec, dot, is_zero, qstr, vec, vzero
from .simplex import LinearProgram
from .tree import (
    AdaptedVector,
    FilteredTree,
    TerminalClaim,
    embed_adapted,
)

_ZERO = Fraction(0)
_ONE = Fraction(1)


class DeadNode(ValueError):
    """No generator charges a node (precluded by ScenarioSet validation)."""


class UndefinedConditional(ValueError):
    """An optional pasting divides by a vanishing conditional density."""


class EmptySet(ValueError):
    """A requested scenario polytope is empty."""


class NotStable(RuntimeError):
    """Internal consistency failure of the stability witness recursion."""


# ---------------------------------------------------------------------------
# Scenario sets and numeraires
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSet:
    """Generating densities of a closed convex set of pricing measures.

    ``densities[k][i]`` is the density of generator ``k`` at leaf ``i``
    (nonnegative, unit expectation under the tree's reference measure).
    Every leaf must be charged by at least one generator, so conditional
    expectations are defined at every node under some generator.
    """

    tree: FilteredTree
    densities: tuple[Vec, ...]

    def __post_init__(self):
        probs = self.tree.leaf_probs
        if not self.densities:
            raise ValueError("scenario set needs at least one generator")
        for lam in self.densities:
            if len(lam) != self.tree.n_leaves:
                raise ValueError("density has wrong number of leaf values")
            if any(x < 0 for x in lam):
                raise ValueError("density with a negative value")
            if sum(l * p for l, p in zip(lam, probs)) != 1:
                raise ValueError("density does not have unit expectation")
        for i in range(self.tree.n_leaves):
            if all(lam[i] == 0 for lam in self.densities):
                raise DeadNode(f"no generator charges leaf {self.tree.leaves[i].id!r}")

    @property
    def n_generators(self) -> int:
        return len(self.densities)

    def measure(self, k: int) -> tuple[Fraction, ...]:
        """Leaf probabilities of generator ``k``."""
        probs = self.tree.leaf_probs
        return tuple(l * p for l, p in zip(self.densities[k], probs))

    def to_json_dict(self) -> dict:
        return {"densities": [[qstr(x) for x in lam] for lam in self.densities]}

    @staticmethod
    def from_json(tree: FilteredTree, data) -> "ScenarioSet":
        data = json.loads(data) if isinstance(data, str) else data
        return ScenarioSet(tree, tuple(vec(row) for row in data["densities"]))


@dataclass(frozen=True)
class NumeraireVector:
    """Strictly positive terminal values of the d+1 reserving assets."""

    tree: FilteredTree
    values: tuple[Vec, ...]  # per leaf, length d+1

    def __post_init__(self):
        if len(self.values) != self.tree.n_leaves:
            raise ValueError("numeraire has wrong number of leaf values")
        width = len(self.values[0])
        for v in self.values:
            if len(v) != width:
                raise ValueError("numeraire width mismatch")
            if any(x <= 0 for x in v):
                raise ValueError("numeraire values must be strictly positive")

    @property
    def d(self) -> int:
        return len(self.values[0]) - 1

    @property
    def width(self) -> int:
        return len(self.values[0])

    def as_claim(self) -> TerminalClaim:
        return TerminalClaim(self.width, self.values)

    def to_json_dict(self) -> dict:
        return {"V": [[qstr(x) for x in v] for v in self.values]}

    @staticmethod
    def from_json(tree: FilteredTree, data) -> "NumeraireVector":
        data = json.loads(data) if isinstance(data, str) else data
        return NumeraireVector(tree, tuple(vec(row) for row in data["V"]))

    @staticmethod
    def unit(tree: FilteredTree) -> "NumeraireVector":
        return NumeraireVector(tree, tuple((Fraction(1),) for _ in tree.leaves))


def claim_dim(tree: FilteredTree, width: int) -> int:
    return tree.n_leaves * width


def flat_index(tree: FilteredTree, width: int, leaf: int, comp: int) -> int:
    return leaf * width + comp


def portfolio_value(v: NumeraireVector, y: TerminalClaim) -> TerminalClaim:
    """Scalar claim ``y . V`` of a portfolio-valued claim ``y``."""
    if y.width != v.width:
        raise ValueError("portfolio width mismatch")
    return TerminalClaim.scalar([dot(yv, vv) for yv, vv in zip(y.values, v.values)])


# ---------------------------------------------------------------------------
# The risk measure
# ---------------------------------------------------------------------------


def rho(s: ScenarioSet, x: TerminalClaim, t: int) -> AdaptedVector:
    """Conditional risk at time ``t``: per node, the worst conditional
    expectation of the scalar claim over generators charging the node."""
    if x.width != 1:
        raise ValueError("rho expects a scalar claim")
    xs = x.scalars()
    tree = s.tree
    out = []
    for node in tree.nodes_at(t):
        leaves = tree.descendant_leaves(node.id)
        best = None
        for k in range(s.n_generators):
            q = s.measure(k)
            mass = sum(q[i] for i in leaves)
            if mass == 0:
                continue
            val = sum(q[i] * xs[i] for i in leaves) / mass
            if best is None or val > best:
                best = val
        if best is None:
            raise DeadNode(f"no generator charges node {node.id!r}")
        out.append((best,))
    return AdaptedVector(t, 1, tuple(out))


def rho0(s: ScenarioSet, x: TerminalClaim) -> Fraction:
    return rho(s, x, 0).values[0][0]


def compose_rho(s: ScenarioSet, x: TerminalClaim) -> Fraction:
    """Backward composition of one-step risks; always >= the static risk."""
    tree = s.tree
    cur = x
    for t in range(tree.horizon - 1, -1, -1):
        cur = embed_adapted(tree, rho(s, cur, t))
    return cur.values[0][0]


# ---------------------------------------------------------------------------
# Acceptance cones and step cones
# ---------------------------------------------------------------------------


def acceptance_facet(s: ScenarioSet, v: NumeraireVector, k: int) -> Vec:
    """Facet normal of the acceptance cone for generator ``k``:
    leafwise density * leaf probability * numeraire vector."""
    probs = s.tree.leaf_probs
    out: list[Fraction] = []
    for i in range(s.tree.n_leaves):
        w = s.densities[k][i] * probs[i]
        out.extend(w * comp for comp in v.values[i])
    return tuple(out)


def acceptance_portfolio_cone(s: ScenarioSet, v: NumeraireVector) -> PolyCone:
    """Portfolio claims whose value has nonpositive static risk.

    H-representation with one facet per generator; the dual cone is
    generated by exactly those facet normals.
    """
    n = claim_dim(s.tree, v.width)
    return PolyCone.from_facets([acceptance_facet(s, v, k) for k in range(s.n_generators)], n)


@dataclass(frozen=True)
class StepConeFamily:
    """Per-node cones of acceptable time-t portfolio adjustments."""

    tree: FilteredTree
    width: int
    cones: Mapping[str, PolyCone]  # node id -> cone in Q^{d+1}

    def cone(self, node_id: str) -> PolyCone:
        return self.cones[node_id]


def step_cone_generators(s: ScenarioSet, v: NumeraireVector, node_id: str) -> list[Vec]:
    """Dual generators of a node's step cone: unnormalized conditional
    expectations of density-weighted numeraires over the node's atom."""
    tree = s.tree
    probs = tree.leaf_probs
    leaves = tree.descendant_leaves(node_id)
    gens = []
    for k in range(s.n_generators):
        acc = list(vzero(v.width))
        for i in leaves:
            w = s.densities[k][i] * probs[i]
            if w:
                for j, comp in enumerate(v.values[i]):
                    acc[j] += w * comp
        gens.append(tuple(acc))
    return gens


def step_cones(s: ScenarioSet, v: NumeraireVector) -> StepConeFamily:
    cones = {}
    for node in s.tree.nodes:
        gens = step_cone_generators(s, v, node.id)
        cones[node.id] = dual_cone(PolyCone.from_generators(gens, v.width))
    return StepConeFamily(s.tree, v.width, cones)


def embed_portfolio(tree: FilteredTree, width: int, node_id: str, y: Sequence[Fraction]) -> Vec:
    """Flattened claim equal to ``y`` on the node's atom, zero elsewhere."""
    out = [_ZERO] * claim_dim(tree, width)
    for i in tree.descendant_leaves(node_id):
        for j, comp in enumerate(y):
            out[i * width + j] = comp
    return tuple(out)


def step_cone_sum(s: ScenarioSet, v: NumeraireVector, family: StepConeFamily | None = None) -> PolyCone:
    """Sum over all nodes of the embedded step cones, in claim space."""
    family = family if family is not None else step_cones(s, v)
    tree = s.tree
    gens: list[Vec] = []
    for node in tree.nodes:
        for g in family.cone(node.id).generators():
            gens.append(embed_portfolio(tree, v.width, node.id, g))
    return PolyCone.from_generators(gens, claim_dim(tree, v.width))


# ---------------------------------------------------------------------------
# Optional pre-image hull and stabilization
# ---------------------------------------------------------------------------


def optional_preimage(tree: FilteredTree, d_cone: PolyCone, t: int, width: int) -> PolyCone:
    """Convex conic hull of the time-``t`` scaling pre-image of a cone.

    A claim belongs iff, at every time-``t`` node, its subtree aggregate
    lies in the cone spanned by the generators' subtree aggregates.  The
    H-representation is assembled from per-node dual facets lifted to
    claim space; directions with zero subtree aggregates (the time-t
    fluctuations) are lineality by construction.
    """
    gens = d_cone.generators()
    facets: list[Vec] = []
    n = claim_dim(tree, width)
    for node in tree.nodes_at(t):
        leaves = tree.descendant_leaves(node.id)
        local = []
        for g in gens:
            acc = [_ZERO] * width
            for i in leaves:
                for j in range(width):
                    acc[j] += g[i * width + j]
            local.append(tuple(acc))
        local_facets = PolyCone.from_generators(local, width).facet_rows()
        for h in local_facets:
            row = [_ZERO] * n
            for i in leaves:
                for j in range(width):
                    row[i * width + j] = h[j]
            facets.append(tuple(row))
    return PolyCone.from_facets(facets, n)


def stabilization_hull(tree: FilteredTree, d_cone: PolyCone, width: int) -> PolyCone:
    """Smallest stable closed convex cone containing the input: the
    intersection of the scaling pre-image hulls over all times."""
    pieces = [optional_preimage(tree, d_cone, t, width) for t in range(tree.horizon + 1)]
    return cone_intersect(pieces)


# ---------------------------------------------------------------------------
# Optional pastings
# ---------------------------------------------------------------------------


def _validate_stopping(tree: FilteredTree, tau: Sequence[str]) -> dict[str, int]:
    """A stopping rule is an antichain of nodes hit exactly once per path.
    Returns leaf index -> stopping time of its path."""
    hit: dict[int, str] = {}
    for nid in tau:
        node = tree.node(nid)
        for i in tree.descendant_leaves(nid):
            if i in hit:
                raise ValueError(f"stopping nodes {hit[i]!r} and {nid!r} overlap")
            hit[i] = nid
    if len(hit) != tree.n_leaves:
        raise ValueError("stopping rule misses some paths")
    return {tree.leaves[i].id: tree.node(hit[i]).time for i in range(tree.n_leaves)}


def paste(
    s: ScenarioSet,
    q1: Sequence[Fraction],
    q2: Sequence[Fraction],
    tau: Sequence[str],
    r_onestep: Sequence[Fraction],
) -> Vec:
    """Density of the optional pasting of two measures at a stopping rule.

    ``q1``/``q2`` are leaf densities, ``tau`` an antichain of node ids,
    and ``r_onestep`` a leafwise table of the one-step reweighting, which
    must be measurable one step after the stopping rule and average to
    one at each stopping node.  Paths where the continuation density of
    the second measure vanishes while still charged are rejected.
    """
    tree = s.tree
    q1 = vec(q1)
    q2 = vec(q2)
    r = vec(r_onestep)
    probs = tree.leaf_probs
    _validate_stopping(tree, tau)
    T = tree.horizon

    def node_mass(density: Vec, nid: str) -> Fraction:
        return sum(density[i] * probs[i] for i in tree.descendant_leaves(nid))

    def node_prob(nid: str) -> Fraction:
        return tree.path_prob(nid)

    # measurability + unit conditional mean of r at each stopping node
    for nid in tau:
        t_next = min(tree.node(nid).time + 1, T)
        for child in _nodes_below_at(tree, nid, t_next):
            vals = {r[i] for i in tree.descendant_leaves(child)}
            if len(vals) != 1:
                raise ValueError("one-step density not measurable one step after the rule")
        mean = sum(r[i] * probs[i] for i in tree.descendant_leaves(nid)) / node_prob(nid)
        if mean != 1:
            raise ValueError(f"one-step density has conditional mean {mean} at {nid!r}")
        if any(r[i] < 0 for i in tree.descendant_leaves(nid)):
            raise ValueError("one-step density must be nonnegative")

    out = [_ZERO] * tree.n_leaves
    for nid in tau:
        t_next = min(tree.node(nid).time + 1, T)
        lam1_tau = node_mass(q1, nid) / node_prob(nid)
        for i in tree.descendant_leaves(nid):
            head = lam1_tau * r[i]
            if head == 0:
                out[i] = _ZERO
                continue
            if t_next == T:
                # the continuation ratio is the density over itself: one
                out[i] = head
                continue
            anc = tree.ancestor_at(tree.leaves[i].id, t_next)
            lam2_next = node_mass(q2, anc) / node_prob(anc)
            if lam2_next == 0:
                raise UndefinedConditional(
                    f"continuation density vanishes on charged path through {anc!r}"
                )
            out[i] = head * q2[i] / lam2_next
    return tuple(out)


def _nodes_below_at(tree: FilteredTree, nid: str, t: int) -> list[str]:
    node = tree.node(nid)
    if node.time == t:
        return [nid]
    out = [nid]
    for _ in range(t - node.time):
        nxt: list[str] = []
        for cur in out:
            nxt.extend(c.id for c in tree.children(cur))
        out = nxt
    return out


# ---------------------------------------------------------------------------
# Checkers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckReport:
    verdict: bool
    certificate: dict | None
    cross_checks: tuple[dict, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "certificate": self.certificate,
            "crossChecks": list(self.cross_checks),
        }


def dual_generator_cone(s: ScenarioSet, v: NumeraireVector) -> PolyCone:
    """The cone generated by the acceptance facet normals (the dual of
    the acceptance cone)."""
    n = claim_dim(s.tree, v.width)
    return PolyCone.from_generators(
        [acceptance_facet(s, v, k) for k in range(s.n_generators)], n
    )


def is_optionally_stable(
    s: ScenarioSet, v: NumeraireVector, *, rng: random.Random | None = None, samples: int = 8
) -> CheckReport:
    """Stability of the scenario set for the given numeraires.

    Decided exactly: the dual generator cone must equal its stabilization
    hull.  On failure the certificate is a hull generator outside the
    cone together with its separating functional.  On success, randomly
    sampled optional pastings that preserve the conditional numeraire
    expectation are pasted and confirmed to lie in the convex hull of the
    generators (a feasibility LP per sample).
    """
    tree = s.tree
    d_cone = dual_generator_cone(s, v)
    hull = stabilization_hull(tree, d_cone, v.width)
    equal, witness = cone_equal(d_cone, hull)
    if not equal:
        side, g, cert = witness
        # the trivial inclusion never fails, so the witness generator is in the hull
        assert side == "right", "stabilization hull lost a generator"
        return CheckReport(False, {"hullGenerator": [qstr(x) for x in g],
                                    "separation": cert.to_json_dict()})
    checks = []
    if rng is not None:
        checks = _pasting_cross_checks(s, v, rng, samples)
    return CheckReport(True, None, tuple(checks))


def _pasting_cross_checks(s, v, rng: random.Random, samples: int) -> list[dict]:
    tree = s.tree
    out = []
    for _ in range(samples):
        tau = _random_antichain(tree, rng)
        k1 = rng.randrange(s.n_generators)
        k2 = rng.randrange(s.n_generators)
        r = _solve_compatible_onestep(s, v, k1, k2, tau, rng)
        if r is None:
            out.append({"tau": list(tau), "feasibleReweighting": False})
            continue
        try:
            pasted = paste(s, s.densities[k1], s.densities[k2], tau, r)
        except UndefinedConditional:
            out.append({"tau": list(tau), "feasibleReweighting": False})
            continue
        inside = _in_convex_hull(s, pasted)
        out.append(
            {
                "tau": list(tau),
                "generators": [k1, k2],
                "pastedDensity": [qstr(x) for x in pasted],
                "inHull": inside,
            }
        )
        if not inside:
            raise NotStable("pasting left the hull although the cone test passed")
    return out


def _random_antichain(tree: FilteredTree, rng: random.Random) -> list[str]:
    out: list[str] = []
    frontier = [tree.root.id]
    while frontier:
        nid = frontier.pop()
        node = tree.node(nid)
        if node.time == tree.horizon or rng.random() < 0.5:
            out.append(nid)
        else:
            frontier.extend(c.id for c in tree.children(nid))
    return out


def _solve_compatible_onestep(s, v, k1: int, k2: int, tau, rng) -> Vec | None:
    """One-step reweighting satisfying the conditional-mean-one constraint
    and preserving the conditional numeraire expectation at the rule."""
    tree = s.tree
    probs = tree.leaf_probs
    T = tree.horizon
    cells: list[list[int]] = []  # leaves sharing one value of r
    cell_of_leaf: dict[int, int] = {}
    for nid in tau:
        t_next = min(tree.node(nid).time + 1, T)
        for child in _nodes_below_at(tree, nid, t_next):
            idx = len(cells)
            leaves = list(tree.descendant_leaves(child))
            cells.append(leaves)
            for i in leaves:
                cell_of_leaf[i] = idx
    lp = LinearProgram(len(cells), nonneg=[True] * len(cells))
    lam1 = s.densities[k1]
    lam2 = s.densities[k2]
    for nid in tau:
        leaves = tree.descendant_leaves(nid)
        pu = tree.path_prob(nid)
        mass1 = sum(lam1[i] * probs[i] for i in leaves)
        lam1_tau = mass1 / pu
        # conditional mean one at the stopping node
        row = [_ZERO] * len(cells)
        for i in leaves:
            row[cell_of_leaf[i]] += probs[i] / pu
        lp.add_constraint(row, "=", 1)
        if lam1_tau == 0:
            continue  # the pasted measure vanishes here; nothing to match
        # conditional numeraire expectation matches the first measure
        t_next = min(tree.node(nid).time + 1, T)
        dead_cells = set()
        for j in range(v.width):
            row = [_ZERO] * len(cells)
            for i in leaves:
                if t_next == T:
                    # continuation ratio is identically one at the horizon
                    row[cell_of_leaf[i]] += probs[i] * v.values[i][j]
                    continue
                anc = tree.ancestor_at(tree.leaves[i].id, t_next)
                mass2 = sum(
                    lam2[q] * probs[q] for q in tree.descendant_leaves(anc)
                ) / tree.path_prob(anc)
                if mass2 == 0:
                    dead_cells.add(cell_of_leaf[i])  # must not be charged
                    continue
                row[cell_of_leaf[i]] += probs[i] * lam2[i] * v.values[i][j] / mass2
            target = sum(lam1[i] * probs[i] * v.values[i][j] for i in leaves) / lam1_tau
            lp.add_constraint(row, "=", target)
        for cell in dead_cells:
            row = [_ZERO] * len(cells)
            row[cell] = _ONE
            lp.add_constraint(row, "=", 0)
    obj = [Fraction(rng.randrange(1, 9)) for _ in range(len(cells))]
    lp.set_objective(obj, "min")
    res = lp.solve()
    if res.status != "optimal":
        return None
    r = [_ZERO] * tree.n_leaves
    for idx, leaves in enumerate(cells):
        for i in leaves:
            r[i] = res.x[idx]
    return tuple(r)


def _in_convex_hull(s: ScenarioSet, density: Vec) -> bool:
    lp = LinearProgram(s.n_generators, nonneg=[True] * s.n_generators)
    for i in range(s.tree.n_leaves):
        lp.add_constraint([s.densities[k][i] for k in range(s.n_generators)], "=", density[i])
    lp.add_constraint([_ONE] * s.n_generators, "=", 1)
    lp.set_objective([_ZERO] * s.n_generators, "min")
    return lp.solve().status == "optimal"


def is_representable(s: ScenarioSet, v: NumeraireVector) -> CheckReport:
    """Whether the acceptance cone is the sum of the embedded step cones.

    Exactly one inclusion can fail: the sum always sits inside the
    acceptance cone, so a failure certificate is an acceptable claim
    separated from the sum.
    """
    acc = acceptance_portfolio_cone(s, v)
    total = step_cone_sum(s, v)
    for g in total.generators():
        if not acc.contains(g):
            raise AssertionError("embedded step cone left the acceptance cone")
    for g in acc.generators():
        if not total.contains(g):
            _, cert = member(total, g)
            return CheckReport(
                False,
                {"acceptableClaim": [qstr(x) for x in g],
                 "separation": cert.to_json_dict()},
            )
    return CheckReport(True, None)


# ---------------------------------------------------------------------------
# Decomposition into dated adjustments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Decomposition:
    adjustments: tuple[AdaptedVector, ...]  # one per time 0..T
    reserves: tuple[AdaptedVector, ...]

    def to_json_dict(self) -> dict:
        return {
            "adjustments": [
                {"t": a.time, "values": [[qstr(x) for x in row] for row in a.values]}
                for a in self.adjustments
            ],
            "reserves": [
                {"t": r.time, "values": [[qstr(x) for x in row] for row in r.values]}
                for r in self.reserves
            ],
        }


def decompose(s: ScenarioSet, v: NumeraireVector, x: TerminalClaim):
    """Split an acceptable scalar claim into dated acceptable adjustments.

    Finds portfolio adjustments, one per node, each in its node's step
    cone, whose values sum to the claim exactly; returns the adjustment
    processes and the running reserves.  If no split exists the claim is
    not representable and a separating functional is returned instead.
    """
    if x.width != 1:
        raise ValueError("decompose expects a scalar claim")
    tree = s.tree
    width = v.width
    xs = x.scalars()
    family = step_cones(s, v)
    cols: list[tuple[str, Vec]] = []  # (node id, generator in Q^{d+1})
    for node in tree.nodes:
        for g in family.cone(node.id).generators():
            cols.append((node.id, g))
    lp = LinearProgram(len(cols), nonneg=[True] * len(cols))
    rows = [[_ZERO] * len(cols) for _ in range(tree.n_leaves)]
    for c, (nid, g) in enumerate(cols):
        for i in tree.descendant_leaves(nid):
            rows[i][c] = dot(g, v.values[i])
    for i in range(tree.n_leaves):
        lp.add_constraint(rows[i], "=", xs[i])
    lp.set_objective([_ZERO] * len(cols), "min")
    res = lp.solve()
    if res.status != "optimal":
        separator = tuple(res.farkas)  # one weight per leaf equality
        return None, {
            "separator": [qstr(y) for y in separator],
            "violation": qstr(dot(separator, xs)),
        }
    totals: dict[str, list[Fraction]] = {
        node.id: list(vzero(width)) for node in tree.nodes
    }
    for lam, (nid, g) in zip(res.x, cols):
        if lam:
            for j in range(width):
                totals[nid][j] += lam * g[j]
    adjustments = []
    for t in range(tree.horizon + 1):
        vals = tuple(tuple(totals[node.id]) for node in tree.nodes_at(t))
        adjustments.append(AdaptedVector(t, width, vals))
    # reserve trajectory: cumulative adjustments along each node's path
    reserves = []
    running: TerminalClaim | None = None
    for adj in adjustments:
        lifted = embed_adapted(tree, adj)
        running = lifted if running is None else running + lifted
        t = adj.time
        vals = []
        for node in tree.nodes_at(t):
            acc = list(vzero(width))
            for s in range(t + 1):
                anc = tree.ancestor_at(
                    tree.leaves[tree.descendant_leaves(node.id)[0]].id, s
                )
                for j in range(width):
                    acc[j] += totals[anc][j]
            vals.append(tuple(acc))
        reserves.append(AdaptedVector(t, width, tuple(vals)))
    # exact re-summation check
    assert running is not None
    total_value = portfolio_value(v, running)
    assert total_value.scalars() == xs, "decomposition does not re-sum to the claim"
    assert reserves[-1].values == tuple(running.values)
    return Decomposition(tuple(adjustments), tuple(reserves)), None


# ---------------------------------------------------------------------------
# Generic scenario sets from conditional boxes
# ---------------------------------------------------------------------------


def generic_scenario_set(
    tree: FilteredTree,
    x: TerminalClaim,
    boxes: Mapping[str, Sequence[tuple[object, object]]],
) -> tuple[ScenarioSet, tuple[bool, ...]]:
    """Measures whose conditional expectations of ``x`` fall in per-node
    boxes, as the vertices of the defining polytope.

    ``boxes[node_id][comp] = (lo, hi)``; either bound may be ``None``.
    The conditional constraints are linearized by multiplying through by
    the node mass, so boundary measures (absolutely continuous but not
    equivalent) appear as vertices too; the returned flags mark which
    generators are equivalent to the reference measure.
    """
    L = tree.n_leaves
    probs = tree.leaf_probs
    a_ub: list[list[Fraction]] = []
    b_ub: list[Fraction] = []
    a_eq: list[list[Fraction]] = [[_ONE] * L]
    b_eq: list[Fraction] = [_ONE]
    for i in range(L):
        row = [_ZERO] * L
        row[i] = Fraction(-1)
        a_ub.append(row)
        b_ub.append(_ZERO)
    for nid, comp_boxes in boxes.items():
        leaves = tree.descendant_leaves(nid)
        for j, bounds in enumerate(comp_boxes):
            if bounds is None:
                continue
            lo, hi = bounds
            if lo is not None:
                lo = Q(lo)
                row = [_ZERO] * L
                for i in leaves:
                    row[i] = lo - x.values[i][j]
                a_ub.append(row)
                b_ub.append(_ZERO)
            if hi is not None:
                hi = Q(hi)
                row = [_ZERO] * L
                for i in leaves:
                    row[i] = x.values[i][j] - hi
                a_ub.append(row)
                b_ub.append(_ZERO)
    vertices, rays, lin = enumerate_polyhedron(a_ub, b_ub, a_eq, b_eq, L)
    assert not rays and not lin, "measure polytope must be bounded"
    if not vertices:
        raise EmptySet("no measure satisfies the conditional boxes")
    densities = tuple(
        tuple(q[i] / probs[i] for i in range(L)) for q in vertices
    )
    flags = tuple(all(x > 0 for x in lam) for lam in densities)
    return ScenarioSet(tree, densities), flags


# ---------------------------------------------------------------------------
# Stability witness recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityWitness:
    beta0: Fraction
    xi0: Vec
    steps: tuple[dict, ...]


def build_stability_witness(
    tree: FilteredTree, d_cone: PolyCone, z: Sequence[Fraction], width: int
) -> StabilityWitness:
    """Conic expression of a hull member of a stable cone via the backward
    scaling recursion.

    For each time the claim's subtree aggregates are matched, node by
    node, by a scaled cone element found by LP; the recursion then folds
    these into a single cone element and a scalar multiplier, verifying
    membership at every step.
    """
    z = vec(z)
    gens = d_cone.generators()
    T = tree.horizon
    n = claim_dim(tree, width)
    if len(z) != n:
        raise ValueError("witness point has wrong dimension")
    if any(x < 0 for x in z):
        raise ValueError("witness recursion needs a componentwise nonnegative point")

    def subtree_sum(vec_flat: Sequence[Fraction], nid: str) -> Vec:
        acc = [_ZERO] * width
        for i in tree.descendant_leaves(nid):
            for j in range(width):
                acc[j] += vec_flat[i * width + j]
        return tuple(acc)

    # per-time data: an element of the cone plus per-node scalings
    per_t: list[tuple[dict[str, Fraction], Vec]] = []
    for t in range(T + 1):
        nodes = tree.nodes_at(t)
        s_u = {node.id: subtree_sum(z, node.id) for node in nodes}
        agg = {node.id: [subtree_sum(g, node.id) for g in gens] for node in nodes}
        active = [node.id for node in nodes if not is_zero(s_u[node.id])]
        ncols = len(gens)
        lam_index = {nid: ncols + i for i, nid in enumerate(active)}
        lp = LinearProgram(ncols + len(active), nonneg=[True] * (ncols + len(active)))
        for node in nodes:
            target = s_u[node.id]
            for j in range(width):
                row = [a[j] for a in agg[node.id]]
                row += [_ZERO] * len(active)
                if node.id in lam_index:
                    row[lam_index[node.id]] = -target[j]
                lp.add_constraint(row, "=", 0)
        for nid in active:
            row = [_ZERO] * (ncols + len(active))
            row[lam_index[nid]] = _ONE
            lp.add_constraint(row, ">=", 1)
        lp.set_objective([_ONE] * ncols + [_ZERO] * len(active), "min")
        res = lp.solve()
        if res.status != "optimal":
            raise NotStable(f"no scaled cone element matches the aggregates at t={t}")
        coeffs = res.x[:ncols]
        zt = [_ZERO] * n
        for c, g in zip(coeffs, gens):
            if c:
                for j in range(n):
                    zt[j] += c * g[j]
        beta = {}
        for node in nodes:
            if node.id in lam_index:
                beta[node.id] = _ONE / res.x[lam_index[node.id]]
            else:
                beta[node.id] = _ZERO
        per_t.append((beta, tuple(zt)))

    # backward recursion
    steps = []
    beta_T, xi = per_t[T]
    # leaf-level identity z = beta_T * xi
    for t in range(T - 1, -1, -1):
        beta_t, zt = per_t[t]
        beta_next = per_t[t + 1][0]
        new_xi = [_ZERO] * n
        for i, leaf in enumerate(tree.leaves):
            anc_t = tree.ancestor_at(leaf.id, t)
            anc_n = tree.ancestor_at(leaf.id, min(t + 1, T))
            if beta_t[anc_t] > 0:
                kappa = beta_next[anc_n] / beta_t[anc_t]
                for j in range(width):
                    new_xi[i * width + j] = kappa * xi[i * width + j]
            else:
                for j in range(width):
                    new_xi[i * width + j] = zt[i * width + j]
        xi = tuple(new_xi)
        ok, cert = member(d_cone, xi)
        if not ok:
            raise NotStable(f"recursion left the cone at t={t}")
        steps.append({"t": t, "member": cert.to_json_dict()})
    beta0 = per_t[0][0][tree.root.id]
    # exact reconstruction
    recon = tuple(beta0 * x for x in xi)
    if recon != z:
        raise NotStable("recursion does not reconstruct the point")
    return StabilityWitness(beta0, xi, tuple(steps))
