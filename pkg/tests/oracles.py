"""Independent oracles for cross-checking the engine.

Deliberately dumb and route-independent: the risk oracle goes through the
LP kernel (the engine's risk measure never does), the superhedge oracle
goes through vertex enumeration (the engine's pricer is an LP), and the
tree oracles walk raw parent links instead of precomputed tables.
"""

from __future__ import annotations

from fractions import Fraction

from conerisk.cones import dd_from_facets
from conerisk.rational import dot
from conerisk.simplex import LinearProgram
from conerisk.tree import FilteredTree, TerminalClaim

F = Fraction


def leaf_prob_by_path(tree: FilteredTree, leaf_id: str) -> Fraction:
    """Product of transition probabilities along explicit parent links."""
    node = tree.node(leaf_id)
    p = F(1)
    while True:
        p *= node.prob
        if node.parent is None:
            return p
        node = tree.node(node.parent)


def cond_expect_by_paths(tree: FilteredTree, xs, t: int):
    """Group leaves by their time-t ancestor found by walking parents."""
    groups: dict[str, list[int]] = {}
    for i, leaf in enumerate(tree.leaves):
        node = leaf
        while node.time > t:
            node = tree.node(node.parent)
        groups.setdefault(node.id, []).append(i)
    out = {}
    for nid, idxs in groups.items():
        mass = sum(leaf_prob_by_path(tree, tree.leaves[i].id) for i in idxs)
        val = sum(leaf_prob_by_path(tree, tree.leaves[i].id) * xs[i] for i in idxs)
        out[nid] = val / mass
    return out


def rho_lp_oracle(scen, x: TerminalClaim, t: int):
    """Worst conditional expectation over the mixture polytope, by LP.

    For each time-t node, maximizes the conditional expectation over
    mixture weights of the generators (conditioned on the node), by
    solving max sum_k w_k q_k(node-restricted) subject to the fractional
    objective linearized via the node-mass normalization.
    """
    tree = scen.tree
    xs = x.scalars()
    out = {}
    for node in tree.nodes_at(t):
        idxs = tree.descendant_leaves(node.id)
        k = scen.n_generators
        # variables: nonneg measure weights c_k with node mass normalized to 1;
        # any conditional of a mixture is such a reweighting and conversely
        lp = LinearProgram(k, nonneg=[True] * k)
        masses = []
        values = []
        for g in range(k):
            q = scen.measure(g)
            masses.append(sum(q[i] for i in idxs))
            values.append(sum(q[i] * xs[i] for i in idxs))
        lp.add_constraint(masses, "=", 1)
        lp.set_objective(values, "max")
        res = lp.solve()
        assert res.status == "optimal"
        out[node.id] = res.value
    return out


def superhedge_enum_oracle(cones, x: TerminalClaim, numeraire_index: int):
    """Superhedging price by enumerating the dual polyhedron.

    Builds the polyhedron of consistent price systems normalized in the
    chosen asset, enumerates its vertices and recession rays by the
    double description method, and reads off the price as the maximal
    weighted terminal payoff; a ray with positive payoff means no finite
    price exists.
    """
    tree = cones.tree
    width = cones.width
    node_ids = [n.id for n in tree.nodes]
    pos = {nid: i * width for i, nid in enumerate(node_ids)}
    nvars = width * len(node_ids)
    facets = []

    def lift(row_small: dict[int, Fraction]):
        row = [F(0)] * (nvars + 1)
        for col, val in row_small.items():
            row[col] = val
        return row

    # homogenized polyhedron {(Z, s): constraints, s >= 0}
    for node in tree.nodes:
        kids = tree.children(node.id)
        if kids:
            for j in range(width):
                row = {pos[node.id] + j: F(1)}
                for child in kids:
                    row[pos[child.id] + j] = -child.prob
                r = lift(row)
                facets.append(tuple(r))
                facets.append(tuple(-v for v in r))
        for g in cones.cone(node.id).generators():
            row = {pos[node.id] + j: g[j] for j in range(width) if g[j]}
            facets.append(tuple(lift(row)))
    norm = {pos[tree.root.id] + numeraire_index: F(1), nvars: F(-1)}
    r = lift(norm)
    facets.append(tuple(r))
    facets.append(tuple(-v for v in r))
    facets.append(tuple(lift({nvars: F(-1)})))  # s >= 0
    lin, rays = dd_from_facets(facets, nvars + 1)

    def payoff(zvec) -> Fraction:
        total = F(0)
        for i, leaf in enumerate(tree.leaves):
            p = leaf_prob_by_path(tree, leaf.id)
            z = [zvec[pos[leaf.id] + j] for j in range(width)]
            total += p * dot(tuple(z), x.values[i])
        return total

    for b in lin:
        assert b[nvars] == 0
        if payoff(b) != 0:
            return None  # unbounded dual value, no finite price
    best = None
    for ray in rays:
        s = ray[nvars]
        if s == 0:
            if payoff(ray) > 0:
                return None
            continue
        val = payoff(tuple(v / s for v in ray[:nvars]))
        if best is None or val > best:
            best = val
    return best


def compose_by_recursion(scen, x: TerminalClaim) -> Fraction:
    """Backward worst-conditional-expectation recursion written directly
    on the tree, without adapted-vector plumbing."""
    tree = scen.tree
    xs = list(x.scalars())
    values = {leaf.id: xs[i] for i, leaf in enumerate(tree.leaves)}
    for t in range(tree.horizon - 1, -1, -1):
        for node in tree.nodes_at(t):
            best = None
            for k in range(scen.n_generators):
                q = scen.measure(k)
                mass = F(0)
                val = F(0)
                for child in tree.children(node.id):
                    child_mass = sum(q[i] for i in tree.descendant_leaves(child.id))
                    mass += child_mass
                    val += child_mass * values[child.id]
                if mass > 0:
                    cand = val / mass
                    if best is None or cand > best:
                        best = cand
            values[node.id] = best
    return values[tree.root.id]
