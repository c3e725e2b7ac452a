"""Finite filtered probability spaces as rooted scenario trees.

A tree with horizon ``T`` carries the whole stochastic basis: nodes at
time ``t`` are the atoms of the time-``t`` information, leaves are the
atoms of terminal information, and strictly positive one-step transition
probabilities give the (full-support) reference measure.  Adapted
quantities are stored per node, terminal claims per leaf; every value is
an exact rational.

Trees and claims are immutable after construction; all operations here
are pure functions, so concurrent read-only use is safe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .rational import Q, Vec, qstr, vec, vscale, vzero


class TreeError(ValueError):
    """Malformed tree specification."""


class NonUnitBranch(TreeError):
    """Transition probabilities of some node's children do not sum to 1."""


class ZeroProbability(TreeError):
    """A transition probability is zero or negative."""


class DisconnectedNode(TreeError):
    """A node references an unknown parent, or the tree is not rooted."""


class TimeSkew(TreeError):
    """Node times are inconsistent with the parent/child structure."""


@dataclass(frozen=True)
class Node:
    id: str
    parent: str | None
    time: int
    prob: Fraction  # one-step transition probability (1 for the root)


@dataclass(frozen=True, eq=False)
class FilteredTree:
    """Validated rooted tree; construct via :func:`build_tree`.

    Traversal tables (atoms, path probabilities, ancestors) are
    precomputed once; the structure is immutable afterwards.
    """

    horizon: int
    nodes: tuple[Node, ...]  # topological order: root first, by time
    _index: Mapping[str, int] = field(repr=False)
    _children: Mapping[str, tuple[str, ...]] = field(repr=False)
    _by_time: tuple[tuple[Node, ...], ...] = field(repr=False)
    _pathp: Mapping[str, Fraction] = field(repr=False)
    _desc: Mapping[str, tuple[int, ...]] = field(repr=False)
    _anc: Mapping[str, tuple[str, ...]] = field(repr=False)  # leaf id -> id per time

    # -- structure ---------------------------------------------------------

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def node(self, node_id: str) -> Node:
        return self.nodes[self._index[node_id]]

    def children(self, node_id: str) -> tuple[Node, ...]:
        return tuple(self.node(c) for c in self._children[node_id])

    def nodes_at(self, t: int) -> tuple[Node, ...]:
        return self._by_time[t]

    @property
    def leaves(self) -> tuple[Node, ...]:
        return self._by_time[self.horizon]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def leaf_index(self, node_id: str) -> int:
        for i, leaf in enumerate(self.leaves):
            if leaf.id == node_id:
                return i
        raise KeyError(node_id)

    def path_prob(self, node_id: str) -> Fraction:
        """Unconditional probability of the node's atom (product of transitions)."""
        return self._pathp[node_id]

    @property
    def leaf_probs(self) -> tuple[Fraction, ...]:
        return tuple(self._pathp[leaf.id] for leaf in self.leaves)

    def ancestor_at(self, leaf_id: str, t: int) -> str:
        """Id of the time-``t`` node on the path to ``leaf_id``."""
        return self._anc[leaf_id][t]

    def descendant_leaves(self, node_id: str) -> tuple[int, ...]:
        """Leaf indices of the node's atom, in leaf order."""
        return self._desc[node_id]

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "T": self.horizon,
            "nodes": [
                {
                    "id": n.id,
                    "parent": n.parent,
                    "time": n.time,
                    "prob": qstr(n.prob),
                }
                for n in self.nodes
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


@dataclass(frozen=True)
class TerminalClaim:
    """One value in Q^{d+1} per leaf (``width == d+1``; scalars have width 1)."""

    width: int
    values: tuple[Vec, ...]

    def __post_init__(self):
        for v in self.values:
            if len(v) != self.width:
                raise ValueError("claim value width mismatch")

    @staticmethod
    def scalar(xs: Iterable) -> "TerminalClaim":
        return TerminalClaim(1, tuple((Q(x),) for x in xs))

    @staticmethod
    def vector(rows: Iterable[Iterable]) -> "TerminalClaim":
        vals = tuple(vec(r) for r in rows)
        width = len(vals[0]) if vals else 0
        return TerminalClaim(width, vals)

    def scalars(self) -> tuple[Fraction, ...]:
        if self.width != 1:
            raise ValueError("not a scalar claim")
        return tuple(v[0] for v in self.values)

    def flatten(self) -> Vec:
        return tuple(x for v in self.values for x in v)

    def __add__(self, other: "TerminalClaim") -> "TerminalClaim":
        if self.width != other.width or len(self.values) != len(other.values):
            raise ValueError("claim shape mismatch")
        return TerminalClaim(
            self.width,
            tuple(
                tuple(a + b for a, b in zip(u, v))
                for u, v in zip(self.values, other.values)
            ),
        )

    def scaled(self, c) -> "TerminalClaim":
        c = Q(c)
        return TerminalClaim(self.width, tuple(vscale(c, v) for v in self.values))


@dataclass(frozen=True)
class AdaptedVector:
    """One value in Q^{d+1} per node at a fixed time."""

    time: int
    width: int
    values: tuple[Vec, ...]  # aligned with tree.nodes_at(time)

    def scalars(self) -> tuple[Fraction, ...]:
        if self.width != 1:
            raise ValueError("not scalar-valued")
        return tuple(v[0] for v in self.values)


def build_tree(spec: Sequence[Mapping]) -> FilteredTree:
    """Validate a node list and assemble a :class:`FilteredTree`.

    Each entry needs ``id``, ``parent`` (``None`` for the root), ``time``
    and ``prob``.  Children's transition probabilities must sum to one and
    be strictly positive, child time must be parent time plus one, and all
    childless nodes must sit at the common horizon.
    """
    if not spec:
        raise TreeError("empty node list")
    raw = []
    seen = set()
    for entry in spec:
        nid = str(entry["id"])
        if nid in seen:
            raise TreeError(f"duplicate node id {nid!r}")
        seen.add(nid)
        parent = entry.get("parent")
        parent = None if parent is None else str(parent)
        raw.append(Node(nid, parent, int(entry["time"]), Q(entry["prob"])))

    roots = [n for n in raw if n.parent is None]
    if len(roots) != 1:
        raise DisconnectedNode(f"expected exactly one root, found {len(roots)}")
    root = roots[0]
    if root.time != 0:
        raise TimeSkew("root must sit at time 0")
    if root.prob != 1:
        raise NonUnitBranch("root probability must be 1")

    by_id = {n.id: n for n in raw}
    children: dict[str, list[str]] = {n.id: [] for n in raw}
    for n in raw:
        if n.parent is None:
            continue
        if n.parent not in by_id:
            raise DisconnectedNode(f"node {n.id!r} references unknown parent {n.parent!r}")
        if n.time != by_id[n.parent].time + 1:
            raise TimeSkew(f"node {n.id!r}: time {n.time} != parent time + 1")
        if n.prob <= 0:
            raise ZeroProbability(f"node {n.id!r} has non-positive transition probability")
        children[n.parent].append(n.id)

    horizon = max(n.time for n in raw)
    for n in raw:
        kids = children[n.id]
        if kids:
            total = sum(by_id[c].prob for c in kids)
            if total != 1:
                raise NonUnitBranch(
                    f"children of {n.id!r} have probabilities summing to {total}"
                )
        elif n.time != horizon:
            raise TimeSkew(f"leaf {n.id!r} at time {n.time}, horizon is {horizon}")

    # Reachability from the root (parent links alone allow stray cycles only
    # via duplicate ids, already excluded; this is a belt check).
    reach = {root.id}
    frontier = [root.id]
    while frontier:
        cur = frontier.pop()
        for c in children[cur]:
            reach.add(c)
            frontier.append(c)
    if len(reach) != len(raw):
        raise DisconnectedNode("some nodes are unreachable from the root")

    ordered = tuple(sorted(raw, key=lambda n: (n.time, _input_rank(raw, n.id))))
    index = {n.id: i for i, n in enumerate(ordered)}
    child_map = {nid: tuple(kids) for nid, kids in children.items()}
    by_time = tuple(
        tuple(n for n in ordered if n.time == t) for t in range(horizon + 1)
    )
    pathp: dict[str, Fraction] = {}
    for n in ordered:  # parents precede children in the ordering
        pathp[n.id] = n.prob if n.parent is None else pathp[n.parent] * n.prob
    leaves = by_time[horizon]
    anc: dict[str, tuple[str, ...]] = {}
    for leaf in leaves:
        chain = []
        cur: Node | None = leaf
        while cur is not None:
            chain.append(cur.id)
            cur = by_id[cur.parent] if cur.parent is not None else None
        anc[leaf.id] = tuple(reversed(chain))
    desc: dict[str, list[int]] = {n.id: [] for n in ordered}
    for i, leaf in enumerate(leaves):
        for nid in anc[leaf.id]:
            desc[nid].append(i)
    desc_t = {nid: tuple(v) for nid, v in desc.items()}
    return FilteredTree(horizon, ordered, index, child_map, by_time, pathp, desc_t, anc)


def _input_rank(raw: Sequence[Node], nid: str) -> int:
    for i, n in enumerate(raw):
        if n.id == nid:
            return i
    raise KeyError(nid)


def tree_from_json(text_or_dict) -> FilteredTree:
    data = json.loads(text_or_dict) if isinstance(text_or_dict, str) else text_or_dict
    tree = build_tree(data["nodes"])
    if "T" in data and int(data["T"]) != tree.horizon:
        raise TimeSkew(f"declared horizon {data['T']} != actual {tree.horizon}")
    return tree


def cond_expect(tree: FilteredTree, x: TerminalClaim, t: int) -> AdaptedVector:
    """Conditional expectation of a terminal claim at time ``t`` under P.

    Full support makes every version unique; at ``t == T`` this is the
    identity.  See :func:`cond_expect_unnormalized` for the per-node
    subtree aggregate used to build dual generators.
    """
    if not 0 <= t <= tree.horizon:
        raise ValueError(f"time {t} outside 0..{tree.horizon}")
    if len(x.values) != tree.n_leaves:
        raise ValueError("claim has wrong number of leaf values")
    out = []
    for node in tree.nodes_at(t):
        acc = vzero(x.width)
        mass = Fraction(0)
        for i in tree.descendant_leaves(node.id):
            p = tree.leaf_probs[i]
            mass += p
            acc = tuple(a + p * b for a, b in zip(acc, x.values[i]))
        out.append(vscale(Fraction(1) / mass, acc))
    return AdaptedVector(t, x.width, tuple(out))


def cond_expect_unnormalized(tree: FilteredTree, x: TerminalClaim, t: int) -> AdaptedVector:
    """Per-node subtree aggregates sum_{leaves in node} P(leaf) x(leaf)."""
    out = []
    for node in tree.nodes_at(t):
        acc = vzero(x.width)
        for i in tree.descendant_leaves(node.id):
            p = tree.leaf_probs[i]
            acc = tuple(a + p * b for a, b in zip(acc, x.values[i]))
        out.append(acc)
    return AdaptedVector(t, x.width, tuple(out))


def embed_adapted(tree: FilteredTree, x: AdaptedVector) -> TerminalClaim:
    """Lift a time-``t`` adapted vector to the terminal claim constant on atoms."""
    nodes = tree.nodes_at(x.time)
    if len(nodes) != len(x.values):
        raise ValueError("adapted vector has wrong number of node values")
    leaf_vals: list[Vec | None] = [None] * tree.n_leaves
    for node, val in zip(nodes, x.values):
        for i in tree.descendant_leaves(node.id):
            leaf_vals[i] = val
    assert all(v is not None for v in leaf_vals)
    return TerminalClaim(x.width, tuple(leaf_vals))  # type: ignore[arg-type]
