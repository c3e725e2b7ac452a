"""Exact polyhedral convex cone algebra in Q^n with certificates.

A cone is held in generator form (lineality basis plus rays), facet form
(outer normals ``h`` with ``cone = {x : h.x <= 0}``), or both; either is
derived from the other by the double description method.  Degenerate
cones (the zero cone, the full space, cones with lineality) are
first-class.  Every boolean answer can be backed by a certificate that
re-verifies by direct rational arithmetic: conic coefficients for
membership, a separating functional otherwise.

Duality convention throughout: ``C* = {y : y.x <= 0 for all x in C}``,
so the facet normals of ``C`` generate ``C*`` and vice versa.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .rational import Vec, dot, is_zero, primitive, qstr, vec, vscale, vsub

_ZERO = Fraction(0)


class DimensionMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# Rational linear algebra
# ---------------------------------------------------------------------------


def rref(rows: Sequence[Sequence[Fraction]]) -> tuple[list[Vec], list[int]]:
    """Reduced row echelon form; returns nonzero rows and pivot columns."""
    mat = [list(r) for r in rows]
    if not mat:
        return [], []
    ncols = len(mat[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pivot_row = None
        for i in range(r, len(mat)):
            if mat[i][c] != 0:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        mat[r], mat[pivot_row] = mat[pivot_row], mat[r]
        pv = mat[r][c]
        mat[r] = [x / pv for x in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == len(mat):
            break
    return [tuple(row) for row in mat[:r]], pivots


def matrix_rank(rows: Sequence[Sequence[Fraction]]) -> int:
    return len(rref(rows)[0])


def nullspace_basis(rows: Sequence[Sequence[Fraction]], n: int) -> list[Vec]:
    """Basis of {x in Q^n : rows @ x = 0}, one vector per free column."""
    red, pivots = rref(rows)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [_ZERO] * n
        v[fc] = Fraction(1)
        for row, pc in zip(red, pivots):
            v[pc] = -row[fc]
        basis.append(primitive(v))
    return basis


def solve_linear(rows: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]) -> Vec | None:
    """One exact solution of ``rows @ x = rhs`` or ``None`` if inconsistent."""
    if not rows:
        return ()
    n = len(rows[0])
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    red, pivots = rref(aug)
    x = [_ZERO] * n
    for row, pc in zip(red, pivots):
        if pc == n:
            return None  # 0 = 1 row
        x[pc] = row[n]
    return tuple(x)


# ---------------------------------------------------------------------------
# Double description
# ---------------------------------------------------------------------------


def _dedupe(vectors: Iterable[Sequence[Fraction]]) -> list[Vec]:
    out: list[Vec] = []
    seen = set()
    for v in vectors:
        p = primitive(v)
        if is_zero(p) or p in seen:
            continue
        seen.add(p)
        out.append(p)
    return out


def dd_from_facets(facets: Sequence[Sequence[Fraction]], n: int) -> tuple[list[Vec], list[Vec]]:
    """Generators of ``{x : h.x <= 0 for all h}`` as (lineality basis, rays).

    Incremental double description: start from the full space as pure
    lineality; each facet either pivots one basis vector out of the
    lineality or splits the ray list, combining adjacent opposite-sign
    rays.  Adjacency uses zero-set bitmasks over the processed facets,
    which is sound because the maintained generator pair stays minimal.
    """
    basis: list[Vec] = [
        tuple(Fraction(1) if j == i else _ZERO for j in range(n)) for i in range(n)
    ]
    rays: list[Vec] = []
    zs: list[int] = []  # zero-set bitmask per ray, over processed facet index
    rows = _dedupe(facets)
    for k, a in enumerate(rows):
        hit = None
        for idx, b in enumerate(basis):
            if dot(a, b) != 0:
                hit = idx
                break
        if hit is not None:
            b0 = basis.pop(hit)
            val0 = dot(a, b0)
            if val0 > 0:
                b0 = tuple(-x for x in b0)
                val0 = -val0
            new_basis = []
            for b in basis:
                vb = dot(a, b)
                nb = b if vb == 0 else vsub(b, vscale(vb / val0, b0))
                new_basis.append(primitive(nb))
            basis = new_basis
            new_rays = []
            new_zs = []
            for r, z in zip(rays, zs):
                vr = dot(a, r)
                nr = r if vr == 0 else primitive(vsub(r, vscale(vr / val0, b0)))
                new_rays.append(nr)
                new_zs.append(z | (1 << k))
            rays = new_rays + [primitive(b0)]
            zs = new_zs + [(1 << k) - 1]  # tight on every earlier facet
            continue
        # facet orthogonal to the lineality: split the rays
        vals = [dot(a, r) for r in rays]
        if all(v <= 0 for v in vals):
            zs = [z | (1 << k) if v == 0 else z for z, v in zip(zs, vals)]
            continue
        neg = [i for i, v in enumerate(vals) if v < 0]
        zero = [i for i, v in enumerate(vals) if v == 0]
        pos = [i for i, v in enumerate(vals) if v > 0]
        keep_rays = [rays[i] for i in neg + zero]
        keep_zs = [zs[i] | (1 << k) if vals[i] == 0 else zs[i] for i in neg + zero]
        min_tight = n - len(basis) - 2  # rank of common tight rows must reach this
        for ip in pos:
            zp = zs[ip]
            for ineg in neg:
                inter = zp & zs[ineg]
                if inter.bit_count() < min_tight:
                    continue
                adjacent = True
                for j in range(len(rays)):
                    if j == ip or j == ineg:
                        continue
                    if inter & ~zs[j] == 0:
                        adjacent = False
                        break
                if not adjacent:
                    continue
                combo = vsub(vscale(vals[ip], rays[ineg]), vscale(vals[ineg], rays[ip]))
                keep_rays.append(primitive(combo))
                keep_zs.append(inter | (1 << k))
        rays, zs = keep_rays, keep_zs
    return basis, rays


def dd_from_generators(
    lineality: Sequence[Sequence[Fraction]], rays: Sequence[Sequence[Fraction]], n: int
) -> tuple[list[Vec], list[Vec]]:
    """Generator pair of the dual cone of ``lin(lineality) + cone(rays)``."""
    facets: list[Vec] = []
    for r in rays:
        facets.append(vec(r))
    for b in lineality:
        facets.append(vec(b))
        facets.append(tuple(-x for x in b))
    return dd_from_facets(facets, n)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    """Farkas-style evidence for a membership verdict.

    ``membership``: ``coefficients[i] >= 0`` against ``vectors[i]`` (the
    cone's rays and signed lineality basis) reproducing the point.
    ``separation``: a single functional ``y`` with ``y.x > 0`` and
    ``y.g <= 0`` for every generator ``g``.
    """

    kind: str  # "membership" | "separation"
    point: Vec
    vectors: tuple[Vec, ...]
    coefficients: tuple[Fraction, ...] = ()
    separator: Vec = ()

    def verify(self) -> bool:
        if self.kind == "membership":
            if len(self.coefficients) != len(self.vectors):
                return False
            if any(c < 0 for c in self.coefficients):
                return False
            acc = [_ZERO] * len(self.point)
            for c, v in zip(self.coefficients, self.vectors):
                if c:
                    for j, x in enumerate(v):
                        acc[j] += c * x
            return tuple(acc) == tuple(self.point)
        if self.kind == "separation":
            if dot(self.separator, self.point) <= 0:
                return False
            return all(dot(self.separator, g) <= 0 for g in self.vectors)
        return False

    def to_json_dict(self) -> dict:
        out: dict = {"kind": self.kind, "point": [qstr(x) for x in self.point]}
        if self.kind == "membership":
            out["coefficients"] = [qstr(c) for c in self.coefficients]
            out["vectors"] = [[qstr(x) for x in v] for v in self.vectors]
        else:
            out["separator"] = [qstr(x) for x in self.separator]
        return out


# ---------------------------------------------------------------------------
# PolyCone
# ---------------------------------------------------------------------------


class PolyCone:
    """Polyhedral convex cone with cached generator / facet descriptions."""

    def __init__(self, dim: int, *, gens: list[Vec] | None = None, facets: list[Vec] | None = None):
        if gens is None and facets is None:
            raise ValueError("need generators or facets")
        self.dim = dim
        self._raw_gens = gens
        self._raw_facets = facets
        self._lin: list[Vec] | None = None
        self._rays: list[Vec] | None = None
        self._min_facets: list[Vec] | None = None

    # -- construction --------------------------------------------------

    @staticmethod
    def from_generators(gens: Iterable[Sequence], dim: int) -> "PolyCone":
        out = []
        for g in gens:
            v = vec(g)
            if len(v) != dim:
                raise DimensionMismatch(f"generator of length {len(v)} in Q^{dim}")
            out.append(v)
        return PolyCone(dim, gens=_dedupe(out))

    @staticmethod
    def from_facets(facets: Iterable[Sequence], dim: int) -> "PolyCone":
        out = []
        for h in facets:
            v = vec(h)
            if len(v) != dim:
                raise DimensionMismatch(f"facet of length {len(v)} in Q^{dim}")
            out.append(v)
        return PolyCone(dim, facets=_dedupe(out))

    @staticmethod
    def zero(dim: int) -> "PolyCone":
        return PolyCone.from_generators([], dim)

    @staticmethod
    def full(dim: int) -> "PolyCone":
        return PolyCone.from_facets([], dim)

    # -- derived representations ----------------------------------------

    def _ensure_gens(self) -> None:
        if self._rays is not None:
            return
        if self._raw_facets is not None:
            self._lin, self._rays = dd_from_facets(self._raw_facets, self.dim)
        else:
            assert self._raw_gens is not None
            facets = self.facet_rows()
            self._lin, self._rays = dd_from_facets(facets, self.dim)

    def facet_rows(self) -> list[Vec]:
        """Some valid facet system (raw if supplied, else derived minimal)."""
        if self._raw_facets is not None:
            return self._raw_facets
        if self._min_facets is None:
            assert self._raw_gens is not None
            lin_star, rays_star = dd_from_generators([], self._raw_gens, self.dim)
            facets = list(rays_star)
            for b in lin_star:
                facets.append(b)
                facets.append(tuple(-x for x in b))
            self._min_facets = _dedupe(facets)
        return self._min_facets

    @property
    def lineality(self) -> list[Vec]:
        self._ensure_gens()
        assert self._lin is not None
        return self._lin

    @property
    def rays(self) -> list[Vec]:
        self._ensure_gens()
        assert self._rays is not None
        return self._rays

    def generators(self) -> list[Vec]:
        """A generating set: extreme rays plus both signs of the lineality basis."""
        if self._rays is None and self._raw_gens is not None:
            return list(self._raw_gens)
        out = list(self.rays)
        for b in self.lineality:
            out.append(b)
            out.append(tuple(-x for x in b))
        return out

    def generator_list_raw(self) -> list[Vec]:
        """Generators as supplied (for certificates against user input)."""
        if self._raw_gens is not None:
            return list(self._raw_gens)
        return self.generators()

    def is_zero_cone(self) -> bool:
        return not self.rays and not self.lineality

    def lineality_dim(self) -> int:
        return len(self.lineality)

    # -- predicates ------------------------------------------------------

    def contains(self, x: Sequence[Fraction]) -> bool:
        x = vec(x)
        if len(x) != self.dim:
            raise DimensionMismatch(f"point of length {len(x)} in Q^{self.dim}")
        return all(dot(h, x) <= 0 for h in self.facet_rows())

    def violated_facet(self, x: Sequence[Fraction]) -> Vec | None:
        x = vec(x)
        for h in self.facet_rows():
            if dot(h, x) > 0:
                return h
        return None

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "generators": [[qstr(x) for x in g] for g in self.generators()],
            "facets": [[qstr(x) for x in h] for h in self.facet_rows()],
        }


# ---------------------------------------------------------------------------
# Cone operations
# ---------------------------------------------------------------------------


def cone_from_generators(gens: Iterable[Sequence], dim: int) -> PolyCone:
    return PolyCone.from_generators(gens, dim)


def cone_from_facets(facets: Iterable[Sequence], dim: int) -> PolyCone:
    return PolyCone.from_facets(facets, dim)


def dual_cone(c: PolyCone) -> PolyCone:
    """Nonpositive polar; generator and facet roles swap exactly."""
    if c._raw_gens is not None:
        return PolyCone(c.dim, facets=list(c._raw_gens))
    return PolyCone(c.dim, gens=list(c.facet_rows()))


def member(c: PolyCone, x: Sequence[Fraction], *, certificate: bool = True):
    """Exact membership, optionally with a re-verifiable certificate."""
    x = vec(x)
    if len(x) != c.dim:
        raise DimensionMismatch(f"point of length {len(x)} in Q^{c.dim}")
    bad = c.violated_facet(x)
    if bad is not None:
        if not certificate:
            return False, None
        cert = Certificate(
            "separation", x, tuple(c.generator_list_raw()), separator=bad
        )
        assert cert.verify()
        return False, cert
    if not certificate:
        return True, None
    gens = tuple(c.generators())
    coeffs = _conic_coefficients(gens, x)
    cert = Certificate("membership", x, gens, coefficients=coeffs)
    assert cert.verify()
    return True, cert


def _conic_coefficients(gens: Sequence[Vec], x: Vec) -> tuple[Fraction, ...]:
    """Nonnegative coefficients expressing ``x`` over ``gens`` (must exist)."""
    from .simplex import LinearProgram  # local import to avoid a cycle

    if is_zero(x):
        return tuple(_ZERO for _ in gens)
    lp = LinearProgram(n_vars=len(gens), nonneg=[True] * len(gens))
    n = len(x)
    for j in range(n):
        lp.add_constraint([g[j] for g in gens], "=", x[j])
    lp.set_objective([_ZERO] * len(gens), "min")
    res = lp.solve()
    if res.status != "optimal":
        raise AssertionError("facet check passed but conic system infeasible")
    return tuple(res.x)


def cone_sum(cs: Sequence[PolyCone]) -> PolyCone:
    """Cone generated by the union of generators (closed; polyhedral)."""
    if not cs:
        raise ValueError("empty cone sum")
    dim = cs[0].dim
    gens: list[Vec] = []
    for c in cs:
        if c.dim != dim:
            raise DimensionMismatch("cone_sum over mixed dimensions")
        gens.extend(c.generators())
    return PolyCone.from_generators(gens, dim)


def cone_intersect(cs: Sequence[PolyCone]) -> PolyCone:
    """Intersection via the union of facet systems."""
    if not cs:
        raise ValueError("empty cone intersection")
    dim = cs[0].dim
    facets: list[Vec] = []
    for c in cs:
        if c.dim != dim:
            raise DimensionMismatch("cone_intersect over mixed dimensions")
        facets.extend(c.facet_rows())
    return PolyCone.from_facets(facets, dim)


def cone_equal(c1: PolyCone, c2: PolyCone, *, certificate: bool = True):
    """Set equality by mutual generator membership.

    Each direction is decided by facet checks; a certificate (the
    offending generator with its separating functional) is produced only
    for a failure.  Returns ``(False, (which, generator, Certificate))``
    where ``which`` names the cone the offending generator came from.
    """
    if c1.dim != c2.dim:
        raise DimensionMismatch("cone_equal over mixed dimensions")
    for g in c1.generators():
        if not c2.contains(g):
            _, cert = member(c2, g, certificate=certificate)
            return False, ("left", g, cert)
    for g in c2.generators():
        if not c1.contains(g):
            _, cert = member(c1, g, certificate=certificate)
            return False, ("right", g, cert)
    return True, None


# ---------------------------------------------------------------------------
# Polyhedron vertex/ray enumeration (homogenization + double description)
# ---------------------------------------------------------------------------


def enumerate_polyhedron(
    a_ub: Sequence[Sequence[Fraction]],
    b_ub: Sequence[Fraction],
    a_eq: Sequence[Sequence[Fraction]],
    b_eq: Sequence[Fraction],
    n: int,
) -> tuple[list[Vec], list[Vec], list[Vec]]:
    """All vertices, extreme recession rays and recession lineality of
    ``{x : a_ub x <= b_ub, a_eq x = b_eq}``.

    Works by lifting to the homogenization cone in Q^{n+1} and running
    double description.  Exact; intended for desk-scale instances.
    """
    facets: list[Vec] = []
    for row, b in zip(a_ub, b_ub):
        facets.append(tuple(list(vec(row)) + [-Fraction(b)]))
    for row, b in zip(a_eq, b_eq):
        r = tuple(list(vec(row)) + [-Fraction(b)])
        facets.append(r)
        facets.append(tuple(-x for x in r))
    facets.append(tuple([_ZERO] * n + [Fraction(-1)]))  # t >= 0
    lin, rays_h = dd_from_facets(facets, n + 1)
    vertices: list[Vec] = []
    rec_rays: list[Vec] = []
    for r in rays_h:
        t = r[n]
        if t > 0:
            vertices.append(tuple(x / t for x in r[:n]))
        else:
            rec_rays.append(primitive(r[:n]))
    rec_lin = [primitive(b[:n]) for b in lin]
    # lineality directions have t == 0: both signs satisfy t >= 0 only at 0
    assert all(b[n] == 0 for b in lin)
    return vertices, rec_rays, rec_lin
