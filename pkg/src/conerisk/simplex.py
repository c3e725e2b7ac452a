"""Exact rational linear programming: two-phase simplex with Bland's rule.

The kernel is the workhorse behind cone membership, superhedging prices
and strict-positivity searches, so it reports more than an optimum: every
answer carries an exact witness.  ``optimal`` results include a primal
solution and row duals satisfying strong duality exactly; ``infeasible``
results carry a Farkas certificate; ``unbounded`` results carry an
improving ray.  Bland's pivoting rule guarantees termination; performance
is secondary at the intended instance sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .rational import Q, Vec, dot, vec

_ZERO = Fraction(0)
_ONE = Fraction(1)


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: Fraction | None = None
    x: tuple[Fraction, ...] = ()
    duals: tuple[Fraction, ...] = ()  # one per constraint, original order
    farkas: tuple[Fraction, ...] = ()  # infeasibility certificate (per constraint)
    ray: tuple[Fraction, ...] = ()  # improving direction if unbounded


@dataclass
class _Constraint:
    coefs: Vec
    rel: str  # "<=", ">=", "="
    rhs: Fraction


class LinearProgram:
    """General-form LP over exact rationals.

    Variables are nonnegative or free per the ``nonneg`` mask (free
    variables are split internally).  Constraints are rows with relation
    ``"<="``, ``">="`` or ``"="``.

    Dual sign convention (for ``min`` problems): ``duals @ rhs`` equals
    the optimal value, with ``duals[i] <= 0`` on ``<=`` rows and
    ``duals[i] >= 0`` on ``>=`` rows.  For ``max`` problems the duals are
    negated so ``duals @ rhs`` equals the maximum and ``<=`` rows carry
    nonnegative duals.  A Farkas certificate ``y`` satisfies the same row
    sign pattern, ``sum_i y_i a_i`` nonpositive on nonnegative variables
    and zero on free ones, and ``y @ rhs > 0``.
    """

    def __init__(self, n_vars: int, nonneg: Sequence[bool] | None = None):
        self.n_vars = n_vars
        self.nonneg = list(nonneg) if nonneg is not None else [True] * n_vars
        if len(self.nonneg) != n_vars:
            raise ValueError("nonneg mask length mismatch")
        self.constraints: list[_Constraint] = []
        self.objective: Vec = tuple([_ZERO] * n_vars)
        self.sense = "min"

    def add_constraint(self, coefs: Sequence, rel: str, rhs) -> None:
        row = vec(coefs)
        if len(row) != self.n_vars:
            raise ValueError("constraint width mismatch")
        if rel not in ("<=", ">=", "="):
            raise ValueError(f"bad relation {rel!r}")
        self.constraints.append(_Constraint(row, rel, Q(rhs)))

    def set_objective(self, coefs: Sequence, sense: str = "min") -> None:
        row = vec(coefs)
        if len(row) != self.n_vars:
            raise ValueError("objective width mismatch")
        if sense not in ("min", "max"):
            raise ValueError(f"bad sense {sense!r}")
        self.objective = row
        self.sense = sense

    # -- standard form translation ---------------------------------------

    def _expand(self):
        """Map to min c.z, A z = b, z >= 0; remember how to fold back."""
        # variable mapping: var i -> column pos[i]; free vars get (pos, neg)
        col_of: list[tuple[int, int | None]] = []
        ncols = 0
        for i in range(self.n_vars):
            if self.nonneg[i]:
                col_of.append((ncols, None))
                ncols += 1
            else:
                col_of.append((ncols, ncols + 1))
                ncols += 2
        slack_of: list[int | None] = []
        for con in self.constraints:
            if con.rel == "=":
                slack_of.append(None)
            else:
                slack_of.append(ncols)
                ncols += 1
        rows = []
        rhs = []
        flip: list[Fraction] = []  # multiply original row by this to reach standard row
        unit_cols: list[int] = []  # +1 slack usable as the initial basic variable
        for con, sl in zip(self.constraints, slack_of):
            sign = _ONE if con.rel != ">=" else Fraction(-1)
            row = [_ZERO] * ncols
            for i, a in enumerate(con.coefs):
                if a == 0:
                    continue
                p, nb = col_of[i]
                row[p] += sign * a
                if nb is not None:
                    row[nb] -= sign * a
            if sl is not None:
                row[sl] = _ONE
            b = sign * con.rhs
            if b < 0:
                row = [-x for x in row]
                b = -b
                sign = -sign
            rows.append(row)
            rhs.append(b)
            flip.append(sign)
            unit_cols.append(sl if sl is not None and row[sl] == _ONE else -1)
        c = [_ZERO] * ncols
        obj_sign = _ONE if self.sense == "min" else Fraction(-1)
        for i, a in enumerate(self.objective):
            if a == 0:
                continue
            p, nb = col_of[i]
            c[p] += obj_sign * a
            if nb is not None:
                c[nb] -= obj_sign * a
        return rows, rhs, c, col_of, flip, obj_sign, unit_cols

    def _fold_x(self, z: Sequence[Fraction], col_of) -> tuple[Fraction, ...]:
        out = []
        for p, nb in col_of:
            out.append(z[p] - (z[nb] if nb is not None else _ZERO))
        return tuple(out)

    def solve(self) -> LPResult:
        rows, rhs, c, col_of, flip, obj_sign, unit_cols = self._expand()
        res = _simplex_standard(rows, rhs, c, unit_cols)
        if res["status"] == "infeasible":
            y = tuple(flip[i] * res["farkas"][i] for i in range(len(flip)))
            return LPResult(status="infeasible", farkas=y)
        if res["status"] == "unbounded":
            ray = self._fold_x(res["ray"], col_of)
            return LPResult(status="unbounded", ray=ray)
        x = self._fold_x(res["x"], col_of)
        value = obj_sign * res["value"]
        duals = tuple(obj_sign * flip[i] * res["y"][i] for i in range(len(flip)))
        return LPResult(status="optimal", value=value, x=x, duals=duals)


def _simplex_standard(
    a: list[list[Fraction]],
    b: list[Fraction],
    c: list[Fraction],
    unit_cols: list[int] | None = None,
) -> dict:
    """min c.z s.t. a z = b (b >= 0), z >= 0; dense two-phase tableau.

    Rows offering a +1 unit column (``unit_cols``) start with it basic, so
    phase 1 only repairs the remaining rows.  Artificial columns are kept
    through phase 2 (barred from entering) so the basis inverse, and hence
    the duals, can be read off them.  Both phases maintain their
    reduced-cost rows in the tableau; pivots follow Dantzig's rule until a
    degenerate stretch, then fall back to Bland's rule permanently,
    preserving the termination guarantee.
    """
    m = len(a)
    n = len(c)
    ncols = n + m
    if unit_cols is None:
        unit_cols = [-1] * m
    tab = [list(row) + [_ZERO] * m + [b[i]] for i, row in enumerate(a)]
    for i in range(m):
        tab[i][n + i] = _ONE
    basis = [unit_cols[i] if unit_cols[i] >= 0 else n + i for i in range(m)]
    art_rows = frozenset(i for i in range(m) if unit_cols[i] < 0)
    # reduced-cost rows: red[j] = c_j - y . A_j for the two cost vectors
    red1 = [_ZERO] * (ncols + 1)  # phase 1: cost 0 on real, 1 on artificial
    for j in range(n):
        red1[j] = -sum(a[i][j] for i in art_rows)
    for k in range(m):
        if k not in art_rows:
            red1[n + k] = _ONE
    red1[ncols] = -sum(b[i] for i in art_rows)
    red2 = list(c) + [_ZERO] * (m + 1)  # phase 2: artificials cost 0

    def pivot(row: int, col: int) -> None:
        prow = tab[row]
        pv = prow[col]
        if pv != _ONE:
            inv = _ONE / pv
            prow = [x * inv for x in prow]
            tab[row] = prow
        for r in range(m):
            if r == row:
                continue
            f = tab[r][col]
            if f:
                tab[r] = [x - f * y for x, y in zip(tab[r], prow)]
        f = red1[col]
        if f:
            red1[:] = [x - f * y for x, y in zip(red1, prow)]
        f = red2[col]
        if f:
            red2[:] = [x - f * y for x, y in zip(red2, prow)]
        basis[row] = col

    _last_entering = [-1]

    def run(red: list[Fraction], limit: int) -> str:
        bland = False
        stall = 0
        while True:
            entering = -1
            if bland:
                for j in range(limit):
                    if red[j] < 0:
                        entering = j
                        break
            else:
                best_rc = _ZERO
                for j in range(limit):
                    rc = red[j]
                    if rc < best_rc:
                        best_rc = rc
                        entering = j
            if entering < 0:
                return "optimal"
            leaving = -1
            best = None
            col_vals = [tab[i][entering] for i in range(m)]
            for i in range(m):
                coef = col_vals[i]
                if coef > 0:
                    ratio = tab[i][ncols] / coef
                    if best is None or ratio < best or (
                        ratio == best and basis[i] < basis[leaving]
                    ):
                        best = ratio
                        leaving = i
            if leaving < 0:
                _last_entering[0] = entering
                return "unbounded"
            if best == 0:
                stall += 1
                if stall > 24:
                    bland = True
            else:
                stall = 0
            pivot(leaving, entering)

    # phase 1
    status = run(red1, ncols)
    assert status == "optimal"  # phase 1 is bounded below by 0
    w = sum(tab[i][ncols] for i in range(m) if basis[i] >= n)
    if w > 0:
        # y_k = 1 - red1[n+k]: y.b = w > 0 and y.A_j <= 0 on real columns
        return {"status": "infeasible", "farkas": [_ONE - red1[n + k] for k in range(m)]}

    # drive lingering artificials out of the basis where a real pivot exists
    for i in range(m):
        if basis[i] >= n:
            for j in range(n):
                if tab[i][j] != 0:
                    pivot(i, j)
                    break

    # phase 2 (artificial columns barred; basic artificials sit at level 0)
    status = run(red2, n)
    if status == "unbounded":
        entering = _last_entering[0]
        ray = [_ZERO] * ncols
        ray[entering] = _ONE
        for i in range(m):
            ray[basis[i]] = -tab[i][entering]
        return {"status": "unbounded", "ray": ray[:n]}
    x = [_ZERO] * ncols
    for i in range(m):
        x[basis[i]] = tab[i][ncols]
    y = [-red2[n + k] for k in range(m)]
    value = dot(tuple(c), tuple(x[:n]))
    return {"status": "optimal", "x": x[:n], "value": value, "y": y}


@dataclass(frozen=True)
class LPOutcome:
    """Result of :func:`lp_optimize` with verifier-friendly fields."""

    status: str
    value: Fraction | None
    solution: tuple[Fraction, ...]
    duals: tuple[Fraction, ...]
    farkas: tuple[Fraction, ...]
    ray: tuple[Fraction, ...]


def lp_optimize(
    objective: Sequence,
    *,
    n_vars: int | None = None,
    le: Sequence[tuple[Sequence, object]] = (),
    eq: Sequence[tuple[Sequence, object]] = (),
    ge: Sequence[tuple[Sequence, object]] = (),
    nonneg: Sequence[bool] | None = None,
    sense: str = "min",
) -> LPOutcome:
    """Optimize a rational LP; Infeasible/Unbounded are legitimate outputs."""
    obj = vec(objective)
    n = n_vars if n_vars is not None else len(obj)
    lp = LinearProgram(n, nonneg=nonneg if nonneg is not None else [False] * n)
    for row, rhs in le:
        lp.add_constraint(row, "<=", rhs)
    for row, rhs in ge:
        lp.add_constraint(row, ">=", rhs)
    for row, rhs in eq:
        lp.add_constraint(row, "=", rhs)
    lp.set_objective(obj, sense)
    res = lp.solve()
    return LPOutcome(res.status, res.value, res.x, res.duals, res.farkas, res.ray)
