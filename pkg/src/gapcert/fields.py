"""Scalar fields with certified extrema over cells.

A field is radial (called with radii) or cartesian (called with points of
shape ``(m, dim)``).  Extrema are certified when the field carries either
monotone closed-form pieces (radial) or an interval enclosure; otherwise
they are sampled and flagged as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .measures import Box, Cell, radial_extent, radial_range

Array = np.ndarray


@dataclass(frozen=True)
class Piece:
    """Closed-form monotone piece of a radial profile on [lo, hi].

    trend: +1 nondecreasing, -1 nonincreasing, 0 constant.
    """

    lo: float
    hi: float
    func: Callable[[Array], Array]
    trend: int


@dataclass(frozen=True)
class Extrema:
    inf: float
    sup: float
    certified: bool


class ScalarField:
    def __init__(
        self,
        func: Callable[[Array], Array],
        *,
        radial: bool = False,
        pieces: Sequence[Piece] | None = None,
        enclosure: Callable[[Array, Array], tuple[Array, Array]] | None = None,
        name: str = "",
    ):
        self.func = func
        self.radial = radial
        self.pieces = tuple(pieces) if pieces else None
        self.enclosure = enclosure
        self.name = name
        self._extrema_cache: dict = {}

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.pieces is not None:
            out = np.empty(x.shape, dtype=float)
            done = np.zeros(x.shape, dtype=bool)
            for pc in self.pieces:
                sel = (~done) & (x >= pc.lo) & (x <= pc.hi)
                if np.any(sel):
                    out[sel] = pc.func(x[sel])
                    done |= sel
            if not np.all(done):
                out[~done] = self.func(x[~done])
            return out
        return np.asarray(self.func(x), dtype=float)

    def __repr__(self):
        kind = "radial" if self.radial else "cartesian"
        return f"ScalarField({self.name or '?'}, {kind})"

    # -- constructors ---------------------------------------------------

    @classmethod
    def constant(cls, value: float) -> "ScalarField":
        v = float(value)
        return cls(lambda r: np.full(np.shape(r), v), radial=True,
                   pieces=[Piece(0.0, math.inf, lambda r: np.full(np.shape(r), v), 0)],
                   name=f"const({v:g})")

    @classmethod
    def radial_monotone(cls, func, trend: int, name: str = "") -> "ScalarField":
        """Radial field known to be monotone on [0, inf)."""
        return cls(func, radial=True, pieces=[Piece(0.0, math.inf, func, trend)], name=name)

    @classmethod
    def lipschitz_1d(cls, func, lipschitz: float, name: str = "") -> "ScalarField":
        """1-D cartesian field with a global Lipschitz constant.

        ``func`` takes a 1-D array of abscissae.  The mean-value enclosure
        f(mid) +- L (hi-lo)/2 is valid on every subinterval.
        """

        def on_points(pts):
            return np.asarray(func(np.asarray(pts)[..., 0]), dtype=float)

        def enclosure(lo, hi):
            mid = 0.5 * (lo + hi)
            v = np.asarray(func(mid), dtype=float)
            rad = lipschitz * 0.5 * (hi - lo)
            return v - rad, v + rad

        return cls(on_points, enclosure=enclosure, name=name)

    def map(self, op: Callable[[Array], Array], monotone: int | None = None, name: str = "") -> "ScalarField":
        """Pointwise transform ``op(self)``.

        With ``monotone=+1`` (op nondecreasing) or ``-1`` (nonincreasing) the
        pieces and enclosure carry over, so extrema stay certified.
        """
        pieces = enclosure = None
        if monotone in (1, -1):
            if self.pieces is not None:
                pieces = [Piece(p.lo, p.hi, _compose(op, p.func), p.trend * monotone) for p in self.pieces]
            if self.enclosure is not None:
                inner = self.enclosure

                def enclosure(lo, hi):
                    low, high = inner(lo, hi)
                    a, b = op(np.asarray(low)), op(np.asarray(high))
                    return (a, b) if monotone > 0 else (b, a)

        return ScalarField(_compose(op, self), radial=self.radial, pieces=pieces,
                           enclosure=enclosure, name=name or self.name)

    # -- extrema ---------------------------------------------------------

    def extrema(self, cell: Cell) -> Extrema:
        """Certified lower bound of inf and upper bound of sup over ``cell``.

        Results are memoized per cell; fields are immutable once built.
        """
        try:
            return self._extrema_cache[cell]
        except (KeyError, TypeError):
            pass
        ext = self._extrema(cell)
        try:
            self._extrema_cache[cell] = ext
        except TypeError:
            pass
        return ext

    def _extrema(self, cell: Cell) -> Extrema:
        if self.radial:
            lo, hi = radial_extent(cell)
            if self.pieces is not None and _pieces_cover(self.pieces, lo, hi):
                return _piece_extrema(self.pieces, lo, hi)
            return _sampled_radial(self, lo, hi)
        dim = cell.dim
        if self.enclosure is not None and dim == 1:
            lo, hi = _interval(cell)
            if np.isfinite(lo) and np.isfinite(hi):
                return _enclosure_extrema(self.enclosure, lo, hi)
        return _sampled_cartesian(self, cell)


def _compose(op, f):
    return lambda x: np.asarray(op(np.asarray(f(x), dtype=float)), dtype=float)


def _interval(cell: Cell) -> tuple[float, float]:
    if isinstance(cell, Box):
        return cell.lo[0], cell.hi[0]
    rr = radial_range(cell)
    if rr is not None and rr[0] == 0.0:
        return -rr[1], rr[1]
    c = float(np.asarray(cell.center)[0])
    return c - cell.radius, c + cell.radius


def _pieces_cover(pieces, lo, hi) -> bool:
    covered = lo
    for pc in sorted(pieces, key=lambda p: p.lo):
        if pc.lo > covered:
            return False
        covered = max(covered, pc.hi)
        if covered >= hi:
            return True
    return covered >= hi


def _piece_extrema(pieces, lo, hi) -> Extrema:
    inf, sup = math.inf, -math.inf
    for pc in pieces:
        a, b = max(pc.lo, lo), min(pc.hi, hi)
        if a > b:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            va = float(pc.func(np.array([a]))[0])
            vb = float(pc.func(np.array([b]))[0]) if b != a else va
        if math.isnan(va) or math.isnan(vb):
            return Extrema(-math.inf, math.inf, False)
        if pc.trend == 0:
            inf, sup = min(inf, va), max(sup, va)
        elif pc.trend > 0:
            inf, sup = min(inf, va), max(sup, vb)
        else:
            inf, sup = min(inf, vb), max(sup, va)
    return Extrema(inf, sup, True)


def _enclosure_bound(enclosure, lo: float, hi: float, sign: float, tol: float) -> float:
    """Certified lower bound of inf (sign=+1) or upper bound of sup (sign=-1).

    Branch and bound: subintervals whose enclosure cannot beat the best
    value seen so far are dropped; survivors are bisected.
    """
    edges = np.linspace(lo, hi, 65)
    a, b = edges[:-1], edges[1:]
    bound = -math.inf
    for _ in range(80):
        low, high = enclosure(a, b)
        low, high = (np.asarray(low), np.asarray(high)) if sign > 0 else (-np.asarray(high), -np.asarray(low))
        best = float(np.min(high))
        bound = float(np.min(low))
        if best - bound <= tol * max(1.0, abs(best)):
            break
        keep = low <= best
        a, b = a[keep], b[keep]
        if a.size > 2**20:
            break
        mid = 0.5 * (a + b)
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
    return sign * bound


def _enclosure_extrema(enclosure, lo: float, hi: float, tol: float = 1e-9) -> Extrema:
    return Extrema(_enclosure_bound(enclosure, lo, hi, 1.0, tol), _enclosure_bound(enclosure, lo, hi, -1.0, tol), True)


def _sampled_radial(field: ScalarField, lo: float, hi: float) -> Extrema:
    top = hi if np.isfinite(hi) else max(4.0 * max(lo, 1.0), 1e3)
    rs = np.union1d(np.linspace(lo, top, 4001), lo + np.geomspace(1e-9, max(top - lo, 1e-9), 1001))
    vals = field(rs)
    inf, sup = _polish(lambda t: float(field(np.array([t]))[0]), rs, vals)
    if not np.isfinite(hi):
        tail = field(np.geomspace(top, 1e12, 200))
        inf, sup = min(inf, float(np.min(tail))), max(sup, float(np.max(tail)))
    return Extrema(inf, sup, False)


def _sampled_cartesian(field: ScalarField, cell: Cell) -> Extrema:
    if cell.dim == 1:
        lo, hi = _interval(cell)
        xs = np.linspace(lo, hi, 8001)
        vals = field(xs[:, None])
        inf, sup = _polish(lambda t: float(field(np.array([[t]]))[0]), xs, vals)
        return Extrema(inf, sup, False)
    if isinstance(cell, Box):
        axes = [np.linspace(l, h, 401) for l, h in zip(cell.lo, cell.hi)]
    else:
        c, r = np.asarray(cell.center if cell.center is not None else np.zeros(cell.dim)), cell.radius
        axes = [np.linspace(ci - r, ci + r, 401) for ci in c]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    grid = grid[cell.contains(grid)]
    vals = field(grid)
    return Extrema(float(np.min(vals)), float(np.max(vals)), False)


def _polish(f, xs, vals) -> tuple[float, float]:
    vals = np.asarray(vals, dtype=float)
    out = []
    for sign in (1.0, -1.0):
        i = int(np.argmin(sign * vals))
        best = float(vals[i])
        if 0 < i < len(xs) - 1:
            res = optimize.minimize_scalar(lambda t: sign * f(t), bounds=(xs[i - 1], xs[i + 1]), method="bounded")
            cand = sign * float(res.fun)
            best = min(best, cand) if sign > 0 else max(best, cand)
        out.append(best)
    return out[0], out[1]
