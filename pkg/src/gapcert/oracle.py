"""Independent eigenvalue oracles.

* Radial sector solver: for V(x) = W(|x|) the weighted Laplacian splits over
  spherical harmonics of degree l into 1-D Sturm-Liouville problems with
  weight r^(n-1) e^{-W} and centrifugal term l(l+n-2)/r^2.
* 1-D interval solver: same discretization on a cartesian interval.
* Grid solver (dim 1-2): node-based finite-volume discretization of the
  weighted Dirichlet form with Neumann boundary.

The 1-D problems use P1 finite elements with lumped mass.  Every element
integral is formed in the log domain and the symmetric tridiagonal matrix
M^{-1/2} K M^{-1/2} is assembled from log-ratios, so weights spanning
hundreds of orders of magnitude never underflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.interpolate import PchipInterpolator
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.sparse.linalg import eigsh
from scipy.special import logsumexp

from .errors import MeshNotConverged, SingularMass, UnsupportedGeometry, ZeroVariance
from .measures import (
    Annulus,
    Ball,
    BallComplement,
    Box,
    PotentialEvaluator,
    RadialMeasure,
    _field_on_points,
    _line_support,
    _radial_support,
    _unwrap,
    full_space,
    radial_range,
)

log = logging.getLogger(__name__)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_CONVERGENCE_RTOL = 0.05
_DENSE_LIMIT = 2000


@dataclass(frozen=True)
class SpectralResult:
    value: float
    error_estimate: float
    method: str
    mesh_size: int
    sector_l: int | None = None
    sectors: tuple = field(default=(), compare=False)

    @property
    def interval(self) -> tuple[float, float]:
        return self.value - self.error_estimate, self.value + self.error_estimate


# --------------------------------------------------------------------------
# 1-D Sturm-Liouville core
# --------------------------------------------------------------------------


def _graded_nodes(logw: Callable, a: float, b: float, m: int) -> np.ndarray:
    """Nodes equidistributing half in length and half in mass."""
    aux = np.linspace(a, b, 8 * m + 1)
    with np.errstate(all="ignore"):
        lw = np.asarray(logw(aux), dtype=float)
    lw = np.where(np.isfinite(lw), lw, -np.inf)
    w = np.exp(lw - np.max(lw))
    F = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(aux))])
    G = 0.5 * (aux - a) / (b - a) + 0.5 * F / F[-1]
    nodes = PchipInterpolator(G, aux)(np.linspace(0.0, 1.0, m + 1))
    nodes[0], nodes[-1] = a, b
    return nodes


def _tridiagonal(nodes, logw, potential=None):
    """Diagonal and off-diagonal of M^{-1/2} (K + Q) M^{-1/2}."""
    h = np.diff(nodes)
    t = nodes[:-1, None] + 0.5 * h[:, None] * (_GL_X + 1.0)
    gw = 0.5 * h[:, None] * _GL_W
    phi_r = (t - nodes[:-1, None]) / h[:, None]
    phi_l = 1.0 - phi_r
    with np.errstate(all="ignore"):
        lw = np.asarray(logw(t.ravel()), dtype=float).reshape(t.shape)
    lw = np.where(np.isnan(lw), -np.inf, lw)
    with np.errstate(divide="ignore"):
        log_gw = np.log(gw)
        left = lw + log_gw + np.log(phi_l)
        right = lw + log_gw + np.log(phi_r)
    log_S = logsumexp(lw + log_gw, axis=1)
    log_ML, log_MR = logsumexp(left, axis=1), logsumexp(right, axis=1)
    log_M = np.empty(len(nodes))
    log_M[0], log_M[-1] = log_ML[0], log_MR[-1]
    log_M[1:-1] = np.logaddexp(log_MR[:-1], log_ML[1:])
    if not np.all(np.isfinite(log_M)):
        raise SingularMass("a node carries zero weight; shrink the interval")
    log_c = log_S - 2.0 * np.log(h)
    diag = np.zeros(len(nodes))
    diag[:-1] += np.exp(log_c - log_M[:-1])
    diag[1:] += np.exp(log_c - log_M[1:])
    off = -np.exp(log_c - 0.5 * (log_M[:-1] + log_M[1:]))
    if potential is not None:
        with np.errstate(all="ignore"):
            q = np.asarray(potential(t.ravel()), dtype=float).reshape(t.shape)
        wl = np.exp(left - log_M[:-1, None])
        wr = np.exp(right - log_M[1:, None])
        q = np.where(np.isfinite(q) | (wl + wr == 0), q, 0.0)
        diag[:-1] += np.sum(np.where(wl > 0, wl * q, 0.0), axis=1)
        diag[1:] += np.sum(np.where(wr > 0, wr * q, 0.0), axis=1)
    return diag, off


def _eig(diag, off, index: int, dirichlet_left: bool) -> float:
    if dirichlet_left:
        diag, off = diag[1:], off[1:]
    vals = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(index, index))
    return float(vals[0])


@dataclass(frozen=True)
class _Problem:
    logw: Callable
    a: float
    b: float
    index: int
    dirichlet_left: bool = False
    potential: Callable | None = None

    def solve(self, m: int, a: float | None = None, b: float | None = None) -> tuple[float, float]:
        """Eigenvalue on m elements and on the every-other-node coarsening."""
        a = self.a if a is None else a
        b = self.b if b is None else b
        nodes = _graded_nodes(self.logw, a, b, m)
        fine = _eig(*_tridiagonal(nodes, self.logw, self.potential), self.index, self.dirichlet_left)
        coarse = _eig(*_tridiagonal(nodes[::2], self.logw, self.potential), self.index, self.dirichlet_left)
        return fine, coarse


def _richardson(problem: _Problem, mesh: int, extended: tuple[float, float] | None, label: str):
    """(value, error) from the fine mesh, its coarsening and tail doubling.

    ``extended`` is the doubled truncation window; the reported value comes
    from it and the change against the base window enters the error.
    """
    if mesh < 256 or mesh % 2:
        raise ValueError("mesh must be an even integer >= 256")
    a, b = extended if extended is not None else (problem.a, problem.b)
    fine, coarse = problem.solve(mesh, a, b)
    diff = abs(fine - coarse)
    if diff > _CONVERGENCE_RTOL * max(abs(fine), 1e-8) and diff > 1e-10:
        raise MeshNotConverged(f"{label}: fine {fine:.6g} vs coarse {coarse:.6g}")
    err = diff / 3.0
    if extended is not None:
        short, _ = problem.solve(mesh)
        err += abs(short - fine)
    err += 1e-12 * max(1.0, abs(fine))
    return fine, err


# --------------------------------------------------------------------------
# Radial problems
# --------------------------------------------------------------------------


def _window(lo: float, hi: float, sup, extend_left: bool = True):
    """Mass window [a, b] inside [lo, hi] and its doubled version (None if uncut)."""
    a = lo if sup.a <= lo else sup.a
    b = hi if sup.b >= hi else sup.b
    width = b - a
    ext_a = max(lo, a - width) if (extend_left and a > lo) else a
    ext_b = min(hi, b + width) if b < hi else b
    extended = (ext_a, ext_b) if (ext_a, ext_b) != (a, b) else None
    return a, b, extended


def _radial_window(measure: RadialMeasure, cell):
    cell = full_space(measure.dim) if cell is None else cell
    rr = radial_range(cell)
    if rr is None:
        raise UnsupportedGeometry("radial oracle needs a ball, complement, annulus or full space")
    # The inner cut sits where r^(n-1) has killed the density; it is not extended.
    return _window(rr[0], rr[1], _radial_support(measure, *rr), extend_left=False)


def radial_sector_gap(measure, cell=None, l_max: int = 4, mesh: int = 4096) -> SpectralResult:
    """Neumann spectral gap of the weighted Laplacian of a radial measure on a radial cell.

    The value is the smallest of: the second eigenvalue in sector l = 0 and
    the first eigenvalue in sectors 1..l_max.  In dimension 1 the sectors are
    the even (l = 0) and odd (l = 1) functions.
    """
    base = _unwrap(measure)
    if not isinstance(base, RadialMeasure):
        raise UnsupportedGeometry("radial_sector_gap needs a radial measure")
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    n = base.dim
    a, b, extended = _radial_window(base, cell)
    sectors = []
    for l in range(0, (1 if n == 1 else l_max) + 1):
        c = l * (l + n - 2)
        potential = (lambda r, c=c: c / (r * r)) if c else None
        problem = _Problem(base.log_density, a, b, index=0 if l else 1,
                           dirichlet_left=bool(l) and a == 0.0, potential=potential)
        value, err = _richardson(problem, mesh, extended, f"sector l={l}")
        sectors.append((l, value, err))
    l_best, value, best_err = min(sectors, key=lambda s: s[1])
    # Every sector that could hold the true minimum contributes its error.
    err = max(e for _, v, e in sectors if v - e <= value + best_err)
    if l_best > 1:
        log.warning("gap attained in sector l=%d (expected l <= 1) for %s", l_best, base.label)
    return SpectralResult(value, err, "radial_sector", mesh, l_best, tuple(sectors))


def interval_gap(measure, lo: float, hi: float, mesh: int = 4096) -> SpectralResult:
    """Neumann gap of a 1-D measure on the interval [lo, hi]."""
    return _interval_problem(measure, lo, hi, None, 1, mesh)


def _interval_problem(measure, lo, hi, U, index, mesh) -> SpectralResult:
    base = _unwrap(measure)
    if base.dim != 1:
        raise UnsupportedGeometry("interval problems are one-dimensional")
    ev = base.evaluator() if isinstance(base, RadialMeasure) else base
    a, b, extended = _window(lo, hi, _line_support(ev, lo, hi))

    def logw(x):
        return -ev.V(np.asarray(x)[:, None])

    potential = None if U is None else (lambda x: _field_on_points(U, np.asarray(x)[:, None]))
    value, err = _richardson(_Problem(logw, a, b, index, False, potential), mesh, extended, "interval")
    return SpectralResult(value, err, "interval_sl", mesh)


def schrodinger_ground_energy(measure, cell, U, mesh: int = 2048) -> SpectralResult:
    """Bottom of the spectrum of the Neumann realization of Delta_mu + U on a cell.

    Radial measure, radial cell and radial U use the l = 0 radial problem
    (the positive ground state is rotation invariant); 1-D cells use the
    interval solver.
    """
    base = _unwrap(measure)
    rr = radial_range(cell) if cell is not None else (0.0, math.inf)
    if isinstance(base, RadialMeasure) and rr is not None and getattr(U, "radial", False):
        a, b, extended = _radial_window(base, cell)
        problem = _Problem(base.log_density, a, b, 0, False, lambda r: np.asarray(U(r), dtype=float))
        value, err = _richardson(problem, mesh, extended, "schrodinger")
        return SpectralResult(value, err, "radial_sector", mesh, 0)
    if base.dim == 1:
        if isinstance(cell, (BallComplement, Annulus)):
            raise UnsupportedGeometry("1-D Schrodinger oracle needs an interval cell or radial U")
        if isinstance(cell, Box):
            lo, hi = cell.lo[0], cell.hi[0]
        else:
            c = float(cell.origin[0])
            lo, hi = c - cell.radius, c + cell.radius
        return _interval_problem(base, lo, hi, U, 0, mesh)
    raise UnsupportedGeometry("Schrodinger oracle needs radial data or dimension 1")


# --------------------------------------------------------------------------
# Grid oracle (dim 1-2)
# --------------------------------------------------------------------------


def _as_evaluator(measure) -> PotentialEvaluator:
    base = _unwrap(measure)
    return base.evaluator() if isinstance(base, RadialMeasure) else base


def _counts(box: Box, h: float) -> list[int]:
    counts = []
    for l, u in zip(box.lo, box.hi):
        k = (u - l) / h
        if k < 1 or abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ValueError(f"h={h:g} does not divide the box edge {u - l:g}")
        counts.append(int(round(k)))
    return counts


@dataclass(frozen=True)
class _GridForms:
    stiffness: sparse.csr_matrix
    mass: np.ndarray
    shape: tuple[int, ...]


def _grid_forms(ev: PotentialEvaluator, box: Box, counts) -> _GridForms:
    axes = [np.linspace(l, u, k + 1) for l, u, k in zip(box.lo, box.hi, counts)]
    steps = [(u - l) / k for l, u, k in zip(box.lo, box.hi, counts)]
    shape = tuple(k + 1 for k in counts)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    Vn = ev.V(pts)
    if not np.all(np.isfinite(Vn)):
        raise SingularMass("potential is not finite on the grid")
    shift = float(np.min(Vn))
    wn = np.exp(-(Vn - shift))
    clamped = wn < 1e-300
    if np.any(clamped):
        log.warning("clamping %d node weights at 1e-300", int(clamped.sum()))
        wn = np.maximum(wn, 1e-300)
    # Dual-cell fractions: halves on faces, quarters at corners.
    frac = np.ones(shape)
    for d in range(len(shape)):
        idx = [slice(None)] * len(shape)
        for end in (0, -1):
            idx[d] = end
            frac[tuple(idx)] *= 0.5
    mass = wn * frac.ravel() * float(np.prod(steps))
    index = np.arange(pts.shape[0]).reshape(shape)
    rows, cols, vals = [], [], []
    for d in range(len(shape)):
        lo_idx = [slice(None)] * len(shape)
        hi_idx = [slice(None)] * len(shape)
        lo_idx[d], hi_idx[d] = slice(0, -1), slice(1, None)
        i, j = index[tuple(lo_idx)].ravel(), index[tuple(hi_idx)].ravel()
        mid = 0.5 * (pts[i] + pts[j])
        wm = np.maximum(np.exp(-(ev.V(mid) - shift)), 1e-300)
        # Face measure transverse to axis d, halved on the box boundary.
        face = np.ones(index[tuple(lo_idx)].shape)
        for e in range(len(shape)):
            if e == d:
                continue
            sl = [slice(None)] * len(shape)
            for end in (0, -1):
                sl[e] = end
                face[tuple(sl)] *= 0.5
        transverse = float(np.prod([s for e, s in enumerate(steps) if e != d]))
        cond = wm * face.ravel() * transverse / steps[d]
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [cond, cond, -cond, -cond]
    K = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(pts.shape[0],) * 2)
    return _GridForms(K, mass, shape)


def _grid_eigen(forms: _GridForms) -> float:
    s = 1.0 / np.sqrt(forms.mass)
    A = sparse.diags(s) @ forms.stiffness @ sparse.diags(s)
    const = np.sqrt(forms.mass)
    const /= np.linalg.norm(const)
    N = A.shape[0]
    if N < _DENSE_LIMIT:
        vals, vecs = eigh(A.toarray(), subset_by_index=[0, min(2, N - 1)])
    else:
        v0 = np.linspace(1.0, 2.0, N)
        vals, vecs = eigsh(A.tocsc(), k=3, sigma=-1e-3, which="LM", v0=v0, tol=1e-12)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    for val, vec in zip(vals, vecs.T):
        if abs(const @ vec) / np.linalg.norm(vec) < 0.5:
            return float(val)
    raise MeshNotConverged("could not separate the constant mode from the spectrum")


def _grid_result(ev, box: Box, counts) -> SpectralResult:
    fine = _grid_eigen(_grid_forms(ev, box, counts))
    coarse = _grid_eigen(_grid_forms(ev, box, [max(k // 2, 1) for k in counts]))
    diff = abs(fine - coarse)
    if diff > _CONVERGENCE_RTOL * max(abs(fine), 1e-8) and diff > 1e-10:
        raise MeshNotConverged(f"grid: fine {fine:.6g} vs coarse {coarse:.6g}")
    err = diff / 3.0 + 1e-12 * max(1.0, abs(fine))
    return SpectralResult(fine, err, "grid_fd", int(np.prod([k + 1 for k in counts])))


def _check_grid(ev, box: Box):
    if ev.dim not in (1, 2) or box.dim != ev.dim:
        raise UnsupportedGeometry("grid oracle supports dimension 1 or 2 boxes")


def grid_gap(measure, box: Box, h: float) -> SpectralResult:
    """Neumann gap on a box from the grid discretization at h, checked against 2h."""
    ev = _as_evaluator(measure)
    _check_grid(ev, box)
    return _grid_result(ev, box, _counts(box, h))


def box_gap(measure, box: Box, cells_per_edge: int = 64) -> SpectralResult:
    """Grid gap with a fixed number of cells per edge (spacing may differ by axis)."""
    ev = _as_evaluator(measure)
    _check_grid(ev, box)
    return _grid_result(ev, box, [cells_per_edge] * box.dim)


def rayleigh_quotient(u, measure, box: Box, h: float | None = None) -> float:
    """Discrete int |grad u|^2 dmu / int (u - mean)^2 dmu on the grid forms.

    ``u`` is an array of node values (shape fixes the grid) or a callable on
    points of shape (m, dim), in which case ``h`` fixes the grid.
    """
    ev = _as_evaluator(measure)
    if callable(u):
        if h is None:
            raise ValueError("a callable trial function needs the grid spacing h")
        counts = _counts(box, h)
        axes = [np.linspace(l, hi, k + 1) for l, hi, k in zip(box.lo, box.hi, counts)]
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        values = np.asarray(u(pts), dtype=float).ravel()
    else:
        values = np.asarray(u, dtype=float)
        counts = [k - 1 for k in np.atleast_1d(values).shape]
        values = values.ravel()
    forms = _grid_forms(ev, box, counts)
    mean = float(forms.mass @ values / forms.mass.sum())
    centered = values - mean
    den = float(forms.mass @ (centered * centered))
    if den <= 1e-28 * float(forms.mass @ (values * values)) or den == 0.0:
        raise ZeroVariance("trial function is constant on the grid")
    return float(values @ (forms.stiffness @ values)) / den
