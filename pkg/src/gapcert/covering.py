"""Coverings of R^n, overlap numbers and assembly of the global gap bound.

For a covering with overlap number N and cell bounds s_i on the bottom of
the spectrum of Delta_mu + U_i, the gap satisfies

    lambda_1(mu) >= (1/N) min_i s_i        when min_i s_i >= 0,
    lambda_1(mu) >= min_i s_i              otherwise,

where U_i = rho+ - N rho- keeps the sum over cells a lower bound when rho
changes sign.  A user-supplied form-bound constant alpha > 0 instead runs
the cells on rho+ and multiplies the result by (1 - alpha).
"""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .curvature import FormBoundSpec, curvature_field, overlap_weighted, resolve_form_bound, rho_split
from .errors import MissingCellReport, NoCertifiedEstimate, PitchTooCoarse, UnsupportedGeometry
from .localbound import LocalBoundConfig, LocalBoundReport, best_local_bound
from .measures import Ball, BallComplement, Box, Cell, _unwrap, cell_mass, normalize
from .poincare import PoincarePolicy, lambda1_supply

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Covering:
    cells: tuple[Cell, ...]
    overlap_N: int
    kind: str
    radius_param: float
    truncation_box: Box | None = None
    truncation_mass: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if self.overlap_N < 1:
            raise ValueError("overlap_N must be >= 1")
        if self.kind not in ("two_piece", "ball_lattice", "box_partition"):
            raise ValueError(f"unknown covering kind {self.kind!r}")

    @property
    def covers_space(self) -> bool:
        return self.truncation_box is None or any(isinstance(c, BallComplement) for c in self.cells)


@dataclass(frozen=True)
class GlobalBoundReport:
    covering: Covering
    per_cell: tuple[LocalBoundReport, ...]
    value: float
    certified: bool
    discount_applied: float
    form_bound: FormBoundSpec = field(default_factory=FormBoundSpec)
    sweep: tuple[tuple[float, float, bool], ...] = ()
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class BoundConfig:
    local: LocalBoundConfig = field(default_factory=LocalBoundConfig)
    poincare: PoincarePolicy = field(default_factory=PoincarePolicy)
    form_bound_alpha: float | None = None
    rho_probe_count: int = 256
    inf_over_lattice_ok: bool = False
    eps_tail: float = 1e-12


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------


def two_piece_covering(R: float, n: int) -> Covering:
    """B(0, R) and its complement; disjoint up to a null set, so N = 1."""
    if not R > 0:
        raise ValueError("R must be positive")
    return Covering((Ball(float(R), n), BallComplement(float(R), n)), 1, "two_piece", float(R))


def lattice_pitch(R: float, dim: int) -> float:
    """Largest cubic pitch whose cubes fit in balls of radius R (with a margin)."""
    return 2.0 * R / math.sqrt(dim) * (1.0 - 1e-9)


def _max_depth(centers: np.ndarray, R: float) -> int:
    """Largest number of closed radius-R balls sharing a point."""
    tol = R * 1e-12
    if len(centers) == 1:
        return 1
    if centers.shape[1] == 1:
        events = sorted([(c - R, 0) for c in centers[:, 0]] + [(c + R + tol, 1) for c in centers[:, 0]])
        depth = best = 0
        for _, kind in events:
            depth += 1 if kind == 0 else -1
            best = max(best, depth)
        return best
    # Deepest points of a disk arrangement lie at centers or at circle crossings.
    candidates = [centers]
    for i, j in itertools.combinations(range(len(centers)), 2):
        d = centers[j] - centers[i]
        dist = float(np.hypot(*d))
        if dist == 0 or dist > 2 * R:
            continue
        mid = centers[i] + 0.5 * d
        off = math.sqrt(max(R * R - 0.25 * dist * dist, 0.0))
        normal = np.array([-d[1], d[0]]) / dist
        candidates.append(np.stack([mid + off * normal, mid - off * normal]))
    pts = np.concatenate(candidates)
    dists = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=-1)
    return int(np.max(np.sum(dists <= R + tol, axis=1)))


def ball_lattice_covering(box: Box, R: float, complement: bool = False) -> Covering:
    """Radius-R balls on a cubic lattice covering ``box`` (dim <= 2).

    With ``complement=True`` a ball complement outside the box's inscribed
    centered ball is added so the cells cover all of R^n.
    """
    dim = box.dim
    if dim > 2:
        raise UnsupportedGeometry("lattice coverings are limited to dim <= 2")
    if not R > 0:
        raise ValueError("R must be positive")
    pitch = lattice_pitch(R, dim)
    if not R > pitch * math.sqrt(dim) / 2:
        raise PitchTooCoarse("pitch too coarse for the ball radius")
    axes = []
    for lo, hi in zip(box.lo, box.hi):
        count = int(math.ceil((hi - lo) / pitch - 1e-12)) if hi > lo else 0
        axes.append(lo + pitch * np.arange(count + 1))
    centers = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    cells = [Ball(R, dim, tuple(c)) for c in centers]
    N = _max_depth(centers, R)
    if complement:
        inner = min(min(-lo, hi) for lo, hi in zip(box.lo, box.hi))
        if not inner > 0:
            raise ValueError("box must contain the origin in its interior to add a complement cell")
        cells.append(BallComplement(inner, dim))
        N += 1
    return Covering(tuple(cells), N, "ball_lattice", float(R), box)


def box_partition_covering(box: Box, pieces: int | Sequence[int]) -> Covering:
    """Grid of sub-boxes; faces are null sets, so N = 1."""
    dim = box.dim
    counts = [pieces] * dim if isinstance(pieces, int) else list(pieces)
    edges = [np.linspace(lo, hi, k + 1) for lo, hi, k in zip(box.lo, box.hi, counts)]
    cells = []
    for idx in itertools.product(*(range(k) for k in counts)):
        lo = tuple(float(edges[d][i]) for d, i in enumerate(idx))
        hi = tuple(float(edges[d][i + 1]) for d, i in enumerate(idx))
        cells.append(Box(lo, hi))
    return Covering(tuple(cells), 1, "box_partition", float(min((h - l) / k for l, h, k in zip(box.lo, box.hi, counts))), box)


@dataclass(frozen=True)
class CoverageCheck:
    min_count: int
    max_count: int
    samples: int

    def ok(self, N: int) -> bool:
        return self.min_count >= 1 and self.max_count <= N


def verify_coverage(covering: Covering, samples: int = 10_000) -> CoverageCheck:
    """Count cell memberships at scrambled Halton points (fixed seed)."""
    dim = covering.cells[0].dim
    if covering.truncation_box is not None:
        lo, hi = np.asarray(covering.truncation_box.lo), np.asarray(covering.truncation_box.hi)
        if covering.covers_space:
            span = np.maximum(hi - lo, 1.0)
            lo, hi = lo - 0.5 * span, hi + 0.5 * span
    else:
        R = covering.radius_param
        lo, hi = np.full(dim, -3.0 * R), np.full(dim, 3.0 * R)
    unit = qmc.Halton(d=dim, scramble=True, seed=0).random(samples)
    pts = lo + unit * (hi - lo)
    counts = np.zeros(samples, dtype=int)
    for cell in covering.cells:
        counts += cell.contains(pts)
    return CoverageCheck(int(counts.min()), int(counts.max()), samples)


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------


def assemble_global_bound(covering: Covering, per_cell_reports: Sequence[LocalBoundReport],
                          fb: FormBoundSpec | None = None, covering_certified: bool = True) -> GlobalBoundReport:
    fb = fb or FormBoundSpec()
    reports = tuple(per_cell_reports)
    if len(reports) != len(covering.cells) or any(r is None for r in reports):
        raise MissingCellReport(f"{len(reports)} reports for {len(covering.cells)} cells")
    values = [r.value for r in reports]
    if not all(math.isfinite(v) for v in values):
        raise MissingCellReport("a cell report is not finite")
    lowest = min(values)
    discount = 1.0 - fb.alpha_fb
    if lowest >= 0:
        value = discount * lowest / covering.overlap_N
    else:
        # Summing negative cell bounds over N-fold overlaps loses the 1/N.
        value = lowest
    certified = covering_certified and all(r.certified for r in reports)
    return GlobalBoundReport(covering, reports, value, certified, discount, fb)


def _threads() -> int:
    try:
        cap = int(os.environ.get("GAPCERT_THREADS", "0"))
    except ValueError:
        cap = 0
    return max(1, cap if cap > 0 else min(8, os.cpu_count() or 1))


def certify_covering(measure, covering: Covering, config: BoundConfig | None = None) -> GlobalBoundReport:
    """Full pipeline: curvature, per-cell Poincare constants and bounds, assembly."""
    config = config or BoundConfig()
    base = _unwrap(measure)
    rho = curvature_field(base)
    fb, negative = resolve_form_bound(rho, base, config.form_bound_alpha, config.rho_probe_count)
    notes = []
    if fb.provenance == "user_supplied" and fb.alpha_fb > 0:
        U, _ = rho_split(rho)
        notes.append(f"cells use rho+ with form-bound discount {1 - fb.alpha_fb:g}")
    else:
        U = overlap_weighted(rho, covering.overlap_N) if negative else rho
        fb = replace(fb, alpha_fb=0.0)
        if negative:
            notes.append("rho has a negative part; cells use the signed potential")

    def one(cell):
        try:
            p = lambda1_supply(cell, base, config.poincare)
        except NoCertifiedEstimate as exc:
            log.info("no Poincare constant on %s: %s", cell, exc)
            p = None
        return best_local_bound(U, cell, p, base, config.local)

    with ThreadPoolExecutor(max_workers=min(_threads(), len(covering.cells))) as pool:
        reports = list(pool.map(one, covering.cells))

    covering_ok = True
    if covering.kind != "two_piece":
        check = verify_coverage(covering)
        if not check.ok(covering.overlap_N):
            raise PitchTooCoarse(f"coverage check failed: counts in [{check.min_count}, {check.max_count}]")
        if not covering.covers_space:
            nm = normalize(base, config.eps_tail) if base.dim <= 2 else None
            outside = 1.0 - cell_mass(nm, covering.truncation_box) if nm is not None else math.inf
            covering = replace(covering, truncation_mass=max(outside, 0.0))
            covering_ok = covering.truncation_mass <= config.eps_tail
            notes.append(f"neglected mass outside the box: {covering.truncation_mass:.3g}")
        if not config.inf_over_lattice_ok:
            covering_ok = False
            notes.append("lattice covering: certification needs inf_over_lattice_ok")
    report = assemble_global_bound(covering, reports, fb, covering_ok)
    return replace(report, notes=tuple(notes))


def radius_sweep(measure, radii: Sequence[float], builder: Callable[[float], Covering],
                 bound_config: BoundConfig | None = None) -> GlobalBoundReport:
    """Best assembled bound over the radii; the per-radius table is kept in ``sweep``."""
    if not radii:
        raise ValueError("radii must be nonempty")
    table, best = [], None
    for R in radii:
        rep = certify_covering(measure, builder(float(R)), bound_config)
        table.append((float(R), rep.value, rep.certified))
        if best is None or rep.value > best.value:
            best = rep
    return replace(best, sweep=tuple(table))
