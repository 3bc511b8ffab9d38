"""Command-line front end: ``gapcert --config run.json [--out PATH] [--format json|csv] [--quiet]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Iterable, Sequence

from . import __version__
from .config import (
    RunConfig,
    build_bound_config,
    build_box,
    build_measure,
    load_config,
    precision,
    to_number,
)
from .covering import (
    BoundConfig,
    GlobalBoundReport,
    _threads,
    ball_lattice_covering,
    box_partition_covering,
    certify_covering,
    radius_sweep,
    two_piece_covering,
)
from .errors import ColumnMissing, GapCertError, NumericalFailure, PreconditionError, SchemaError
from .measures import Annulus, Ball, BallComplement, Box, RadialMeasure, full_space, moment
from .oracle import SpectralResult, box_gap, grid_gap, radial_sector_gap
from .powerlaw import PowerLawSpec, assemble_two_piece_bound, mean_rho_ball, prop71_bracket, prop72_bracket

log = logging.getLogger("gapcert")

CSV_COLUMNS = ("n", "alpha", "a", "c", "bound", "oracle", "ratio", "certified")
EXIT_OK, EXIT_SCHEMA, EXIT_NUMERICAL, EXIT_UNCERTIFIED = 0, 2, 3, 4


# --------------------------------------------------------------------------
# Serialization helpers
# --------------------------------------------------------------------------


def _cell(cell) -> dict:
    if isinstance(cell, Ball):
        d = {"type": "ball", "radius": cell.radius}
        if not cell.centered:
            d["center"] = list(cell.center)
        return d
    if isinstance(cell, BallComplement):
        return {"type": "ball_complement", "radius": cell.radius}
    if isinstance(cell, Annulus):
        return {"type": "annulus", "r_in": cell.r_in, "r_out": cell.r_out}
    return {"type": "box", "lo": list(cell.lo), "hi": list(cell.hi)}


def _clean(obj: Any, digits: int):
    if isinstance(obj, dict):
        return {str(k): _clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, digits) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    return to_number(obj, digits)


def report_dict(rep: GlobalBoundReport) -> dict:
    cov = rep.covering
    return {
        "value": rep.value,
        "certified": rep.certified,
        "discount_applied": rep.discount_applied,
        "form_bound": {"alpha": rep.form_bound.alpha_fb, "provenance": rep.form_bound.provenance},
        "covering": {
            "kind": cov.kind,
            "overlap_N": cov.overlap_N,
            "radius": cov.radius_param,
            "cells": len(cov.cells),
            "truncation_mass": cov.truncation_mass,
        },
        "per_cell": [
            {
                "cell": _cell(r.cell),
                "method": r.method,
                "value": r.value,
                "certified": r.certified,
                "delta_mean": r.delta_mean,
                "lambda1": r.lambda1K.lambda1 if r.lambda1K else None,
                "lambda1_source": r.lambda1K.source if r.lambda1K else None,
                "k_used": r.k_used,
                "kappa_used": r.kappa_used,
            }
            for r in rep.per_cell
        ],
        "sweep": [{"radius": R, "value": v, "certified": c} for R, v, c in rep.sweep],
        "notes": list(rep.notes),
    }


def spectral_dict(res: SpectralResult) -> dict:
    return {
        "value": res.value,
        "error_estimate": res.error_estimate,
        "method": res.method,
        "mesh_size": res.mesh_size,
        "sector_l": res.sector_l,
        "sectors": [{"l": l, "value": v, "error": e} for l, v, e in res.sectors],
    }


def _row(m: dict, bound=None, oracle=None, certified=None) -> dict:
    ratio = bound / oracle if bound is not None and oracle else None
    return {"n": m.get("dim"), "alpha": m.get("alpha"), "a": m.get("a", 1.0) if "alpha" in m else None,
            "c": m.get("c", 1.0) if "alpha" in m else None, "bound": bound, "oracle": oracle,
            "ratio": ratio, "certified": certified}


def emit_csv(records: Iterable[dict], columns: Sequence[str] = CSV_COLUMNS, digits: int = 12) -> str:
    """Header plus one row per record; numbers at ``digits`` significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        missing = [c for c in columns if c not in rec]
        if missing:
            raise ColumnMissing(f"record lacks columns {missing}")
        writer.writerow([_csv_value(rec[c], digits) for c in columns])
    return buf.getvalue()


def _csv_value(v, digits):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    v = float(v)
    return f"{v:.{digits}g}" if math.isfinite(v) else ""


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def _reference_radius(measure, m: dict) -> float:
    if m["family"] == "power_law":
        return (m.get("a", 1.0) * m["dim"]) ** (1.0 / m["alpha"])
    return math.sqrt(moment(measure, full_space(measure.dim), 2.0))


def _covering_builder(cfg: RunConfig, measure):
    c = cfg.block("covering")
    kind = c.get("kind", "two_piece")
    if kind == "two_piece":
        return lambda R: two_piece_covering(R, measure.dim)
    box = build_box(cfg, "covering")
    if kind == "box_partition":
        return lambda R: box_partition_covering(box, c.get("pieces", 4))
    complement = isinstance(measure, RadialMeasure) and all(lo < 0 < hi for lo, hi in zip(box.lo, box.hi))
    return lambda R: ball_lattice_covering(box, R, complement=complement)


def _bound(cfg: RunConfig, measure, bc: BoundConfig) -> GlobalBoundReport:
    c = cfg.block("covering")
    builder = _covering_builder(cfg, measure)
    sweep = c.get("radii_sweep", False)
    if sweep:
        R_ref = _reference_radius(measure, cfg.block("measure"))
        radii = [R_ref * 2.0**j for j in range(-2, 3)] if sweep is True else list(sweep)
        return radius_sweep(measure, radii, builder, bc)
    R = c.get("radius") or _reference_radius(measure, cfg.block("measure"))
    return certify_covering(measure, builder(R), bc)


def _oracle(cfg: RunConfig, measure) -> SpectralResult:
    o = cfg.block("oracle")
    return radial_sector_gap(measure, None, o.get("l_max", 4), o.get("mesh", 4096))


def cmd_bound(cfg: RunConfig) -> tuple[dict, list, bool]:
    measure, bc = build_measure(cfg), build_bound_config(cfg)
    rep = _bound(cfg, measure, bc)
    return report_dict(rep), [_row(cfg.block("measure"), rep.value, None, rep.certified)], rep.certified


def cmd_validate(cfg: RunConfig) -> tuple[dict, list, bool]:
    measure, bc = build_measure(cfg), build_bound_config(cfg)
    rep = _bound(cfg, measure, bc)
    orc = _oracle(cfg, measure)
    sound = rep.value <= orc.value + 3.0 * orc.error_estimate
    results = {"bound": report_dict(rep), "oracle": spectral_dict(orc), "sound": sound}
    return results, [_row(cfg.block("measure"), rep.value, orc.value, rep.certified)], rep.certified


def cmd_oracle_radial(cfg: RunConfig) -> tuple[dict, list, None]:
    orc = _oracle(cfg, build_measure(cfg))
    return spectral_dict(orc), [_row(cfg.block("measure"), None, orc.value, None)], None


def cmd_oracle_grid(cfg: RunConfig) -> tuple[dict, list, None]:
    o = cfg.block("oracle")
    measure, box = build_measure(cfg), build_box(cfg, "oracle")
    orc = grid_gap(measure, box, o["h"]) if "h" in o else box_gap(measure, box)
    return spectral_dict(orc), [_row(cfg.block("measure"), None, orc.value, None)], None


def cmd_powerlaw(cfg: RunConfig) -> tuple[dict, list, None]:
    p = cfg.block("powerlaw")
    spec = PowerLawSpec(p["alpha"], p.get("a", 1.0), p.get("c", 1.0), p["n"], p.get("branch", "pure"))
    bracket = {"prop71": prop71_bracket, "prop72": prop72_bracket}.get(spec.branch)
    value = bracket(spec) if bracket else None
    results = {"R_a": spec.R_a, "exponent": spec.exponent, "branch": spec.branch, "bracket": value}
    if spec.alpha >= 2:
        mr = mean_rho_ball(spec.alpha, spec.n, spec.a)
        results["mean_rho_ball"] = {"quadrature": mr.quadrature, "asymptotic": mr.asymptotic}
    row = {"n": spec.n, "alpha": spec.alpha, "a": spec.a, "c": spec.c, "bound": value,
           "oracle": None, "ratio": None, "certified": None}
    return results, [row], None


def cmd_sweep(cfg: RunConfig) -> tuple[dict, list, bool]:
    m, s = cfg.block("measure"), cfg.block("sweep")
    bc = build_bound_config(cfg)
    alphas = s.get("alpha", [m["alpha"]])
    jobs = sorted({(float(al), int(n)) for al in alphas for n in s["n"]})
    with_oracle = s.get("oracle", True)

    def one(job):
        al, n = job
        spec = PowerLawSpec(al, m.get("a", 1.0), m.get("c", 1.0), n, m.get("branch", "pure"))
        rep = assemble_two_piece_bound(spec, bc)
        orc = _oracle(cfg, spec.measure()) if with_oracle else None
        return job, rep, orc

    with ThreadPoolExecutor(max_workers=min(_threads(), len(jobs))) as pool:
        done = dict((job, (rep, orc)) for job, rep, orc in pool.map(one, jobs))
    rows, entries = [], []
    for al, n in jobs:
        rep, orc = done[(al, n)]
        ov = orc.value if orc else None
        rows.append({"n": n, "alpha": al, "a": m.get("a", 1.0), "c": m.get("c", 1.0), "bound": rep.value,
                     "oracle": ov, "ratio": rep.value / ov if ov else None, "certified": rep.certified})
        entries.append({"n": n, "alpha": al, "bound": report_dict(rep),
                        "oracle": spectral_dict(orc) if orc else None})
    return {"runs": entries}, rows, all(r["certified"] for r in rows)


COMMANDS = {
    "bound": cmd_bound,
    "validate": cmd_validate,
    "oracle-radial": cmd_oracle_radial,
    "oracle-grid": cmd_oracle_grid,
    "powerlaw": cmd_powerlaw,
    "sweep": cmd_sweep,
}


def run(cfg: RunConfig) -> dict:
    """Execute the configured command and return the run record."""
    start = time.perf_counter()
    results, rows, certified = COMMANDS[cfg.command](cfg)
    record = {
        "tool_version": __version__,
        "schema_version": 1,
        "command": cfg.command,
        "config": cfg.data,
        "certified": certified,
        "results": results,
        "rows": rows,
    }
    if cfg.block("output").get("include_timing", False):
        record["wall_time_ms"] = (time.perf_counter() - start) * 1e3
    return record


def render(record: dict, fmt: str, digits: int) -> str:
    if fmt == "csv":
        return emit_csv(record["rows"], CSV_COLUMNS, digits)
    return json.dumps(_clean(record, digits), indent=2, sort_keys=True, allow_nan=False) + "\n"


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gapcert", description="Certified spectral-gap lower bounds for weighted measures.")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output file (defaults to output.path, else stdout)")
    p.add_argument("--format", choices=("json", "csv"), help="output format (overrides output.format)")
    p.add_argument("--quiet", action="store_true", help="suppress the summary line on stderr")
    p.add_argument("--version", action="version", version=f"gapcert {__version__}")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        record = run(cfg)
    except SchemaError as exc:
        print(f"{args.config}:{exc.line or 1}: error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericalFailure as exc:
        print(f"{args.config}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PreconditionError, GapCertError) as exc:
        print(f"{args.config}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    out_cfg = cfg.block("output")
    fmt = args.format or out_cfg.get("format", "json")
    text = render(record, fmt, precision(cfg))
    path = args.out or out_cfg.get("path")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)

    policy = cfg.block("bound").get("poincare_policy", "certified_only")
    uncertified = record["certified"] is False and policy == "certified_only"
    if not args.quiet:
        summary = f"gapcert {cfg.command}: certified={record['certified']}"
        if path:
            summary += f" -> {path}"
        print(summary, file=sys.stderr)
    if uncertified:
        print(f"{args.config}: result is not certified under the certified_only policy", file=sys.stderr)
        return EXIT_UNCERTIFIED
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
