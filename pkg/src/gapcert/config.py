"""Run configuration: schema validation with line-anchored diagnostics and object builders."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from json.decoder import scanstring
from typing import Any

import jsonschema
import numpy as np
import sympy

from .covering import BoundConfig
from .errors import SchemaError
from .localbound import METHOD_ORDER, DEFAULT_KAPPA_GRID, LocalBoundConfig
from .measures import Box, PotentialEvaluator, power_law_measure, radial_measure
from .poincare import PoincarePolicy

SCHEMA_NAME = "run_config.v1.json"


def load_schema() -> dict:
    return json.loads(resources.files("gapcert").joinpath("schemas", SCHEMA_NAME).read_text())


# --------------------------------------------------------------------------
# Line map: JSON pointer path -> 1-based line of the value
# --------------------------------------------------------------------------

_WS = " \t\r\n"
_DECODER = json.JSONDecoder()


def _skip(text: str, i: int) -> int:
    while i < len(text) and text[i] in _WS:
        i += 1
    return i


def _walk(text: str, i: int, path: tuple, out: dict) -> int:
    i = _skip(text, i)
    out[path] = text.count("\n", 0, i) + 1
    ch = text[i]
    if ch == "{":
        i = _skip(text, i + 1)
        if text[i] == "}":
            return i + 1
        while True:
            key, i = scanstring(text, _skip(text, i) + 1)
            i = _skip(text, i) + 1  # the colon
            out[path + (key,)] = text.count("\n", 0, i) + 1
            i = _walk(text, i, path + (key,), out)
            i = _skip(text, i)
            if text[i] == "}":
                return i + 1
            i += 1
    if ch == "[":
        i = _skip(text, i + 1)
        if text[i] == "]":
            return i + 1
        k = 0
        while True:
            i = _walk(text, i, path + (k,), out)
            i = _skip(text, i)
            k += 1
            if text[i] == "]":
                return i + 1
            i += 1
    _, end = _DECODER.raw_decode(text, i)
    return end


def line_map(text: str) -> dict[tuple, int]:
    out: dict[tuple, int] = {}
    _walk(text, 0, (), out)
    return out


def _line_for(lines: dict, path) -> int:
    path = tuple(path)
    while path not in lines and path:
        path = path[:-1]
    return lines.get(path, 1)


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    data: dict
    lines: dict = field(default_factory=dict, compare=False, repr=False)
    source: str = "<config>"

    @property
    def command(self) -> str:
        return self.data["command"]

    def block(self, name: str) -> dict:
        return self.data.get(name, {})

    def fail(self, path, message: str) -> SchemaError:
        return SchemaError(message, _line_for(self.lines, path))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    lines = line_map(text)
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (_line_for(lines, e.absolute_path), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors) or errors[0]
        path = list(err.absolute_path)
        where = "/".join(map(str, path)) or "<root>"
        raise SchemaError(f"{where}: {err.message}", _line_for(lines, path + _extra_key(err)))
    cfg = RunConfig(data, lines, source)
    _semantic_checks(cfg)
    return cfg


def _extra_key(err) -> list:
    """Point an additionalProperties error at the first unexpected key."""
    if err.validator != "additionalProperties" or not isinstance(err.instance, dict):
        return []
    known = err.schema.get("properties", {})
    extra = [k for k in err.instance if k not in known]
    return extra[:1]


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SchemaError(f"cannot read config: {exc.strerror}", 1) from None
    return parse_config(text, path)


def _semantic_checks(cfg: RunConfig) -> None:
    """Constraints the schema cannot express."""
    m = cfg.block("measure")
    for name in ("measure", "powerlaw"):
        blk = cfg.block(name)
        branch, alpha = blk.get("branch", "pure"), blk.get("alpha")
        if branch == "prop71" and alpha is not None and alpha < 2:
            raise cfg.fail((name, "branch"), "branch prop71 needs alpha >= 2")
        if branch == "prop72" and alpha is not None and not 1 < alpha <= 2:
            raise cfg.fail((name, "branch"), "branch prop72 needs 1 < alpha <= 2")
    for name in ("covering", "oracle"):
        box = cfg.block(name).get("box")
        if box is None:
            continue
        if len(box["lo"]) != len(box["hi"]):
            raise cfg.fail((name, "box"), "box corners differ in dimension")
        if any(lo > hi for lo, hi in zip(box["lo"], box["hi"])):
            raise cfg.fail((name, "box"), "box needs lo <= hi")
        if m and len(box["lo"]) != m["dim"]:
            raise cfg.fail((name, "box"), f"box dimension {len(box['lo'])} differs from measure dim {m['dim']}")
    kind = cfg.block("covering").get("kind", "two_piece")
    if kind != "two_piece" and "box" not in cfg.block("covering"):
        raise cfg.fail(("covering", "kind"), f"covering kind {kind} needs covering.box")
    if cfg.command in ("oracle-radial", "validate", "sweep") and m.get("family") == "evaluator":
        raise cfg.fail(("measure", "family"), f"command {cfg.command} needs a radial measure")
    if cfg.command == "oracle-grid" and m.get("dim", 0) > 2:
        raise cfg.fail(("measure", "dim"), "grid oracle supports dim <= 2")
    if cfg.command == "sweep" and m.get("family") != "power_law":
        raise cfg.fail(("measure", "family"), "sweeps run over the power_law family")


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------


def _radial_from_expression(expr: str, dim: int):
    r = sympy.Symbol("r", nonnegative=True)
    W = sympy.sympify(expr, locals={"r": r})
    if W.free_symbols - {r}:
        raise ValueError(f"W may only depend on r, found {sorted(map(str, W.free_symbols - {r}))}")
    dW, d2W = sympy.diff(W, r), sympy.diff(W, r, 2)
    fns = [sympy.lambdify(r, e, "numpy") for e in (W, dW, d2W)]

    def wrap(f):
        return lambda x: np.broadcast_to(np.asarray(f(np.asarray(x, dtype=float)), dtype=float), np.shape(x)).copy()

    return radial_measure(dim, *map(wrap, fns), label=f"W(r)={expr}")


def _evaluator_from_expression(expr: str, dim: int) -> PotentialEvaluator:
    xs = sympy.symbols(f"x0:{dim}", real=True)
    names = {str(s): s for s in xs}
    if dim == 1:
        names["x"] = xs[0]
    if dim == 2:
        names.update(x=xs[0], y=xs[1])
    V = sympy.sympify(expr, locals=names)
    if V.free_symbols - set(xs):
        raise ValueError(f"V may only depend on {', '.join(map(str, xs))}")
    grad = [sympy.diff(V, s) for s in xs]
    hess = [[sympy.diff(g, s) for s in xs] for g in grad]
    fV = sympy.lambdify(xs, V, "numpy")
    fG = [sympy.lambdify(xs, g, "numpy") for g in grad]
    fH = [[sympy.lambdify(xs, h, "numpy") for h in row] for row in hess]

    def cols(x):
        return [x[:, i] for i in range(dim)]

    def full(v, m):
        return np.broadcast_to(np.asarray(v, dtype=float), (m,))

    def value(x):
        return full(fV(*cols(x)), len(x))

    def gradient(x):
        return np.stack([full(f(*cols(x)), len(x)) for f in fG], axis=-1)

    def hessian(x):
        return np.stack([np.stack([full(f(*cols(x)), len(x)) for f in row], axis=-1) for row in fH], axis=-2)

    return PotentialEvaluator(dim, value, gradient, hessian, label=f"V={expr}")


def build_measure(cfg: RunConfig):
    m = cfg.block("measure")
    family, dim = m["family"], m["dim"]
    try:
        if family == "power_law":
            return power_law_measure(m["alpha"], dim, m.get("a", 1.0), m.get("c", 1.0), m.get("branch", "pure"))
        if family == "custom_radial":
            return _radial_from_expression(m["W"], dim)
        return _evaluator_from_expression(m["V"], dim)
    except (ValueError, TypeError, sympy.SympifyError) as exc:
        key = {"power_law": "alpha", "custom_radial": "W", "evaluator": "V"}[family]
        raise cfg.fail(("measure", key), str(exc)) from None


def build_box(cfg: RunConfig, block: str) -> Box:
    box = cfg.block(block)["box"]
    return Box(tuple(box["lo"]), tuple(box["hi"]))


def build_bound_config(cfg: RunConfig) -> BoundConfig:
    b = cfg.block("bound")
    c = cfg.block("covering")
    local = LocalBoundConfig(
        tuple(m for m in METHOD_ORDER if m in b.get("methods_enabled", METHOD_ORDER)),
        b.get("k_grid_size", 16),
        tuple(b.get("kappa_grid", DEFAULT_KAPPA_GRID)),
    )
    policy = PoincarePolicy(b.get("poincare_policy", "certified_only"), b.get("poincare_user_value"))
    return BoundConfig(
        local=local,
        poincare=policy,
        form_bound_alpha=b.get("form_bound_alpha"),
        rho_probe_count=b.get("rho_probe_count", 256),
        inf_over_lattice_ok=c.get("inf_over_lattice_ok", False),
        eps_tail=cfg.block("measure").get("eps_tail", 1e-12),
    )


def precision(cfg: RunConfig) -> int:
    return cfg.block("output").get("precision", 12)


def to_number(x: Any, digits: int):
    """Round to ``digits`` significant digits; non-finite values become None."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if not math.isfinite(x):
        return None
    rounded = float(f"{x:.{digits}g}")
    # Rounding up near the float maximum overflows; keep the exact value.
    return rounded if math.isfinite(rounded) else x
