"""Serialization: JSON at 17 significant digits, bit-exact field encoding, CSV, key=value configs."""

from __future__ import annotations

import base64
import math
import os
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .functionals import evaluate
from .ground_state import GroundState
from .linearized import InternalMode
from .radial import RadialGrid

OUTPUT_ENV = "CQNLS_OUTPUT"
DEFAULT_OUTPUT = "cqnls_out"


def output_root() -> Path:
    """Directory for artifacts: $CQNLS_OUTPUT or ./cqnls_out."""
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


# -- JSON -----------------------------------------------------------------------------


def fmt_float(x: float, digits: int = 17) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = f"{x:.{digits}g}"
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _dump(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_dump(str(k), indent, level + 1)}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _dump(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return _dump(obj.tolist(), indent, level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON with floats at 17 significant digits (key order preserved)."""
    return _dump(obj, indent, 0) + "\n"


def loads(text: str):
    import json

    return json.loads(text)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    return loads(Path(path).read_text())


# -- field encoding -----------------------------------------------------------------


def encode_array(a) -> dict:
    a = np.ascontiguousarray(a)
    dtype = "<c16" if np.iscomplexobj(a) else "<f8"
    raw = a.astype(dtype, copy=False).tobytes()
    return {"dtype": dtype, "shape": list(a.shape), "base64": base64.b64encode(raw).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    if d.get("dtype") not in ("<c16", "<f8"):
        raise ConfigurationError(f"unsupported field dtype {d.get('dtype')!r}")
    raw = base64.b64decode(d["base64"])
    return np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"]).copy()


def grid_to_dict(grid: RadialGrid) -> dict:
    return {"r_max": grid.r_max, "n": grid.n, "order": grid.order}


def grid_from_dict(d: dict) -> RadialGrid:
    return RadialGrid(float(d["r_max"]), int(d["n"]), int(d.get("order", 6)))


def write_checkpoint(path, grid: RadialGrid, omega: float, t: float, psi) -> Path:
    header = {"kind": "checkpoint", "grid": grid_to_dict(grid), "omega": omega, "t": t}
    return write_json(path, {**header, "field": encode_array(np.asarray(psi, dtype=complex))})


def read_checkpoint(path):
    d = read_json(path)
    if d.get("kind") != "checkpoint":
        raise ConfigurationError(f"{path} is not a checkpoint file")
    grid = grid_from_dict(d["grid"])
    psi = decode_array(d["field"])
    grid.check(psi, "checkpoint field")
    return grid, float(d["omega"]), float(d["t"]), psi


# -- fixtures ---------------------------------------------------------------------------


def ground_state_to_dict(gs: GroundState, include_field: bool = True) -> dict:
    v = gs.values
    d = {
        "kind": "ground_state",
        "omega": gs.omega,
        "mode": gs.mode,
        "q0": gs.q0,
        "mass": v.mass,
        "energy": v.energy,
        "K": v.K,
        "action": v.action,
        "residual": gs.residual,
        "l2_residual": gs.l2_residual,
        "newton_iterations": gs.newton_iterations,
        "grid": grid_to_dict(gs.grid),
    }
    if include_field:
        d["Q"] = encode_array(gs.Q)
    return d


def ground_state_from_dict(d: dict) -> GroundState:
    if d.get("kind") != "ground_state" or "Q" not in d:
        raise ConfigurationError("not a ground-state fixture with field samples")
    grid = grid_from_dict(d["grid"])
    Q = decode_array(d["Q"])
    omega = float(d["omega"])
    mode = d.get("mode", "cubic-quintic")
    quintic = 0.0 if mode == "cubic-only" else 1.0
    return GroundState(omega=omega, grid=grid, Q=Q, q0=float(d["q0"]), residual=float(d["residual"]),
                       values=evaluate(grid, Q, omega, quintic), mode=mode,
                       l2_residual=float(d.get("l2_residual", 0.0)),
                       newton_iterations=int(d.get("newton_iterations", 0)))


def mode_to_dict(mode: InternalMode, include_field: bool = True) -> dict:
    d = {
        "kind": "internal_mode",
        "omega": mode.omega,
        "e_omega": mode.e_omega,
        "residuals": list(mode.residuals),
        "pairing": mode.pairing,
        "signQ2": mode.signQ2,
        "iterations": mode.iterations,
    }
    if include_field:
        d["Y1"] = encode_array(mode.Y1)
        d["Y2"] = encode_array(mode.Y2)
    return d


def mode_from_dict(d: dict) -> InternalMode:
    if d.get("kind") != "internal_mode" or "Y1" not in d:
        raise ConfigurationError("not an internal-mode fixture with field samples")
    return InternalMode(omega=float(d["omega"]), e_omega=float(d["e_omega"]), Y1=decode_array(d["Y1"]),
                        Y2=decode_array(d["Y2"]), residuals=tuple(d["residuals"]),
                        pairing=float(d["pairing"]), signQ2=float(d["signQ2"]),
                        iterations=int(d.get("iterations", 0)))


# -- CSV --------------------------------------------------------------------------------


def format_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c, "") if isinstance(row, dict) else row[columns.index(c)]
            if isinstance(v, (float, np.floating)):
                cells.append(fmt_float(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_csv(list(columns), rows))
    return path


def read_csv(path):
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- key=value configuration ---------------------------------------------------------------


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment. Values stay strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"config line {lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def format_config(values: dict) -> str:
    lines = []
    for k in sorted(values):
        v = values[k]
        if isinstance(v, float):
            v = fmt_float(v, 9)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def table(rows, columns, digits: int = 9) -> str:
    """Plain-text table with floats at ``digits`` significant digits."""
    cells = [[c for c in columns]]
    for row in rows:
        cells.append([fmt_float(float(row[c]), digits) if isinstance(row[c], (float, np.floating))
                      else str(row[c]) for c in columns])
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    return "\n".join("  ".join(x.rjust(w) for x, w in zip(r, widths)) for r in cells)
