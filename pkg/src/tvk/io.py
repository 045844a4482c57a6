"""JSON and CSV input/output with positioned error messages.

Artifacts are written as canonical JSON (sorted keys, fixed indentation,
shortest round-trip float repr) so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import atoms, norms
from .fields import Domain, GridField, PolygonalField, SimpleSetSpec


class InputError(ValueError):
    """Malformed or invalid user input (CLI exit code 2)."""


# ---------------------------------------------------------------------------
# JSON


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by strings so the output stays strict JSON."""
    if isinstance(obj, float):
        if math.isfinite(obj):
            return obj
        return "inf" if obj > 0 else "-inf" if obj < 0 else "nan"
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.ndarray, np.generic)):
        return _clean(_default(obj))
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_default, allow_nan=False) + "\n"


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def digest(obj) -> str:
    """sha256 of the canonical compact encoding."""
    text = json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), default=_default)
    return hashlib.sha256(text.encode()).hexdigest()


def loads(text: str, source: str = "<string>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    return loads(text, str(path))


def load_json_arg(value: str):
    """A CLI argument that is either inline JSON or a path to a JSON file."""
    if value.lstrip().startswith(("{", "[")):
        return loads(value, "<argument>")
    return read_json(value)


# ---------------------------------------------------------------------------
# schemas


def schema(name: str) -> dict:
    text = resources.files("tvk").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(obj, name: str, source: str = "<input>"):
    try:
        jsonschema.validate(obj, schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise InputError(f"{source}: {where}: {exc.message}") from None
    return obj


# ---------------------------------------------------------------------------
# domain objects


def load_norm(obj, source: str = "<norm>"):
    """Matrix norm from JSON; a bare vector ball becomes the 1D norm it induces."""
    validate(obj, "norm", source)
    try:
        if obj["kind"] in norms.MATRIX_KINDS or obj["kind"].replace("_", "-") in norms.MATRIX_KINDS:
            return norms.MatrixNormSpec.from_dict(obj)
        return norms.vector_norm_spec(norms.VectorBallSpec.from_dict(obj))
    except (norms.NormSpecError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{source}: {exc}") from None


def load_ball(obj, source: str = "<ball>"):
    try:
        if obj.get("kind") in norms.MATRIX_KINDS:
            return norms.rank_one_profile(norms.MatrixNormSpec.from_dict(obj))[0]
        return norms.VectorBallSpec.from_dict(obj)
    except (norms.NormSpecError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{source}: {exc}") from None


def load_field(obj, source: str = "<field>"):
    """
    Polygonal, grid or built-in field from JSON.

    A grid description may carry its values inline (``values``) or point to a
    CSV file (``values_csv``, see `write_grid_field`).  Relative CSV paths are
    resolved against the directory of `source` when it names a file.
    """
    validate(obj, "field", source)
    kind = obj.get("type", "polygonal")
    try:
        if kind == "polygonal":
            return PolygonalField.from_dict(obj)
        if kind == "grid":
            grid = GridField.from_dict(obj)
            if "values_csv" in obj:
                base = Path(source).parent if Path(source).is_file() else Path.cwd()
                grid = grid.with_values(read_grid_values_csv(base / obj["values_csv"], grid.grid_shape, grid.n))
            return grid
        if kind == "builtin":
            if obj["name"] == "hedgehog":
                return atoms.hedgehog_field(tuple(obj.get("shape", (128, 128))))
            raise InputError(f"{source}: unknown built-in field {obj['name']!r}")
    except InputError:
        raise
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise InputError(f"{source}: {exc}") from None
    raise InputError(f"{source}: unknown field type {kind!r}")


def load_set(obj, source: str = "<set>") -> SimpleSetSpec:
    try:
        return SimpleSetSpec.from_dict(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{source}: {exc}") from None


def load_domain(obj, source: str = "<domain>") -> Domain:
    try:
        return Domain.from_dict(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{source}: {exc}") from None


def load_atom(obj, source: str = "<atom>") -> atoms.Atom:
    validate(obj, "atom", source)
    try:
        return atoms.atom_from_dict(obj)
    except (atoms.AtomError, norms.NormSpecError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{source}: {exc}") from None


# ---------------------------------------------------------------------------
# CSV


def read_samples_csv(path):
    """
    Sample table with columns ``location, value_1, ..., value_n``.

    A first row that does not parse as numbers is taken as a header.  Returns
    (locations (m,), values (m, n)).
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    rows = []
    width = None
    with handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1:
                    continue
                col = next(k for k, c in enumerate(row, start=1) if not _is_float(c))
                raise InputError(f"{path}:{lineno}:{col}: not a number: {row[col - 1]!r}") from None
            if width is None:
                width = len(vals)
                if width < 2:
                    raise InputError(f"{path}:{lineno}:1: need a location and at least one value")
            elif len(vals) != width:
                raise InputError(f"{path}:{lineno}:1: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1:]


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def read_grid_values_csv(path, shape, n):
    """Cell values stored one row per cell in C order, ``n`` columns."""
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    rows = []
    with handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row:
                continue
            if not all(_is_float(c) for c in row):
                if lineno == 1:
                    continue
                col = next(k for k, c in enumerate(row, start=1) if not _is_float(c))
                raise InputError(f"{path}:{lineno}:{col}: not a number: {row[col - 1]!r}")
            if len(row) != n:
                raise InputError(f"{path}:{lineno}:1: expected {n} columns, got {len(row)}")
            rows.append([float(c) for c in row])
    size = int(np.prod(shape))
    if len(rows) != size:
        raise InputError(f"{path}: expected {size} rows for grid shape {tuple(shape)}, got {len(rows)}")
    return np.array(rows).reshape(*shape, n)


def write_grid_field(grid: GridField, path) -> Path:
    """JSON sidecar at `path` plus a values CSV next to it with the same stem."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    write_csv(csv_path, [f"u{k + 1}" for k in range(grid.n)], grid.values.reshape(-1, grid.n))
    meta = grid.to_dict(values=False)
    meta["values_csv"] = csv_path.name
    return write_json(meta, path)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path
