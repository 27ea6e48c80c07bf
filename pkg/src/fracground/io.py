"""File formats: binary grid functions, CSV exports, flat config files, JSON."""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import Domain, Grid, build_grid

MAGIC = b"FGF1"
# magic, N, domain kind, R, h, n
HEADER = struct.Struct("<4sI16sddQ")


class FormatError(ValueError):
    pass


class ConfigError(ValueError):
    """Malformed config file; the message starts with ``path:line:``."""


def write_grid_function(path, grid: Grid, values) -> None:
    """Header then ``n`` little-endian float64 values in node order."""
    values = np.asarray(values, dtype="<f8")
    if values.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} values, got shape {values.shape}")
    kind = grid.domain.kind.encode("ascii")
    header = HEADER.pack(MAGIC, grid.N, kind, grid.domain.R, grid.h, grid.n)
    Path(path).write_bytes(header + values.tobytes())


@dataclass(frozen=True)
class GridFunctionFile:
    N: int
    kind: str
    R: float
    h: float
    values: np.ndarray

    def grid(self, semiaxes=()) -> Grid:
        """Rebuild the grid; ellipses need their unscaled ``semiaxes``."""
        if self.kind == "ellipse" and not semiaxes:
            raise FormatError("ellipse grids need the semiaxes, which the header does not carry")
        g = build_grid(Domain(self.kind, self.N, self.R, tuple(semiaxes)), self.h)
        if g.n != len(self.values):
            raise FormatError(f"rebuilt grid has {g.n} nodes, file has {len(self.values)}")
        return g


def read_grid_function(path) -> GridFunctionFile:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise FormatError("file shorter than the header")
    magic, N, kind, R, h, n = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    body = data[HEADER.size :]
    if len(body) != 8 * n:
        raise FormatError(f"expected {n} values, found {len(body) / 8:g}")
    values = np.frombuffer(body, dtype="<f8").astype(float)
    return GridFunctionFile(int(N), kind.rstrip(b"\0").decode("ascii"), float(R), float(h), values)


def write_grid_csv(path, grid: Grid, values) -> None:
    """Columns ``x1[,x2],value``."""
    values = np.asarray(values, dtype=float)
    names = [f"x{i + 1}" for i in range(grid.N)] + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for xi, v in zip(grid.x, values):
            w.writerow([repr(float(c)) for c in xi] + [repr(float(v))])


def write_records_csv(path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_two_column(path, x, y, header: str) -> None:
    """Plot-ready whitespace-separated file with a ``#`` header line."""
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for a, b in zip(x, y):
            fh.write(f"{float(a)!r} {float(b)!r}\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, non-finite floats as null."""
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


# ---------------------------------------------------------------------------
# flat key = value config files


def parse_config(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment; duplicate keys are errors.

    Values are kept as strings; see :func:`typed` for conversion.
    """
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not key.replace("_", "").isalnum():
            raise ConfigError(f"{source}:{lineno}: invalid key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {out[key][1]})")
        out[key] = (value, lineno)
    return out


def read_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))


_CASTS = {
    "float": float,
    "int": int,
    "str": str,
    "floats": lambda v: tuple(float(x) for x in v.replace(",", " ").split()),
    "ints": lambda v: tuple(int(x) for x in v.replace(",", " ").split()),
    "bool": lambda v: {"true": True, "false": False, "1": True, "0": False}[v.lower()],
}


def typed(cfg: dict, schema: dict, source: str = "<config>", required=()) -> dict:
    """Convert parsed values by ``schema`` (key -> type name); unknown keys are errors."""
    out = {}
    for key, (value, lineno) in cfg.items():
        if key not in schema:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _CASTS[schema[key]](value)
        except (ValueError, KeyError):
            raise ConfigError(f"{source}:{lineno}: cannot read {key!r} as {schema[key]}: {value!r}") from None
    missing = [k for k in required if k not in out]
    if missing:
        raise ConfigError(f"{source}:0: missing required key(s) {', '.join(missing)}")
    return out
