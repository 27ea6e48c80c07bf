from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracground.domain import build_grid, disc, ellipse, interval
from fracground.io import (
    HEADER,
    ConfigError,
    FormatError,
    parse_config,
    read_config,
    read_grid_function,
    typed,
    write_grid_csv,
    write_grid_function,
    write_json,
    write_records_csv,
    write_two_column,
)


@pytest.mark.parametrize("dom", [interval(3.0), disc(2.0)])
def test_grid_function_round_trip(tmp_path, dom, rng):
    grid = build_grid(dom, 0.25)
    v = rng.standard_normal(grid.n)
    path = tmp_path / "f.fgf"
    write_grid_function(path, grid, v)
    raw = path.read_bytes()
    assert raw[:4] == b"FGF1" and len(raw) == HEADER.size + 8 * grid.n
    f = read_grid_function(path)
    assert (f.N, f.kind, f.R, f.h) == (grid.N, dom.kind, dom.R, 0.25)
    assert np.array_equal(f.values, v)
    assert np.array_equal(f.grid().index, grid.index)


def test_ellipse_rebuild_needs_semiaxes(tmp_path):
    grid = build_grid(ellipse(1.0, 0.5, 2.0), 0.25)
    write_grid_function(tmp_path / "e.fgf", grid, np.zeros(grid.n))
    f = read_grid_function(tmp_path / "e.fgf")
    with pytest.raises(FormatError):
        f.grid()
    assert f.grid((1.0, 0.5)).n == grid.n


def test_corrupt_files_rejected(tmp_path, grid_1d):
    path = tmp_path / "f.fgf"
    write_grid_function(path, grid_1d, np.ones(grid_1d.n))
    raw = path.read_bytes()
    (tmp_path / "short").write_bytes(raw[:10])
    (tmp_path / "magic").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "cut").write_bytes(raw[:-8])
    for name in ("short", "magic", "cut"):
        with pytest.raises(FormatError):
            read_grid_function(tmp_path / name)
    with pytest.raises(ValueError):
        write_grid_function(path, grid_1d, np.ones(grid_1d.n + 1))


def test_grid_csv(tmp_path, grid_2d):
    write_grid_csv(tmp_path / "f.csv", grid_2d, np.arange(grid_2d.n, dtype=float))
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,value"
    assert len(lines) == grid_2d.n + 1
    x1, x2, val = map(float, lines[5].split(","))
    assert (x1, x2, val) == (grid_2d.x[4, 0], grid_2d.x[4, 1], 4.0)


def test_records_and_two_column_files(tmp_path):
    write_records_csv(tmp_path / "r.csv", [{"R": 1.0, "ok": True}, {"R": 2.5, "ok": np.bool_(False)}], ("R", "ok"))
    assert (tmp_path / "r.csv").read_text() == "R,ok\n1.0,true\n2.5,false\n"
    write_two_column(tmp_path / "d.dat", [1, 2], [0.1, 0.2], "R mu2")
    assert (tmp_path / "d.dat").read_text() == "# R mu2\n1.0 0.1\n2.0 0.2\n"


def test_json_is_sorted_and_finite(tmp_path):
    write_json(tmp_path / "a.json", {"b": math.nan, "a": np.array([1.0, np.inf]), "c": np.int64(3), "d": (np.True_,)})
    text = (tmp_path / "a.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1.0, None], "b": None, "c": 3, "d": [True]}


def test_config_parsing():
    cfg = parse_config("# comment\ns = 0.5  # order\n\nR = 1 2, 4\nkind=disc\n", "x.cfg")
    out = typed(cfg, {"s": "float", "R": "floats", "kind": "str"}, "x.cfg", ("s",))
    assert out == {"s": 0.5, "R": (1.0, 2.0, 4.0), "kind": "disc"}


@pytest.mark.parametrize(
    ("text", "schema", "message"),
    [
        ("s = 0.5\nlambda 1\n", {}, "x.cfg:2: expected 'key = value'"),
        ("s = 0.5\ns = 0.6\n", {}, "x.cfg:2: duplicate key 's' (first on line 1)"),
        ("bad key = 1\n", {}, "x.cfg:1: invalid key"),
        ("s =\n", {}, "x.cfg:1: empty value"),
        ("\n\nzeta = 1\n", {"s": "float"}, "x.cfg:3: unknown key 'zeta'"),
        ("s = half\n", {"s": "float"}, "x.cfg:1: cannot read 's' as float"),
        ("n = 2.5\n", {"n": "int"}, "x.cfg:1: cannot read 'n' as int"),
        ("f = maybe\n", {"f": "bool"}, "x.cfg:1: cannot read 'f' as bool"),
        ("s = 1\n", {"s": "float", "p": "float"}, "missing required key(s) p"),
    ],
)
def test_config_errors_carry_line_numbers(text, schema, message):
    with pytest.raises(ConfigError) as exc:
        typed(parse_config(text, "x.cfg"), schema, "x.cfg", ("p",) if "p" in schema else ())
    assert message in str(exc.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        read_config(tmp_path / "nope.cfg")


@settings(max_examples=100, deadline=None)
@given(
    vals=st.dictionaries(
        st.from_regex(r"[a-z][a-z0-9_]{0,8}", fullmatch=True),
        st.floats(allow_nan=False, allow_infinity=False),
        min_size=1,
        max_size=6,
    )
)
def test_config_float_round_trip(vals):
    text = "".join(f"{k} = {v!r}\n" for k, v in vals.items())
    out = typed(parse_config(text), {k: "float" for k in vals})
    assert out == vals
