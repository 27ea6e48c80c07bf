from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracground.domain import (
    Domain,
    GridError,
    ReflectionGroup,
    build_grid,
    disc,
    ellipse,
    interval,
    reflection_map,
    scale_domain,
)


def test_interval_half_spacing_has_three_nodes():
    g = build_grid(interval(1.0), 0.5)
    assert g.n == 3
    np.testing.assert_array_equal(g.x[:, 0], [-0.5, 0.0, 0.5])


def test_unit_disc_half_spacing_has_nine_nodes():
    g = build_grid(disc(1.0), 0.5)
    assert g.n == 9
    assert np.all(np.abs(g.x) <= 0.5)


def test_spacing_just_below_half_width_still_has_three_nodes():
    g = build_grid(interval(1.0), 0.9)
    np.testing.assert_allclose(g.x[:, 0], [-0.9, 0.0, 0.9])


@pytest.mark.parametrize("h", [1.0, 1.5])
def test_too_coarse_interval_is_degenerate(h):
    with pytest.raises(GridError, match="degenerate"):
        build_grid(interval(1.0), h)


def test_nonpositive_spacing_rejected():
    with pytest.raises(ValueError):
        build_grid(interval(1.0), 0.0)


def test_reflection_map_on_three_nodes():
    g = build_grid(interval(1.0), 0.5)
    sm = reflection_map(g, 0)
    np.testing.assert_array_equal(sm.perm, [2, 1, 0])
    np.testing.assert_array_equal(sm.perm[sm.perm], np.arange(3))


def test_reflection_axis_out_of_range():
    g = build_grid(interval(1.0), 0.5)
    with pytest.raises(IndexError):
        reflection_map(g, 1)


def test_scale_domain_examples():
    assert scale_domain(interval(1.0), 3.0).extents.tolist() == [3.0]
    d = scale_domain(disc(1.0), 2.0)
    assert d.kind == "disc" and d.N == 2 and d.extents.tolist() == [2.0, 2.0]
    with pytest.raises(ValueError):
        scale_domain(interval(1.0), 0.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="square", N=2),
        dict(kind="interval", N=2),
        dict(kind="disc", N=2, semiaxes=(1.0, 0.5)),
        dict(kind="ellipse", N=2, semiaxes=(1.0, -0.5)),
        dict(kind="interval", N=1, R=0.0),
    ],
)
def test_invalid_domains(kwargs):
    with pytest.raises(ValueError):
        Domain(**kwargs)


def test_ellipse_distance_matches_dense_boundary_sampling():
    dom = ellipse(2.0, 1.0)
    theta = np.linspace(0, 2 * np.pi, 200001)
    bnd = np.stack([2 * np.cos(theta), np.sin(theta)], axis=1)
    pts = np.array([[0.3, 0.2], [1.5, 0.1], [0.0, 0.5], [-1.2, -0.6], [0.0, 0.0]])
    brute = np.array([np.min(np.linalg.norm(bnd - p, axis=1)) for p in pts])
    np.testing.assert_allclose(dom.distance_to_boundary(pts), brute, atol=1e-8)


def test_boundary_adjacent_band():
    g = build_grid(disc(1.0), 0.1)
    band = g.boundary_adjacent
    assert np.all(g.delta[band] <= 0.2 + 1e-12)
    rest = np.setdiff1d(g.interior, band)
    assert np.all(g.delta[rest] > 0.2)


def test_describe_block():
    g = build_grid(ellipse(1.0, 0.5, 2.0), 0.25)
    d = g.describe()
    assert set(d) == {"N", "kind", "R", "semiaxes", "h", "n_interior"}
    assert d["n_interior"] == g.n


def test_sector_restrict_extend_round_trip(grid_2d, rng):
    grp = ReflectionGroup(grid_2d)
    v = rng.standard_normal(grid_2d.n)
    back = grp.extend({eps: grp.restrict(v, eps) for eps in grp.sectors})
    np.testing.assert_allclose(back, v, atol=1e-13)
    total = sum(float(np.sum(grp.restrict(v, eps) ** 2)) for eps in grp.sectors)
    assert total == pytest.approx(float(v @ v), rel=1e-13)


domains = st.one_of(
    st.builds(interval, st.floats(1.0, 6.0)),
    st.builds(disc, st.floats(1.0, 4.0)),
    st.builds(lambda a, R: ellipse(1.0, a, R), st.floats(0.4, 1.0), st.floats(1.0, 3.0)),
)


@settings(max_examples=40, deadline=None)
@given(dom=domains, h=st.sampled_from([0.1, 0.2, 0.25, 0.3]))
def test_grid_invariants(dom, h):
    g = build_grid(dom, h)
    assert np.all(dom.contains(g.x))
    mirrors = []
    for axis in range(g.N):
        perm = reflection_map(g, axis).perm
        np.testing.assert_array_equal(perm[perm], np.arange(g.n))
        flipped = g.x.copy()
        flipped[:, axis] *= -1
        assert np.array_equal(g.x[perm], flipped)
        mirrors.append(perm)
    anti = np.arange(g.n)
    for perm in mirrors:
        anti = perm[anti]
    assert np.array_equal(g.x[anti], -g.x)


@settings(max_examples=25, deadline=None)
@given(
    kind=st.sampled_from(["interval", "disc"]),
    R1=st.floats(1.0, 3.0),
    ratio=st.floats(1.0, 2.0),
    h=st.sampled_from([0.2, 0.25]),
)
def test_nested_scales_give_nested_interiors(kind, R1, ratio, h):
    base = interval(1.0) if kind == "interval" else disc(1.0)
    small = build_grid(scale_domain(base, R1), h)
    large = build_grid(scale_domain(base, R1 * ratio), h)
    assert np.all(large.lookup(small.index) >= 0)
