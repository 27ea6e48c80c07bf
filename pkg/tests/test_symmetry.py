from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracground.domain import GridError, build_grid, disc, interval, reflection_map
from fracground.operator import assemble
from fracground.spectra import assemble_linearized
from fracground.symmetry import (
    antisymmetrize,
    boundary_quotient,
    check_second_eigen_characterization,
    cluster_symmetry_defect,
    derivative_pairing,
    eigen_residual,
    pohozaev_pairing,
    polarize,
    polarize_offcenter,
    symmetry_defect,
    verify_polarization_inequalities,
)
from fracground.verify import offcenter_violations

from .conftest import P1, P2

_GRID = build_grid(interval(1.0), 1 / 16)
_SYS = assemble(_GRID, 0.5, 1.0)
_LIN = assemble_linearized(_SYS, np.maximum(1 - _GRID.x[:, 0] ** 2, 0), P1)


def _three_node_pair(values):
    grid = build_grid(interval(1.0), 0.5)
    return grid, polarize(grid, np.array(values, dtype=float))


def test_polarization_swaps_a_decreasing_pair():
    grid, pair = _three_node_pair([3.0, 1.0, 5.0])
    # node order is x = -0.5, 0, 0.5
    np.testing.assert_array_equal(pair.Pv, [5.0, 1.0, 3.0])


def test_symmetric_input_is_fixed(grid_2d, sys_2d):
    v = np.cos(grid_2d.x[:, 0]) - 0.5 * grid_2d.x[:, 1] ** 2
    pair = polarize(grid_2d, v)
    assert np.array_equal(pair.Pv, v)
    lin = assemble_linearized(sys_2d, np.maximum(1 - np.sum(grid_2d.x**2, axis=1), 0), P2)
    rep = verify_polarization_inequalities(lin, pair)
    assert rep.ok
    for k in ("l2_plus", "l2_minus", "seminorm_plus", "seminorm_minus", "form_plus", "form_minus"):
        assert abs(getattr(rep, k)) <= 1e-15


def test_interlocking_signs_give_strict_seminorm_decrease():
    x = _GRID.x[:, 0]
    v = np.zeros(_GRID.n)
    v[np.isclose(x, 0.5)] = 2.0
    v[np.isclose(x, -0.5)] = -1.0
    v[np.isclose(x, -0.25)] = 1.0
    v[np.isclose(x, 0.25)] = -1.0
    rep = verify_polarization_inequalities(_LIN, polarize(_GRID, v))
    assert rep.ok
    assert rep.seminorm_plus > 1e-3


@settings(max_examples=200, deadline=None)
@given(v=arrays(np.float64, 31, elements=st.floats(-10.0, 10.0)))
def test_polarization_invariants(v):
    pair = polarize(_GRID, v)
    perm = pair.perm
    Pv = pair.Pv
    both = np.sort(np.stack([v, v[perm]]), axis=0)
    assert np.array_equal(np.sort(np.stack([Pv, Pv[perm]]), axis=0), both)
    plus = _GRID.index[:, 0] > 0
    assert np.all(Pv[plus] <= Pv[perm][plus])
    assert np.array_equal(polarize(_GRID, Pv).Pv, Pv)
    rep = verify_polarization_inequalities(_LIN, pair)
    assert rep.ok, rep.violations
    w = antisymmetrize(_GRID, Pv)
    assert np.array_equal(w.w[perm], -w.w)
    assert w.min_plus >= 0


def test_thousand_random_functions_on_the_disc(grid_2d, sys_2d):
    lin = assemble_linearized(sys_2d, np.maximum(1 - np.sum(grid_2d.x**2, axis=1), 0), P2)
    rng = np.random.default_rng(2024)
    worst = np.inf
    for _ in range(1000):
        rep = verify_polarization_inequalities(lin, polarize(grid_2d, rng.standard_normal(grid_2d.n), axis=1))
        assert rep.ok, rep.violations
        worst = min(worst, rep.seminorm_plus, rep.seminorm_minus, rep.form_plus, rep.form_minus)
    assert worst >= -1e-10


def test_offcenter_negative_control():
    assert offcenter_violations() >= 1


def test_offcenter_rejects_bad_offsets_and_exports():
    with pytest.raises(ValueError, match="integer"):
        polarize_offcenter(_GRID, np.ones(_GRID.n), 0, 0.01)
    v = -np.ones(_GRID.n)
    with pytest.raises(ValueError, match="outside"):
        polarize_offcenter(_GRID, v, 0, 0.25)


def test_asymmetric_potential_rejected():
    lin = assemble_linearized(_SYS, np.exp(_GRID.x[:, 0]), P1)
    with pytest.raises(ValueError, match="symmetric"):
        verify_polarization_inequalities(lin, polarize(_GRID, np.sin(5 * _GRID.x[:, 0])))


def test_increasing_potential_rejected():
    lin = assemble_linearized(_SYS, _GRID.x[:, 0] ** 2, P1)
    with pytest.raises(ValueError, match="nonincreasing"):
        verify_polarization_inequalities(lin, polarize(_GRID, np.sin(5 * _GRID.x[:, 0])))


def test_second_eigen_characterisation(spectrum_1d):
    lin, spec = spectrum_1d
    rep = check_second_eigen_characterization(lin, spec.phi(1), spec.values[1])
    assert rep.equalities
    assert max(abs(rep.defect_plus), abs(rep.defect_minus)) <= 1e-8
    with pytest.raises(ValueError, match="one-signed"):
        check_second_eigen_characterization(lin, spec.phi(0), spec.values[1])
    assert eigen_residual(lin, spec.phi(1), spec.values[1]) <= 1e-10


def test_antisymmetrize_examples(grid_2d):
    sym = np.exp(-np.sum(grid_2d.x**2, axis=1))
    assert not np.any(antisymmetrize(grid_2d, sym).w)
    with pytest.raises(ValueError, match="polarized"):
        antisymmetrize(grid_2d, grid_2d.x[:, 0])


def test_symmetry_defect_examples(grid_2d):
    sym = np.cos(grid_2d.x[:, 0])
    assert symmetry_defect(grid_2d, sym) == (0.0, 0.0)
    linf, l2 = symmetry_defect(grid_2d, grid_2d.x[:, 0])
    assert linf == pytest.approx(2 * np.max(np.abs(grid_2d.x[:, 0])))
    assert l2 == pytest.approx(math.sqrt(grid_2d.cell_volume * np.sum((2 * grid_2d.x[:, 0]) ** 2)))


def test_cluster_defect_of_a_simple_symmetric_eigenvalue(spectrum_2d):
    _, spec = spectrum_2d
    assert cluster_symmetry_defect(spec, 0) <= 1e-12


def test_cluster_defect_sees_the_whole_degenerate_pair(spectrum_2d):
    _, spec = spectrum_2d
    idx = spec.cluster(1)
    assert len(idx) == 2
    # the rotated pair spans x1-odd functions, so no basis choice hides the defect
    assert cluster_symmetry_defect(spec, 1) >= 1.0


def test_boundary_quotient_of_the_torsion_profile():
    grid = build_grid(interval(1.0), 1 / 200)
    u = np.sqrt(1 - grid.x[:, 0] ** 2)
    for q in boundary_quotient(grid, u, 0.5).at_endpoints():
        assert abs(q - math.sqrt(2)) <= 0.05 * math.sqrt(2)


def test_boundary_quotient_on_the_disc():
    grid = build_grid(disc(1.0), 1 / 40)
    u = np.sqrt(1 - np.sum(grid.x**2, axis=1))
    bq = boundary_quotient(grid, u, 0.5)
    np.testing.assert_allclose(bq.q, math.sqrt(2), rtol=0.02)
    with pytest.raises(ValueError):
        bq.at_endpoints()


def test_boundary_quotient_zero_and_positive(solved_1d, solved_2d):
    grid = build_grid(interval(1.0), 1 / 50)
    assert not np.any(boundary_quotient(grid, np.zeros(grid.n), 0.5).q)
    for sys, res in (solved_1d, solved_2d):
        assert np.all(boundary_quotient(sys.grid, res.u, 0.5).q > 0)


def test_boundary_quotient_needs_depth():
    grid = build_grid(interval(1.0), 0.5)
    with pytest.raises(GridError, match="depth"):
        boundary_quotient(grid, np.ones(grid.n), 0.5)


def test_derivative_pairing_of_the_torsion_profile():
    grid = build_grid(interval(1.0), 1 / 200)
    x = grid.x[:, 0]
    u = np.sqrt(1 - x**2)
    # int_{-1}^{1} u'(x) x dx = -int u = -pi/2
    assert derivative_pairing(grid, u, x, 0.5) == pytest.approx(-math.pi / 2, rel=1e-3)


def test_pohozaev_vanishes_for_symmetric_w(solved_2d):
    sys, res = solved_2d
    w = np.exp(-np.sum(sys.grid.x**2, axis=1))
    pair = pohozaev_pairing(sys.grid, res.u, w, 0.3, 0.5)
    assert abs(pair.lhs) <= 1e-8 and abs(pair.rhs) <= 1e-8
    zero = pohozaev_pairing(sys.grid, res.u, np.zeros(sys.n), 0.3, 0.5)
    assert zero.lhs == 0 and zero.rhs == 0 and zero.gap == 0


def test_pohozaev_manufactured_interval():
    grid = build_grid(interval(1.0), 1 / 200)
    x = grid.x[:, 0]
    u = np.sqrt(1 - x**2)
    pair = pohozaev_pairing(grid, u, x * u, 0.0, 0.5, images=(np.ones(grid.n), 2 * x))
    assert pair.gap <= 0.05


def test_pohozaev_manufactured_disc():
    grid = build_grid(disc(1.0), 1 / 40)
    u = np.sqrt(1 - np.sum(grid.x**2, axis=1))
    x1 = grid.x[:, 0]
    pair = pohozaev_pairing(grid, u, x1 * u, 0.0, 0.5, images=(np.full(grid.n, math.pi / 2), 0.75 * math.pi * x1))
    assert pair.gap <= 0.05
    assert pair.lhs == pytest.approx(math.pi**2 / 2, rel=0.02)


def test_reflection_of_polarized_pair_matches_map(grid_2d, rng):
    pair = polarize(grid_2d, rng.standard_normal(grid_2d.n), axis=1)
    assert np.array_equal(pair.perm, reflection_map(grid_2d, 1).perm)
