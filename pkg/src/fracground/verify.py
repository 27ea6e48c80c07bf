"""Invariant suite on pinned small configurations.

Every check returns a :class:`Check` with the measured quantity and its
threshold.  ``inject_fault="operator_symmetry"`` corrupts one stiffness entry
so that the symmetry invariant must fail.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .domain import build_grid, disc, interval
from .experiments import analyse_solution, multistart, rescale_epsilon
from .operator import assemble, normalization_constant
from .solver import (
    CLOSED_FORM_ENERGY_1D,
    ProblemParams,
    SolverConfig,
    closed_form_ground_state_1d,
    functional_J,
    gradient_J,
    solve_ground_state_RN,
    solve_least_energy,
)
from .spectra import assemble_linearized
from .symmetry import (
    antisymmetrize,
    boundary_quotient,
    pohozaev_pairing,
    polarize,
    polarize_offcenter,
    verify_polarization_inequalities,
)

FAULTS = ("operator_symmetry",)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _le(name, measured, threshold, detail=""):
    return Check(name, bool(measured <= threshold), float(measured), float(threshold), detail)


def _lt(name, measured, threshold, detail=""):
    return Check(name, bool(measured < threshold), float(measured), float(threshold), detail)


def _ge(name, measured, threshold, detail=""):
    return Check(name, bool(measured >= threshold), float(measured), float(threshold), detail)


def check_constant() -> list[Check]:
    return [_le("normalization_constant", abs(normalization_constant(1, 0.5) - 1 / math.pi), 1e-12)]


def check_operator(fault: str | None = None) -> list[Check]:
    out = []
    rng = np.random.default_rng(7)
    for name, grid in (("1d", build_grid(interval(1.0), 1 / 50)), ("2d", build_grid(disc(1.0), 1 / 10))):
        sys = assemble(grid, 0.5)
        if fault == "operator_symmetry":
            eps = next(iter(sys.blocks))
            B = sys.blocks[eps]
            B[0, 1] += 1e-3 * abs(B[0, 0])
        x, y = rng.standard_normal((2, grid.n))
        Ax, Ay = sys.apply(x), sys.apply(y)
        scale = np.linalg.norm(x) * np.linalg.norm(y) * np.max(np.abs(sys.diagonal)) * sys.mass
        out.append(_le(f"operator_symmetry_{name}", abs(float(x @ Ay) - float(y @ Ax)) / scale, 1e-13))
        A = sys.dense()
        off = A - np.diag(np.diag(A))
        out.append(_le(f"operator_offdiagonal_nonpositive_{name}", float(off.max()), 0.0))
        rowsum = A.sum(axis=1) - sys.mass * sys.tail
        out.append(_le(f"operator_row_sums_equal_tail_{name}", float(np.max(np.abs(rowsum)) / np.max(np.diag(A))), 1e-12))
        z = rng.standard_normal(grid.n)
        out.append(_le(f"operator_apply_matches_dense_{name}", float(np.max(np.abs(A @ z - sys.apply(z))) / np.max(np.abs(A @ z))), 1e-12))
    return out


def torsion_residual(h: float) -> float:
    """Max of ``|(-Delta)^{1/2} sqrt(1 - x^2) - 1|`` over nodes with ``|x| <= 0.9``."""
    grid = build_grid(interval(1.0), h)
    sys = assemble(grid, 0.5)
    u = np.sqrt(1 - grid.x[:, 0] ** 2)
    r = sys.apply(u) / sys.mass - 1.0
    return float(np.max(np.abs(r[np.abs(grid.x[:, 0]) <= 0.9])))


def check_torsion() -> list[Check]:
    fine, coarse = torsion_residual(1 / 200), torsion_residual(1 / 100)
    grid = build_grid(interval(1.0), 1 / 200)
    u = np.sqrt(1 - grid.x[:, 0] ** 2)
    q = boundary_quotient(grid, u, 0.5).at_endpoints()
    qerr = max(abs(v - math.sqrt(2)) for v in q) / math.sqrt(2)
    w = grid.x[:, 0] * u
    pair = pohozaev_pairing(grid, u, w, 0.0, 0.5, images=(np.ones(grid.n), 2 * grid.x[:, 0]))
    return [
        _le("torsion_residual_h200", fine, 0.05),
        _le("torsion_residual_decreases", fine - coarse, 0.0, f"h=1/100: {coarse:.4g}"),
        _le("boundary_quotient_torsion", qerr, 0.05),
        _le("pohozaev_manufactured", pair.gap, 0.05, f"lhs={pair.lhs:.6g} rhs={pair.rhs:.6g}"),
    ]


def check_ground_state_1d() -> list[Check]:
    params = ProblemParams(0.5, 1.0, 2.0, 1)
    ref = solve_ground_state_RN(params, 40.0, 0.05)
    x = ref.grid.x[:, 0]
    near = np.abs(x) <= 10
    dist = float(np.max(np.abs(ref.Q[near] - closed_form_ground_state_1d(x[near]))))
    rel = abs(ref.energy - CLOSED_FORM_ENERGY_1D) / CLOSED_FORM_ENERGY_1D
    return [_le("ground_state_1d_sup_distance", dist, 0.05), _le("ground_state_1d_energy", rel, 0.02)]


def spectral_checks(tag: str, chk: dict) -> list[Check]:
    out = [
        _lt(f"{tag}_mu1_negative", chk["morse"]["mu1"], 0.0),
        _le(f"{tag}_morse_index_one", abs(chk["morse"]["morse_index"] - 1), 0),
        _le(f"{tag}_mu1_identity", chk["mu1_identity_defect"], 1e-6),
        _le(f"{tag}_phi1_one_signed", 0 if chk["phi1_one_signed"] else 1, 0),
        _le(f"{tag}_phi2_sign_changing", 0 if chk["phi2_sign_changing"] else 1, 0),
    ]
    if "phi2_sign_changes" in chk:
        out.append(_le(f"{tag}_phi2_one_sign_change", abs(chk["phi2_sign_changes"] - 1), 0))
    else:
        out.append(_le(f"{tag}_radial_phi2_sign_changes", chk["radial_phi2_sign_changes"], 2))
    out.append(
        _le(
            f"{tag}_second_eigen_equalities",
            max(abs(chk["second_eigen_phi2"]["defect_plus"]), abs(chk["second_eigen_phi2"]["defect_minus"])),
            1e-8,
        )
    )
    out.append(_ge(f"{tag}_hopf_quotient_positive", chk["hopf_min_quotient"], 1e-300))
    return out


def check_spectra() -> list[Check]:
    out = []
    cases = (
        ("spectral_1d", interval(8.0), 0.05, ProblemParams(0.5, 1.0, 2.0, 1)),
        ("spectral_2d", disc(4.0), 0.25, ProblemParams(0.5, 1.0, 1.5, 2)),
    )
    for tag, dom, h, params in cases:
        grid = build_grid(dom, h)
        sys = assemble(grid, params.s, params.lam)
        res = solve_least_energy(sys, params, SolverConfig(tol=1e-12))
        out.append(_le(f"{tag}_converged", res.residual, 1e-12))
        out += spectral_checks(tag, analyse_solution(sys, params, res))
    return out


def check_polarization(n_random: int = 200) -> list[Check]:
    out = []
    rng = np.random.default_rng(11)
    for tag, grid, params in (
        ("1d", build_grid(interval(1.0), 1 / 16), ProblemParams(0.5, 1.0, 2.0, 1)),
        ("2d", build_grid(disc(1.0), 1 / 6), ProblemParams(0.5, 1.0, 1.5, 2)),
    ):
        sys = assemble(grid, 0.5, 1.0)
        r2 = np.sum(grid.x**2, axis=1)
        lin = assemble_linearized(sys, np.maximum(1 - r2, 0), params)
        worst = np.inf
        l2 = 0.0
        bad = 0
        anti = np.inf
        for _ in range(n_random):
            pair = polarize(grid, rng.standard_normal(grid.n), 0)
            rep = verify_polarization_inequalities(lin, pair)
            bad += not rep.ok
            worst = min(worst, rep.seminorm_plus, rep.seminorm_minus, rep.form_plus, rep.form_minus)
            l2 = max(l2, abs(rep.l2_plus), abs(rep.l2_minus))
            anti = min(anti, antisymmetrize(grid, pair.Pv, 0).min_plus)
        out.append(_le(f"polarization_violations_{tag}", bad, 0))
        out.append(_le(f"polarization_min_margin_{tag}", -worst, 1e-10))
        out.append(_le(f"polarization_l2_preserved_{tag}", l2, 1e-12))
        out.append(_le(f"antisymmetric_part_nonnegative_{tag}", -anti, 0.0))
    out.append(_ge("offcenter_negative_control", offcenter_violations(), 1, "count of violated cases"))
    return out


def offcenter_violations(n_cases: int = 50, seed: int = 3) -> int:
    """Seeded cases where off-centre polarization breaks the negative-part inequality."""
    grid = build_grid(interval(1.0), 1 / 16)
    sys = assemble(grid, 0.5, 1.0)
    params = ProblemParams(0.5, 1.0, 2.0, 1)
    x = grid.x[:, 0]
    lin = assemble_linearized(sys, np.sqrt(50.0) * np.exp(-(x**2) / 0.2), params)
    rng = np.random.default_rng(seed)
    count = 0
    for _ in range(n_cases):
        a = int(rng.integers(1, 8)) * grid.h / 2
        v = rng.standard_normal(grid.n)
        mirror = np.rint((2 * a - x) / grid.h).astype(np.int64)[:, None]
        outside = grid.lookup(mirror) < 0
        v[outside] = np.abs(v[outside])
        rep = verify_polarization_inequalities(lin, polarize_offcenter(grid, v, 0, a))
        count += "form_minus" in rep.violations
    return count


def check_solver() -> list[Check]:
    out = []
    params = ProblemParams(0.5, 1.0, 1.5, 2)
    grid = build_grid(disc(2.0), 0.25)
    sys = assemble(grid, params.s, params.lam)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(5):
        u = rng.random(grid.n) + 0.1
        d = rng.standard_normal(grid.n)
        t = 1e-5
        fd = (functional_J(sys, params, u + t * d) - functional_J(sys, params, u - t * d)) / (2 * t)
        an = float(gradient_J(sys, params, u) @ d)
        worst = max(worst, abs(fd - an) / abs(an))
    out.append(_le("gradient_check", worst, 1e-6))
    neg = 0.0
    for _ in range(5):
        v = sys.resolvent(rng.random(grid.n))
        neg = max(neg, float(-v.min()))
    out.append(_le("resolvent_positivity", neg, 0.0))
    ms = multistart(sys, params, [0, 1, 2])
    out.append(_le("multistart_small_unique", ms.max_pairwise, 1e-6))
    again = multistart(sys, params, [0, 0])
    out.append(_le("multistart_identical_seeds_bitwise", float(np.max(np.abs(again.solutions[0] - again.solutions[1]))), 0.0))
    return out


def check_rescale() -> list[Check]:
    params = ProblemParams(0.5, 1.0, 1.5, 2)
    grid = build_grid(disc(4.0), 0.25)
    sys = assemble(grid, params.s, params.lam)
    res = solve_least_energy(sys, params, SolverConfig(tol=1e-12))
    rs = rescale_epsilon(sys, params, res.u, 4.0)
    return [
        _le("rescale_residual_ratio", rs.residual_ratio, 10.0),
        _le("rescale_energy_scaling", rs.energy_rel_error, 0.01),
    ]


SUITES = (
    ("constant", check_constant),
    ("operator", check_operator),
    ("torsion", check_torsion),
    ("ground_state", check_ground_state_1d),
    ("spectra", check_spectra),
    ("polarization", check_polarization),
    ("solver", check_solver),
    ("rescale", check_rescale),
)


def run_verify(inject_fault: str | None = None) -> list[Check]:
    if inject_fault is not None and inject_fault not in FAULTS:
        raise ValueError(f"unknown fault {inject_fault!r}; choose from {FAULTS}")
    checks = []
    for name, fn in SUITES:
        if name == "operator":
            checks += fn(inject_fault)
        else:
            checks += fn()
    return checks
