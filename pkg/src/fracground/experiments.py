"""Growing-domain sweeps, multistart uniqueness probes and the epsilon rescaling."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import Domain, Grid, build_grid, disc, ellipse, interval
from .operator import OperatorSystem, assemble, energy_form, values_of
from .solver import (
    GroundStateRef,
    ProblemParams,
    SolveResult,
    SolverConfig,
    energy_level,
    energy_norm2,
    functional_J,
    random_init,
    residual_norm,
    solve_ground_state_RN,
    solve_least_energy,
)
from .spectra import (
    assemble_linearized,
    check_mu1_identity,
    count_sign_changes,
    eigen_solve,
    is_one_signed,
    morse_and_degeneracy,
    radial_profile,
    radial_second_eigenpair,
)
from .symmetry import (
    antisymmetrize,
    boundary_quotient,
    check_second_eigen_characterization,
    cluster_symmetry_defect,
    eigen_residual,
    pohozaev_pairing,
    polarize,
    symmetry_defect,
    verify_polarization_inequalities,
)

log = logging.getLogger(__name__)

UNIQUENESS_TOL = 1e-6
MULTISTART_SOLVER = SolverConfig(tol=1e-14, max_iter=3000, newton_max=200)


def max_workers() -> int:
    """Parallel task cap from ``FRACGROUND_THREADS`` (default 1)."""
    raw = os.environ.get("FRACGROUND_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"FRACGROUND_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"FRACGROUND_THREADS must be a positive integer, got {raw!r}")
    return n


def make_domain(kind: str, R: float, semiaxes=(1.0, 0.5)) -> Domain:
    if kind == "interval":
        return interval(R)
    if kind == "disc":
        return disc(R)
    if kind == "ellipse":
        return ellipse(*semiaxes, R=R)
    raise ValueError(f"unknown domain kind {kind!r}")


@dataclass(frozen=True)
class SweepConfig:
    s: float
    lam: float
    p: float
    N: int
    kind: str
    R: tuple
    h0: float = 0.25
    h_rule: str = "fixed"  # "fixed": h = h0; "nodes": h = R / n_fixed
    n_fixed: int = 16
    seeds: tuple = tuple(range(10))
    multistart: str = "last"  # "last", "all" or "none"
    tol: float = 1e-12
    max_iter: int = 3000
    tol_zero: float | None = None  # default 1e-6 |mu_1|
    k: int = 4
    L_ref: float | None = None  # truncation radius of Q; default max(20, 1.25 max R)

    def __post_init__(self):
        R = tuple(float(r) for r in self.R)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "seeds", tuple(int(x) for x in self.seeds))
        if not R:
            raise ValueError("empty R list")
        if any(r < 1 for r in R):
            raise ValueError("every R must be at least 1")
        if any(b <= a for a, b in zip(R, R[1:])):
            raise ValueError("R list must be strictly increasing")
        if self.h_rule not in ("fixed", "nodes"):
            raise ValueError(f"unknown resolution rule {self.h_rule!r}")
        if self.multistart not in ("last", "all", "none"):
            raise ValueError(f"unknown multistart mode {self.multistart!r}")
        if self.multistart != "none" and len(self.seeds) < 2:
            raise ValueError("multistart needs at least two seeds")
        if self.k < 3:
            raise ValueError("need k >= 3 eigenpairs")
        self.params  # validates s, lam, p, N

    @property
    def params(self) -> ProblemParams:
        return ProblemParams(self.s, self.lam, self.p, self.N)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(tol=self.tol, max_iter=self.max_iter)

    def h_for(self, R: float) -> float:
        return self.h0 if self.h_rule == "fixed" else R / self.n_fixed

    @property
    def truncation(self) -> float:
        return self.L_ref if self.L_ref is not None else max(20.0, 1.25 * max(self.R))


SWEEP_COLUMNS = ("R", "c_R", "mu1", "mu2", "sym_defect_phi2", "dist_to_Q", "multistart_spread", "degenerate")


@dataclass
class SweepRecord:
    R: float
    h: float
    n: int
    converged: bool
    c_R: float = math.nan
    norm2: float = math.nan
    mu1: float = math.nan
    mu2: float = math.nan
    sym_defect_phi2: float = math.nan
    dist_to_Q: float = math.nan
    multistart_spread: float = math.nan
    degenerate: bool = False
    residual: float = math.nan
    iterations: int = 0
    checks: dict = field(default_factory=dict)
    error: str = ""

    def row(self) -> dict:
        return {k: getattr(self, k) for k in SWEEP_COLUMNS}


@dataclass
class SweepReport:
    config: SweepConfig
    records: list
    c_ref: float
    R0: float | None
    tags: list

    def as_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "c_ref": self.c_ref,
            "empirical_R0": self.R0,
            "tags": self.tags,
            "records": [asdict(r) for r in self.records],
        }


@dataclass
class MultistartReport:
    seeds: list
    energies: list
    residuals: list
    converged: list
    max_pairwise: float
    energy_spread: float
    unique: bool
    flagged: bool
    distances: np.ndarray = field(repr=False)
    solutions: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "energies": self.energies,
            "residuals": self.residuals,
            "converged": self.converged,
            "max_pairwise": self.max_pairwise,
            "energy_spread": self.energy_spread,
            "unique": self.unique,
            "flagged": self.flagged,
            "tolerance": UNIQUENESS_TOL,
        }


def multistart(
    sys: OperatorSystem, params: ProblemParams, seeds, config: SolverConfig | None = None
) -> MultistartReport:
    """Solve from independent random nonnegative starts and compare the results."""
    seeds = [int(x) for x in seeds]
    if len(seeds) < 2:
        raise ValueError("multistart needs at least two seeds")
    config = config or MULTISTART_SOLVER
    sys.resolvent(np.ones(sys.n))  # factor once before tasks share the system

    def run(seed):
        return solve_least_energy(sys, params, config, init=random_init(sys.grid, seed))

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        results = list(pool.map(run, seeds))
    U = [r.u for r in results]
    k = len(U)
    D = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            D[i, j] = D[j, i] = float(np.max(np.abs(U[i] - U[j])))
    energies = [float(r.energy) for r in results]
    conv = [bool(r.converged) for r in results]
    spread = float(D.max())
    return MultistartReport(
        seeds,
        energies,
        [float(r.residual) for r in results],
        conv,
        spread,
        float(max(energies) - min(energies)),
        bool(all(conv) and spread <= UNIQUENESS_TOL),
        not all(conv),
        D,
        U,
    )


def _profile_1d(grid: Grid, v: np.ndarray) -> np.ndarray:
    return v[np.argsort(grid.x[:, 0], kind="stable")]


def analyse_solution(
    sys: OperatorSystem, params: ProblemParams, result: SolveResult, k: int = 4, tol_zero: float | None = None
) -> dict:
    """Spectral and symmetry diagnostics of a converged solve."""
    grid = sys.grid
    u = result.u
    lin = assemble_linearized(sys, u, params)
    spec = eigen_solve(lin, k)
    morse = morse_and_degeneracy(spec, tol_zero)
    phi1, phi2 = spec.phi(0), spec.phi(1)
    out = {"morse": morse.as_dict()}
    out["mu1_negative"] = bool(spec.values[0] < 0)
    out["mu1_identity_defect"] = check_mu1_identity(u, spec)
    out["phi1_one_signed"] = is_one_signed(phi1)
    big = np.max(np.abs(phi2))
    out["phi2_sign_changing"] = bool(np.max(phi2) > 1e-10 * big and np.min(phi2) < -1e-10 * big)
    if grid.N == 1:
        out["phi2_sign_changes"] = count_sign_changes(_profile_1d(grid, phi2))
    else:
        _, radial = radial_second_eigenpair(lin)
        out["radial_phi2_sign_changes"] = count_sign_changes(radial_profile(grid, radial))
    out["eigen_residuals"] = [float(r) for r in spec.residuals()]
    out["sym_defect_phi2"] = cluster_symmetry_defect(spec, 1, 0)
    linf, l2 = symmetry_defect(grid, phi2, 0)
    out["sym_defect_phi2_linf_rel"] = linf / big
    out["second_eigen_phi2"] = check_second_eigen_characterization(lin, phi2, spec.values[1]).as_dict()
    pair = polarize(grid, phi2, 0)
    try:
        out["polarization_phi2"] = verify_polarization_inequalities(lin, pair).as_dict()
    except ValueError as exc:  # lattice effects can break monotonicity of the potential near the boundary
        out["polarization_phi2"] = {"error": str(exc)}
    try:
        out["second_eigen_Pphi2"] = check_second_eigen_characterization(lin, pair.Pv, spec.values[1]).as_dict()
    except ValueError as exc:
        out["second_eigen_Pphi2"] = {"error": str(exc)}
    out["eigen_residual_Pphi2"] = eigen_residual(lin, pair.Pv, spec.values[1])
    w = antisymmetrize(grid, pair.Pv, 0)
    out["antisymmetric_min_plus"] = w.min_plus
    out["pohozaev"] = pohozaev_pairing(grid, u, w.w, float(spec.values[1]), sys.s).as_dict()
    bq = boundary_quotient(grid, u, sys.s)
    out["hopf_min_quotient"] = float(np.min(bq.q))
    out["spectrum"] = [float(x) for x in spec.values]
    out["sectors"] = [list(e) if e is not None else None for e in spec.sectors]
    return out


def sweep(cfg: SweepConfig, reference: dict | None = None) -> SweepReport:
    """Solve and analyse on ``R D`` for every ``R`` in the config.

    ``reference`` maps spacing ``h`` to a precomputed :class:`GroundStateRef`.
    """
    params = cfg.params
    refs = dict(reference or {})
    records = []
    tags = ["theorem-faithful"] if cfg.N >= 2 else ["operator-validation (N = 1)"]
    for i, R in enumerate(cfg.R):
        h = cfg.h_for(R)
        rec = SweepRecord(R=R, h=h, n=0, converged=False)
        try:
            grid = build_grid(make_domain(cfg.kind, R), h)
            rec.n = grid.n
            sys = assemble(grid, params.s, params.lam)
            res = solve_least_energy(sys, params, cfg.solver)
            rec.converged = res.converged
            rec.residual = res.residual
            rec.iterations = res.iterations
            if not res.converged:
                rec.error = res.message
                records.append(rec)
                continue
            rec.c_R = energy_level(sys, params, res)
            rec.norm2 = energy_norm2(sys, params, res.u)
            chk = analyse_solution(sys, params, res, cfg.k, cfg.tol_zero)
            rec.mu1 = chk["morse"]["mu1"]
            rec.mu2 = chk["morse"]["mu2"]
            rec.degenerate = chk["morse"]["degenerate"]
            rec.sym_defect_phi2 = chk["sym_defect_phi2"]
            if h not in refs:
                refs[h] = solve_ground_state_RN(params, cfg.truncation, h)
            ref = refs[h]
            rec.dist_to_Q = float(np.max(np.abs(res.u - ref.restrict_to(grid))))
            chk["c_ref"] = ref.energy
            chk["nehari_identity_defect"] = abs(rec.norm2 * params.nehari_factor - rec.c_R) / rec.c_R
            run_ms = cfg.multistart == "all" or (cfg.multistart == "last" and i == len(cfg.R) - 1)
            if run_ms:
                ms = multistart(sys, params, cfg.seeds)
                rec.multistart_spread = ms.max_pairwise
                chk["multistart"] = ms.as_dict()
            rec.checks = chk
        except Exception as exc:  # per-R failures are recorded, the sweep goes on
            log.warning("R=%g failed: %s", R, exc)
            rec.error = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    c_ref = next(iter(refs.values())).energy if refs else math.nan
    return SweepReport(cfg, records, c_ref, empirical_R0(records), tags)


def empirical_R0(records) -> float | None:
    """Smallest R from which every later record is converged with ``mu2 > tol_zero``."""
    R0 = None
    for rec in reversed(records):
        tz = rec.checks.get("morse", {}).get("tol_zero")
        if not (rec.converged and tz is not None and rec.mu2 > tz):
            break
        R0 = rec.R
    return R0


# ---------------------------------------------------------------------------
# epsilon rescaling


@dataclass
class RescaleResult:
    v: np.ndarray
    grid: Grid
    eps: float
    residual_original: float
    residual_rescaled: float
    energy_original: float
    energy_rescaled: float
    energy_predicted: float
    exact_transfer: bool

    @property
    def residual_ratio(self) -> float:
        return self.residual_rescaled / self.residual_original

    @property
    def energy_rel_error(self) -> float:
        return abs(self.energy_rescaled - self.energy_predicted) / abs(self.energy_predicted)

    def as_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("v", "grid")}
        d.update(residual_ratio=self.residual_ratio, energy_rel_error=self.energy_rel_error, h=self.grid.h)
        return d


def _interp_scaled(src: Grid, u: np.ndarray, y: np.ndarray) -> np.ndarray:
    t = y / src.h
    base = np.floor(t + 1e-12).astype(np.int64)
    frac = t - base
    out = np.zeros(len(y))
    for corner in np.ndindex(*(2,) * src.N):
        c = np.array(corner)
        wgt = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        node = src.lookup(base + c)
        out += wgt * np.where(node >= 0, u[np.maximum(node, 0)], 0.0)
    return out


def eps_residual(sys: OperatorSystem, params: ProblemParams, eps: float, v: np.ndarray) -> float:
    """Relative residual of ``eps^{2s} (-Delta)^s v + lam v = v^p``."""
    m = sys.mass
    r = eps ** (2 * sys.s) * sys.apply(v) + m * (params.lam * v - np.abs(v) ** params.p)
    return float(np.linalg.norm(r) / (m * np.linalg.norm(v)))


def eps_functional(sys: OperatorSystem, params: ProblemParams, eps: float, v: np.ndarray) -> float:
    m = sys.mass
    return (
        0.5 * eps ** (2 * sys.s) * energy_form(sys, v, v)
        + 0.5 * params.lam * m * float(v @ v)
        - m * float(np.sum(np.abs(v) ** (params.p + 1))) / (params.p + 1)
    )


def rescale_epsilon(
    sys_R: OperatorSystem, params: ProblemParams, u_R, R: float, h_D: float | None = None
) -> RescaleResult:
    """``v(x) = u_R(R x)`` on the unscaled domain, a solution of the equation with ``eps = 1/R``.

    The default spacing ``h_R / R`` carries the lattice over exactly; a
    coarser spacing uses multilinear interpolation, a finer one is refused.
    """
    grid_R = sys_R.grid
    u_R = values_of(grid_R, u_R)
    if not R >= 1:
        raise ValueError(f"R must be at least 1, got {R}")
    if abs(grid_R.domain.R - R) > 1e-12 * R:
        raise ValueError("u_R does not live on R D")
    base = Domain(grid_R.domain.kind, grid_R.N, grid_R.domain.R / R, grid_R.domain.semiaxes)
    native = grid_R.h / R
    h_D = native if h_D is None else float(h_D)
    if h_D < native * (1 - 1e-12):
        raise ValueError(f"target spacing {h_D} is finer than the data supports ({native})")
    grid_D = build_grid(base, h_D)
    exact = abs(h_D - native) <= 1e-12 * native
    if exact:
        src = grid_R.lookup(grid_D.index)
        if np.any(src < 0):
            raise ValueError("lattice transfer failed")
        v = u_R[src].copy()
    else:
        v = _interp_scaled(grid_R, u_R, grid_D.x * R)
    sys_D = assemble(grid_D, sys_R.s)
    eps = 1.0 / R
    J_R = functional_J(sys_R, params, u_R)
    return RescaleResult(
        v,
        grid_D,
        eps,
        residual_norm(sys_R, params, u_R),
        eps_residual(sys_D, params, eps, v),
        J_R,
        eps_functional(sys_D, params, eps, v),
        R ** (-grid_R.N) * J_R,
        exact,
    )
