"""Least-energy solutions of ``(-Delta)^s u + lam u = u^p`` with exterior zero data.

The main iteration is the Nehari-projected inverse fixed point
``u <- t(v) v`` with ``v = (A + lam M)^{-1} M u^p``.  Each iterate lies on the
Nehari manifold and ``J`` never increases along it (Hoelder gives
``||v|| <= ||u||`` up to the projection).  Near a solution whose linearization
has a small positive eigenvalue (a nearly free translation on a large domain)
the fixed point crawls, so the final approach optionally switches to Newton
steps solved by preconditioned MINRES, accepted only when ``J`` does not rise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from .domain import Grid, build_grid, disc, interval
from .operator import OperatorSystem, assemble, values_of

log = logging.getLogger(__name__)


class NotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProblemParams:
    s: float
    lam: float
    p: float
    N: int

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"order s must lie in (0, 1), got {self.s}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.p > 1:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        if self.N not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.N}")
        crit = self.critical_exponent
        if crit is not None and not self.p < crit:
            raise ValueError(f"p={self.p} is not subcritical (2*_s - 1 = {crit:.6g})")

    @property
    def critical_exponent(self) -> float | None:
        """``2N/(N - 2s) - 1``, or None when every ``p > 1`` is subcritical."""
        if 2 * self.s >= self.N:
            return None
        return (self.N + 2 * self.s) / (self.N - 2 * self.s)

    @property
    def nehari_factor(self) -> float:
        """``1/2 - 1/(p+1)``: on the Nehari manifold ``J = factor * ||u||^2``."""
        return 0.5 - 1.0 / (self.p + 1.0)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-9
    max_iter: int = 2000
    newton: bool = True
    # switch to Newton when the residual shrank by less than this over `stall_window` steps
    stall_ratio: float = 0.5
    stall_window: int = 25
    newton_max: int = 40
    minres_tol: float = 1e-12
    shift_relax: int = 20
    # below this residual Newton steps are taken without relaxation
    polish_below: float = 1e-8


@dataclass
class SolveResult:
    u: np.ndarray
    energy: float
    residual: float
    iterations: int
    converged: bool
    grid: Grid | None = None
    history: list = field(default_factory=list, repr=False)
    residual_history: list = field(default_factory=list, repr=False)
    newton_steps: int = 0
    message: str = ""

    def sidecar(self) -> dict:
        return {
            "J": self.energy,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _check(sys: OperatorSystem, params: ProblemParams):
    if params.N != sys.N or abs(params.s - sys.s) > 0:
        raise ValueError("problem parameters do not match the operator system")
    if sys.lam is not None and sys.lam != params.lam:
        raise ValueError(f"operator assembled with lambda={sys.lam}, problem has {params.lam}")


def energy_norm2(sys: OperatorSystem, params: ProblemParams, u) -> float:
    """``||u||^2 = E(u, u) + lam |u|_2^2``."""
    u = values_of(sys.grid, u)
    return float(u @ sys.apply(u)) + params.lam * sys.mass * float(u @ u)


def power_integral(sys: OperatorSystem, params: ProblemParams, u) -> float:
    """``|u|_{p+1}^{p+1}`` (lumped)."""
    u = values_of(sys.grid, u)
    return sys.mass * float(np.sum(np.abs(u) ** (params.p + 1)))


def functional_J(sys: OperatorSystem, params: ProblemParams, u) -> float:
    """``J(u) = 1/2 E(u,u) + lam/2 |u|_2^2 - |u|_{p+1}^{p+1} / (p+1)``."""
    _check(sys, params)
    return 0.5 * energy_norm2(sys, params, u) - power_integral(sys, params, u) / (params.p + 1)


def gradient_J(sys: OperatorSystem, params: ProblemParams, u) -> np.ndarray:
    """Euclidean gradient of :func:`functional_J` in the nodal values."""
    u = values_of(sys.grid, u)
    return sys.apply(u) + params.lam * sys.mass * u - sys.mass * np.abs(u) ** params.p * np.sign(u)


def nehari_scale(sys: OperatorSystem, params: ProblemParams, w) -> float:
    """The ``t > 0`` with ``t w`` on the Nehari manifold."""
    w = values_of(sys.grid, w)
    if not np.any(w):
        raise ValueError("cannot project the zero function onto the Nehari manifold")
    return _scale(energy_norm2(sys, params, w), power_integral(sys, params, w), params.p)


def _scale(norm2: float, power: float, p: float) -> float:
    return (norm2 / power) ** (1.0 / (p - 1.0))


def residual_norm(sys: OperatorSystem, params: ProblemParams, u) -> float:
    """``|M^{-1}(A u + lam M u - M u^p)|_2 / |u|_2`` with lumped L2 norms."""
    u = values_of(sys.grid, u)
    r = gradient_J(sys, params, u)
    return _relres(r, u, sys.mass)


def _relres(r, u, mass):
    return float(np.linalg.norm(r) / (mass * np.linalg.norm(u)))


def default_init(grid: Grid) -> np.ndarray:
    """``max(0, 1 - |x|^2 / rho^2)`` with ``rho`` half the smallest semiaxis."""
    rho = grid.domain.extents.min() / 2.0
    return np.maximum(0.0, 1.0 - np.sum(grid.x**2, axis=1) / rho**2)


def random_init(grid: Grid, seed: int) -> np.ndarray:
    """Squared samples of a seeded standard normal field (nonnegative)."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(grid.n) ** 2


def solve_least_energy(
    sys: OperatorSystem,
    params: ProblemParams,
    config: SolverConfig | None = None,
    init=None,
) -> SolveResult:
    """Positive least-energy solution from a nonnegative initial guess."""
    _check(sys, params)
    if sys.lam is None:
        raise ValueError("assemble the operator system with lambda to solve")
    config = config or SolverConfig()
    u = default_init(sys.grid) if init is None else values_of(sys.grid, init).astype(float)
    if np.any(u < 0):
        raise ValueError("initial guess must be nonnegative")
    if not np.any(u):
        raise ValueError("initial guess must be nonzero")
    p, h_vol, factor = params.p, sys.mass, params.nehari_factor

    g = sys.apply(u) + params.lam * h_vol * u  # (A + lam M) u
    t = _scale(float(u @ g), h_vol * float(np.sum(u ** (p + 1))), p)
    u, g = t * u, t * g
    energy = factor * float(u @ g)
    res = _relres(g - h_vol * u**p, u, h_vol)
    history, res_hist = [energy], [res]
    it = 0
    newton_steps = 0
    mode = "fixed-point"
    retry_at = 0
    while res > config.tol and it < config.max_iter:
        stalled = (
            config.newton
            and len(res_hist) > config.stall_window
            and res_hist[-1] > config.stall_ratio * res_hist[-1 - config.stall_window]
        )
        if (mode == "newton" or stalled) and it >= retry_at and newton_steps < config.newton_max:
            step = _newton_step(sys, params, u, g, energy, config)
            if step is not None:
                u, g, energy, res, relaxed = step
                newton_steps += 1
                mode = "newton"
                it += 1 + relaxed
                history.append(energy)
                res_hist.append(res)
                continue
            log.debug("newton step rejected at iteration %d", it)
            mode = "fixed-point"
            retry_at = it + config.stall_window
        u, g, energy, res = _fixed_point_step(sys, params, u)
        history.append(energy)
        res_hist.append(res)
        it += 1
    converged = res <= config.tol
    msg = f"{mode}: residual {res:.3e} after {it} iterations"
    if not converged:
        msg = "not converged; " + msg
    return SolveResult(u, energy, res, it, converged, sys.grid, history, res_hist, newton_steps, msg)


def _fixed_point_step(sys, params, u):
    """``u <- t v`` with ``v = (A + lam M)^{-1} M u^p``; returns ``(u, (A + lam M) u, J, residual)``."""
    h_vol, p = sys.mass, params.p
    f = h_vol * u**p
    v = sys.resolvent(f)
    if np.any(v < 0):
        # resolvent positivity is expected (M-matrix); clip round-off only
        v = np.maximum(v, 0.0)
    norm2 = float(v @ f)
    t = _scale(norm2, h_vol * float(np.sum(v ** (p + 1))), p)
    u, g = t * v, t * f
    energy = params.nehari_factor * t * t * norm2
    return u, g, energy, _relres(g - h_vol * u**p, u, h_vol)


def linearized_apply(sys: OperatorSystem, params: ProblemParams, u: np.ndarray):
    pot = sys.mass * (params.lam - params.p * u ** (params.p - 1))
    return lambda v: sys.apply(v) + pot * v


def lattice_shift(grid: Grid, u: np.ndarray, k) -> np.ndarray:
    """``w(x) = u(x + k h)`` for an integer lattice vector ``k``; zero where undefined."""
    src = grid.lookup(grid.index + np.asarray(k, dtype=np.int64))
    return np.where(src >= 0, u[np.maximum(src, 0)], 0.0)


def _axis_differences(grid: Grid, u: np.ndarray) -> np.ndarray:
    cols = []
    for ax in range(grid.N):
        e = np.zeros(grid.N, dtype=np.int64)
        e[ax] = 1
        cols.append(0.5 * (lattice_shift(grid, u, e) - lattice_shift(grid, u, -e)))
    return np.stack(cols, axis=1)


def _project(sys, params, w):
    h_vol, p = sys.mass, params.p
    gw = sys.apply(w) + params.lam * h_vol * w
    t = _scale(float(w @ gw), h_vol * float(np.sum(w ** (p + 1))), p)
    w, gw = t * w, t * gw
    e = params.nehari_factor * float(w @ gw)
    return w, gw, e, _relres(gw - h_vol * w**p, w, h_vol)


def _newton_step(sys, params, u, g, energy, config):
    """One globalized Newton step for ``F(u) = (A + lam M) u - M u^p``.

    Trial points are followed by ``shift_relax`` fixed-point steps, which
    damp the stiff modes that a large linear update disturbs, and accepted
    only when ``J`` drops.  When the Newton step is dominated by a rigid
    translation of at least one lattice spacing (the nearly flat direction
    on large domains), ``u`` is shifted along the lattice instead, which a
    linear update cannot represent.  Returns None when no trial helps.
    """
    h_vol = sys.mass
    F = g - h_vol * u ** params.p
    res0 = _relres(F, u, h_vol)
    B = LinearOperator((sys.n, sys.n), matvec=linearized_apply(sys, params, u), dtype=float)
    P = LinearOperator((sys.n, sys.n), matvec=sys.resolvent, dtype=float)
    # a loose solve misses the near-null translation component, so no inexact Newton
    count = [0]
    delta, info = minres(B, -F, M=P, rtol=config.minres_tol, maxiter=1000, callback=lambda _: count.__setitem__(0, count[0] + 1))
    log.debug("minres info=%d after %d iterations", info, count[0])
    if info < 0:
        return None
    slack = 64 * np.finfo(float).eps * abs(energy)
    # near convergence try the bare step first; relaxation is the fallback
    levels = (config.shift_relax,) if res0 > config.polish_below else (0, config.shift_relax)

    def attempt(w, relax):
        if not np.any(w):
            return None
        trial = _project(sys, params, w)
        for _ in range(relax):
            trial = _fixed_point_step(sys, params, trial[0])
        e, r = trial[2], trial[3]
        # energy is the merit function; inside round-off the residual decides
        if e < energy - slack or (e <= energy + slack and r < res0):
            return trial + (relax,)
        return None

    a, *_ = np.linalg.lstsq(_axis_differences(sys.grid, u), delta, rcond=None)
    for relax in levels:
        k = np.rint(a).astype(np.int64)
        while np.any(k):
            trial = attempt(lattice_shift(sys.grid, u, k), relax)
            if trial is not None:
                log.debug("lattice shift %s: J %.6e -> %.6e", k.tolist(), energy, trial[2])
                return trial
            k = np.trunc(k / 2).astype(np.int64)
        for damp in (1.0, 0.5, 0.25, 0.125):
            trial = attempt(np.maximum(u + damp * delta, 0.0), relax)
            if trial is not None:
                log.debug("newton damp %.3g relax %d: res %.3e -> %.3e", damp, relax, res0, trial[3])
                return trial
    return None


def energy_level(sys: OperatorSystem, params: ProblemParams, result: SolveResult) -> float:
    """``c_Omega = J(u)`` for a converged least-energy solution.

    Raises when the two expressions ``J(u)`` and ``(1/2 - 1/(p+1)) ||u||^2``
    disagree beyond ``1e-10`` relative.
    """
    if not result.converged:
        raise NotConvergedError("energy level requested for a non-converged solve")
    j = functional_J(sys, params, result.u)
    nehari = params.nehari_factor * energy_norm2(sys, params, result.u)
    if abs(j - nehari) > 1e-10 * abs(nehari):
        raise NotConvergedError(f"Nehari identity fails: J={j!r}, factor*||u||^2={nehari!r}")
    return nehari


# ---------------------------------------------------------------------------
# truncated ground state on R^N


@dataclass
class GroundStateRef:
    Q: np.ndarray
    energy: float
    L: float
    grid: Grid
    system: OperatorSystem = field(repr=False)
    result: SolveResult = field(repr=False)
    symmetry_defect: float = 0.0

    def restrict_to(self, grid: Grid) -> np.ndarray:
        """Values of Q on the nodes of another grid with the same spacing."""
        if abs(grid.h - self.grid.h) > 1e-12 * grid.h:
            raise ValueError("grids must share the spacing h")
        idx = self.grid.lookup(grid.index)
        if np.any(idx < 0):
            raise ValueError("grid extends beyond the truncation radius of Q")
        return self.Q[idx]


def isometry_average(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Average over the lattice isometries of a disc or interval grid.

    Coordinate reflections always; the axis swap too when the domain is a disc.
    """
    from .domain import ReflectionGroup

    out = ReflectionGroup(grid).average(v)
    if grid.N == 2 and grid.domain.kind == "disc":
        out = 0.5 * (out + out[grid.lookup(grid.index[:, ::-1])])
    return out


def solve_ground_state_RN(
    params: ProblemParams,
    L: float,
    h: float,
    config: SolverConfig | None = None,
) -> GroundStateRef:
    """Ground state ``Q`` approximated on the interval/disc of radius ``L``.

    Only the even parity sector is assembled: the centred initial guess and
    the fixed-point map keep every iterate even, so Newton steps are off.
    """
    if L < 20:
        raise ValueError(f"truncation radius must be at least 20, got {L}")
    dom = interval(L) if params.N == 1 else disc(L)
    grid = build_grid(dom, h)
    sys = assemble(grid, params.s, params.lam, sectors=[(0,) * params.N])
    config = replace(config or SolverConfig(max_iter=5000), newton=False)
    res = solve_least_energy(sys, params, config)
    if not res.converged:
        raise NotConvergedError(res.message)
    Q = isometry_average(grid, res.u)
    defect = float(np.max(np.abs(Q - res.u)) / np.max(np.abs(Q)))
    c = params.nehari_factor * energy_norm2(sys, params, Q)
    return GroundStateRef(Q, c, float(L), grid, sys, res, defect)


def is_radially_nonincreasing(grid: Grid, v: np.ndarray, rtol: float = 1e-12) -> bool:
    """True when ``v`` does not increase along the positive x1 ray from the origin."""
    ray = np.concatenate([[grid.origin], grid.axis_ray(0)])
    vals = v[ray]
    return bool(np.all(np.diff(vals) <= rtol * np.max(np.abs(vals))))


def closed_form_ground_state_1d(x: np.ndarray) -> np.ndarray:
    """``2 / (1 + x^2)`` solves the problem on the line for s=1/2, p=2, lam=1."""
    return 2.0 / (1.0 + np.asarray(x) ** 2)


CLOSED_FORM_ENERGY_1D = math.pi / 2
