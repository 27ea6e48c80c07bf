"""Polarization about coordinate hyperplanes and related symmetry diagnostics.

For the reflection ``sigma`` across ``{x_i = 0}`` the polarization keeps the
smaller of ``v(x), v(sigma x)`` on ``x_i > 0`` and the larger on ``x_i < 0``.
The toolkit checks the rearrangement inequalities for the linearized form,
the sign-part characterisation of second eigenfunctions, boundary quotients
``v / delta^s`` and the translation pairing between a solution and an
antisymmetric function.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .domain import Grid, GridError, reflection_map
from .operator import OperatorSystem, values_of
from .spectra import LinearizedSystem, Spectrum

# relative slack for the inequality checks
INEQ_SLACK = 1e-10


@dataclass(eq=False)
class PolarizedPair:
    grid: Grid
    v: np.ndarray
    Pv: np.ndarray
    axis: int
    perm: np.ndarray  # node -> mirror node, -1 when the mirror is outside
    offset: float = 0.0  # hyperplane position x_axis = offset

    def __post_init__(self):
        if self.v.shape != self.Pv.shape:
            raise ValueError("original and polarized values differ in shape")


def _plus(v):
    return np.maximum(v, 0.0)


def _minus(v):
    return np.maximum(-v, 0.0)


def _polarize_values(v: np.ndarray, side: np.ndarray, perm: np.ndarray) -> np.ndarray:
    mirror = np.where(perm >= 0, v[np.maximum(perm, 0)], 0.0)
    return np.where(side > 0, np.minimum(v, mirror), np.where(side < 0, np.maximum(v, mirror), v))


def polarize(grid: Grid, v, axis: int = 0) -> PolarizedPair:
    """Polarization of ``v`` about ``{x_axis = 0}``; raises ``GridError`` for asymmetric grids."""
    v = np.array(values_of(grid, v), dtype=float)
    sm = reflection_map(grid, axis)
    side = np.sign(grid.index[:, axis])
    return PolarizedPair(grid, v, _polarize_values(v, side, sm.perm), axis, sm.perm)


def polarize_offcenter(grid: Grid, v, axis: int, offset: float) -> PolarizedPair:
    """Polarization about ``{x_axis = offset}`` with ``2 offset / h`` an integer.

    Only meant as a negative control.  Mirrors falling outside the domain
    carry the exterior value 0; on the low side such nodes would have to
    export a negative value to the exterior, so ``v >= 0`` is required there.
    """
    v = np.array(values_of(grid, v), dtype=float)
    m = 2.0 * offset / grid.h
    if abs(m - round(m)) > 1e-9:
        raise ValueError("2 * offset / h must be an integer")
    mirrored = grid.index.copy()
    mirrored[:, axis] = int(round(m)) - mirrored[:, axis]
    perm = grid.lookup(mirrored)
    side = np.sign(2 * grid.index[:, axis] - int(round(m)))
    lost = (perm < 0) & (side < 0)
    if np.any(v[lost] < 0):
        raise ValueError("negative values on the low side whose mirror lies outside the domain")
    return PolarizedPair(grid, v, _polarize_values(v, side, perm), axis, perm, float(offset))


def _form(lin, a, b) -> float:
    if isinstance(lin, LinearizedSystem):
        return lin.form(a, b)
    lam = lin.lam or 0.0
    Ab = lin.apply(b)
    Aa = lin.apply(a)
    return 0.5 * (float(a @ Ab) + float(b @ Aa)) + lam * lin.mass * float(a @ b)


def _check_potential(grid: Grid, pot: np.ndarray, axis: int):
    sm = reflection_map(grid, axis)
    scale = max(np.max(np.abs(pot)), 1e-300)
    if np.max(np.abs(pot - pot[sm.perm])) > 1e-12 * scale:
        raise ValueError("potential is not symmetric about the hyperplane")
    e = np.zeros(grid.N, dtype=np.int64)
    e[axis] = 1
    outer = grid.index[:, axis] > 0
    inner = grid.lookup(grid.index[outer] - e)
    if np.any(pot[outer] > pot[inner] + 1e-12 * scale):
        raise ValueError("potential is not nonincreasing in |x_axis|")


@dataclass(frozen=True)
class PolarizationReport:
    l2_plus: float  # |(Pv)^+|_2 - |v^+|_2, relative
    l2_minus: float
    seminorm_plus: float  # [v^+]^2 - [(Pv)^+]^2, relative; >= 0 expected
    seminorm_minus: float
    form_plus: float  # B(v, v^+) - B(Pv, (Pv)^+), relative; >= 0 expected
    form_minus: float  # -B(v, v^-) + B(Pv, (Pv)^-), relative; >= 0 expected
    idempotent: bool
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        d = asdict(self)
        d["violations"] = list(self.violations)
        d["ok"] = self.ok
        return d


def verify_polarization_inequalities(lin: LinearizedSystem | OperatorSystem, pair: PolarizedPair) -> PolarizationReport:
    """Evaluate the polarization inequalities for the form of ``lin``.

    With an :class:`OperatorSystem` the form is ``E + lam M`` (zero potential).
    Margins are relative to the energy norm of ``v`` and flagged below
    ``-1e-10``.  The potential must be symmetric and nonincreasing in
    ``|x_axis|`` (only checked for the centred hyperplane).
    """
    grid = pair.grid
    sys = lin.system if isinstance(lin, LinearizedSystem) else lin
    if sys.grid is not grid and sys.grid.describe() != grid.describe():
        raise ValueError("pair and operator live on different grids")
    if isinstance(lin, LinearizedSystem) and pair.offset == 0.0:
        _check_potential(grid, lin.potential, pair.axis)
    v, Pv = pair.v, pair.Pv
    m = sys.mass
    lam = sys.lam or 0.0
    scale = float(v @ sys.apply(v)) + lam * m * float(v @ v)
    scale = scale if scale > 0 else 1.0
    l2 = lambda f: math.sqrt(m * float(f @ f))  # noqa: E731
    ref = max(l2(v), 1e-300)
    semi = lambda f: float(f @ sys.apply(f))  # noqa: E731
    rep = dict(
        l2_plus=(l2(_plus(Pv)) - l2(_plus(v))) / ref,
        l2_minus=(l2(_minus(Pv)) - l2(_minus(v))) / ref,
        seminorm_plus=(semi(_plus(v)) - semi(_plus(Pv))) / scale,
        seminorm_minus=(semi(_minus(v)) - semi(_minus(Pv))) / scale,
        form_plus=(_form(lin, v, _plus(v)) - _form(lin, Pv, _plus(Pv))) / scale,
        form_minus=(-_form(lin, v, _minus(v)) + _form(lin, Pv, _minus(Pv))) / scale,
    )
    again = _polarize_values(Pv, _side(pair), pair.perm)
    idem = bool(np.array_equal(again, Pv))
    bad = [k for k in ("seminorm_plus", "seminorm_minus", "form_plus", "form_minus") if rep[k] < -INEQ_SLACK]
    bad += [k for k in ("l2_plus", "l2_minus") if abs(rep[k]) > INEQ_SLACK]
    if not idem:
        bad.append("idempotent")
    return PolarizationReport(**rep, idempotent=idem, violations=tuple(bad))


def _side(pair: PolarizedPair) -> np.ndarray:
    m = int(round(2.0 * pair.offset / pair.grid.h))
    return np.sign(2 * pair.grid.index[:, pair.axis] - m)


@dataclass(frozen=True)
class SecondEigenReport:
    defect_plus: float  # (mu2 |v^+|^2 - B(v, v^+)) / ||v^+||^2
    defect_minus: float  # (mu2 |v^-|^2 + B(v, v^-)) / ||v^-||^2
    equalities: bool
    inequalities: bool

    def as_dict(self) -> dict:
        return asdict(self)


def check_second_eigen_characterization(
    lin: LinearizedSystem, v, mu2: float, rtol: float = 1e-8
) -> SecondEigenReport:
    """Sign-part conditions ``mu2 |v^+|^2 >= B(v, v^+)`` and ``mu2 |v^-|^2 >= -B(v, v^-)``.

    Both hold with equality for an eigenfunction.  Defects are relative to
    the ``E + lam M`` norm of the respective sign part.
    """
    v = values_of(lin.grid, v)
    big = np.max(np.abs(v))
    dead = 1e-10 * big
    vp, vm = _plus(v), _minus(v)
    if big == 0 or np.max(vp) <= dead or np.max(vm) <= dead:
        raise ValueError("input is one-signed; the characterisation needs a sign-changing function")
    m = lin.mass
    sys = lin.system

    def norm2(f):
        return float(f @ sys.apply(f)) + lin.params.lam * m * float(f @ f)

    dp = (mu2 * m * float(vp @ vp) - lin.form(v, vp)) / norm2(vp)
    dm = (mu2 * m * float(vm @ vm) + lin.form(v, vm)) / norm2(vm)
    return SecondEigenReport(
        float(dp), float(dm), bool(abs(dp) <= rtol and abs(dm) <= rtol), bool(dp >= -rtol and dm >= -rtol)
    )


def eigen_residual(lin: LinearizedSystem, v, mu: float) -> float:
    """``|B v - mu M v| / ||v||^2``-scaled residual, namely ``|B v - mu M v|_2 / (|(A + lam M) v|_2)``."""
    v = values_of(lin.grid, v)
    r = lin.apply(v) - mu * lin.mass * v
    ref = lin.system.apply(v) + lin.params.lam * lin.mass * v
    return float(np.linalg.norm(r) / np.linalg.norm(ref))


@dataclass(eq=False)
class AntisymmetricPart:
    w: np.ndarray
    axis: int
    min_plus: float  # smallest value on x_axis > 0


def antisymmetrize(grid: Grid, Pv, axis: int = 0) -> AntisymmetricPart:
    """``w(x) = Pv(sigma x) - Pv(x)``; raises when ``Pv`` is not polarized."""
    Pv = values_of(grid, Pv)
    perm = reflection_map(grid, axis).perm
    w = Pv[perm] - Pv
    plus = grid.index[:, axis] > 0
    min_plus = float(np.min(w[plus])) if np.any(plus) else 0.0
    if min_plus < 0:
        raise ValueError("input is not polarized: w < 0 somewhere on x_axis > 0")
    return AntisymmetricPart(w, axis, min_plus)


def symmetry_defect(grid: Grid, v, axis: int = 0) -> tuple[float, float]:
    """``(max|v - v o sigma|, |v - v o sigma|_{L2})``."""
    v = values_of(grid, v)
    d = v - v[reflection_map(grid, axis).perm]
    return float(np.max(np.abs(d))), float(math.sqrt(grid.cell_volume * float(d @ d)))


def cluster_symmetry_defect(spec: Spectrum, i: int = 1, axis: int = 0) -> float:
    """Largest relative L2 defect ``|f - f o sigma| / |f|`` over the eigenspace cluster of ``mu_{i+1}``.

    Zero exactly when every function in the cluster is symmetric about the
    hyperplane.
    """
    idx = spec.cluster(i)
    Phi = spec.vectors[:, idx]
    perm = reflection_map(spec.lin.grid, axis).perm
    D = np.sqrt(spec.lin.mass) * (Phi - Phi[perm])
    return float(np.linalg.norm(D, 2))


# ---------------------------------------------------------------------------
# boundary behaviour


@dataclass(eq=False)
class BoundaryQuotient:
    q: np.ndarray  # estimate of v / delta^s at the boundary
    nodes: np.ndarray
    x: np.ndarray  # node coordinates
    nu1: np.ndarray  # first component of the outward normal
    delta: np.ndarray

    def at_endpoints(self) -> tuple[float, float]:
        """1D only: estimates from the outermost node at each end."""
        if self.x.shape[1] != 1:
            raise ValueError("endpoints exist only in one dimension")
        out = []
        for sgn in (-1, 1):
            sel = np.flatnonzero(np.sign(self.x[:, 0]) == sgn)
            out.append(float(self.q[sel[np.argmin(self.delta[sel])]]))
        return out[0], out[1]


def _outward_normal(grid: Grid, x: np.ndarray) -> np.ndarray:
    a = grid.domain.extents
    g = x / a**2
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    # the centre has no normal direction; report 0 there
    return np.divide(g, norm, out=np.zeros_like(g), where=norm > 0)


def _interp(grid: Grid, v: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Multilinear interpolation with zero outside the interior nodes."""
    t = y / grid.h
    base = np.floor(t + 1e-12).astype(np.int64)
    frac = t - base
    out = np.zeros(len(y))
    for corner in np.ndindex(*(2,) * grid.N):
        c = np.array(corner)
        wgt = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        node = grid.lookup(base + c)
        out += wgt * np.where(node >= 0, v[np.maximum(node, 0)], 0.0)
    return out


def boundary_quotient(grid: Grid, v, s: float) -> BoundaryQuotient:
    """Boundary limit of ``v / delta^s`` estimated at every boundary-adjacent node.

    The node value and a value one spacing deeper along the inward normal
    give two quotients, extrapolated linearly in ``delta`` to ``delta = 0``.
    """
    v = values_of(grid, v)
    nodes = grid.boundary_adjacent
    x = grid.x[nodes]
    d1 = grid.delta[nodes]
    nu = _outward_normal(grid, x)
    y = x - grid.h * nu
    d2 = grid.domain.distance_to_boundary(y)
    if np.any(~grid.domain.contains(y)) or np.any(d2 <= d1):
        raise GridError("insufficient depth: grid too coarse for the boundary quotient")
    if grid.N == 1:
        # the deeper point is itself a node
        deeper = grid.lookup(np.rint(y / grid.h).astype(np.int64))
        if np.any(deeper < 0):
            raise GridError("insufficient depth: grid too coarse for the boundary quotient")
        v2 = v[deeper]
    else:
        v2 = _interp(grid, v, y)
    q1 = v[nodes] / d1**s
    q2 = v2 / d2**s
    q = q1 - d1 * (q2 - q1) / (d2 - d1)
    return BoundaryQuotient(q, nodes, x, nu[:, 0], d1)


def central_difference(grid: Grid, v: np.ndarray, axis: int = 0) -> np.ndarray:
    """``d v / d x_axis`` by central differences, zero outside the domain."""
    e = np.zeros(grid.N, dtype=np.int64)
    e[axis] = 1
    fwd = grid.lookup(grid.index + e)
    bwd = grid.lookup(grid.index - e)
    vf = np.where(fwd >= 0, v[np.maximum(fwd, 0)], 0.0)
    vb = np.where(bwd >= 0, v[np.maximum(bwd, 0)], 0.0)
    return (vf - vb) / (2 * grid.h)


@dataclass(frozen=True)
class PohozaevPairing:
    lhs: float
    rhs: float
    gap: float

    def as_dict(self) -> dict:
        return asdict(self)


def _boundary_integral(bq_u: BoundaryQuotient, bq_w: BoundaryQuotient, grid: Grid) -> float:
    f = bq_u.q * bq_w.q * bq_u.nu1
    if grid.N == 1:
        total = 0.0
        for sgn in (-1, 1):
            sel = np.flatnonzero(np.sign(bq_u.x[:, 0]) == sgn)
            total += f[sel[np.argmin(bq_u.delta[sel])]]
        return float(total)
    if grid.domain.kind != "disc":
        raise ValueError("boundary quadrature is implemented for the interval and the disc")
    theta = np.arctan2(bq_u.x[:, 1], bq_u.x[:, 0])
    order = np.argsort(theta, kind="stable")
    th, ff = theta[order], f[order]
    th = np.append(th, th[0] + 2 * np.pi)
    ff = np.append(ff, ff[0])
    radius = float(grid.domain.extents[0])
    return float(radius * np.sum(0.5 * (ff[1:] + ff[:-1]) * np.diff(th)))


def _one_sided_difference(grid: Grid, q: np.ndarray, axis: int) -> np.ndarray:
    """Central differences of ``q``, one-sided where a neighbour is missing."""
    e = np.zeros(grid.N, dtype=np.int64)
    e[axis] = 1
    fwd = grid.lookup(grid.index + e)
    bwd = grid.lookup(grid.index - e)
    qf = q[np.maximum(fwd, 0)]
    qb = q[np.maximum(bwd, 0)]
    h = grid.h
    return np.where(fwd < 0, (q - qb) / h, np.where(bwd < 0, (qf - q) / h, (qf - qb) / (2 * h)))


def derivative_pairing(grid: Grid, u, F, s: float, axis: int = 0, band: float = 4.0) -> float:
    """``int d_axis u * F`` for ``u`` vanishing like ``delta^s`` at the boundary.

    Central differences and lumped quadrature in the bulk.  Within ``band``
    spacings of the boundary ``u = q delta^s`` is differentiated in factored
    form and the singular factor ``delta^(s-1)`` is integrated exactly over
    each node's normal cell, the outermost cells reaching the boundary.
    """
    u = values_of(grid, u)
    F = values_of(grid, F)
    h = grid.h
    m = grid.cell_volume
    d = grid.delta
    near = d <= band * h * (1 + 1e-12)
    du = central_difference(grid, u, axis)
    bulk = m * float(du[~near] @ F[~near])
    q = u / d**s
    dq = _one_sided_difference(grid, q, axis)
    ddelta = -_outward_normal(grid, grid.x)[:, axis]
    hi = d + h / 2
    lo = np.where(d <= h * (1 + 1e-12), 0.0, d - h / 2)
    w_sing = h ** (grid.N - 1) * (hi**s - lo**s) / s
    w_reg = h ** (grid.N - 1) * (hi - lo)
    edge = d**s * dq * F * w_reg + s * q * ddelta * F * w_sing
    return bulk + float(np.sum(edge[near]))


def pohozaev_pairing(
    grid: Grid, u, w, mu2: float, s: float, sys: OperatorSystem | None = None, images=None
) -> PohozaevPairing:
    """Both sides of the translation identity between ``u`` and ``w``.

    ``lhs = Gamma(1+s)^2 int_boundary (u/delta^s)(w/delta^s) nu_1``.  By
    default the right side is ``-mu2 int d_1 u w``, valid when ``u`` solves the
    equation and ``w`` is an eigenfunction for ``mu2``.  Given ``images``
    ``((-Delta)^s u, (-Delta)^s w)`` at the nodes, or ``sys`` to compute them,
    it is the general ``-int (d_1 u (-Delta)^s w + d_1 w (-Delta)^s u)``.
    """
    u = values_of(grid, u)
    w = values_of(grid, w)
    lhs = math.gamma(1 + s) ** 2 * _boundary_integral(boundary_quotient(grid, u, s), boundary_quotient(grid, w, s), grid)
    if images is None and sys is not None:
        images = (sys.apply(u) / sys.mass, sys.apply(w) / sys.mass)
    if images is None:
        rhs = -mu2 * derivative_pairing(grid, u, w, s)
    else:
        Lu, Lw = images
        rhs = -(derivative_pairing(grid, u, Lw, s) + derivative_pairing(grid, w, Lu, s))
    scale = max(abs(lhs), abs(rhs))
    gap = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return PohozaevPairing(float(lhs), float(rhs), float(gap))
