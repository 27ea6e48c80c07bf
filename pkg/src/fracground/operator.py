"""Integral fractional Laplacian with exterior zero condition on a lattice grid.

Collocation scheme: for the node ``x_j`` the principal value integral is
split into the cell ``|z|_inf < h`` around the node, where ``u`` is replaced
by its quadratic Taylor polynomial (a central second difference), and the
rest of the lattice, where ``u`` is its piecewise (multi)linear interpolant.
This gives translation invariant couplings ``W(k - j) >= 0``.  The part of
the integral over the exterior ``R^N \\ Omega``, where ``u = 0``, is the
exact tail ``u_j T_j`` with ``T_j = c_{N,s} int_{ext} |x_j - y|^{-N-2s} dy``.

So ``(A u)_j = h^N [ sum_k W(k - j) (u_j - u_k) + T_j u_j ]``, a symmetric
M-matrix.  ``A`` commutes with the coordinate reflections, and everything
large is done blockwise in the parity sectors of :class:`ReflectionGroup`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad
from scipy.special import gamma

from .domain import Grid, ReflectionGroup

# Above this node count the full n x n matrix is never formed implicitly.
DENSE_LIMIT = 6000
_CHUNK = 512


def normalization_constant(N: int, s: float) -> float:
    """``c_{N,s} = 4^s pi^{-N/2} Gamma(N/2 + s) / Gamma(2 - s) * s (1 - s)``."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"order s must lie in (0, 1), got {s}")
    if N < 1:
        raise ValueError(f"dimension must be >= 1, got {N}")
    return 4.0**s * math.pi ** (-N / 2) * gamma(N / 2 + s) / gamma(2.0 - s) * s * (1.0 - s)


@dataclass(frozen=True)
class KernelParams:
    s: float
    N: int

    def __post_init__(self):
        normalization_constant(self.N, self.s)

    @property
    def c(self) -> float:
        return normalization_constant(self.N, self.s)


# ---------------------------------------------------------------------------
# lattice weights (dimensionless, h = 1, without c_{N,s})


def _power_moments(a: float, b: float, s: float) -> tuple[float, float]:
    """``int_a^b t^{-1-2s} dt`` and ``int_a^b t^{-2s} dt`` for 0 < a < b."""
    i0 = (a ** (-2 * s) - b ** (-2 * s)) / (2 * s)
    if abs(s - 0.5) < 1e-14:
        i1 = math.log(b / a)
    else:
        i1 = (b ** (1 - 2 * s) - a ** (1 - 2 * s)) / (1 - 2 * s)
    return i0, i1


def _linear_piece(a: float, b: float, alpha: float, beta: float, s: float) -> float:
    i0, i1 = _power_moments(a, b, s)
    return alpha * i0 + beta * i1


@lru_cache(maxsize=32)
def weights_1d(s: float, M: int) -> np.ndarray:
    """``w[m]`` for lattice offsets ``m = 0..M`` (``w[0] = 0``)."""
    w = np.zeros(M + 1)
    if M >= 1:
        # singular cell (1/(2-2s)) plus the hat of the neighbour on [1, 2]
        w[1] = 1.0 / (2.0 - 2.0 * s) + _linear_piece(1.0, 2.0, 2.0, -1.0, s)
    for m in range(2, M + 1):
        w[m] = _linear_piece(m - 1.0, m, 1.0 - m, 1.0, s) + _linear_piece(m, m + 1.0, 1.0 + m, -1.0, s)
    w.flags.writeable = False
    return w


def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2


def singular_cell_2d(s: float) -> float:
    """Weight per nearest neighbour from the quadratic treatment of ``[-1,1]^2``.

    Equals ``1/2 int_{[-1,1]^2} t_1^2 |t|^{-2-2s} dt``.
    """
    val, _ = quad(lambda th: math.cos(th) ** (2 * s - 2), 0.0, math.pi / 4, epsabs=0, epsrel=1e-13)
    return 2.0 * val / (2.0 - 2.0 * s)


@lru_cache(maxsize=16)
def weights_2d(s: float, M1: int, M2: int) -> np.ndarray:
    """``w[m1, m2]`` for offsets ``0 <= m_i <= M_i`` (``w[0, 0] = 0``).

    Integrals of the bilinear hat against ``|t|^{-2-2s}``, cell by cell with
    tensor Gauss-Legendre rules; cells inside ``[-1, 1]^2`` are replaced by
    the singular-cell term.
    """
    m1, m2 = np.meshgrid(np.arange(M1 + 1), np.arange(M2 + 1), indexing="ij")
    m1 = m1.ravel().astype(float)
    m2 = m2.ravel().astype(float)
    out = np.zeros(m1.size)
    near = np.maximum(m1, m2) <= 6
    for mask, npts in ((near, 20), (~near, 8)):
        if not mask.any():
            continue
        g, gw = _gauss01(npts)
        W2 = np.outer(gw, gw).ravel()
        G1 = np.repeat(g, npts)
        G2 = np.tile(g, npts)
        a1, a2 = m1[mask][:, None], m2[mask][:, None]
        acc = np.zeros(int(mask.sum()))
        for c1 in (-1.0, 0.0):
            for c2 in (-1.0, 0.0):
                t1 = a1 + c1 + G1[None, :]
                t2 = a2 + c2 + G2[None, :]
                hat = (1.0 - np.abs(t1 - a1)) * (1.0 - np.abs(t2 - a2))
                vals = hat * (t1 * t1 + t2 * t2) ** (-1.0 - s)
                inside = (np.abs(a1 + c1 + 0.5) < 1) & (np.abs(a2 + c2 + 0.5) < 1)
                acc += np.where(inside[:, 0], 0.0, vals @ W2)
        out[mask] = acc
    w = out.reshape(M1 + 1, M2 + 1)
    w[0, 0] = 0.0
    sing = singular_cell_2d(s)
    if M1 >= 1:
        w[1, 0] += sing
    if M2 >= 1:
        w[0, 1] += sing
    w.flags.writeable = False
    return w


def lattice_weights(N: int, s: float, extents: tuple[int, ...]) -> np.ndarray:
    if N == 1:
        return weights_1d(s, int(extents[0]))
    return weights_2d(s, int(extents[0]), int(extents[1]))


# ---------------------------------------------------------------------------
# exterior tail


def exterior_tail(grid: Grid, s: float, nodes: np.ndarray | None = None, rtol: float = 1e-10) -> np.ndarray:
    """``T_j = c_{N,s} int_{R^N \\ Omega} |x_j - y|^{-N-2s} dy`` at the given nodes.

    Closed form for the interval.  In 2D, the radial integral is done exactly
    (``int_rho^inf r^{-1-2s} dr = rho^{-2s} / 2s``) and the periodic angular
    integral by trapezoid refinement until the relative change is below ``rtol``.
    """
    c = normalization_constant(grid.N, s)
    x = grid.x if nodes is None else grid.x[nodes]
    dom = grid.domain
    if grid.N == 1:
        a = dom.extents[0]
        return c / (2 * s) * ((a - x[:, 0]) ** (-2 * s) + (a + x[:, 0]) ** (-2 * s))
    out = np.empty(len(x))
    delta = dom.distance_to_boundary(x)
    # resolve the angular peak near the boundary before testing convergence
    need = np.maximum(64, 2 ** np.ceil(np.log2(8 * dom.extents.max() / delta))).astype(int)
    order = np.argsort(need, kind="stable")
    for start in range(0, len(x), 256):
        sel = order[start : start + 256]
        m = int(need[sel].max())
        prev = _angular(dom, x[sel], s, m)
        while True:
            m *= 2
            cur = _angular(dom, x[sel], s, m)
            if np.all(np.abs(cur - prev) <= rtol * np.abs(cur)) or m > 2**22:
                break
            prev = cur
        out[sel] = cur
    return c / (2 * s) * out


def _angular(dom, x, s, m):
    theta = 2 * np.pi * np.arange(m) / m
    rho = dom.ray_exit(x, theta)
    return rho ** (-2 * s) @ np.full(m, 2 * np.pi / m)


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GridFunction:
    """Nodal values on the interior of a grid; zero on the exterior."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} nodal values, got shape {self.values.shape}")


class GridMismatchError(ValueError):
    pass


def values_of(grid: Grid, u) -> np.ndarray:
    """Nodal array for ``u`` (GridFunction or array), checked against ``grid``."""
    if isinstance(u, GridFunction):
        if u.grid is not grid and u.grid.describe() != grid.describe():
            raise GridMismatchError("function lives on a different grid")
        return u.values
    u = np.asarray(u, dtype=float)
    if u.shape[0] != grid.n:
        raise GridMismatchError(f"expected {grid.n} nodal values, got {u.shape[0]}")
    return u


@dataclass(eq=False)
class OperatorSystem:
    """Stiffness ``A``, lumped mass ``M = h^N I`` and tail vector on one grid."""

    grid: Grid
    kernel: KernelParams
    lam: float | None
    tail: np.ndarray
    weights: np.ndarray  # scaled by c h^{-2s}; index = |lattice offset|
    group: ReflectionGroup
    blocks: dict = field(repr=False)  # sector -> dense block of A
    _chol: dict = field(default_factory=dict, repr=False)
    complete: bool = True  # all parity sectors stored

    @property
    def s(self) -> float:
        return self.kernel.s

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def mass(self) -> float:
        return self.grid.cell_volume

    def _coupling(self, I: np.ndarray, J: np.ndarray) -> np.ndarray:
        d = np.abs(I[:, None, :] - J[None, :, :])
        return self.weights[tuple(np.moveaxis(d, -1, 0))]

    @cached_property
    def diagonal(self) -> np.ndarray:
        """``A_jj / h^N = sum_k W(k - j) + T_j``."""
        idx = self.grid.index
        rows = self.group.reps
        sums = np.empty(len(rows))
        for start in range(0, len(rows), 512):
            r = rows[start : start + 512]
            sums[start : start + len(r)] = self._coupling(idx[r], idx).sum(axis=1)
        full = np.empty(self.n)
        for k in range(self.group.order):
            full[self.group.images[:, k]] = sums
        return full + self.tail

    def dense(self, force: bool = False) -> np.ndarray:
        """The full matrix ``A`` (symmetric by construction)."""
        if not self.complete:
            raise ValueError("dense matrix needs all parity sectors")
        if self.n > DENSE_LIMIT and not force:
            raise MemoryError(f"n={self.n} exceeds DENSE_LIMIT={DENSE_LIMIT}; use sector blocks")
        idx = self.grid.index
        A = -self._coupling(idx, idx)
        A[np.diag_indices(self.n)] = self.diagonal
        return self.mass * A

    def _guard(self, u: np.ndarray):
        if self.complete:
            return
        g = self.group
        for eps in g.sectors:
            if eps not in self.blocks and len(g.sector_reps(eps)):
                c = g.restrict(u, eps)
                if np.max(np.abs(c), initial=0.0) > 1e-12 * max(np.max(np.abs(u)), 1e-300):
                    raise ValueError(f"vector has a component in sector {eps}, which was not assembled")

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = values_of(self.grid, u)
        self._guard(u)
        g = self.group
        return g.extend({eps: B @ g.restrict(u, eps) for eps, B in self.blocks.items()})

    def resolvent(self, f: np.ndarray) -> np.ndarray:
        """Solve ``(A + lam M) v = f`` with Cholesky factors cached per sector."""
        lam = self._require_lam()
        self._guard(f)
        g = self.group
        out = {}
        for eps, B in self.blocks.items():
            if eps not in self._chol:
                shifted = B.copy()
                shifted[np.diag_indices(len(B))] += lam * self.mass
                self._chol[eps] = sla.cho_factor(shifted, lower=True, overwrite_a=True)
            out[eps] = sla.cho_solve(self._chol[eps], g.restrict(f, eps))
        return g.extend(out)

    def _require_lam(self) -> float:
        if self.lam is None or not self.lam > 0:
            raise ValueError(f"this operation needs lambda > 0, got {self.lam}")
        return float(self.lam)


def _sector_blocks(grid: Grid, group: ReflectionGroup, weights: np.ndarray, diagonal: np.ndarray, sectors) -> dict:
    idx = grid.index
    h_vol = grid.cell_volume
    blocks = {}
    for si, eps in enumerate(group.sectors):
        if eps not in sectors:
            continue
        pos = group.sector_reps(eps)
        if len(pos) == 0:
            continue
        I = idx[group.reps[pos]]
        size = np.sqrt(group.orbit_size[pos].astype(float))
        B = np.zeros((len(pos), len(pos)))
        # row chunks keep the integer offset arrays small on large grids
        for a in range(0, len(pos), _CHUNK):
            rows = slice(a, a + _CHUNK)
            acc = B[rows]
            for k, g in enumerate(group.elements):
                d = [np.abs(I[rows, None, ax] - g[ax] * I[None, :, ax]) for ax in range(grid.N)]
                acc += group.chi[si, k] * weights[tuple(d)]
            acc *= -np.outer(size[rows], size) / group.order
        # zero offsets (stabiliser of r) carry weight 0, so only D(r) sits on the diagonal
        B[np.diag_indices(len(pos))] += diagonal[group.reps[pos]]
        B *= h_vol
        blocks[eps] = B
    return blocks


def assemble(
    grid: Grid, params: KernelParams | float, lam: float | None = None, sectors=None
) -> OperatorSystem:
    """Assemble the operator system on ``grid`` for order ``s`` (and optional ``lambda``).

    ``sectors`` limits the stored blocks to some parity sectors (for example
    only the even one); such a system acts only on vectors inside them.
    """
    if not isinstance(params, KernelParams):
        params = KernelParams(float(params), grid.N)
    if params.N != grid.N:
        raise ValueError("kernel dimension does not match the grid")
    s = params.s
    ext = tuple(int(2 * k) for k in grid._offset)
    w = params.c * grid.h ** (-2 * s) * lattice_weights(grid.N, s, ext)
    group = ReflectionGroup(grid)
    tail = np.empty(grid.n)
    rep_tail = exterior_tail(grid, s, group.reps)
    for k in range(group.order):
        tail[group.images[:, k]] = rep_tail
    system = OperatorSystem(grid, params, lam, tail, w, group, {})
    wanted = group.sectors if sectors is None else [tuple(e) for e in sectors]
    unknown = set(wanted) - set(group.sectors)
    if unknown:
        raise ValueError(f"unknown parity sectors {sorted(unknown)}")
    system.blocks = _sector_blocks(grid, group, w, system.diagonal, wanted)
    system.complete = len(wanted) == len(group.sectors)
    return system


def energy_form(sys: OperatorSystem, u, v) -> float:
    """``E(u, v) = u^T A v``, evaluated symmetrically so that ``E(u,v) == E(v,u)`` bitwise."""
    u = values_of(sys.grid, u)
    v = values_of(sys.grid, v)
    return 0.5 * (float(u @ sys.apply(v)) + float(v @ sys.apply(u)))


def lq_norm(sys: OperatorSystem, u, q: float) -> float:
    """Mass-lumped ``|u|_q = (h^N sum |u_j|^q)^{1/q}``."""
    u = values_of(sys.grid, u)
    return float((sys.mass * np.sum(np.abs(u) ** q)) ** (1.0 / q))


@dataclass(frozen=True)
class Norms:
    energy: float  # ||u|| with ||u||^2 = lam |u|_2^2 + E(u, u)
    l2: float
    lq: float
    q: float


def norms(sys: OperatorSystem, u, q: float = 2.0) -> Norms:
    lam = sys._require_lam()
    l2 = lq_norm(sys, u, 2.0)
    e = energy_form(sys, u, u)
    return Norms(math.sqrt(lam * l2**2 + e), l2, lq_norm(sys, u, q), q)
