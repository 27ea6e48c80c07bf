"""Linearization ``B = A + lam M - p M diag(u^{p-1})`` at a solution and its spectrum.

Eigenpairs solve ``B phi = mu M phi``; with ``M = h^N I`` this is the standard
symmetric problem for ``B / h^N``.  At reflection-invariant ``u`` the problem
splits over the parity sectors and each block goes to LAPACK; otherwise the
full matrix is used (small grids only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .domain import Grid
from .operator import DENSE_LIMIT, OperatorSystem, values_of
from .solver import ProblemParams

# below this (relative) a reflection defect counts as exact symmetry
_INVARIANT_RTOL = 1e-12
# relative spread inside an eigenvalue cluster
CLUSTER_RTOL = 1e-8


@dataclass(eq=False)
class LinearizedSystem:
    system: OperatorSystem
    u: np.ndarray
    params: ProblemParams
    potential: np.ndarray  # p u^{p-1}

    @property
    def grid(self) -> Grid:
        return self.system.grid

    @property
    def mass(self) -> float:
        return self.system.mass

    @property
    def shift(self) -> np.ndarray:
        """Diagonal part ``lam - p u^{p-1}`` (per unit mass)."""
        return self.params.lam - self.potential

    def apply(self, v) -> np.ndarray:
        v = values_of(self.grid, v)
        shift = self.shift if v.ndim == 1 else self.shift[:, None]
        return self.system.apply(v) + self.mass * shift * v

    def form(self, v, w) -> float:
        """``B(v, w)``, symmetric in its arguments."""
        return 0.5 * (float(v @ self.apply(w)) + float(w @ self.apply(v)))

    def dense(self, force: bool = False) -> np.ndarray:
        B = self.system.dense(force)
        B[np.diag_indices(len(B))] += self.mass * self.shift
        return B

    @property
    def invariant(self) -> bool:
        g = self.system.group
        return g.invariance_defect(self.potential) <= _INVARIANT_RTOL

    def sector_block(self, eps) -> np.ndarray:
        g = self.system.group
        B = self.system.blocks[eps].copy()
        reps = g.reps[g.sector_reps(eps)]
        B[np.diag_indices(len(B))] += self.mass * self.shift[reps]
        return B


def assemble_linearized(sys: OperatorSystem, u, params: ProblemParams) -> LinearizedSystem:
    u = np.array(values_of(sys.grid, u), dtype=float)
    if np.any(u < 0):
        raise ValueError("linearization point must be nonnegative")
    if params.lam is None or (sys.lam is not None and sys.lam != params.lam):
        raise ValueError("lambda of the problem and the operator system differ")
    return LinearizedSystem(sys, u, params, params.p * u ** (params.p - 1))


@dataclass
class Spectrum:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # (n, k), M-orthonormal columns
    sectors: list  # parity sector of each pair (None for the unsplit solve)
    lin: LinearizedSystem = field(repr=False)

    @property
    def k(self) -> int:
        return len(self.values)

    def phi(self, i: int) -> np.ndarray:
        """``phi_{i+1}`` (zero-based)."""
        return self.vectors[:, i]

    def residuals(self) -> np.ndarray:
        """``|B phi - mu M phi| / |B phi|`` per pair."""
        BV = self.lin.apply(self.vectors)
        R = BV - self.lin.mass * self.vectors * self.values
        return np.linalg.norm(R, axis=0) / np.linalg.norm(BV, axis=0)

    def orthonormality_defect(self) -> float:
        G = self.lin.mass * self.vectors.T @ self.vectors
        return float(np.max(np.abs(G - np.eye(self.k))))

    def cluster(self, i: int, rtol: float = CLUSTER_RTOL) -> np.ndarray:
        """Indices of eigenvalues within ``rtol`` (relative to ``max(|mu_i|, |mu_1|)``) of ``mu_i``."""
        scale = max(abs(self.values[i]), abs(self.values[0]))
        return np.flatnonzero(np.abs(self.values - self.values[i]) <= rtol * scale)


def _fix_sign(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Make the first significant entry along the positive x1 ray positive."""
    tiny = 1e-6 * np.max(np.abs(phi))
    ray = np.concatenate([[grid.origin], grid.axis_ray(0)])
    for nodes in (ray, np.arange(len(phi))):
        hit = nodes[np.abs(phi[nodes]) > tiny]
        if len(hit):
            return phi if phi[hit[0]] > 0 else -phi
    return phi


def eigen_solve(lin: LinearizedSystem, k: int, sectors=None) -> Spectrum:
    """The ``k`` smallest eigenpairs of ``B phi = mu M phi``.

    ``sectors`` restricts the search to given parity sectors (invariant ``u`` only).
    """
    n = lin.system.n
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n={n}, got k={k}")
    grid = lin.grid
    if lin.invariant:
        g = lin.system.group
        pairs = []
        for si, eps in enumerate(g.sectors):
            if sectors is not None and eps not in sectors:
                continue
            if eps not in lin.system.blocks:
                continue
            Bs = lin.sector_block(eps) / lin.mass
            m = min(k, len(Bs))
            w, V = sla.eigh(Bs, subset_by_index=[0, m - 1], driver="evr")
            for j in range(m):
                pairs.append((w[j], si, eps, V[:, j]))
        pairs.sort(key=lambda t: (t[0], t[1]))
        pairs = pairs[:k]
        if len(pairs) < k:
            raise ValueError(f"only {len(pairs)} eigenpairs available in the requested sectors")
        vals = np.array([t[0] for t in pairs])
        vecs = np.empty((n, len(pairs)))
        for j, (_, _, eps, c) in enumerate(pairs):
            vecs[:, j] = g.extend({eps: c})
        secs = [t[2] for t in pairs]
    else:
        if sectors is not None:
            raise ValueError("sector restriction needs a reflection-invariant linearization point")
        if n > DENSE_LIMIT:
            raise MemoryError(f"n={n} too large for an unsplit eigen-solve")
        vals, vecs = sla.eigh(lin.dense() / lin.mass, subset_by_index=[0, k - 1], driver="evr")
        secs = [None] * k
    vecs = vecs / np.sqrt(lin.mass * np.sum(vecs**2, axis=0))
    for j in range(vecs.shape[1]):
        vecs[:, j] = _fix_sign(grid, vecs[:, j])
    return Spectrum(vals, vecs, secs, lin)


@dataclass(frozen=True)
class MorseReport:
    morse_index: int
    mu1: float
    mu2: float
    degenerate: bool
    tol_zero: float
    gap: float
    mu2_multiplicity: int

    def as_dict(self) -> dict:
        return {
            "morse_index": self.morse_index,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "degenerate": self.degenerate,
            "tol_zero": self.tol_zero,
            "gap": self.gap,
            "mu2_multiplicity": self.mu2_multiplicity,
        }


def morse_and_degeneracy(spec: Spectrum, tol_zero: float | None = None) -> MorseReport:
    """Morse index and nondegeneracy verdict.

    ``tol_zero`` defaults to ``1e-6 |mu_1|``.  The Morse index is only exact
    when some computed eigenvalue is nonnegative.
    """
    if spec.k < 3:
        raise ValueError("need at least three eigenpairs")
    mu = spec.values
    if tol_zero is None:
        tol_zero = 1e-6 * abs(mu[0])
    morse = int(np.sum(mu < -tol_zero))
    if morse == spec.k:
        raise ValueError("all computed eigenvalues are negative; increase k")
    degenerate = bool(np.any(np.abs(mu) <= tol_zero))
    return MorseReport(
        morse, float(mu[0]), float(mu[1]), degenerate, float(tol_zero), float(mu[1] - mu[0]), len(spec.cluster(1))
    )


def negative_subspace_dimension(spec: Spectrum) -> int:
    """Largest span of computed eigenvectors on which ``B`` is negative definite.

    Evaluated from the Gram matrix of the quadratic form on all computed
    eigenvectors, independent of the eigenvalue list.
    """
    V = spec.vectors
    G = V.T @ spec.lin.apply(V)
    G = 0.5 * (G + G.T)
    w = np.linalg.eigvalsh(G)
    return int(np.sum(w < -1e-9 * np.max(np.abs(w))))


def check_mu1_identity(u, spec: Spectrum) -> float:
    """Relative defect of ``mu_1 <u, phi_1>_M = (1 - p) <u^p, phi_1>_M``."""
    p = spec.lin.params.p
    if p == 1:
        raise ValueError("the identity degenerates for p = 1")
    u = values_of(spec.lin.grid, u)
    phi = spec.phi(0)
    m = spec.lin.mass
    lhs = spec.values[0] * m * float(u @ phi)
    rhs = (1 - p) * m * float(u**p @ phi)
    return abs(lhs - rhs) / abs(rhs)


def count_sign_changes(profile) -> int:
    """Strict sign alternations, skipping entries below ``1e-10 max|profile|``."""
    v = np.asarray(profile, dtype=float)
    big = np.max(np.abs(v)) if v.size else 0.0
    if big == 0:
        raise ValueError("profile is identically zero")
    signs = np.sign(v[np.abs(v) > 1e-10 * big])
    return int(np.sum(signs[1:] != signs[:-1]))


def is_one_signed(v, rtol: float = 1e-10) -> bool:
    v = np.asarray(v)
    big = np.max(np.abs(v))
    return bool(np.all(v >= -rtol * big) or np.all(v <= rtol * big))


def radial_profile(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Values along the x1 ray from the origin, after averaging over lattice isometries."""
    from .solver import isometry_average

    avg = isometry_average(grid, v)
    return avg[np.concatenate([[grid.origin], grid.axis_ray(0)])]


def radial_second_eigenpair(lin: LinearizedSystem, k: int = 6) -> tuple[float, np.ndarray]:
    """Second eigenpair among functions invariant under all lattice isometries.

    These are the even-sector eigenvectors (and, on the disc, those that are
    also symmetric under ``x1 <-> x2``).
    """
    even = (0,) * lin.grid.N
    spec = eigen_solve(lin, min(k, lin.system.n), sectors=[even])
    grid = lin.grid
    found = []
    swap = grid.lookup(grid.index[:, ::-1]) if grid.N == 2 and grid.domain.kind == "disc" else None
    for j in range(spec.k):
        phi = spec.phi(j)
        if swap is not None and np.max(np.abs(phi[swap] - phi)) > 1e-8 * np.max(np.abs(phi)):
            continue
        found.append(j)
        if len(found) == 2:
            return float(spec.values[j]), phi
    raise ValueError("fewer than two isometry-invariant eigenpairs among the computed ones")
