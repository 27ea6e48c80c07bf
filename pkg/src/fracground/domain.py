"""Symmetric model domains and the origin-centred lattices laid over them.

Every grid is a subset of the lattice ``h * Z^N`` so that the coordinate
reflections ``x_i -> -x_i`` act on interior nodes as exact permutations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
from scipy.optimize import brentq

KINDS = ("interval", "disc", "ellipse")

# Nodes closer than this (relative) to the boundary count as boundary nodes.
_ON_BOUNDARY_RTOL = 1e-10


class GridError(ValueError):
    """Raised for grids that are too coarse or not reflection symmetric."""


@dataclass(frozen=True)
class Domain:
    """An axis-aligned symmetric domain ``R * D``.

    ``semiaxes`` belong to the unscaled shape ``D`` (all ones for the
    interval ``(-1, 1)`` and the unit disc); ``extents`` are the actual
    half-widths after scaling.
    """

    kind: str
    N: int
    R: float = 1.0
    semiaxes: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        expected_N = 1 if self.kind == "interval" else 2
        if self.N != expected_N:
            raise ValueError(f"{self.kind} domains have N={expected_N}, got N={self.N}")
        if not self.semiaxes:
            object.__setattr__(self, "semiaxes", (1.0,) * self.N)
        axes = tuple(float(a) for a in self.semiaxes)
        object.__setattr__(self, "semiaxes", axes)
        object.__setattr__(self, "R", float(self.R))
        if len(axes) != self.N:
            raise ValueError("need one semiaxis per dimension")
        if self.kind == "disc" and axes[0] != axes[1]:
            raise ValueError("a disc has equal semiaxes; use kind='ellipse'")
        if not self.R > 0:
            raise ValueError(f"scale R must be positive, got {self.R}")
        if min(axes) <= 0:
            raise ValueError("semiaxes must be positive")

    @property
    def extents(self) -> np.ndarray:
        return self.R * np.asarray(self.semiaxes)

    def level(self, x: np.ndarray) -> np.ndarray:
        """``sum (x_i / a_i)^2``; < 1 inside, 1 on the boundary."""
        x = np.atleast_2d(x)
        return np.sum((x / self.extents) ** 2, axis=1)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Strict interior test with a small relative guard band."""
        return self.level(x) < 1.0 - _ON_BOUNDARY_RTOL

    def distance_to_boundary(self, x: np.ndarray) -> np.ndarray:
        """Euclidean distance ``delta(x)`` to the boundary, for interior points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = self.extents
        if self.kind == "interval":
            return a[0] - np.abs(x[:, 0])
        if self.kind == "disc":
            return a[0] - np.hypot(x[:, 0], x[:, 1])
        return np.array([_ellipse_distance(a, p) for p in x])

    def boundary_point(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Boundary points and outward unit normals, parametrised by angle (N=2)."""
        a = self.extents
        theta = np.asarray(theta, dtype=float)
        pts = np.stack([a[0] * np.cos(theta), a[1] * np.sin(theta)], axis=1)
        nrm = pts / a**2
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        return pts, nrm

    def ray_exit(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Distance from interior points ``x`` (n, 2) to the boundary along angles ``theta``.

        Returns an array of shape ``(n, len(theta))``.
        """
        a = self.extents
        d1 = np.cos(theta)[None, :]
        d2 = np.sin(theta)[None, :]
        x1 = x[:, 0:1]
        x2 = x[:, 1:2]
        qa = (d1 / a[0]) ** 2 + (d2 / a[1]) ** 2
        qb = 2.0 * (x1 * d1 / a[0] ** 2 + x2 * d2 / a[1] ** 2)
        qc = (x1 / a[0]) ** 2 + (x2 / a[1]) ** 2 - 1.0
        disc = np.sqrt(qb * qb - 4.0 * qa * qc)
        # stable form of the positive root, valid because qc < 0
        return -2.0 * qc / (qb + disc)

    def describe(self) -> dict:
        return {"N": self.N, "kind": self.kind, "R": self.R, "semiaxes": list(self.semiaxes)}


def _ellipse_distance(a: np.ndarray, p: np.ndarray) -> float:
    # Closest boundary point q = a^2 p / (t + a^2) with t in (-min a^2, 0] for interior p.
    a2 = a**2
    p = np.abs(p)
    if np.all(p == 0):
        return float(a.min())

    def f(t):
        return np.sum((a * p / (t + a2)) ** 2) - 1.0

    lo = -a2.min() + 1e-14 * a2.min()
    if f(lo) < 0:
        # p on the minor axis; the closest point sits at the end of that axis
        i = int(np.argmin(a))
        return float(a[i] - p[i])
    t = brentq(f, lo, 0.0, xtol=1e-15, rtol=1e-14)
    q = a2 * p / (t + a2)
    return float(np.linalg.norm(q - p))


def scale_domain(domain: Domain, R: float) -> Domain:
    """Return ``R * domain``: extents multiplied by ``R``, kind and N kept."""
    if not R > 0:
        raise ValueError(f"scale factor must be positive, got {R}")
    return Domain(domain.kind, domain.N, domain.R * R, domain.semiaxes)


def interval(R: float = 1.0) -> Domain:
    return Domain("interval", 1, R)


def disc(R: float = 1.0) -> Domain:
    return Domain("disc", 2, R)


def ellipse(a1: float, a2: float, R: float = 1.0) -> Domain:
    return Domain("ellipse", 2, R, (a1, a2))


@dataclass(frozen=True)
class SymmetryMap:
    axis: int
    perm: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``(v o sigma)`` as a node vector."""
        return v[self.perm]


@dataclass(frozen=True, eq=False)
class Grid:
    """Interior nodes of ``domain`` on the lattice ``h * Z^N``.

    Nodes are stored in lexicographic order of their integer lattice index.
    """

    domain: Domain
    h: float
    index: np.ndarray  # (n, N) integer lattice coordinates
    _box: np.ndarray = field(repr=False)  # lattice box -> node number, -1 outside
    _offset: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.domain.N

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def cell_volume(self) -> float:
        return self.h**self.N

    @cached_property
    def x(self) -> np.ndarray:
        return self.index * self.h

    @cached_property
    def delta(self) -> np.ndarray:
        return self.domain.distance_to_boundary(self.x)

    @cached_property
    def boundary_adjacent(self) -> np.ndarray:
        """Interior nodes within ``2h`` of the boundary."""
        return np.flatnonzero(self.delta <= 2.0 * self.h * (1 + 1e-12))

    @property
    def interior(self) -> np.ndarray:
        return np.arange(self.n)

    def lookup(self, idx: np.ndarray) -> np.ndarray:
        """Node numbers for integer lattice coordinates; -1 where not a node."""
        idx = np.atleast_2d(idx)
        shifted = idx + self._offset
        ok = np.all((shifted >= 0) & (shifted < np.array(self._box.shape)), axis=1)
        out = np.full(len(idx), -1, dtype=np.int64)
        out[ok] = self._box[tuple(shifted[ok].T)]
        return out

    @cached_property
    def origin(self) -> int:
        return int(self.lookup(np.zeros((1, self.N), dtype=np.int64))[0])

    def axis_ray(self, axis: int = 0) -> np.ndarray:
        """Nodes on the positive ``x_axis`` half-line, ordered outward from the origin."""
        others = np.delete(self.index, axis, axis=1)
        on = np.all(others == 0, axis=1) & (self.index[:, axis] > 0)
        nodes = np.flatnonzero(on)
        return nodes[np.argsort(self.index[nodes, axis])]

    def describe(self) -> dict:
        d = self.domain.describe()
        d.update(h=self.h, n_interior=self.n)
        return d


def build_grid(domain: Domain, h: float) -> Grid:
    """Lattice nodes strictly inside ``domain``.

    Raises ``GridError`` when some coordinate axis carries fewer than three
    interior nodes.
    """
    if not h > 0:
        raise ValueError(f"spacing must be positive, got {h}")
    K = np.floor(domain.extents / h + 1e-9).astype(np.int64)
    ranges = [np.arange(-k, k + 1) for k in K]
    mesh = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, domain.N)
    inside = domain.contains(mesh * h)
    index = mesh[inside]
    for axis in range(domain.N):
        others = np.delete(index, axis, axis=1)
        count = int(np.sum(np.all(others == 0, axis=1)))
        if count < 3:
            raise GridError(
                f"degenerate grid: {count} interior node(s) on axis {axis} "
                f"(h={h}, extents={domain.extents.tolist()})"
            )
    box = np.full(tuple(2 * K + 1), -1, dtype=np.int64)
    box[tuple((index + K).T)] = np.arange(len(index))
    return Grid(domain, float(h), index, box, K)


def reflection_map(grid: Grid, axis: int) -> SymmetryMap:
    """Permutation of interior nodes realising ``x_axis -> -x_axis``."""
    if not 0 <= axis < grid.N:
        raise IndexError(f"axis {axis} out of range for N={grid.N}")
    mirrored = grid.index.copy()
    mirrored[:, axis] *= -1
    perm = grid.lookup(mirrored)
    if np.any(perm < 0):
        raise GridError(f"grid is not symmetric about axis {axis}")
    return SymmetryMap(axis, perm)


class ReflectionGroup:
    """The group ``Z_2^N`` of coordinate sign flips acting on a grid.

    Used to split node vectors into the ``2^N`` parity sectors in which the
    fractional operator is block diagonal. A sector is a tuple of 0/1 flags
    (1 = odd in that coordinate).  Basis vector of rep ``r`` in sector ``eps``
    is ``|O_r|^{-1/2} sum_{y in O_r} chi_eps(y) e_y`` with ``O_r`` the orbit.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        N = grid.N
        self.elements = [np.array(g) for g in product((1, -1), repeat=N)]
        self.sectors = [tuple(e) for e in product((0, 1), repeat=N)]
        reps = np.flatnonzero(np.all(grid.index >= 0, axis=1))
        self.reps = reps
        rep_idx = grid.index[reps]
        images = np.empty((len(reps), len(self.elements)), dtype=np.int64)
        for k, g in enumerate(self.elements):
            images[:, k] = grid.lookup(rep_idx * g)
        if np.any(images < 0):
            raise GridError("grid is not invariant under coordinate reflections")
        self.images = images
        self.orbit_size = 2 ** np.sum(rep_idx != 0, axis=1)
        self._rep_idx = rep_idx
        # character table: chi[sector, element]
        self.chi = np.array(
            [[np.prod(np.where(np.array(eps) == 1, g, 1)) for g in self.elements] for eps in self.sectors],
            dtype=float,
        )

    @property
    def order(self) -> int:
        return len(self.elements)

    def sector_reps(self, eps: tuple[int, ...]) -> np.ndarray:
        """Positions (into ``self.reps``) of reps that carry sector ``eps``."""
        odd = np.array(eps, dtype=bool)
        keep = np.all(self._rep_idx[:, odd] != 0, axis=1)
        return np.flatnonzero(keep)

    def restrict(self, v: np.ndarray, eps: tuple[int, ...]) -> np.ndarray:
        """Coefficients of ``v`` (n,) or (n, k) in the orthonormal basis of ``eps``."""
        pos = self.sector_reps(eps)
        chi = self.chi[self.sectors.index(eps)]
        vals = v[self.images[pos]]  # (m, |G|) or (m, |G|, k)
        scale = np.sqrt(self.orbit_size[pos]) / self.order
        if vals.ndim == 2:
            return scale * (vals @ chi)
        return scale[:, None] * np.einsum("mgk,g->mk", vals, chi)

    def extend(self, coeffs: dict) -> np.ndarray:
        """Inverse of :meth:`restrict` summed over the given sectors."""
        first = next(iter(coeffs.values()))
        shape = (self.grid.n,) + first.shape[1:]
        out = np.zeros(shape)
        for eps, c in coeffs.items():
            pos = self.sector_reps(eps)
            chi = self.chi[self.sectors.index(eps)]
            inv = 1.0 / np.sqrt(self.orbit_size[pos])
            if c.ndim > 1:
                inv = inv[:, None]
            part = np.zeros(shape)
            for k in range(self.order):
                # repeated images (points on a mirror) receive equal values
                part[self.images[pos, k]] = chi[k] * inv * c
            out += part
        return out

    def average(self, v: np.ndarray) -> np.ndarray:
        """Projection onto group-invariant vectors."""
        out = np.zeros_like(v, dtype=float)
        for g in self.elements:
            out += v[self.grid.lookup(self.grid.index * g)]
        return out / self.order

    def invariance_defect(self, v: np.ndarray) -> float:
        scale = np.max(np.abs(v)) or 1.0
        return float(np.max(np.abs(v - self.average(v))) / scale)
