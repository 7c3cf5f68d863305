"""P1 finite elements on polar-graded meshes of star-shaped domains.

The mesh is built from concentric rings ``x = s r(theta) e^{i theta}``.  Ring
spacing grows geometrically away from the origin (``sigma(s) ~ ratio * s``)
between a uniform core and a uniform outer zone, so a bubble of width
``delta`` at the origin is resolved by a fixed number of rings per decade.
Every ring carries a multiple of ``angular_multiple`` nodes starting at
angle 0, which keeps the node set invariant under the rotations we care
about.  Adjacent rings are stitched by the usual merge ("zipper") rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .geometry import DomainModel, as_complex

__all__ = [
    "Resolution",
    "Discretization",
    "Field",
    "LinearSolveReport",
    "MeshError",
    "build",
    "poisson_solve",
    "h1_inner",
    "lp_norm",
    "weighted_mass",
]

# Degree-5 seven-point rule on the reference triangle (barycentric coordinates).
_S15 = math.sqrt(15.0)
_A1, _A2 = (6 - _S15) / 21, (6 + _S15) / 21
_W1, _W2 = (155 - _S15) / 1200, (155 + _S15) / 1200
QUAD_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
QUAD_W = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])

MIN_ANGLE_DEG = 12.0


class MeshError(RuntimeError):
    pass


@dataclass(frozen=True)
class Resolution:
    """Mesh size controls.

    Parameters
    ----------
    h : float
        Outer mesh size; node spacing far from the origin is ``h/2``.
    grade_radius : float or None
        Feature size at the origin (the bubble scale ``delta``).  ``None``
        gives a quasi-uniform mesh.
    grade_ratio : float
        Spacing-to-radius ratio in the graded zone.
    core_factor : float
        The uniform core has radius ``core_factor * grade_radius``.
    angular_multiple : int
        Every ring has a multiple of this many nodes.
    """

    h: float = 0.05
    grade_radius: float | None = None
    grade_ratio: float = 0.05
    core_factor: float = 0.25
    angular_multiple: int = 12

    def spacing(self, s: float) -> float:
        top = 0.5 * self.h
        if self.grade_radius is None:
            return top
        low = self.grade_ratio * self.core_factor * self.grade_radius
        return float(min(top, max(low, self.grade_ratio * s)))


def _ring_radii(res: Resolution) -> list[float]:
    s = [0.0]
    while True:
        cur = s[-1]
        step = res.spacing(cur + 0.5 * res.spacing(cur))
        if cur + 1.5 * step >= 1.0:
            break
        s.append(cur + step)
    s.append(1.0)
    return s


def _ring_counts(radii: list[float], res: Resolution) -> list[int]:
    m = res.angular_multiple
    base = m * max(1, math.ceil(6 / m))
    counts = [1]
    for s in radii[1:]:
        n = base * max(1, round(2 * np.pi * s / res.spacing(s) / base))
        counts.append(max(n, counts[-1]))
    return counts


def _zipper(a0: int, na: int, b0: int, nb: int) -> list[tuple[int, int, int]]:
    tris = []
    i = j = 0
    while i < na or j < nb:
        ta = (i + 1) / na
        tb = (j + 1) / nb
        if j >= nb or (i < na and ta <= tb):
            tris.append((a0 + i % na, a0 + (i + 1) % na, b0 + j % nb))
            i += 1
        else:
            tris.append((a0 + i % na, b0 + (j + 1) % nb, b0 + j % nb))
            j += 1
    return tris


@dataclass(frozen=True)
class LinearSolveReport:
    method: str
    n_unknowns: int
    residual_norm: float
    nnz_factor: int = 0


class Discretization:
    """Triangulation plus P1 operators on a :class:`DomainModel`.

    Attributes
    ----------
    nodes : ndarray of complex, shape (n,)
    cells : ndarray of int, shape (m, 3), counter-clockwise
    boundary : ndarray of bool, shape (n,)
    """

    def __init__(self, domain: DomainModel, resolution: Resolution, nodes: np.ndarray,
                 cells: np.ndarray, boundary: np.ndarray):
        self.domain = domain
        self.resolution = resolution
        self.nodes = nodes
        self.cells = cells
        self.boundary = boundary
        self.interior = np.flatnonzero(~boundary)
        p = nodes[cells]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        self.areas = 0.5 * (e1.real * e2.imag - e1.imag * e2.real)
        if np.any(self.areas <= 0):
            raise MeshError("degenerate or inverted cell")
        # gradients of barycentric functions: grad(l_k) = i (p_{k+2} - p_{k+1}) / (2 area), as complex
        g = np.empty_like(p)
        for k in range(3):
            d = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
            g[:, k] = 1j * d / (2 * self.areas)
        self.grads = g  # complex encoding of 2-vectors
        self.quad_points = np.einsum("qk,mk->mq", QUAD_BARY, p)
        self.quad_weights = self.areas[:, None] * QUAD_W[None, :]

    # ---------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_interior(self) -> int:
        return self.interior.size

    def min_angle(self) -> float:
        p = self.nodes[self.cells]
        angs = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            angs.append(np.abs(np.angle(v / u)))
        return float(np.degrees(np.min(angs)))

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        g = self.grads
        local = (g[:, :, None].real * g[:, None, :].real + g[:, :, None].imag * g[:, None, :].imag)
        local *= self.areas[:, None, None]
        return self._assemble(local)

    def _assemble(self, local: np.ndarray) -> sp.csr_matrix:
        rows = np.repeat(self.cells, 3, axis=1).ravel()
        cols = np.tile(self.cells, (1, 3)).ravel()
        n = self.n_nodes
        return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    def mass_matrix(self, weight_q: np.ndarray | float = 1.0) -> sp.csr_matrix:
        """``M_ij = int weight psi_i psi_j`` with ``weight`` given at quadrature points."""
        wq = self.quad_weights * np.broadcast_to(weight_q, self.quad_weights.shape)
        local = np.einsum("mq,qi,qj->mij", wq, QUAD_BARY, QUAD_BARY)
        return self._assemble(local)

    def load_vector(self, f_q: np.ndarray) -> np.ndarray:
        """``b_i = int f psi_i`` with ``f`` at quadrature points; ``f_q`` may carry trailing columns."""
        f_q = np.asarray(f_q)
        wq = self.quad_weights.reshape(self.quad_weights.shape + (1,) * (f_q.ndim - 2)) * f_q
        local = np.einsum("mq...,qi->mi...", wq, QUAD_BARY)
        out = np.zeros((self.n_nodes,) + f_q.shape[2:], dtype=np.result_type(f_q, float))
        np.add.at(out, self.cells, local)
        return out

    def to_quad(self, u: np.ndarray) -> np.ndarray:
        """Interpolate nodal values to quadrature points, shape (m, 7)."""
        return np.einsum("qk,mk->mq", QUAD_BARY, np.asarray(u)[self.cells])

    def integrate_q(self, f_q: np.ndarray) -> float:
        return math.fsum(np.ravel(self.quad_weights * f_q))

    def eval_points(self, f: Callable[[np.ndarray], np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate a callable at nodes and quadrature points."""
        return f(self.nodes), f(self.quad_points)

    @cached_property
    def _interior_lu(self):
        kii = self.stiffness[self.interior][:, self.interior].tocsc()
        return spla.splu(kii, permc_spec="COLAMD")

    @cached_property
    def _centroid_tree(self):
        c = self.nodes[self.cells].mean(axis=1)
        return cKDTree(np.column_stack([c.real, c.imag]))

    def locate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Containing cell and barycentric coordinates ``(l0, l1, l2)`` for each point."""
        z = as_complex(x).ravel()
        cell = np.full(z.size, -1)
        bary = np.zeros((z.size, 3))
        todo = np.arange(z.size)
        tree = self._centroid_tree
        for k in (8, 32, 128):
            if todo.size == 0:
                break
            k = min(k, len(self.cells))
            _, cand = tree.query(np.column_stack([z[todo].real, z[todo].imag]), k=k)
            cand = cand.reshape(todo.size, k)
            p = self.nodes[self.cells[cand]]  # (n, k, 3)
            zz = z[todo][:, None]
            d = ((p[..., 1] - p[..., 0]).conj() * (p[..., 2] - p[..., 0])).imag
            l1 = ((zz - p[..., 0]).conj() * (p[..., 2] - p[..., 0])).imag / d
            l2 = ((p[..., 1] - p[..., 0]).conj() * (zz - p[..., 0])).imag / d
            l0 = 1 - l1 - l2
            inside = np.minimum(np.minimum(l0, l1), l2) >= -1e-12
            hit = inside.any(axis=1)
            first = inside.argmax(axis=1)
            rows = np.flatnonzero(hit)
            sel = todo[rows]
            cell[sel] = cand[rows, first[rows]]
            bary[sel] = np.column_stack([l0[rows, first[rows]], l1[rows, first[rows]], l2[rows, first[rows]]])
            todo = todo[~hit]
        if todo.size:
            raise ValueError("interpolation point outside the mesh")
        return cell, bary

    def interpolate(self, values: np.ndarray, x) -> np.ndarray:
        """P1 interpolation of nodal ``values`` at arbitrary points of the mesh."""
        xc = as_complex(x)
        cell, bary = self.locate(xc)
        v = np.asarray(values)[self.cells[cell]]
        return np.einsum("ij,ij->i", bary, v).reshape(xc.shape)

    # ---------------------------------------------------------------
    def write_csv(self, stem: str | Path, header: list[str] | None = None) -> tuple[Path, Path]:
        """Write ``<stem>_nodes.csv`` (index, x1, x2, boundary) and ``<stem>_cells.csv``."""
        stem = Path(stem)
        pn = stem.with_name(stem.name + "_nodes.csv")
        pc = stem.with_name(stem.name + "_cells.csv")
        with open(pn, "w", newline="") as fh:
            for line in header or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["index", "x1", "x2", "boundary"])
            for i, (z, b) in enumerate(zip(self.nodes, self.boundary)):
                w.writerow([i, repr(float(z.real)), repr(float(z.imag)), int(b)])
        with open(pc, "w", newline="") as fh:
            for line in header or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["index", "n0", "n1", "n2"])
            for i, c in enumerate(self.cells):
                w.writerow([i, *map(int, c)])
        return pn, pc


def build(domain: DomainModel, resolution: Resolution | float = 0.05) -> Discretization:
    """Triangulate ``domain`` with polar rings graded as described by ``resolution``."""
    if not isinstance(resolution, Resolution):
        resolution = Resolution(h=float(resolution))
    if resolution.h <= 0 or resolution.grade_ratio <= 0:
        raise ValueError("mesh sizes must be positive")
    radii = _ring_radii(resolution)
    counts = _ring_counts(radii, resolution)
    nodes = [0j]
    starts = [0]
    for s, n in zip(radii[1:], counts[1:]):
        starts.append(len(nodes))
        th = 2 * np.pi * np.arange(n) / n
        nodes.extend(s * domain.radius_fn(th) * np.exp(1j * th))
    nodes = np.array(nodes)
    cells = []
    n1 = counts[1]
    for i in range(n1):
        cells.append((0, starts[1] + i, starts[1] + (i + 1) % n1))
    for k in range(1, len(radii) - 1):
        cells.extend(_zipper(starts[k], counts[k], starts[k + 1], counts[k + 1]))
    cells = np.array(cells, dtype=np.int64)
    p = nodes[cells]
    orient = ((p[:, 1] - p[:, 0]).conj() * (p[:, 2] - p[:, 0])).imag
    flip = orient < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    boundary = np.zeros(nodes.size, dtype=bool)
    boundary[starts[-1]:] = True
    disc = Discretization(domain, resolution, nodes, cells, boundary)
    if disc.min_angle() < MIN_ANGLE_DEG:
        raise MeshError(f"minimum cell angle {disc.min_angle():.1f} deg below {MIN_ANGLE_DEG}")
    return disc


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass
class Field:
    """Nodal P1 function on a :class:`Discretization` (zero on the boundary for H^1_0 members)."""

    disc: Discretization
    values: np.ndarray
    name: str = "u"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.disc.n_nodes,):
            raise ValueError("field size does not match the discretization")

    def _same(self, other: "Field"):
        if other.disc is not self.disc:
            raise ValueError("fields live on different discretizations")

    def __add__(self, other):
        if isinstance(other, Field):
            self._same(other)
            return Field(self.disc, self.values + other.values, self.name)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Field):
            self._same(other)
            return Field(self.disc, self.values - other.values, self.name)
        return NotImplemented

    def __mul__(self, c: float):
        return Field(self.disc, float(c) * self.values, self.name)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.disc, -self.values, self.name)

    @property
    def boundary_trace(self) -> np.ndarray:
        return self.values[self.disc.boundary]

    def at_quad(self) -> np.ndarray:
        return self.disc.to_quad(self.values)

    def h1_norm(self) -> float:
        return math.sqrt(max(h1_inner(self.disc, self, self), 0.0))

    def __call__(self, x) -> np.ndarray:
        return self.disc.interpolate(self.values, x)

    def to_csv(self, path: str | Path, header: list[str] | None = None) -> Path:
        """Node-value format: ``index, x1, x2, value``."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            for line in header or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["index", "x1", "x2", self.name])
            for i, (z, v) in enumerate(zip(self.disc.nodes, self.values)):
                w.writerow([i, repr(float(z.real)), repr(float(z.imag)), repr(float(v))])
        return path

    @classmethod
    def from_csv(cls, disc: Discretization, path: str | Path) -> "Field":
        rows = [r for r in csv.reader(open(path)) if r and not r[0].startswith("#")]
        name = rows[0][3]
        vals = np.array([float(r[3]) for r in rows[1:]])
        return cls(disc, vals, name)


Rhs = Union[Field, Callable[[np.ndarray], np.ndarray], float, np.ndarray]


def _rhs_at_quad(disc: Discretization, rhs: Rhs) -> np.ndarray:
    if isinstance(rhs, Field):
        if rhs.disc is not disc:
            raise ValueError("right-hand side lives on a different discretization")
        return rhs.at_quad()
    if callable(rhs):
        return np.asarray(rhs(disc.quad_points), dtype=float)
    arr = np.asarray(rhs, dtype=float)
    if arr.ndim == 0:
        return np.full(disc.quad_weights.shape, float(arr))
    if arr.shape == disc.quad_weights.shape:
        return arr
    raise ValueError("cannot interpret right-hand side")


def poisson_solve(disc: Discretization, rhs: Rhs) -> tuple[Field, LinearSolveReport]:
    """Galerkin solution of ``-Laplace u = rhs`` with ``u = 0`` on the boundary."""
    b = disc.load_vector(_rhs_at_quad(disc, rhs))
    return solve_load(disc, b)


def solve_load(disc: Discretization, load: np.ndarray) -> tuple[Field, LinearSolveReport]:
    """Solve ``K u = load`` on interior nodes for a given load vector."""
    lu = disc._interior_lu
    bi = load[disc.interior]
    ui = lu.solve(bi)
    u = np.zeros(disc.n_nodes)
    u[disc.interior] = ui
    kii = disc.stiffness[disc.interior][:, disc.interior]
    res = float(np.linalg.norm(kii @ ui - bi) / max(np.linalg.norm(bi), 1e-300))
    report = LinearSolveReport("splu", disc.n_interior, res, lu.L.nnz + lu.U.nnz)
    return Field(disc, u), report


def _values(disc: Discretization, u) -> np.ndarray:
    if isinstance(u, Field):
        if u.disc is not disc:
            raise ValueError("field lives on a different discretization")
        return u.values
    arr = np.asarray(u, dtype=float)
    if arr.shape != (disc.n_nodes,):
        raise ValueError("nodal vector does not match the discretization")
    return arr


def h1_inner(disc: Discretization, u, v) -> float:
    """``int grad u . grad v`` for P1 functions."""
    uu, vv = _values(disc, u), _values(disc, v)
    return float(uu @ (disc.stiffness @ vv))


def _quad_values(disc: Discretization, u) -> np.ndarray:
    if isinstance(u, Field):
        if u.disc is not disc:
            raise ValueError("field lives on a different discretization")
        return u.at_quad()
    if callable(u):
        return np.asarray(u(disc.quad_points), dtype=float)
    arr = np.asarray(u, dtype=float)
    if arr.shape == (disc.n_nodes,):
        return disc.to_quad(arr)
    if arr.shape == disc.quad_weights.shape:
        return arr
    raise ValueError("cannot interpret function values")


def lp_norm(disc: Discretization, u, p: float = 2.0) -> float:
    """``(int |u|^p)^(1/p)`` using the seven-point rule on every cell."""
    if p < 1:
        raise ValueError("p must be >= 1")
    uq = _quad_values(disc, u)
    return disc.integrate_q(np.abs(uq) ** p) ** (1.0 / p)


def weighted_mass(disc: Discretization, weight, u, v) -> float:
    """``int weight u v``; each argument may be a Field, a callable or quadrature values."""
    wq = _quad_values(disc, weight) if not np.isscalar(weight) else float(weight)
    return disc.integrate_q(wq * _quad_values(disc, u) * _quad_values(disc, v))
