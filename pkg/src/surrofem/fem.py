"""P1 finite elements for the pure-Neumann conductivity equation on a disk.

Solves div(lam grad u) = 0 with boundary flux data ``lam du/dn = f`` and the
normalization that the line integral of u over the boundary vanishes.  The
conductivity is piecewise constant (background plus circular inclusions) and
is sampled per triangle at the centroid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .mesh import Mesh, triangle_areas


class IncompatibleFlux(ValueError):
    """Boundary flux does not integrate to zero over the boundary."""


class SolverFailure(RuntimeError):
    """Linear solve did not reach the required residual tolerance."""


class PointOutsideDomain(ValueError):
    """Evaluation point lies outside the closed disk."""


@dataclass(frozen=True)
class Inclusion:
    center: tuple[float, float]
    radius: float
    contrast: float


@dataclass(frozen=True)
class ConductivityField:
    """Piecewise-constant conductivity: background plus disk inclusions.

    The field must stay uniformly positive; inclusion disks may not extend
    past the domain boundary (touching it is allowed).
    """

    background: float = 1.0
    inclusions: tuple[Inclusion, ...] = ()

    def __post_init__(self):
        if self.background <= 0.0:
            raise ValueError("background conductivity must be positive")
        for inc in self.inclusions:
            if inc.radius < 0.0:
                raise ValueError("inclusion radius must be nonnegative")
            if self.background + inc.contrast <= 0.0:
                raise ValueError("inclusion breaks uniform ellipticity")

    def values_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        lam = np.full(len(pts), self.background)
        for inc in self.inclusions:
            d = np.hypot(pts[:, 0] - inc.center[0], pts[:, 1] - inc.center[1])
            lam = lam + inc.contrast * (d < inc.radius)
        return lam

    def inclusion_fractions(self, mesh: Mesh, inc: Inclusion) -> np.ndarray:
        """Exact area fraction of each triangle covered by one inclusion disk."""
        areas = triangle_areas(mesh)
        centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        p = mesh.vertices[mesh.triangles]
        dc = np.hypot(centroids[:, 0] - inc.center[0], centroids[:, 1] - inc.center[1])
        dv = np.hypot(p[:, :, 0] - inc.center[0], p[:, :, 1] - inc.center[1])
        # candidates: triangles not provably on one side of the circle
        reach = np.max(np.hypot(p[:, :, 0] - centroids[:, 0, None],
                                p[:, :, 1] - centroids[:, 1, None]), axis=1)
        may_cut = ~(
            ((dc >= inc.radius) & (dv >= inc.radius).all(axis=1) & (dc - reach > inc.radius))
            | ((dc < inc.radius) & (dv < inc.radius).all(axis=1))
        )
        frac = np.where(dc < inc.radius, 1.0, 0.0)
        for t in np.flatnonzero(may_cut):
            frac[t] = _disk_triangle_overlap(inc.center, inc.radius, p[t]) / areas[t]
        return frac

    def triangle_means(self, mesh: Mesh) -> np.ndarray:
        """Harmonic mean conductivity per triangle.

        Away from inclusion boundaries this equals the (constant) pointwise
        value.  Triangles cut by an inclusion circle get the harmonic average
        weighted by the exact overlap fraction: the flux through the thin cut
        band crosses the interface, so the series (harmonic) composition is
        the consistent one-value homogenization, and the effective inclusion
        radius is resolved well below the mesh width.
        """
        inv = np.full(mesh.num_triangles, 1.0 / self.background)
        for inc in self.inclusions:
            if inc.radius == 0.0 or inc.contrast == 0.0:
                continue
            frac = self.inclusion_fractions(mesh, inc)
            inv = frac / (self.background + inc.contrast) + (1.0 - frac) * inv
        return 1.0 / inv


def _disk_triangle_overlap(center, r: float, tri_pts: np.ndarray) -> float:
    """Exact area of the intersection of a disk with a CCW triangle.

    Green's-theorem decomposition: the signed overlap of the disk with each
    origin triangle (O, v_i, v_{i+1}) sums to the total.  Handles all cases,
    including a disk contained in the triangle and vice versa.
    """
    v = tri_pts - np.asarray(center, dtype=float)
    total = 0.0
    for i in range(3):
        total += _origin_wedge_disk_area(v[i], v[(i + 1) % 3], r)
    return abs(total)


def _origin_wedge_disk_area(p1: np.ndarray, p2: np.ndarray, r: float) -> float:
    """Signed area of triangle(O, p1, p2) intersected with disk(O, r)."""

    def sector(u, w):
        ang = np.arctan2(u[0] * w[1] - u[1] * w[0], u[0] * w[0] + u[1] * w[1])
        return 0.5 * r * r * ang

    def chord(u, w):
        return 0.5 * (u[0] * w[1] - u[1] * w[0])

    d1 = np.hypot(p1[0], p1[1])
    d2 = np.hypot(p2[0], p2[1])
    if d1 <= r and d2 <= r:
        return chord(p1, p2)

    d = p2 - p1
    a = d @ d
    if a == 0.0:
        return 0.0
    b = p1 @ d
    c = p1 @ p1 - r * r
    disc = b * b - a * c
    ts = []
    if disc > 0.0:
        root = np.sqrt(disc)
        for t in ((-b - root) / a, (-b + root) / a):
            if 0.0 < t < 1.0:
                ts.append(t)

    if d1 <= r < d2:
        t = ts[-1] if ts else 1.0
        q = p1 + t * d
        return chord(p1, q) + sector(q, p2)
    if d2 <= r < d1:
        t = ts[0] if ts else 0.0
        q = p1 + t * d
        return sector(p1, q) + chord(q, p2)
    # both endpoints outside
    if len(ts) == 2:
        q1 = p1 + ts[0] * d
        q2 = p1 + ts[1] * d
        return sector(p1, q1) + chord(q1, q2) + sector(q2, p2)
    return sector(p1, p2)


@dataclass(frozen=True)
class FieldSolution:
    """Nodal solution values together with its gradient norms.

    ``grad_l2`` and ``grad_l4`` are the L2 and L4 norms of the piecewise
    constant gradient, computed exactly (no quadrature error).
    """

    mesh: Mesh
    nodal_values: np.ndarray
    grad_l2: float
    grad_l4: float


def _p1_geometry(mesh: Mesh):
    """Per-triangle area and basis-gradient coefficients.

    For P1 basis functions phi_i on a triangle, grad phi_i = (b_i, c_i)/(2A)
    with b_i = y_j - y_k and c_i = x_k - x_j (cyclic indices).
    """
    p = mesh.vertices[mesh.triangles]
    x, y = p[:, :, 0], p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return triangle_areas(mesh), b, c


def assemble_stiffness(mesh: Mesh, field: ConductivityField) -> sparse.csr_matrix:
    """Stiffness matrix of the weak form; symmetric with the constants as kernel.

    The conductivity enters as one value per triangle (its exact mean over
    the triangle), so inclusion boundaries are not mesh-fitted.
    """
    for inc in field.inclusions:
        reach = np.hypot(*inc.center) + inc.radius
        if reach > mesh.radius * (1.0 + 1e-12):
            raise ValueError("inclusion extends outside the mesh disk")

    area, b, c = _p1_geometry(mesh)
    lam = field.triangle_means(mesh)
    scale = lam / (4.0 * area)

    tri = mesh.triangles
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(tri[:, i])
            cols.append(tri[:, j])
            vals.append(scale * (b[:, i] * b[:, j] + c[:, i] * c[:, j]))
    K = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_vertices, mesh.num_vertices),
    )
    return K.tocsr()


_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def assemble_neumann_load(mesh: Mesh, flux: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Load vector of the boundary flux, via 2-point Gauss quadrature per edge.

    Raises ``IncompatibleFlux`` when the discrete integral of the flux over
    the boundary is not (relatively) negligible, since the pure-Neumann
    problem is solvable only for mean-free data.
    """
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    lengths = np.hypot(*(b - a).T)

    load = np.zeros(mesh.num_vertices)
    total = 0.0
    total_abs = 0.0
    for t in _GAUSS2:
        xg = a + t * (b - a)
        fg = np.asarray(flux(xg[:, 0], xg[:, 1]), dtype=float)
        w = 0.5 * lengths
        np.add.at(load, mesh.boundary_edges[:, 0], w * (1.0 - t) * fg)
        np.add.at(load, mesh.boundary_edges[:, 1], w * t * fg)
        total += float(np.sum(w * fg))
        total_abs += float(np.sum(w * np.abs(fg)))

    if total_abs > 0.0 and abs(total) >= 1e-8 * total_abs:
        raise IncompatibleFlux(
            f"flux integrates to {total:.3e} over the boundary (scale {total_abs:.3e})"
        )
    return load


def boundary_weights(mesh: Mesh) -> np.ndarray:
    """Lumped weights of the discrete boundary line integral of each basis function."""
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    lengths = np.hypot(*(b - a).T)
    w = np.zeros(mesh.num_vertices)
    np.add.at(w, mesh.boundary_edges[:, 0], 0.5 * lengths)
    np.add.at(w, mesh.boundary_edges[:, 1], 0.5 * lengths)
    return w


def gradient_norms(mesh: Mesh, nodal: np.ndarray) -> tuple[float, float]:
    """Exact L2 and L4 norms of the piecewise-constant gradient of a P1 function."""
    area, b, c = _p1_geometry(mesh)
    u = nodal[mesh.triangles]
    gx = np.sum(u * b, axis=1) / (2.0 * area)
    gy = np.sum(u * c, axis=1) / (2.0 * area)
    sq = gx * gx + gy * gy
    l2 = float(np.sqrt(np.sum(area * sq)))
    l4 = float(np.sum(area * sq * sq) ** 0.25)
    return l2, l4


def solve_neumann(K: sparse.spmatrix, load: np.ndarray, mesh: Mesh) -> FieldSolution:
    """Solve the singular Neumann system with the zero-boundary-mean constraint.

    One Lagrange multiplier row enforces the discrete boundary integral of u
    to vanish, which also removes the constant-kernel rank deficiency.
    """
    n = mesh.num_vertices
    total = float(np.sum(load))
    scale = float(np.sum(np.abs(load)))
    if scale > 0.0 and abs(total) > 1e-8 * scale:
        raise IncompatibleFlux("load vector is not orthogonal to constants")

    w = boundary_weights(mesh)
    wn = w / np.linalg.norm(w)
    A = sparse.bmat([[K, wn[:, None]], [wn[None, :], None]], format="csc")
    rhs = np.concatenate([load, [0.0]])
    sol = spsolve(A, rhs)
    u = sol[:n]

    bnorm = np.linalg.norm(load)
    residual = np.linalg.norm(K @ u - load)
    if bnorm > 0.0 and residual > 1e-10 * bnorm:
        raise SolverFailure(f"residual {residual:.3e} exceeds 1e-10 * |b| = {1e-10 * bnorm:.3e}")

    l2, l4 = gradient_norms(mesh, u)
    return FieldSolution(mesh, u, l2, l4)


def evaluate_at_points(sol: FieldSolution, points: Sequence | np.ndarray) -> np.ndarray:
    """P1 interpolation of the solution at points of the closed disk.

    Points inside the triangulation are interpolated barycentrically.  Points
    of the closed disk that fall in the sliver between the polygonal mesh
    boundary and the circle (as exact boundary points do) are projected onto
    the nearest boundary edge.  Points beyond the circle by more than a
    1e-9 relative tolerance raise ``PointOutsideDomain``.
    """
    mesh = sol.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(pts[:, 0], pts[:, 1])
    if (r > mesh.radius * (1.0 + 1e-9)).any():
        worst = pts[int(np.argmax(r))]
        raise PointOutsideDomain(f"point {worst} lies outside the disk of radius {mesh.radius}")

    p = mesh.vertices[mesh.triangles]
    x1, y1 = p[:, 0, 0], p[:, 0, 1]
    x2, y2 = p[:, 1, 0], p[:, 1, 1]
    x3, y3 = p[:, 2, 0], p[:, 2, 1]
    det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3)

    ea = mesh.vertices[mesh.boundary_edges[:, 0]]
    eb = mesh.vertices[mesh.boundary_edges[:, 1]]
    evec = eb - ea
    elen2 = np.sum(evec**2, axis=1)

    u = sol.nodal_values
    out = np.empty(len(pts))
    for i, (px, py) in enumerate(pts):
        l1 = ((y2 - y3) * (px - x3) + (x3 - x2) * (py - y3)) / det
        l2 = ((y3 - y1) * (px - x3) + (x1 - x3) * (py - y3)) / det
        l3 = 1.0 - l1 - l2
        inside = (l1 >= -1e-12) & (l2 >= -1e-12) & (l3 >= -1e-12)
        if inside.any():
            t = int(np.argmax(inside))
            lam = np.array([l1[t], l2[t], l3[t]])
            out[i] = float(lam @ u[mesh.triangles[t]])
        else:
            # closed-disk point outside the inscribed polygon: snap to boundary
            t = np.clip(((px - ea[:, 0]) * evec[:, 0] + (py - ea[:, 1]) * evec[:, 1]) / elen2, 0.0, 1.0)
            proj = ea + t[:, None] * evec
            d2 = (proj[:, 0] - px) ** 2 + (proj[:, 1] - py) ** 2
            e = int(np.argmin(d2))
            ia, ib = mesh.boundary_edges[e]
            out[i] = float((1.0 - t[e]) * u[ia] + t[e] * u[ib])
    return out
