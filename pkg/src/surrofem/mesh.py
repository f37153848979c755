"""Triangular meshes of a disk built from concentric rings of vertices.

The generator is fully deterministic: ring ``i`` of ``M`` sits at radius
``radius * i / M`` and carries ``6 * i`` equally spaced vertices, so vertex
and triangle counts are reproducible functions of ``(radius, target_h)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of a disk.

    Attributes
    ----------
    vertices : ndarray, shape (V, 2)
        Vertex coordinates.
    triangles : ndarray, shape (T, 3)
        Vertex indices per triangle, counter-clockwise.
    boundary_edges : ndarray, shape (B, 2)
        Vertex index pairs tracing the outer circle counter-clockwise,
        forming a single closed cycle.
    radius : float
        Disk radius; every boundary vertex lies on ``|x| = radius``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    radius: float

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)


def triangle_areas(mesh: Mesh) -> np.ndarray:
    """Signed areas of all triangles (positive for CCW orientation)."""
    p = mesh.vertices[mesh.triangles]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )


def edge_lengths(mesh: Mesh) -> np.ndarray:
    """Lengths of every (undirected, deduplicated) edge in the mesh."""
    e = _all_edges(mesh.triangles)
    d = mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]]
    return np.hypot(d[:, 0], d[:, 1])


def _all_edges(triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def generate_disk_mesh(radius: float, target_h: float) -> Mesh:
    """Build a structured disk mesh with edge lengths close to ``target_h``.

    Parameters
    ----------
    radius : float
        Disk radius, positive.
    target_h : float
        Requested edge length, in ``(0, radius)``.  The realized maximal
        edge length is at most ``1.5 * target_h``.
    """
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if target_h <= 0.0:
        raise ValueError(f"target_h must be positive, got {target_h}")
    if target_h >= radius:
        raise ValueError(f"target_h must be smaller than radius, got {target_h} >= {radius}")

    rings = max(1, round(radius / target_h))

    verts = [np.zeros((1, 2))]
    for i in range(1, rings + 1):
        npts = 6 * i
        ang = 2.0 * np.pi * np.arange(npts) / npts
        r = radius * (i / rings)
        verts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    vertices = np.concatenate(verts)
    # ring i occupies indices [1 + 3i(i-1), 1 + 3i(i+1))
    ring_start = [0] + [1 + 3 * i * (i - 1) for i in range(1, rings + 1)]

    triangles = []
    for j in range(6):
        triangles.append((0, 1 + j, 1 + (j + 1) % 6))
    for i in range(2, rings + 1):
        p, q = 6 * (i - 1), 6 * i
        i0, o0 = ring_start[i - 1], ring_start[i]
        a = b = 0
        while a < p or b < q:
            # greedy: create the diagonal with the smaller angular span
            # (exact integer comparison of (b+1)/q - a/p vs (a+1)/p - b/q)
            if b < q and (a == p or 2 * (p * b - q * a) <= q - p):
                triangles.append((i0 + a % p, o0 + b % q, o0 + (b + 1) % q))
                b += 1
            else:
                triangles.append((i0 + a % p, o0 + b % q, i0 + (a + 1) % p))
                a += 1
    triangles = np.asarray(triangles, dtype=np.int64)

    q = 6 * rings
    o0 = ring_start[rings]
    boundary = np.column_stack([o0 + np.arange(q), o0 + (np.arange(q) + 1) % q])

    mesh = Mesh(vertices, triangles, boundary.astype(np.int64), float(radius))
    return _fix_orientation(mesh)


def _fix_orientation(mesh: Mesh) -> Mesh:
    areas = triangle_areas(mesh)
    if (areas > 0).all():
        return mesh
    tri = mesh.triangles.copy()
    flip = areas < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return Mesh(mesh.vertices, tri, mesh.boundary_edges, mesh.radius)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split each triangle into 4 congruent children via edge midpoints.

    Midpoints of boundary edges are projected back onto the circle, so the
    discrete boundary converges to ``|x| = radius`` under repeated refinement.
    """
    boundary_set = {tuple(sorted(e)) for e in mesh.boundary_edges.tolist()}
    verts = [mesh.vertices]
    next_index = len(mesh.vertices)
    mid_index: dict[tuple[int, int], int] = {}
    new_pts = []

    def midpoint(u: int, v: int) -> int:
        nonlocal next_index
        key = (u, v) if u < v else (v, u)
        idx = mid_index.get(key)
        if idx is None:
            pm = 0.5 * (mesh.vertices[u] + mesh.vertices[v])
            if key in boundary_set:
                pm = pm * (mesh.radius / np.hypot(pm[0], pm[1]))
            new_pts.append(pm)
            idx = next_index
            mid_index[key] = idx
            next_index += 1
        return idx

    tris = []
    for v0, v1, v2 in mesh.triangles.tolist():
        m01 = midpoint(v0, v1)
        m12 = midpoint(v1, v2)
        m20 = midpoint(v2, v0)
        tris.extend([(v0, m01, m20), (v1, m12, m01), (v2, m20, m12), (m01, m12, m20)])

    if new_pts:
        verts.append(np.asarray(new_pts))
    vertices = np.concatenate(verts)

    boundary = []
    for a, b in mesh.boundary_edges.tolist():
        m = mid_index[(a, b) if a < b else (b, a)]
        boundary.extend([(a, m), (m, b)])

    return Mesh(
        vertices,
        np.asarray(tris, dtype=np.int64),
        np.asarray(boundary, dtype=np.int64),
        mesh.radius,
    )


def validate_mesh(mesh: Mesh) -> None:
    """Raise ``ValueError`` if any structural invariant is violated."""
    areas = triangle_areas(mesh)
    if not (areas > 0).all():
        raise ValueError("mesh contains a non-positively oriented triangle")

    r = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])
    b_idx = np.unique(mesh.boundary_edges)
    if not (np.abs(r[b_idx] - mesh.radius) <= 1e-9 * mesh.radius).all():
        raise ValueError("boundary vertex off the circle")
    rmax = r.max()
    outer = np.flatnonzero(r >= rmax - 1e-9 * mesh.radius)
    if set(outer.tolist()) != set(b_idx.tolist()):
        raise ValueError("boundary cycle does not cover exactly the outermost vertices")

    succ = dict(mesh.boundary_edges.tolist())
    if len(succ) != len(mesh.boundary_edges):
        raise ValueError("boundary edges are not a function (vertex repeated as source)")
    node = mesh.boundary_edges[0, 0]
    seen = set()
    for _ in range(len(succ)):
        seen.add(int(node))
        node = succ[int(node)]
    if int(node) != int(mesh.boundary_edges[0, 0]) or len(seen) != len(succ):
        raise ValueError("boundary edges do not form a single closed cycle")

    edges = np.concatenate(
        [mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]
    )
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    boundary = {tuple(sorted(e)) for e in mesh.boundary_edges.tolist()}
    for e, c in zip(uniq.tolist(), counts.tolist()):
        expected = 1 if tuple(e) in boundary else 2
        if c != expected:
            raise ValueError(f"edge {e} shared by {c} triangles, expected {expected}")


def euler_characteristic(mesh: Mesh) -> int:
    """V - E + T; equals 1 for any disk triangulation."""
    return mesh.num_vertices - len(_all_edges(mesh.triangles)) + mesh.num_triangles


def save_mesh(mesh: Mesh, path: str | Path) -> None:
    """Plain-text dump: header ``vertices N triangles T boundary B radius R``,
    then one line per vertex, triangle and boundary edge."""
    with open(path, "w") as fh:
        fh.write(
            f"vertices {mesh.num_vertices} triangles {mesh.num_triangles} "
            f"boundary {len(mesh.boundary_edges)} radius {mesh.radius!r}\n"
        )
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for t in mesh.triangles:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")
        for a, b in mesh.boundary_edges:
            fh.write(f"{a} {b}\n")


def load_mesh(path: str | Path) -> Mesh:
    with open(path) as fh:
        head = fh.readline().split()
        nv, nt, nb = int(head[1]), int(head[3]), int(head[5])
        radius = float(head[7])
        verts = np.array([[float(v) for v in fh.readline().split()] for _ in range(nv)])
        tris = np.array(
            [[int(v) for v in fh.readline().split()] for _ in range(nt)], dtype=np.int64
        )
        bnd = np.array(
            [[int(v) for v in fh.readline().split()] for _ in range(nb)], dtype=np.int64
        )
    return Mesh(verts, tris, bnd, radius)
