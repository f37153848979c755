import numpy as np
import pytest

from surrofem.mesh import (
    Mesh,
    edge_lengths,
    euler_characteristic,
    generate_disk_mesh,
    load_mesh,
    refine_uniform,
    save_mesh,
    triangle_areas,
    validate_mesh,
)


def test_coarsest_mesh_valid():
    m = generate_disk_mesh(1.0, 0.5)
    assert m.num_triangles >= 4
    validate_mesh(m)


def test_counts_pinned_for_fine_mesh():
    # regression values for this generator at (1.0, 0.02): 50 rings
    m = generate_disk_mesh(1.0, 0.02)
    assert m.num_vertices == 7651
    assert m.num_triangles == 15000
    assert 5000 <= m.num_vertices <= 40000


def test_vertex_count_scales_quadratically():
    v1 = generate_disk_mesh(1.0, 0.1).num_vertices
    v2 = generate_disk_mesh(1.0, 0.05).num_vertices
    assert 3.0 < v2 / v1 < 5.0


def test_scaled_mesh_hits_radius_exactly():
    m = generate_disk_mesh(5.0, 0.1)
    validate_mesh(m)
    r = np.hypot(m.vertices[:, 0], m.vertices[:, 1])
    assert abs(r.max() - 5.0) <= 1e-9 * 5.0


@pytest.mark.parametrize("radius,target_h", [(1.0, 0.5), (1.0, 0.07), (5.0, 0.3), (2.0, 0.11)])
def test_max_edge_bound(radius, target_h):
    m = generate_disk_mesh(radius, target_h)
    assert edge_lengths(m).max() <= 1.5 * target_h


@pytest.mark.parametrize("bad", [(0.0, 0.1), (1.0, 0.0), (-1.0, 0.1), (1.0, -0.2), (1.0, 1.0), (1.0, 2.0)])
def test_rejects_nonpositive_or_oversized_inputs(bad):
    with pytest.raises(ValueError):
        generate_disk_mesh(*bad)


def test_refine_quadruples_triangles():
    m = generate_disk_mesh(1.0, 0.5)
    r1 = refine_uniform(m)
    r2 = refine_uniform(r1)
    validate_mesh(r1)
    validate_mesh(r2)
    assert r1.num_triangles == 4 * m.num_triangles
    assert r2.num_triangles == 16 * m.num_triangles


def test_refined_boundary_projected_to_circle():
    m = refine_uniform(generate_disk_mesh(1.0, 0.3))
    b = np.unique(m.boundary_edges)
    r = np.hypot(m.vertices[b, 0], m.vertices[b, 1])
    assert np.abs(r - 1.0).max() < 1e-9


@pytest.mark.parametrize("target_h", [0.4, 0.2, 0.1, 0.05])
def test_area_converges_to_disk(target_h):
    m = generate_disk_mesh(1.0, target_h)
    gap = abs(triangle_areas(m).sum() - np.pi) / np.pi
    assert gap < 3.0 * target_h


def test_euler_characteristic_is_one():
    for m in (generate_disk_mesh(1.0, 0.3), refine_uniform(generate_disk_mesh(1.0, 0.3))):
        assert euler_characteristic(m) == 1


def test_generation_deterministic():
    a = generate_disk_mesh(1.0, 0.13)
    b = generate_disk_mesh(1.0, 0.13)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


def test_text_dump_roundtrip(tmp_path):
    m = refine_uniform(generate_disk_mesh(1.0, 0.4))
    path = tmp_path / "mesh.txt"
    save_mesh(m, path)
    m2 = load_mesh(path)
    assert np.array_equal(m2.vertices, m.vertices)
    assert np.array_equal(m2.triangles, m.triangles)
    assert np.array_equal(m2.boundary_edges, m.boundary_edges)
    assert m2.radius == m.radius


def test_validate_catches_flipped_triangle():
    m = generate_disk_mesh(1.0, 0.5)
    tri = m.triangles.copy()
    tri[0] = tri[0][[0, 2, 1]]
    bad = Mesh(m.vertices, tri, m.boundary_edges, m.radius)
    with pytest.raises(ValueError):
        validate_mesh(bad)
