import numpy as np
import pytest

from surrofem.fem import (
    ConductivityField,
    Inclusion,
    IncompatibleFlux,
    PointOutsideDomain,
    assemble_neumann_load,
    assemble_stiffness,
    boundary_weights,
    evaluate_at_points,
    gradient_norms,
    solve_neumann,
)
from surrofem.fem import _disk_triangle_overlap
from surrofem.mesh import Mesh, generate_disk_mesh, refine_uniform, triangle_areas
from surrofem.oracle import exact_boundary_cos4


def flux_cos(x, y):
    return np.cos(np.arctan2(y, x))


def flux_cos4(x, y):
    return np.cos(4.0 * np.arctan2(y, x))


@pytest.fixture(scope="module")
def disk_mesh():
    return generate_disk_mesh(1.0, 0.1)


def reference_triangle():
    return Mesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]),
        np.array([[1, 2]]),
        1.0,
    )


def test_reference_triangle_stiffness():
    # hand integration of the P1 gradients on (0,0),(1,0),(0,1)
    K = assemble_stiffness(reference_triangle(), ConductivityField()).toarray()
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    assert np.allclose(K, expected, atol=1e-14)


def test_stiffness_row_sums_vanish(disk_mesh):
    K = assemble_stiffness(disk_mesh, ConductivityField())
    assert np.abs(K @ np.ones(disk_mesh.num_vertices)).max() < 1e-12


def test_stiffness_linear_in_conductivity(disk_mesh):
    inc = Inclusion((0.1, -0.2), 0.4, 1.5)
    K1 = assemble_stiffness(disk_mesh, ConductivityField(1.0, (inc,)))
    K2 = assemble_stiffness(disk_mesh, ConductivityField(2.0, (Inclusion(inc.center, inc.radius, 3.0),)))
    assert np.allclose(K2.toarray(), 2.0 * K1.toarray(), rtol=0, atol=0)


def test_stiffness_symmetric(disk_mesh):
    K = assemble_stiffness(disk_mesh, ConductivityField(1.0, (Inclusion((0.0, 0.0), 0.85, 3.2),)))
    assert np.abs((K - K.T).toarray()).max() < 1e-14


def test_field_validation():
    with pytest.raises(ValueError):
        ConductivityField(0.0)
    with pytest.raises(ValueError):
        ConductivityField(1.0, (Inclusion((0, 0), 0.3, -1.0),))
    m = generate_disk_mesh(1.0, 0.3)
    with pytest.raises(ValueError):
        assemble_stiffness(m, ConductivityField(1.0, (Inclusion((0.9, 0.0), 0.3, 1.0),)))


def test_disk_triangle_overlap_cases():
    tri = np.array([[-5.0, -5.0], [5.0, -3.0], [0.0, 6.0]])
    assert _disk_triangle_overlap((0.3, 0.2), 0.5, tri) == pytest.approx(np.pi * 0.25, rel=1e-12)
    small = np.array([[0.0, 0.0], [0.3, 0.0], [0.0, 0.3]])
    assert _disk_triangle_overlap((0.0, 0.0), 2.0, small) == pytest.approx(0.045, rel=1e-12)
    quarter = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert _disk_triangle_overlap((0.0, 0.0), 0.5, quarter) == pytest.approx(np.pi / 16, rel=1e-12)
    far = _disk_triangle_overlap((10.0, 10.0), 0.5, quarter)
    assert far == 0.0


def test_load_zero_flux(disk_mesh):
    b = assemble_neumann_load(disk_mesh, lambda x, y: np.zeros_like(x))
    assert np.array_equal(b, np.zeros_like(b))


def test_load_cos4_sums_to_zero(disk_mesh):
    b = assemble_neumann_load(disk_mesh, flux_cos4)
    assert abs(b.sum()) < 1e-8


def test_load_constant_flux_rejected(disk_mesh):
    with pytest.raises(IncompatibleFlux):
        assemble_neumann_load(disk_mesh, lambda x, y: np.ones_like(x))


def test_solve_zero_load(disk_mesh):
    K = assemble_stiffness(disk_mesh, ConductivityField())
    sol = solve_neumann(K, np.zeros(disk_mesh.num_vertices), disk_mesh)
    assert np.abs(sol.nodal_values).max() == 0.0
    assert sol.grad_l2 == 0.0 and sol.grad_l4 == 0.0


def test_harmonic_solution_matches_r_cos_theta():
    # lam = 1, f = cos(theta): u = r cos(theta) up to discretization
    errs = []
    mesh = generate_disk_mesh(1.0, 0.1)
    for _ in range(3):
        K = assemble_stiffness(mesh, ConductivityField())
        sol = solve_neumann(K, assemble_neumann_load(mesh, flux_cos), mesh)
        b = np.unique(mesh.boundary_edges)
        errs.append(np.abs(sol.nodal_values[b] - mesh.vertices[b, 0]).max())
        mesh = refine_uniform(mesh)
    assert errs[0] < 5e-4
    assert errs[0] > errs[1] > errs[2]


def test_solution_linear_in_flux(disk_mesh):
    K = assemble_stiffness(disk_mesh, ConductivityField())
    b = assemble_neumann_load(disk_mesh, flux_cos4)
    u1 = solve_neumann(K, b, disk_mesh).nodal_values
    u2 = solve_neumann(K, 2.0 * b, disk_mesh).nodal_values
    assert np.allclose(u2, 2.0 * u1, rtol=1e-12, atol=1e-14)


def test_boundary_mean_is_zero(disk_mesh):
    K = assemble_stiffness(disk_mesh, ConductivityField(1.0, (Inclusion((0.0, 0.0), 0.85, 3.2),)))
    sol = solve_neumann(K, assemble_neumann_load(disk_mesh, flux_cos4), disk_mesh)
    w = boundary_weights(disk_mesh)
    u = sol.nodal_values
    assert abs(w @ u) < 1e-8 * np.abs(u).max() * (2 * np.pi * disk_mesh.radius)


def test_energy_identity_and_galerkin(disk_mesh):
    field = ConductivityField(1.0, (Inclusion((0.0, 0.0), 0.85, 3.2),))
    K = assemble_stiffness(disk_mesh, field)
    b = assemble_neumann_load(disk_mesh, flux_cos4)
    sol = solve_neumann(K, b, disk_mesh)
    u = sol.nodal_values

    lam = field.triangle_means(disk_mesh)
    areas = triangle_areas(disk_mesh)
    tri = disk_mesh.triangles
    p = disk_mesh.vertices[tri]
    bm = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1)
    cm = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    ut = u[tri]
    gx = np.sum(ut * bm, axis=1) / (2 * areas)
    gy = np.sum(ut * cm, axis=1) / (2 * areas)
    energy = np.sum(areas * lam * (gx**2 + gy**2))
    assert abs(u @ (K @ u) - energy) <= 1e-10 * abs(energy)

    rng = np.random.default_rng(1)
    for _ in range(5):
        v = rng.standard_normal(len(u))
        assert abs(v @ (K @ u - b)) <= 1e-10 * np.linalg.norm(b) * np.linalg.norm(v)


def test_gradient_norms_of_linear_function(disk_mesh):
    # u = x has gradient (1, 0): L2 norm sqrt(polygon area), L4 norm area^(1/4)
    u = disk_mesh.vertices[:, 0]
    area = triangle_areas(disk_mesh).sum()
    l2, l4 = gradient_norms(disk_mesh, u)
    assert l2 == pytest.approx(np.sqrt(area), rel=1e-12)
    assert l4 == pytest.approx(area**0.25, rel=1e-12)


def test_evaluate_at_vertices_and_centroids(disk_mesh):
    K = assemble_stiffness(disk_mesh, ConductivityField())
    sol = solve_neumann(K, assemble_neumann_load(disk_mesh, flux_cos4), disk_mesh)
    u = sol.nodal_values
    idx = [0, 5, 40]
    vals = evaluate_at_points(sol, disk_mesh.vertices[idx])
    assert np.allclose(vals, u[idx], atol=1e-12)
    t = disk_mesh.triangles[7]
    centroid = disk_mesh.vertices[t].mean(axis=0)
    assert evaluate_at_points(sol, [centroid])[0] == pytest.approx(u[t].mean(), abs=1e-12)


def test_evaluate_snaps_circle_points(disk_mesh):
    K = assemble_stiffness(disk_mesh, ConductivityField())
    sol = solve_neumann(K, assemble_neumann_load(disk_mesh, flux_cos), mesh=disk_mesh)
    # points exactly on the circle fall outside the inscribed polygon
    ang = np.array([0.05, 1.3, 2.9, 4.4])
    pts = np.column_stack([np.cos(ang), np.sin(ang)])
    vals = evaluate_at_points(sol, pts)
    assert np.abs(vals - np.cos(ang)).max() < 5e-3


def test_evaluate_rejects_outside_point(disk_mesh):
    K = assemble_stiffness(disk_mesh, ConductivityField())
    sol = solve_neumann(K, np.zeros(disk_mesh.num_vertices), disk_mesh)
    with pytest.raises(PointOutsideDomain):
        evaluate_at_points(sol, [[1.01, 0.0]])


def test_fem_matches_oracle_at_observation_points():
    mesh = refine_uniform(generate_disk_mesh(1.0, 0.1))
    field = ConductivityField(1.0, (Inclusion((0.0, 0.0), 0.85, 3.2),))
    K = assemble_stiffness(mesh, field)
    sol = solve_neumann(K, assemble_neumann_load(mesh, flux_cos4), mesh)
    ang = 2 * np.pi * np.arange(10) / 10
    pts = np.column_stack([np.cos(ang), np.sin(ang)])
    vals = evaluate_at_points(sol, pts)
    exact = exact_boundary_cos4(3.2, 0.85, ang)
    assert np.abs(vals - exact).max() / np.abs(exact).max() < 0.02
