import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyntop import materials, sparse
from dyntop.model import (
    DensityField,
    Material,
    assemble_K,
    assemble_M,
    build_case,
    element_matrices,
    force_at,
    grid_mesh_2d,
    peak_static_force,
    uniform_density,
)


def top88_ke(nu):
    """Classic analytic Q4 plane-stress stiffness (unit E, unit thickness)."""
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    idx = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    return k[idx] / (1 - nu**2)


def dense_assembly(mesh, elem_matrix, scale):
    """Brute-force dense assembly over all DOFs, then free-DOF restriction."""
    A = np.zeros((mesh.ndof_full, mesh.ndof_full))
    for e in range(mesh.n_elems):
        dofs = mesh.edof[e]
        A[np.ix_(dofs, dofs)] += scale[e] * elem_matrix
    free = mesh.free_dofs
    return A, A[np.ix_(free, free)]


def small_cantilever(nelx=4, nely=2):
    return build_case("cantilever_hole", nelx=nelx, nely=nely, hole_radius=0.0)


class TestElementMatrices:
    def test_quad_stiffness_nullity(self):
        k0, _ = element_matrices("quad4", Material(), 0.02)
        assert np.sum(np.abs(np.linalg.eigvalsh(k0)) < 1e-9 * np.abs(k0).max()) == 3

    def test_hex_stiffness_nullity(self):
        k0, _ = element_matrices("hex8", Material(), 0.01)
        assert np.sum(np.abs(np.linalg.eigvalsh(k0)) < 1e-9 * np.abs(k0).max()) == 6

    def test_quad_matches_analytic_element(self):
        nu = 0.33
        t = 0.01
        k0, _ = element_matrices("quad4", Material(nu=nu, thickness=t), 0.5)
        got = np.sort(np.linalg.eigvalsh(k0 / t))
        want = np.sort(np.linalg.eigvalsh(top88_ke(nu)))
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_quad_mass_total(self):
        _, m0 = element_matrices("quad4", Material(rho=7850.0, thickness=0.01), 1.0)
        assert m0[0::2, 0::2].sum() == pytest.approx(78.5)
        assert m0[1::2, 1::2].sum() == pytest.approx(78.5)

    def test_quad_mass_matches_closed_form(self):
        rho, t, a = 7850.0, 0.01, 0.25
        _, m0 = element_matrices("quad4", Material(rho=rho, thickness=t), a)
        ring = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]], float)
        want = rho * t * a**2 / 36.0 * np.kron(ring, np.eye(2))
        assert m0 == pytest.approx(want, rel=1e-12)

    def test_hex_mass_total(self):
        rho, a = 7850.0, 0.01
        _, m0 = element_matrices("hex8", Material(rho=rho), a)
        assert m0[0::3, 0::3].sum() == pytest.approx(rho * a**3)
        assert m0.sum() == pytest.approx(3 * rho * a**3)

    def test_mass_spd(self):
        _, m0 = element_matrices("quad4", Material(), 0.1)
        assert np.linalg.eigvalsh(m0).min() > 0


class TestAssembly:
    def test_full_solid_matches_dense_oracle(self):
        mesh, mat, _ = small_cantilever()
        k0, _ = element_matrices("quad4", mat, mesh.elem_size)
        b = uniform_density(mesh, 1.0)
        K = assemble_K(mesh, mat, b, p=3.0, p0=8.0)
        _, want = dense_assembly(mesh, k0, np.full(mesh.n_elems, mat.e0))
        assert np.abs(K.to_dense() - want).max() <= 1e-12 * np.abs(want).max()

    def test_void_floor_scaling(self):
        mesh, mat, _ = small_cantilever()
        k0, _ = element_matrices("quad4", mat, mesh.elem_size)
        b = DensityField(np.full(mesh.n_elems, 1e-12), b_min=1e-12)
        K = assemble_K(mesh, mat, b, p=3.0, p0=8.0)
        _, solid = dense_assembly(mesh, k0, np.full(mesh.n_elems, mat.e0))
        want = (mat.e_min / mat.e0) * solid
        assert np.abs(K.to_dense() - want).max() <= 1e-9 * np.abs(want).max()

    def test_single_element(self):
        mesh = grid_mesh_2d(1, 1, 1.0, fixed_dofs=[0, 1, 6, 7])
        mat = Material()
        k0, _ = element_matrices("quad4", mat, 1.0)
        b = DensityField(np.array([0.5]))
        K = assemble_K(mesh, mat, b, p=3.0, p0=8.0)
        e = materials.interpolate_stiffness(0.5, 3.0, 8.0, mat.e0, mat.e_min)
        local = [list(mesh.edof[0]).index(g) for g in mesh.free_dofs]
        want = e * k0[np.ix_(local, local)]
        assert np.abs(K.to_dense() - want).max() <= 1e-12 * np.abs(want).max()

    def test_mass_against_dense_oracle_and_total(self):
        mesh, mat, _ = small_cantilever()
        _, m0 = element_matrices("quad4", mat, mesh.elem_size)
        rng = np.random.default_rng(2)
        vals = rng.uniform(1e-3, 1.0, mesh.n_elems)
        b = DensityField(vals)
        p0 = 6.0
        M = assemble_M(mesh, mat, b, p0=p0)
        v = materials.volume_measure(vals, p0)
        Afull, want = dense_assembly(mesh, m0, v)
        assert np.abs(M.to_dense() - want).max() <= 1e-12 * np.abs(want).max()
        total = mat.rho * mat.thickness * mesh.elem_volume * v.sum()
        got_total = Afull[0::2, 0::2].sum()
        assert got_total == pytest.approx(total, rel=1e-12)

    def test_all_zero_density_gives_zero_mass(self):
        mesh, mat, _ = small_cantilever()
        b = DensityField(np.full(mesh.n_elems, 1e-15), b_min=1e-15)
        M = assemble_M(mesh, mat, b, p0=8.0)
        assert np.abs(M.to_dense()).max() <= 1e-12 * mat.rho

    def test_linearity_in_moduli(self):
        mesh, mat, _ = small_cantilever()
        rng = np.random.default_rng(3)
        b = DensityField(rng.uniform(1e-3, 1.0, mesh.n_elems))
        K1 = assemble_K(mesh, mat, b, p=2.0, p0=4.0)
        mat2 = Material(e0=3.0 * mat.e0, e_min=3.0 * mat.e_min,
                        nu=mat.nu, rho=mat.rho, thickness=mat.thickness)
        K2 = assemble_K(mesh, mat2, b, p=2.0, p0=4.0)
        assert K2.to_dense() == pytest.approx(3.0 * K1.to_dense(), rel=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=10)
    def test_stiffness_spd_for_any_density(self, seed):
        mesh, mat, _ = small_cantilever()
        rng = np.random.default_rng(seed)
        b = DensityField(rng.uniform(1e-3, 1.0, mesh.n_elems))
        K = assemble_K(mesh, mat, b, p=3.0, p0=8.0)
        sparse.factor_spd(K)  # raises on a non-SPD assembly


class TestForceAt:
    def test_sine_starts_at_zero(self):
        mesh, _, program = small_cantilever()
        assert np.all(force_at(program, 0.0, mesh.h) == 0.0)

    def test_point_load_hits_single_dof(self):
        mesh, _, program = small_cantilever()
        t = 0.005
        f = force_at(program, t, mesh.h)
        dofs = [pl.dof for pl in program.point_loads]
        assert np.count_nonzero(f) == len(dofs)
        for pl in program.point_loads:
            assert f[pl.dof] == pytest.approx(pl.value(t))

    def test_bridge_full_footprint_total(self):
        mesh, _, program = build_case("bridge", nelx=20, nely=9)
        mv = program.moving
        t = (mv.length + 10.0) / mv.speed  # footprint well inside the deck
        f = force_at(program, t, mesh.h)
        assert f.sum() == pytest.approx(-100e3, rel=1e-12)

    def test_bridge_past_traverse_is_zero(self):
        mesh, _, program = build_case("bridge", nelx=20, nely=9)
        mv = program.moving
        t_leave = (30.0 + mv.length) / mv.speed
        f = force_at(program, min(t_leave * 1.01, program.t_end), mesh.h)
        assert np.all(f == 0.0)

    def test_bridge_partial_coverage(self):
        mesh, _, program = build_case("bridge", nelx=20, nely=9)
        mv = program.moving
        t = 2.0 / mv.speed  # only 2 m of the 5 m footprint entered
        f = force_at(program, t, mesh.h)
        q = mv.total_force / mv.length
        assert f.sum() == pytest.approx(q * 2.0, rel=1e-9)

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=30)
    def test_moving_total_force_invariant(self, frac):
        mesh, _, program = build_case("bridge", nelx=20, nely=9)
        mv = program.moving
        # times with the footprint fully on the deck
        t0 = mv.length / mv.speed
        t1 = 30.0 / mv.speed
        t = t0 + frac * (t1 - t0)
        f = force_at(program, t, mesh.h)
        assert f.sum() == pytest.approx(mv.total_force, rel=1e-9)

    def test_time_out_of_range(self):
        mesh, _, program = small_cantilever()
        with pytest.raises(ValueError):
            force_at(program, program.t_end * 1.01, mesh.h)
        with pytest.raises(ValueError):
            force_at(program, -0.01, mesh.h)

    def test_peak_static_force(self):
        mesh, _, program = small_cantilever()
        f = peak_static_force(program, mesh.h)
        assert f.sum() == pytest.approx(-2000.0)


class TestBuildCase:
    def test_bridge_spans_domain(self):
        mesh, _, _ = build_case("bridge")
        assert mesh.coords[:, 0].max() == pytest.approx(30.0)
        assert mesh.coords[:, 1].max() == pytest.approx(13.5)

    def test_cantilever_counts_and_boundary(self):
        mesh, _, _ = build_case("cantilever_hole", nelx=100, nely=50)
        assert mesh.n_elems == 5000
        left_dofs = np.concatenate([2 * np.arange(51), 2 * np.arange(51) + 1])
        assert np.array_equal(np.sort(mesh.fixed_dofs), np.sort(left_dofs))
        assert mesh.passive_void.sum() > 0

    def test_box3d_determinism(self):
        _, _, p1 = build_case("box3d", seed=7)
        _, _, p2 = build_case("box3d", seed=7)
        assert np.array_equal(p1.random.values, p2.random.values)
        assert np.array_equal(p1.random.weights, p2.random.weights)
        _, _, p3 = build_case("box3d", seed=8)
        assert not np.array_equal(p1.random.values, p3.random.values)

    def test_box3d_starts_at_rest(self):
        mesh, _, program = build_case("box3d", nelx=4, nely=3, nelz=3,
                                      size_x=0.04, size_y=0.03, size_z=0.03)
        assert np.all(force_at(program, 0.0, mesh.h) == 0.0)
        assert np.any(force_at(program, program.dt, mesh.h) != 0.0)

    def test_hole_outside_domain(self):
        with pytest.raises(ValueError, match="outside"):
            build_case("cantilever_hole", hole_center=(1.95, 0.5))

    def test_hole_too_coarse(self):
        with pytest.raises(ValueError, match="coarse"):
            build_case("cantilever_hole", nelx=8, nely=4)

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            build_case("nope")


class TestDensityField:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            DensityField(np.array([0.0, 0.5]), b_min=1e-3)
        with pytest.raises(ValueError):
            DensityField(np.array([0.5, 1.2]), b_min=1e-3)

    def test_uniform_density_pins_passives(self):
        mesh, _, _ = build_case("cantilever_hole", nelx=20, nely=10)
        b = uniform_density(mesh, 0.5)
        assert np.all(b.values[mesh.passive_void] == b.b_min)
        assert np.all(b.values[~mesh.passive_void] == 0.5)
