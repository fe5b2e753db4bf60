import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyntop import sparse
from dyntop.model import assemble_K, assemble_M, build_case, uniform_density
from dyntop.newmark import (
    NewmarkParams,
    TransientState,
    effective_stiffness,
    solve_transient,
    step,
)
from dyntop.pod import (
    EslSet,
    build_esl,
    compute_pod,
    exact_esl,
    pod_decompose,
    select_mode_count,
)
from dyntop.sparse import assemble, factor_spd, matvec, solve


def sym(dense):
    dense = np.asarray(dense, dtype=float)
    h = dense.shape[0]
    rows, cols = np.tril_indices(h)
    vals = dense[rows, cols]
    keep = vals != 0.0
    return assemble(rows[keep], cols[keep], vals[keep], h)


class TestDecompose:
    def test_rank_one(self):
        w = np.array([3.0, 0.0, -4.0])
        c = np.array([1.0, 2.0, -1.0, 0.5])
        U = np.outer(w, c)
        modes, svals, right = pod_decompose(U)
        assert svals[1:] == pytest.approx(np.zeros(2), abs=1e-12 * svals[0])
        # sign fix: largest-magnitude component positive
        want = w / np.linalg.norm(w)
        if want[np.argmax(np.abs(want))] < 0:
            want = -want
        assert modes[:, 0] == pytest.approx(want)

    def test_reconstruction(self):
        rng = np.random.default_rng(1)
        U = rng.normal(size=(9, 5))
        modes, svals, right = pod_decompose(U)
        back = modes @ np.diag(svals) @ right
        assert np.linalg.norm(back - U) <= 1e-8 * np.linalg.norm(U)

    def test_against_gram_eigendecomposition(self):
        rng = np.random.default_rng(4)
        U = rng.normal(size=(6, 4))
        _, svals, _ = pod_decompose(U)
        eig = np.sort(np.linalg.eigvalsh(U.T @ U))[::-1]
        assert svals**2 == pytest.approx(eig, rel=1e-10, abs=1e-12)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            pod_decompose(np.zeros((3, 2)))

    def test_sign_determinism(self):
        rng = np.random.default_rng(5)
        U = rng.normal(size=(8, 6))
        m1, _, _ = pod_decompose(U)
        m2, _, _ = pod_decompose(U.copy())
        assert np.array_equal(m1, m2)
        for j in range(m1.shape[1]):
            assert m1[np.argmax(np.abs(m1[:, j])), j] > 0


class TestSelectModeCount:
    def test_ninety_percent(self):
        assert select_mode_count([10.0, 1.0, 0.1], 0.9) == 1

    def test_ninety_nine_percent(self):
        assert select_mode_count([10.0, 1.0, 0.1], 0.99) == 2

    def test_full_ratio_counts_significant_only(self):
        assert select_mode_count([10.0, 1.0, 0.1], 1.0) == 3
        assert select_mode_count([10.0, 1.0, 1e-18], 1.0) == 2

    def test_squared_convention(self):
        # squared: 100 / 101.01 = 0.990 -> one mode at 0.9, two at 0.995
        assert select_mode_count([10.0, 1.0, 0.1], 0.9, squared=True) == 1
        assert select_mode_count([10.0, 1.0, 0.1], 0.995, squared=True) == 2

    def test_invalid_ratio(self):
        with pytest.raises(ValueError):
            select_mode_count([1.0], 0.0)
        with pytest.raises(ValueError):
            select_mode_count([1.0], 1.5)

    @given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=12),
           st.floats(0.05, 1.0), st.floats(0.05, 1.0))
    @settings(max_examples=60)
    def test_monotone_in_ratio(self, values, eps_a, eps_b):
        svals = np.sort(np.asarray(values))[::-1]
        lo, hi = sorted([eps_a, eps_b])
        assert select_mode_count(svals, lo) <= select_mode_count(svals, hi)


class TestEsl:
    def test_definitional_round_trip(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(7, 7))
        K = sym(A @ A.T + 7 * np.eye(7))
        rng2 = np.random.default_rng(3)
        U = rng2.normal(size=(7, 4))
        modes, _, _ = pod_decompose(U)
        esl = build_esl(K, modes[:, :2])
        fac = factor_spd(K)
        for j in range(2):
            d = solve(fac, esl.loads[:, j])
            assert d == pytest.approx(modes[:, j], rel=1e-8, abs=1e-10)

    def test_identity_stiffness(self):
        K = sym(np.eye(5))
        rng = np.random.default_rng(6)
        modes, _, _ = pod_decompose(rng.normal(size=(5, 3)))
        esl = build_esl(K, modes)
        assert esl.loads == pytest.approx(modes)

    def test_single_static_snapshot_round_trip(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(6, 6))
        K = sym(A @ A.T + 6 * np.eye(6))
        fac = factor_spd(K)
        f = rng.normal(size=6)
        d = solve(fac, f)
        basis = compute_pod(d[:, None], energy_ratio=0.9)
        assert basis.m == 1
        esl = build_esl(K, basis.modes)
        d_back = solve(fac, esl.loads[:, 0]) * np.linalg.norm(d)
        sign = np.sign(d @ d_back)
        assert sign * d_back == pytest.approx(d, rel=1e-8)

    def test_exact_esl_count_and_zero(self):
        K = sym(np.eye(4))
        U = np.zeros((4, 6))
        esl = exact_esl(K, U)
        assert esl.count == 6
        assert not np.any(esl.loads)

    def test_exact_esl_residual_identity(self):
        # f_i = K d_i must equal F(t_i) - M a_i for the stepped solution
        mesh, mat, program = build_case("cantilever_hole", nelx=20, nely=10,
                                        hole_radius=0.0)
        b = uniform_density(mesh, 0.5)
        K = assemble_K(mesh, mat, b, p=3.0, p0=8.0)
        M = assemble_M(mesh, mat, b, p0=8.0)
        params = NewmarkParams.for_program(program)
        khat = factor_spd(effective_stiffness(K, M, None, params))
        from dyntop.model import force_at

        state = TransientState.rest(mesh.h)
        D, Amat, F = [], [], []
        for i in range(1, params.steps + 1):
            f = force_at(program, i * params.dt, mesh.h)
            state = step(state, f, khat, M, None, params)
            D.append(state.d.copy())
            Amat.append(state.a.copy())
            F.append(f)
        U = np.column_stack(D)
        esl = exact_esl(K, U)
        scale = np.abs(esl.loads).max()
        for i in range(params.steps):
            want = F[i] - matvec(M, Amat[i])
            assert np.abs(esl.loads[:, i] - want).max() <= 1e-6 * scale


class TestEnergyIdentity:
    @given(st.integers(2, 10), st.integers(1, 8), st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_best_rank_m_error(self, h, l, seed):
        rng = np.random.default_rng(seed)
        U = rng.normal(size=(h, l))
        modes, svals, _ = pod_decompose(U)
        m = min(2, modes.shape[1])
        phi = modes[:, :m]
        err2 = np.linalg.norm(U - phi @ (phi.T @ U), "fro") ** 2
        want = np.sum(svals[m:] ** 2)
        assert err2 == pytest.approx(want, rel=1e-8, abs=1e-10 * svals[0] ** 2)


def test_transient_modes_far_fewer_than_intervals():
    mesh, mat, program = build_case("cantilever_hole", nelx=20, nely=10,
                                    hole_radius=0.0)
    b = uniform_density(mesh, 0.5)
    K = assemble_K(mesh, mat, b, p=3.0, p0=8.0)
    M = assemble_M(mesh, mat, b, p0=8.0)
    snap = solve_transient(K, M, None, program, NewmarkParams.for_program(program))
    basis = compute_pod(snap.U, energy_ratio=0.9)
    assert basis.m < snap.intervals
    assert basis.m >= 1
