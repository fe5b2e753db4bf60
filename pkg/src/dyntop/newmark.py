"""Implicit transient solver with the average-acceleration scheme.

This is both the production full-order path and the correctness oracle the
reduced reanalysis path is measured against.  One factorization of the
effective stiffness serves the whole time loop; loads may come from a
LoadProgram or any callable ``t -> force vector``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LoadProgram, force_at
from .sparse import (
    Factorization,
    SparseSymMatrix,
    factor_spd,
    lincomb,
    matvec,
    solve,
)


def newmark_coefficients(alpha: float, beta: float, dt: float):
    """The eight integration constants c0..c7."""
    if alpha <= 0.0 or dt <= 0.0:
        raise ValueError("need alpha > 0 and dt > 0")
    c0 = 1.0 / (alpha * dt * dt)
    c1 = beta / (alpha * dt)
    c2 = 1.0 / (alpha * dt)
    c3 = 1.0 / (2.0 * alpha) - 1.0
    c4 = beta / alpha - 1.0
    c5 = dt * (beta / (2.0 * alpha) - 1.0)
    c6 = dt * (1.0 - beta)
    c7 = beta * dt
    return c0, c1, c2, c3, c4, c5, c6, c7


@dataclass(frozen=True)
class NewmarkParams:
    """Time grid and scheme constants (defaults: unconditionally stable)."""

    dt: float
    steps: int
    alpha: float = 0.25
    beta: float = 0.5

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one time interval")
        newmark_coefficients(self.alpha, self.beta, self.dt)  # validates

    @property
    def coeffs(self):
        return newmark_coefficients(self.alpha, self.beta, self.dt)

    @property
    def t_end(self) -> float:
        return self.dt * self.steps

    @classmethod
    def for_program(cls, program: LoadProgram, alpha=0.25, beta=0.5):
        return cls(dt=program.dt, steps=program.intervals, alpha=alpha, beta=beta)


@dataclass(frozen=True)
class DampingSpec:
    """Rayleigh damping C = mass_coeff * M + stiff_coeff * K."""

    mass_coeff: float = 0.0
    stiff_coeff: float = 0.0

    def __post_init__(self):
        if self.mass_coeff < 0.0 or self.stiff_coeff < 0.0:
            raise ValueError("Rayleigh coefficients must be >= 0")

    @property
    def is_zero(self) -> bool:
        return self.mass_coeff == 0.0 and self.stiff_coeff == 0.0

    def build(self, K: SparseSymMatrix, M: SparseSymMatrix):
        if self.is_zero:
            return None
        return lincomb([(self.mass_coeff, M), (self.stiff_coeff, K)])


@dataclass
class TransientState:
    d: np.ndarray
    v: np.ndarray
    a: np.ndarray
    index: int = 0

    @classmethod
    def rest(cls, h: int):
        return cls(np.zeros(h), np.zeros(h), np.zeros(h), 0)


@dataclass(frozen=True)
class SnapshotMatrix:
    """Column-stacked displacement history, one column per time interval."""

    U: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        if self.U.shape[1] != self.times.shape[0]:
            raise ValueError("column count must equal interval count")

    @property
    def h(self):
        return self.U.shape[0]

    @property
    def intervals(self):
        return self.U.shape[1]

    def save_csv(self, path) -> None:
        np.savetxt(path, self.U, delimiter=",")


def load_snapshot_csv(path, t_end: float) -> SnapshotMatrix:
    U = np.loadtxt(path, delimiter=",", ndmin=2)
    l = U.shape[1]
    return SnapshotMatrix(U, t_end / l * np.arange(1, l + 1))


def effective_stiffness(K: SparseSymMatrix, M: SparseSymMatrix,
                        C: SparseSymMatrix | None, params: NewmarkParams):
    c = params.coeffs
    terms = [(1.0, K), (c[0], M)]
    if C is not None:
        terms.append((c[1], C))
    return lincomb(terms)


def initial_acceleration(M: SparseSymMatrix, C: SparseSymMatrix | None,
                         K: SparseSymMatrix, d0, v0, f0) -> np.ndarray:
    """Acceleration consistent with the balance at t = 0.

    When the initial residual vanishes (rest start under a load that is
    zero at t = 0, the default for all presets) no mass solve is needed
    and no factorization happens.
    """
    r = np.asarray(f0, dtype=float) - matvec(K, d0)
    if C is not None:
        r -= matvec(C, v0)
    if not np.any(r):
        return np.zeros(M.h)
    return solve(factor_spd(M), r)


def _force_provider(load, h: int):
    if callable(load):
        return lambda t: np.asarray(load(t), dtype=float)
    return lambda t: force_at(load, t, h)


def step(state: TransientState, f_ext: np.ndarray, khat: Factorization,
         M: SparseSymMatrix, C: SparseSymMatrix | None,
         params: NewmarkParams) -> TransientState:
    """Advance one interval: effective load, solve, update kinematics."""
    fhat = effective_load(state, f_ext, M, C, params)
    return update_kinematics(state, solve(khat, fhat), params)


def effective_load(state: TransientState, f_ext: np.ndarray,
                   M: SparseSymMatrix, C: SparseSymMatrix | None,
                   params: NewmarkParams) -> np.ndarray:
    """The right-hand side the displacement solve sees at the next interval."""
    c0, c1, c2, c3, c4, c5, _, _ = params.coeffs
    fhat = f_ext + matvec(M, c0 * state.d + c2 * state.v + c3 * state.a)
    if C is not None:
        fhat += matvec(C, c1 * state.d + c4 * state.v + c5 * state.a)
    return fhat


def update_kinematics(state: TransientState, d_new: np.ndarray,
                      params: NewmarkParams) -> TransientState:
    c0, _, c2, c3, _, _, c6, c7 = params.coeffs
    a_new = c0 * (d_new - state.d) - c2 * state.v - c3 * state.a
    v_new = state.v + c6 * state.a + c7 * a_new
    return TransientState(d_new, v_new, a_new, state.index + 1)


def solve_transient(K: SparseSymMatrix, M: SparseSymMatrix,
                    damping: DampingSpec | None, load, params: NewmarkParams,
                    d0=None, v0=None) -> SnapshotMatrix:
    """Full-order time marching; factorizes the effective stiffness once."""
    h = K.h
    damping = damping or DampingSpec()
    C = damping.build(K, M)
    force = _force_provider(load, h)

    d = np.zeros(h) if d0 is None else np.asarray(d0, dtype=float).copy()
    v = np.zeros(h) if v0 is None else np.asarray(v0, dtype=float).copy()
    a = initial_acceleration(M, C, K, d, v, force(0.0))
    state = TransientState(d, v, a, 0)

    khat = factor_spd(effective_stiffness(K, M, C, params))
    U = np.empty((h, params.steps))
    times = params.dt * np.arange(1, params.steps + 1)
    for i, t in enumerate(times):
        state = step(state, force(t), khat, M, C, params)
        if not np.all(np.isfinite(state.d)):
            raise RuntimeError(f"non-finite response at interval {i + 1}")
        U[:, i] = state.d
    return SnapshotMatrix(U, times)
