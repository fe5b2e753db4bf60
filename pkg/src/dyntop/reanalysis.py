"""Reduced-basis transient reanalysis on a frozen baseline factorization.

A Baseline freezes the effective stiffness of a reference design together
with its triangular factorization.  Modified designs are then solved
approximately: a small basis is generated by a series recurrence that only
needs baseline solves, the equilibrium is Galerkin-projected onto it, and
the basis is rebuilt online whenever the effective load moves by more than
a threshold.  Between optimization iterations the baseline itself is
refreshed once the design drifts past a structural-change tolerance, so no
factorization ever happens inside the time loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .materials import MaterialInterp, interpolate_stiffness
from .newmark import (
    DampingSpec,
    NewmarkParams,
    SnapshotMatrix,
    TransientState,
    effective_load,
    update_kinematics,
)
from .sparse import (
    Factorization,
    SparseSymMatrix,
    factor_spd,
    lincomb,
    matvec,
    solve,
)

DROP_RTOL = 1e-12  # basis vectors below this fraction of the seed are dropped


ALTERATION_METRICS = ("component", "norm")


@dataclass(frozen=True)
class ReanalysisConfig:
    """Basis size and the two online thresholds.

    The load-alteration trigger defaults to the componentwise relative
    change (with a floor guarding near-zero components).  The aggregate
    2-norm variant is available but lets the basis go stale between
    rebuilds: projection errors then feed back through the kinematic
    recursion and wreck the trajectory, so it is not the default.
    """

    s: int = 3
    tol_f: float = 0.1
    tol_rb: float = 0.01
    alteration_metric: str = "component"
    compare_to_baseline: bool = False  # structural change vs baseline design
                                       # instead of the previous iteration

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("need at least one basis vector")
        if self.tol_f < 0.0 or self.tol_rb <= 0.0:
            raise ValueError("thresholds must be positive (tol_f may be zero)")
        if self.alteration_metric not in ALTERATION_METRICS:
            raise ValueError(f"unknown alteration metric {self.alteration_metric!r}")


@dataclass(frozen=True)
class Baseline:
    """Effective stiffness of the reference design plus its factorization."""

    khat0: SparseSymMatrix
    factorization: Factorization
    density: np.ndarray
    c0: float


def make_baseline(khat0: SparseSymMatrix, density: np.ndarray, c0: float) -> Baseline:
    """Factor the reference effective stiffness (the one expensive step)."""
    fac = factor_spd(khat0)
    probe = matvec(khat0, np.ones(khat0.h))
    if np.any(probe):
        residual = np.linalg.norm(matvec(khat0, solve(fac, probe)) - probe)
        if residual > 1e-8 * np.linalg.norm(probe):
            raise RuntimeError("baseline factorization failed its residual check")
    return Baseline(khat0=khat0, factorization=fac,
                    density=np.asarray(density, dtype=float).copy(), c0=float(c0))


@dataclass(frozen=True)
class ReducedBasis:
    """Orthonormal basis with its projected effective stiffness."""

    vectors: np.ndarray            # (h, s_eff)
    reduced_stiffness: np.ndarray  # (s_eff, s_eff)
    built_at: int                  # interval index of (re)construction

    @property
    def s_eff(self) -> int:
        return self.vectors.shape[1]


def delta_effective_stiffness(K: SparseSymMatrix, M: SparseSymMatrix, c0: float,
                              baseline: Baseline,
                              C: SparseSymMatrix | None = None,
                              c1: float = 0.0) -> SparseSymMatrix:
    """Change of the effective stiffness relative to the baseline."""
    if K.h != baseline.khat0.h:
        raise ValueError("dimension mismatch against the baseline")
    terms = [(1.0, K), (c0, M)]
    if C is not None:
        terms.append((c1, C))
    terms.append((-1.0, baseline.khat0))
    return lincomb(terms)


def build_basis(baseline: Baseline, delta_khat: SparseSymMatrix,
                fhat: np.ndarray, s: int, built_at: int = 0) -> ReducedBasis:
    """Series recurrence seeded by the baseline solve, then orthonormalized.

    Near-dependent vectors are dropped, so the effective basis size may
    shrink (down to 1 when the structural modification vanishes).
    """
    fhat = np.asarray(fhat, dtype=float)
    if not np.any(fhat):
        raise ValueError("effective load is zero; no basis can be built")
    r = solve(baseline.factorization, fhat)
    raw = [r]
    for _ in range(1, s):
        r = -solve(baseline.factorization, matvec(delta_khat, r))
        raw.append(r)

    tau = DROP_RTOL * np.linalg.norm(raw[0])
    columns = []
    for r in raw:
        w = r.copy()
        for q in columns:  # modified Gram-Schmidt, two passes
            w -= (q @ w) * q
        for q in columns:
            w -= (q @ w) * q
        norm = np.linalg.norm(w)
        if norm > tau:
            columns.append(w / norm)
    vectors = np.column_stack(columns)

    projected = np.column_stack([
        matvec(baseline.khat0, q) + matvec(delta_khat, q) for q in columns
    ])
    kr = vectors.T @ projected
    kr = 0.5 * (kr + kr.T)
    return ReducedBasis(vectors=vectors, reduced_stiffness=kr, built_at=built_at)


def reduced_solve(basis: ReducedBasis, fhat: np.ndarray) -> np.ndarray:
    """Galerkin solution of the effective equilibrium in the basis span."""
    fr = basis.vectors.T @ np.asarray(fhat, dtype=float)
    try:
        lam = np.linalg.solve(basis.reduced_stiffness, fr)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(
            "reduced stiffness is singular (degenerate basis); rebuild it"
        ) from err
    return basis.vectors @ lam


def load_alteration(f_curr: np.ndarray, f_prev: np.ndarray,
                    metric: str = "component") -> float:
    """Relative change of the effective load between intervals.

    "component": largest componentwise ratio, with components below
    1e-8 of the peak floored so the measure stays defined across zero
    crossings.  "norm": aggregate 2-norm ratio.  An all-zero previous
    load returns +inf (forces a rebuild).
    """
    f_curr = np.asarray(f_curr, dtype=float)
    f_prev = np.asarray(f_prev, dtype=float)
    if metric == "norm":
        denom = np.linalg.norm(f_prev)
        if denom == 0.0:
            return np.inf
        return float(np.linalg.norm(f_curr - f_prev) / denom)
    scale = np.abs(f_prev).max()
    if scale == 0.0:
        return np.inf
    denom = np.maximum(np.abs(f_prev), 1e-8 * scale)
    return float((np.abs(f_curr - f_prev) / denom).max())


def structural_change(b_prev: np.ndarray, b_curr: np.ndarray,
                      interp: MaterialInterp,
                      interp_prev: MaterialInterp | None = None) -> float:
    """Largest relative change of the interpolated element moduli.

    Element stiffness scales linearly in the modulus, so this equals the
    max entrywise stiffness-matrix change over single-element-supported
    entries.  ``interp_prev`` lets the caller account for a penalization
    schedule step between the two designs.
    """
    prev = interp_prev or interp
    e_prev = interpolate_stiffness(b_prev, prev.p, prev.p0, prev.e0, prev.e_min,
                                   prev.law)
    e_curr = interpolate_stiffness(b_curr, interp.p, interp.p0, interp.e0,
                                   interp.e_min, interp.law)
    return float(np.max(np.abs(e_curr - e_prev) / e_prev))


def maybe_refresh_baseline(baseline: Baseline, b_prev: np.ndarray,
                           b_curr: np.ndarray, interp: MaterialInterp,
                           tol_rb: float, make_baseline_fn,
                           interp_prev: MaterialInterp | None = None,
                           compare_to_baseline: bool = False):
    """Refresh (reassemble + refactor) the baseline when the design moved.

    Returns (baseline, refreshed, change).  The change is measured between
    successive designs by default; ``compare_to_baseline`` switches the
    reference to the design the current baseline was built from.
    """
    ref = baseline.density if compare_to_baseline else np.asarray(b_prev, float)
    change = structural_change(ref, b_curr, interp, interp_prev)
    if change > tol_rb:
        return make_baseline_fn(b_curr), True, change
    return baseline, False, change


@dataclass
class ReducedStats:
    """Bookkeeping for one reduced transient solve."""

    rebuilds: int = 0
    rebuild_intervals: list = field(default_factory=list)
    s_eff: list = field(default_factory=list)
    full_factorizations: int = 0  # stays 0: the time loop never factors


def solve_transient_reduced(baseline: Baseline, K: SparseSymMatrix,
                            M: SparseSymMatrix, load, params: NewmarkParams,
                            config: ReanalysisConfig,
                            damping: DampingSpec | None = None):
    """Time marching with basis solves only; no factorization inside.

    Starts from rest and requires the load to vanish at t = 0 (true for
    all presets); anything else would need a mass solve for the initial
    acceleration, which this path deliberately avoids.
    """
    from .newmark import _force_provider  # shared load dispatch

    h = K.h
    damping = damping or DampingSpec()
    C = damping.build(K, M)
    c = params.coeffs
    dkhat = delta_effective_stiffness(K, M, c[0], baseline, C, c[1])
    force = _force_provider(load, h)

    if np.any(force(0.0)):
        raise ValueError("reduced transient solve requires a load that "
                         "vanishes at t = 0")

    state = TransientState.rest(h)
    stats = ReducedStats()
    basis = None
    prev_fhat = None
    U = np.empty((h, params.steps))
    times = params.dt * np.arange(1, params.steps + 1)
    for i, t in enumerate(times):
        fhat = effective_load(state, force(t), M, C, params)
        if not np.any(fhat):
            # nothing drives the structure yet; response stays at rest
            state = update_kinematics(state, np.zeros(h), params)
            U[:, i] = 0.0
            prev_fhat = fhat
            continue
        if (basis is None
                or load_alteration(fhat, prev_fhat,
                                   config.alteration_metric) > config.tol_f):
            basis = build_basis(baseline, dkhat, fhat, config.s, built_at=i + 1)
            stats.rebuilds += 1
            stats.rebuild_intervals.append(i + 1)
            stats.s_eff.append(basis.s_eff)
        d_new = reduced_solve(basis, fhat)
        state = update_kinematics(state, d_new, params)
        if not np.all(np.isfinite(state.d)):
            raise RuntimeError(f"non-finite response at interval {i + 1}")
        U[:, i] = state.d
        prev_fhat = fhat
    return SnapshotMatrix(U, times), stats
