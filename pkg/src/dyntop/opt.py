"""Multi-load compliance optimization: objective, sensitivities, OC updates.

The inner loop minimizes the summed compliance of a set of static loads
under a volume constraint measured on the projected element volumes.  One
factorization per inner iteration serves all load cases.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate

from .materials import (
    LAWS,
    MaterialInterp,
    interpolate_stiffness,
    interpolate_stiffness_grad,
    volume_measure,
    volume_measure_grad,
)
from .model import DensityField, Material, Mesh, assemble_K, element_matrices, pin_passive
from .pod import EslSet
from .sparse import factor_spd, solve

# piecewise-constant ramp: gentle penalization early, full sharpness from
# iteration 50 on
DEFAULT_SCHEDULE = ((1, 1.0, 1.0), (17, 2.0, 4.0), (50, 3.0, 8.0))


@dataclass(frozen=True)
class OptConfig:
    """Inner-loop knobs: volume target, OC constants, filter, stopping."""

    volume_fraction: float = 0.5
    b_min: float = 1e-3
    move: float = 0.2
    damping_exponent: float = 0.5
    filter_radius: float = 1.5  # in element widths; 0 disables
    max_inner: int = 20
    inner_tol: float = 1e-3
    schedule: tuple = DEFAULT_SCHEDULE
    interp_law: str = "projected"

    def __post_init__(self):
        if not 0.0 < self.volume_fraction < 1.0:
            raise ValueError("volume fraction must lie in (0, 1)")
        if not 0.0 < self.move <= 0.5:
            raise ValueError("move limit must lie in (0, 0.5]")
        if self.filter_radius < 0.0:
            raise ValueError("filter radius must be >= 0")
        if self.max_inner < 1 or self.inner_tol <= 0.0:
            raise ValueError("need max_inner >= 1 and inner_tol > 0")
        if self.interp_law not in LAWS:
            raise ValueError(f"unknown interpolation law {self.interp_law!r}")
        starts = [row[0] for row in self.schedule]
        ps = [row[1] for row in self.schedule]
        p0s = [row[2] for row in self.schedule]
        if starts != sorted(starts) or starts[0] != 1:
            raise ValueError("schedule must start at iteration 1 and be sorted")
        if ps != sorted(ps) or p0s != sorted(p0s):
            raise ValueError("schedule must be non-decreasing in both factors")


def penalization_schedule(k: int, schedule=DEFAULT_SCHEDULE):
    """Penalization pair (p, p0) for outer iteration k (1-based)."""
    if k < 1:
        raise ValueError("outer iteration index is 1-based")
    p, p0 = schedule[0][1], schedule[0][2]
    for start, pk, p0k in schedule:
        if k >= start:
            p, p0 = pk, p0k
    return float(p), float(p0)


@dataclass
class Objective:
    """Summed compliance with its design gradient."""

    total: float
    per_load: np.ndarray
    gradient: np.ndarray         # d(compliance)/db, <= 0
    volume_gradient: np.ndarray  # d(projected volume)/db, element volume included


def compliance_and_sensitivity(mesh: Mesh, material: Material,
                               density: DensityField, interp: MaterialInterp,
                               displacements: np.ndarray) -> Objective:
    """Compliance of the given per-load displacement columns.

    Loads are treated as design-independent: the gradient contains only the
    element-stiffness term, which is the standard equivalent-static-load
    assumption.
    """
    disp = np.asarray(displacements, dtype=float)
    if disp.ndim == 1:
        disp = disp[:, None]
    if disp.shape[0] != mesh.h:
        raise ValueError("displacement length does not match free DOFs")

    k0, _ = element_matrices(mesh.etype, material, mesh.elem_size)
    b = density.values
    e = interpolate_stiffness(b, interp.p, interp.p0, interp.e0, interp.e_min,
                              interp.law)
    de = interpolate_stiffness_grad(b, interp.p, interp.p0, interp.e0,
                                    interp.e_min, interp.law)

    full = np.zeros(mesh.ndof_full)
    q_total = np.zeros(mesh.n_elems)
    per_load = np.empty(disp.shape[1])
    for u in range(disp.shape[1]):
        full[mesh.free_dofs] = disp[:, u]
        ue = full[mesh.edof]
        q = np.einsum("ei,ij,ej->e", ue, k0, ue)
        q_total += q
        per_load[u] = float(e @ q)
    gradient = -de * q_total
    vol_grad = mesh.elem_volume * volume_measure_grad(b, interp.p0, interp.law)
    return Objective(total=float(per_load.sum()), per_load=per_load,
                     gradient=gradient, volume_gradient=vol_grad)


def density_filter(values: np.ndarray, mesh: Mesh, radius: float) -> np.ndarray:
    """Normalized hat-kernel smoothing on the element grid; radius 0 = identity."""
    values = np.asarray(values, dtype=float)
    if radius <= 0.0:
        return values.copy()
    reach = int(np.ceil(radius - 1.0))
    if reach < 1:
        return values.copy()
    axes = [np.arange(-reach, reach + 1)] * mesh.dim
    grids = np.meshgrid(*axes, indexing="ij")
    dist = np.sqrt(sum(g.astype(float) ** 2 for g in grids))
    kernel = np.maximum(0.0, radius - dist)
    shape = mesh.grid_shape()
    arr = values.reshape(shape)
    weight = correlate(np.ones(shape), kernel, mode="constant")
    smoothed = correlate(arr, kernel, mode="constant") / weight
    return smoothed.ravel()


def _projected_volume(b, mesh: Mesh, interp: MaterialInterp) -> float:
    return float(mesh.elem_volume * volume_measure(b, interp.p0, interp.law).sum())


def oc_update(density: DensityField, gradient: np.ndarray,
              volume_gradient: np.ndarray, mesh: Mesh, config: OptConfig,
              interp: MaterialInterp) -> DensityField:
    """Optimality-criteria step with a bisected volume multiplier.

    The multiplier is bisected until the bracket collapses, so an iterate
    already at the optimality ratio is reproduced to machine precision;
    the projected volume matches the target to 1e-4 relative whenever the
    move limits make it reachable.
    """
    b = density.values
    dz = np.asarray(gradient, dtype=float).copy()
    dv = np.asarray(volume_gradient, dtype=float)
    passive = mesh.passive_void | mesh.passive_solid
    active = ~passive

    bad = dz > 0.0
    if np.any(bad & active):
        warnings.warn("positive compliance sensitivities clamped", stacklevel=2)
    dz[bad] = -1e-30

    target = config.volume_fraction * mesh.elem_volume * mesh.n_elems

    def candidate(lam):
        ratio = (-dz[active] / (dv[active] * lam)) ** config.damping_exponent
        step = b[active] * ratio
        step = np.clip(step, b[active] - config.move, b[active] + config.move)
        out = b.copy()
        out[active] = np.clip(step, config.b_min, 1.0)
        return pin_passive(out, mesh, config.b_min)

    def volume(vals):
        return _projected_volume(vals, mesh, interp)

    if not np.any(active):
        return DensityField(pin_passive(b, mesh, config.b_min), config.b_min)

    hi = max(float((-dz[active] / dv[active]).max()), 1e-30) * 2.0
    for _ in range(200):
        if volume(candidate(hi)) <= target:
            break
        hi *= 2.0
    else:
        warnings.warn("volume target unreachable within move limits", stacklevel=2)
        return DensityField(candidate(hi), config.b_min)
    if volume(candidate(1e-300)) < target:
        warnings.warn("volume target unreachable within move limits", stacklevel=2)
        return DensityField(candidate(1e-300), config.b_min)

    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break  # bracket collapsed to machine resolution
        if volume(candidate(mid)) > target:
            lo = mid
        else:
            hi = mid
    out = candidate(hi)  # upper end keeps the volume at or below the target
    residual = abs(volume(out) - target)
    if residual > 1e-4 * target:
        raise RuntimeError(
            f"volume bisection failed to converge (residual {residual:.3e})")
    return DensityField(out, config.b_min)


@dataclass
class InnerRecord:
    iteration: int
    compliance: float
    volume_fraction: float
    max_change: float


def static_topopt(mesh: Mesh, material: Material, esl: EslSet,
                  density: DensityField, config: OptConfig,
                  p: float, p0: float):
    """Inner compliance-minimization loop under a fixed load set.

    Per iteration: assemble, factor once, solve all load cases, evaluate
    the objective, smooth its gradient, OC-update.  Stops on the density
    change tolerance or the iteration cap.
    """
    interp = MaterialInterp(p=p, p0=p0, e0=material.e0, e_min=material.e_min,
                            law=config.interp_law)
    b = density.copy()
    history = []
    for it in range(1, config.max_inner + 1):
        K = assemble_K(mesh, material, b, p=p, p0=p0, law=config.interp_law)
        fac = factor_spd(K)
        disp = np.column_stack([solve(fac, esl.loads[:, j])
                                for j in range(esl.count)])
        obj = compliance_and_sensitivity(mesh, material, b, interp, disp)
        smoothed = density_filter(obj.gradient, mesh, config.filter_radius)
        b_new = oc_update(b, smoothed, obj.volume_gradient, mesh, config, interp)
        change = float(np.abs(b_new.values - b.values).max())
        history.append(InnerRecord(
            iteration=it, compliance=obj.total,
            volume_fraction=_projected_volume(b_new.values, mesh, interp)
            / (mesh.elem_volume * mesh.n_elems),
            max_change=change))
        b = b_new
        if change <= config.inner_tol:
            break
    return b, history
