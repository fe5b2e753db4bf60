"""Snapshot compression into orthogonal modes and equivalent static loads.

The displacement history is factored by a thin SVD; a handful of leading
modes selected by a singular-value energy ratio replaces the per-interval
snapshots, and each retained mode is turned into one equivalent static
load through the stiffness matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseSymMatrix, matvec

NEGLIGIBLE_RTOL = 1e-12  # singular values below this fraction of S1 are noise


@dataclass(frozen=True)
class PodBasis:
    """Selected orthonormal modes with the full singular spectrum."""

    modes: np.ndarray            # (h, m)
    singular_values: np.ndarray  # full, non-increasing
    m: int
    energy_ratio: float

    def __post_init__(self):
        if self.m != self.modes.shape[1]:
            raise ValueError("mode count does not match selected columns")


@dataclass(frozen=True)
class EslSet:
    """Equivalent static loads, one column per load case."""

    loads: np.ndarray  # (h, m)
    design_tag: int = 0

    @property
    def count(self) -> int:
        return self.loads.shape[1]


def pod_decompose(U):
    """Thin SVD of the snapshot matrix with deterministic mode signs.

    Returns (modes, singular_values, right_factors) so that
    ``U = modes @ diag(singular_values) @ right_factors``.  Mode signs are
    fixed by forcing the largest-magnitude component of each mode positive.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise ValueError("snapshot matrix must be 2-D")
    if not np.any(U):
        raise ValueError("snapshot matrix is all zero; nothing to decompose")
    modes, svals, right = np.linalg.svd(U, full_matrices=False)
    for j in range(modes.shape[1]):
        i = int(np.argmax(np.abs(modes[:, j])))
        if modes[i, j] < 0.0:
            modes[:, j] = -modes[:, j]
            right[j, :] = -right[j, :]
    return modes, svals, right


def select_mode_count(svals, energy_ratio: float, squared: bool = False) -> int:
    """Smallest m whose cumulative singular-value fraction reaches the ratio.

    Trailing values below NEGLIGIBLE_RTOL of the largest are excluded from
    the denominator (they are rank noise, not energy).
    """
    if not 0.0 < energy_ratio <= 1.0:
        raise ValueError(f"energy ratio out of (0, 1]: {energy_ratio}")
    svals = np.asarray(svals, dtype=float)
    if svals.size == 0 or svals[0] <= 0.0:
        raise ValueError("need at least one positive singular value")
    significant = svals[svals > NEGLIGIBLE_RTOL * svals[0]]
    weights = significant**2 if squared else significant
    cumulative = np.cumsum(weights) / weights.sum()
    return int(np.searchsorted(cumulative, energy_ratio - 1e-15) + 1)


def compute_pod(U, energy_ratio: float, squared: bool = False) -> PodBasis:
    """Decompose and truncate in one step."""
    modes, svals, _ = pod_decompose(U)
    m = select_mode_count(svals, energy_ratio, squared)
    return PodBasis(modes=modes[:, :m], singular_values=svals, m=m,
                    energy_ratio=float(energy_ratio))


def build_esl(K: SparseSymMatrix, modes: np.ndarray, design_tag: int = 0) -> EslSet:
    """One equivalent static load per retained mode: f_j = K phi_j."""
    modes = np.asarray(modes, dtype=float)
    if modes.ndim != 2 or modes.shape[0] != K.h:
        raise ValueError("mode matrix does not match the stiffness dimension")
    loads = np.column_stack([matvec(K, modes[:, j]) for j in range(modes.shape[1])])
    return EslSet(loads=loads, design_tag=design_tag)


def exact_esl(K: SparseSymMatrix, U, design_tag: int = 0) -> EslSet:
    """One load per time interval: the uncompressed reference set."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] != K.h:
        raise ValueError("snapshot matrix does not match the stiffness dimension")
    loads = np.column_stack([matvec(K, U[:, j]) for j in range(U.shape[1])])
    return EslSet(loads=loads, design_tag=design_tag)
