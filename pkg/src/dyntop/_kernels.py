"""Numba kernels for banded LDL^T factorization and triangular solves.

Band layout: ``band[k, j] = A[j + k, j]`` for ``k = 0 .. bandwidth`` (lower
band, column-wise).  After factorization row 0 holds the pivots D and rows
``k >= 1`` hold the subdiagonals of the unit lower factor L.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def band_ldl_factor(band, tol):
    """In-place LDL^T of a banded SPD matrix.

    Returns -1 on success, else the column index of the first pivot
    ``<= tol`` (factorization state is then undefined).
    """
    m1, n = band.shape
    for j in range(n):
        dj = band[0, j]
        if dj <= tol:
            return j
        for k in range(1, m1):
            if j + k >= n:
                break
            band[k, j] /= dj
        for i in range(1, m1):
            if j + i >= n:
                break
            lij = band[i, j]
            if lij != 0.0:
                djlij = dj * lij
                for k in range(i, m1):
                    if j + k >= n:
                        break
                    band[k - i, j + i] -= djlij * band[k, j]
    return -1


@njit(cache=True)
def band_ldl_solve(band, b):
    """Solve A x = b given the factored band; returns a fresh array."""
    m1, n = band.shape
    x = b.copy()
    # forward: L y = b
    for j in range(n):
        xj = x[j]
        if xj != 0.0:
            for k in range(1, m1):
                if j + k >= n:
                    break
                x[j + k] -= band[k, j] * xj
    # diagonal: D z = y
    for j in range(n):
        x[j] /= band[0, j]
    # backward: L^T x = z
    for j in range(n - 1, -1, -1):
        s = x[j]
        for k in range(1, m1):
            if j + k >= n:
                break
            s -= band[k, j] * x[j + k]
        x[j] = s
    return x
