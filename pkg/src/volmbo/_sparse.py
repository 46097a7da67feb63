"""Sparse accumulation kernels used by the incremental diffusion path."""
import numpy as np

from ._jit import njit


@njit
def accumulate_columns(indptr, indices, data, rows, cols, vals, out):
    """out[:, cols[t]] += vals[t] * A[:, rows[t]] for a CSC matrix A.

    Triplets are consumed in the given order, so a fixed ordering of the
    delta gives a bit-reproducible result.
    """
    for t in range(rows.shape[0]):
        x = rows[t]
        p = cols[t]
        v = vals[t]
        for k in range(indptr[x], indptr[x + 1]):
            out[indices[k], p] += v * data[k]


@njit
def project_rows(V, weights, rows, cols, vals, out):
    """out[:, cols[t]] += vals[t] * weights[rows[t]] * V[rows[t], :]."""
    K = V.shape[1]
    for t in range(rows.shape[0]):
        x = rows[t]
        p = cols[t]
        s = vals[t] * weights[x]
        for k in range(K):
            out[k, p] += s * V[x, k]


@njit
def scatter_add(A, rows, cols, vals):
    for t in range(rows.shape[0]):
        A[rows[t], cols[t]] += vals[t]
