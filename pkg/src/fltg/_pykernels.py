"""Numpy implementations of the kernels in ``_kernels.pyx``.

Used when the compiled extension is unavailable or ``FLTG_PURE_PYTHON=1``.
Same signatures and semantics; dot products go through BLAS, so low-order
bits may differ from the compiled backend.
"""
import numpy as np

BACKEND = "python"


def dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


def sq_norm(a: np.ndarray) -> float:
    return float(np.dot(a, a))


def row_dots(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    return m @ v


def row_sq_norms(m: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", m, m)


def weighted_row_sum(m: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = np.zeros(m.shape[1], dtype=np.float64)
    for i in range(m.shape[0]):
        out += w[i] * m[i]
    return out


def pairwise_sq_dists(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n - 1):
        diff = m[i + 1 :] - m[i]
        row = np.einsum("ij,ij->i", diff, diff)
        out[i, i + 1 :] = row
        out[i + 1 :, i] = row
    return out
