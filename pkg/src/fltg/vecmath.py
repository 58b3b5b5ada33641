"""Vector primitives used by the aggregation rules.

Model parameters and updates are flat float64 numpy arrays. The heavy
reductions are delegated to a kernel backend chosen at import time: the
compiled ``fltg._kernels`` extension when it is importable, otherwise the
numpy implementations in ``fltg._pykernels``. Set ``FLTG_PURE_PYTHON=1`` to
force the fallback.
"""
from __future__ import annotations

import math
import os
from typing import Sequence

import numpy as np

from .errors import DegenerateVectorError, DimensionError, EmptyAggregateError

if os.environ.get("FLTG_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykernels as kernels

BACKEND: str = kernels.BACKEND


def as_vector(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous 1-D float64 array (no copy if possible)."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(rows) -> np.ndarray:
    """Stack a sequence of equal-length vectors into a contiguous (n, d) array."""
    if isinstance(rows, np.ndarray):
        m = np.ascontiguousarray(rows, dtype=np.float64)
    else:
        rows = [as_vector(r) for r in rows]
        if rows and len({r.shape[0] for r in rows}) != 1:
            raise DimensionError("vectors have different lengths")
        m = np.ascontiguousarray(np.array(rows, dtype=np.float64))
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D stack of vectors, got shape {m.shape}")
    return m


def _same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"length mismatch: {a.shape[0]} != {b.shape[0]}")


def dot(a, b) -> float:
    a, b = as_vector(a), as_vector(b)
    _same_length(a, b)
    return kernels.dot(a, b)


def l2_norm(a) -> float:
    return math.sqrt(kernels.sq_norm(as_vector(a)))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``, clamped to [-1, 1].

    Raises DegenerateVectorError if either vector has zero norm, which
    includes vectors so small that their squared norm underflows.
    """
    a, b = as_vector(a), as_vector(b)
    _same_length(a, b)
    na, nb = l2_norm(a), l2_norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero-norm vector")
    return min(1.0, max(-1.0, kernels.dot(a, b) / (na * nb)))


def relu(x: float) -> float:
    return x if x > 0.0 else 0.0


def rescale_to_norm(v, target_norm: float) -> np.ndarray:
    v = as_vector(v)
    norm = l2_norm(v)
    if norm == 0.0:
        raise DegenerateVectorError("cannot rescale a zero-norm vector")
    if target_norm < 0:
        raise ValueError("target_norm must be non-negative")
    return (target_norm / norm) * v


def weighted_mean(vectors, weights: Sequence[float]) -> np.ndarray:
    """Return ``sum(w_j * v_j) / sum(w_j)`` accumulated in the given order."""
    m = as_matrix(vectors)
    w = as_vector(weights)
    if m.shape[0] != w.shape[0]:
        raise DimensionError(f"{m.shape[0]} vectors but {w.shape[0]} weights")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = math.fsum(w)
    if not total > 0.0:
        raise EmptyAggregateError("sum of weights is not positive", reason="zero_scores")
    return kernels.weighted_row_sum(m, w) / total


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(kernels.row_sq_norms(as_matrix(m)))


def cosine_to(m: np.ndarray, ref) -> np.ndarray:
    """Cosine of every row of ``m`` with ``ref``.

    Rows with zero norm get NaN; callers decide how to treat them.
    ``ref`` must have positive norm.
    """
    m, ref = as_matrix(m), as_vector(ref)
    if m.shape[1] != ref.shape[0]:
        raise DimensionError(f"length mismatch: {m.shape[1]} != {ref.shape[0]}")
    ref_norm = l2_norm(ref)
    if ref_norm == 0.0:
        raise DegenerateVectorError("reference vector has zero norm")
    norms = row_norms(m)
    dots = kernels.row_dots(m, ref)
    out = np.full(m.shape[0], np.nan)
    ok = norms > 0.0
    out[ok] = np.clip(dots[ok] / (norms[ok] * ref_norm), -1.0, 1.0)
    return out


def pairwise_sq_dists(m) -> np.ndarray:
    return kernels.pairwise_sq_dists(as_matrix(m))
