"""Kernel dispatch: compiled extension when built, pure Python otherwise.

Set SCOUTLAB_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the cross-implementation tests). The public functions normalize inputs so
callers can pass plain sequences either way.
"""

import os

import numpy as np

_FORCED = os.environ.get("SCOUTLAB_PURE_PYTHON", "") not in ("", "0")

if _FORCED:
    from scoutlab import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from scoutlab import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from scoutlab import _kernels_py as _impl

        BACKEND = "python"

_COMPILED = BACKEND == "compiled"


def backend_name() -> str:
    return BACKEND


def _as_matrix(rows, d):
    a = np.asarray(rows, dtype=np.float64)
    if a.size == 0:
        a = a.reshape(0, d)
    return np.ascontiguousarray(a)


def mixture_height(x, centers, heights, sigmas) -> float:
    """Sum of isotropic Gaussian components at point x."""
    if _COMPILED:
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _impl.mixture_height(
            x,
            _as_matrix(centers, len(x)),
            np.ascontiguousarray(heights, dtype=np.float64),
            np.ascontiguousarray(sigmas, dtype=np.float64),
        )
    return _impl.mixture_height(x, centers, heights, sigmas)


def mixture_height_batch(xs, centers, heights, sigmas):
    """Heights for a batch of points; returns a list of floats."""
    if _COMPILED:
        if len(xs) == 0:
            return []
        xs = _as_matrix(xs, 0)
        out = _impl.mixture_height_batch(
            xs,
            _as_matrix(centers, xs.shape[1]),
            np.ascontiguousarray(heights, dtype=np.float64),
            np.ascontiguousarray(sigmas, dtype=np.float64),
        )
        return [float(v) for v in out]
    return [float(v) for v in _impl.mixture_height_batch(xs, centers, heights, sigmas)]


def min_distance(x, points) -> float:
    """Euclidean distance from x to the nearest of points; inf when empty."""
    if _COMPILED:
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _impl.min_distance(x, _as_matrix(points, len(x)))
    return _impl.min_distance(x, points)


def cosine_scores(query, vectors):
    """Cosine similarity of query against each vector; returns list of floats."""
    if _COMPILED:
        query = np.ascontiguousarray(query, dtype=np.float64)
        out = _impl.cosine_scores(query, _as_matrix(vectors, len(query)))
        return [float(v) for v in out]
    return [float(v) for v in _impl.cosine_scores(query, vectors)]
