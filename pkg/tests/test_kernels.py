"""Compiled and pure-Python kernels must agree bit for bit."""

import math

import pytest

from scoutlab import _kernels_py, kernels


def _have_compiled():
    try:
        from scoutlab import _kernels  # noqa: F401

        return True
    except ImportError:
        return False


def test_backend_reports_name():
    assert kernels.backend_name() in ("compiled", "python")


def test_mixture_height_simple():
    # single unit-height component centred on the query point
    assert kernels.mixture_height([0.5, 0.5], [[0.5, 0.5]], [1.0], [0.1]) == 1.0


def test_min_distance_empty_is_inf():
    assert kernels.min_distance([0.0, 0.0], []) == math.inf


def test_cosine_zero_vector_scores_zero():
    assert kernels.cosine_scores([1.0, 0.0], [[0.0, 0.0]]) == [0.0]


@pytest.mark.skipif(not _have_compiled(), reason="compiled kernels not built")
def test_backends_bit_identical(rng):
    from scoutlab import _kernels
    import numpy as np

    for _ in range(50):
        d = rng.randint(1, 5)
        n = rng.randint(1, 12)
        m = rng.randint(1, 20)
        centers = [[rng.random() for _ in range(d)] for _ in range(n)]
        heights = [rng.random() for _ in range(n)]
        sigmas = [rng.uniform(0.01, 0.3) for _ in range(n)]
        xs = [[rng.random() for _ in range(d)] for _ in range(m)]

        c = np.ascontiguousarray(centers, dtype=np.float64)
        h = np.ascontiguousarray(heights, dtype=np.float64)
        s = np.ascontiguousarray(sigmas, dtype=np.float64)
        for x in xs:
            xa = np.ascontiguousarray(x, dtype=np.float64)
            assert _kernels.mixture_height(xa, c, h, s) == _kernels_py.mixture_height(
                x, centers, heights, sigmas
            )
        xsa = np.ascontiguousarray(xs, dtype=np.float64)
        batch_c = list(_kernels.mixture_height_batch(xsa, c, h, s))
        batch_p = _kernels_py.mixture_height_batch(xs, centers, heights, sigmas)
        assert batch_c == batch_p

        q = xs[0]
        qa = np.ascontiguousarray(q, dtype=np.float64)
        assert _kernels.min_distance(qa, c) == _kernels_py.min_distance(q, centers)
        assert list(_kernels.cosine_scores(qa, c)) == _kernels_py.cosine_scores(q, centers)
