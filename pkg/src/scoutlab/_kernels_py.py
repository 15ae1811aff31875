"""Pure-Python kernels; signature-compatible fallback for _kernels.pyx.

All functions accept any sequence of floats (lists, tuples, numpy arrays)
and run the same arithmetic in the same order as the compiled versions, so
results are bit-identical.
"""

import math


def mixture_height(x, centers, heights, sigmas):
    """Sum of isotropic Gaussian components evaluated at point x."""
    d = len(x)
    total = 0.0
    for i in range(len(heights)):
        c = centers[i]
        sq = 0.0
        for j in range(d):
            dx = x[j] - c[j]
            sq += dx * dx
        s = sigmas[i]
        total += heights[i] * math.exp(-sq / (2.0 * s * s))
    return total


def mixture_height_batch(xs, centers, heights, sigmas):
    return [mixture_height(x, centers, heights, sigmas) for x in xs]


def min_distance(x, points):
    """Euclidean distance from x to the nearest of points; inf when empty."""
    d = len(x)
    best = math.inf
    for p in points:
        sq = 0.0
        for j in range(d):
            dx = x[j] - p[j]
            sq += dx * dx
        if sq < best:
            best = sq
    return math.sqrt(best) if best != math.inf else math.inf


def cosine_scores(query, vectors):
    """Cosine similarity of query against each vector; zero norms score 0."""
    d = len(query)
    qn = 0.0
    for j in range(d):
        qn += query[j] * query[j]
    qn = math.sqrt(qn)
    out = []
    for v in vectors:
        dot = 0.0
        vn = 0.0
        for j in range(d):
            dot += query[j] * v[j]
            vn += v[j] * v[j]
        denom = qn * math.sqrt(vn)
        out.append(dot / denom if denom > 0.0 else 0.0)
    return out
