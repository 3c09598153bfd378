"""Phase tables ``exp(i * k * step * p)`` on equispaced frequency lattices."""

import math

import numpy as np

# Keeps the (count, chunk) complex tables under ~32 MB.
_CHUNK = 2048


def cis_lattice(step: float, count: int, points) -> np.ndarray:
    """Return ``exp(1j * k * step * p)`` for ``k = 0..count-1`` (rows) and ``p`` (columns).

    The index is split as ``k = q * B + r`` and the table assembled from two
    small exponential tables, which is exact to a few ulp and several times
    cheaper than one exponential per entry.
    """
    p = np.asarray(points, dtype=float)
    block = max(1, int(math.isqrt(max(count - 1, 0))) + 1)
    n_coarse = (count + block - 1) // block
    fine = np.exp(1j * step * np.outer(np.arange(block), p))
    coarse = np.exp(1j * (step * block) * np.outer(np.arange(n_coarse), p))
    table = coarse[:, None, :] * fine[None, :, :]
    return table.reshape(n_coarse * block, p.size)[:count]


def lattice_mean(step: float, count: int, points, weights=None) -> np.ndarray:
    """``(1/len(p)) * sum_j weights_j * exp(1j * k * step * p_j)`` for each ``k``.

    ``weights`` may be a vector or a ``(len(p), r)`` matrix, in which case the
    result has shape ``(count, r)``.
    """
    p = np.asarray(points, dtype=float)
    if weights is None:
        out = np.zeros(count, dtype=complex)
    else:
        weights = np.asarray(weights, dtype=float)
        out = np.zeros((count,) + weights.shape[1:], dtype=complex)
    for lo in range(0, p.size, _CHUNK):
        table = cis_lattice(step, count, p[lo:lo + _CHUNK])
        if weights is None:
            out += table.sum(axis=1)
        else:
            out += table @ weights[lo:lo + _CHUNK]
    return out / p.size
