"""Point estimates of the latent density, the regression function and its band variance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .deconv import DeconvTable, kernel_sums
from .errors import EstimationError

CLAMP_RATIO = 1e-3


@dataclass
class EstimateGrid:
    """Estimates on the evaluation grid.

    ``fx`` is the raw density estimate; ``fx_used`` replaces it by the clamp
    floor where it falls below ``CLAMP_RATIO * max(fx)`` (flagged in
    ``clamped``). ``kmat`` holds the per-observation kernel values
    ``K_n((x_g - W_j) / h)``.
    """

    x: np.ndarray
    fx: np.ndarray
    mu: np.ndarray
    g: np.ndarray
    s: np.ndarray
    h: float
    clamped: np.ndarray
    fx_used: np.ndarray
    kmat: np.ndarray = field(repr=False)
    diagnostics: dict = field(default_factory=dict)


def _clamp(fx, ratio):
    delta = ratio * float(np.max(fx))
    clamped = fx < delta
    return np.where(clamped, delta, fx), clamped, delta


def estimate_on_grid(s, tbl: DeconvTable, x_grid, clamp_ratio: float = CLAMP_RATIO) -> EstimateGrid:
    """Deconvolution estimates of ``f_X``, ``g f_X``, ``g`` and ``s_n`` on ``x_grid``.

    Raises
    ------
    EstimationError
        If the density estimate is non-positive at every grid point.
    """
    x = np.asarray(x_grid, dtype=float)
    if x.min() < s.w.min() or x.max() > s.w.max():
        warnings.warn("evaluation grid extends beyond the range of the observed W", stacklevel=2)
    sums = kernel_sums(s, tbl, x)
    fx = sums.s0 / tbl.h
    mu = sums.s1 / tbl.h
    if not np.any(fx > 0):
        raise EstimationError("density estimate is non-positive on the whole grid")
    fx_used, clamped, delta = _clamp(fx, clamp_ratio)
    g = mu / fx_used
    kmat = sums.matrix
    resid = s.y[None, :] - g[:, None]
    s2 = np.mean((resid * kmat) ** 2, axis=1)
    diagnostics = {
        "n_clamped": int(np.count_nonzero(clamped)),
        "clamp_floor": delta,
        "n_truncated": tbl.n_truncated,
        "cf_floor": tbl.floor,
    }
    return EstimateGrid(x, fx, mu, g, np.sqrt(s2), tbl.h, clamped, fx_used, kmat, diagnostics)


class ZeroSumResult(NamedTuple):
    residual: float
    n_excluded: int


def zero_sum_check(s, grid: EstimateGrid, tbl: DeconvTable | None = None) -> ZeroSumResult:
    """Largest ``|sum_j (Y_j - g(x)) K_n((x - W_j)/h)|`` over unclamped grid points.

    The identity holds exactly for ``g = mu / f_X``; clamped points are
    excluded and counted.
    """
    kmat = grid.kmat
    if tbl is not None and kmat is None:
        kmat = kernel_sums(s, tbl, grid.x).matrix
    keep = ~grid.clamped
    sums = np.sum((s.y[None, :] - grid.g[keep, None]) * kmat[keep], axis=1)
    residual = float(np.max(np.abs(sums))) if sums.size else 0.0
    return ZeroSumResult(residual, int(np.count_nonzero(grid.clamped)))
