"""Gaussian multiplier bootstrap and uniform confidence bands."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .charfn import KernelSpec, empirical_cf, trapezoid_grid
from .deconv import DEFAULT_NODES, DeconvTable, build_table, kernel_sums
from .errors import DegenerateVarianceError, EstimationError, InputShapeError
from .estimate import CLAMP_RATIO, EstimateGrid, estimate_on_grid

DEFAULT_LEVELS = (0.80, 0.90, 0.95)
_REP_BLOCK = 500


@dataclass(frozen=True)
class BandConfig:
    levels: tuple = DEFAULT_LEVELS
    reps: int = 1000
    grid_points: int = 101
    kernel: KernelSpec = field(default_factory=KernelSpec)
    n_nodes: int = DEFAULT_NODES
    floor: object = "auto"
    exclude_clamped: bool = False


@dataclass
class BandResult:
    """Uniform band ``g(x) +/- s(x) c / (f_X(x) sqrt(n) h)`` for each level.

    ``lower`` and ``upper`` have one row per entry of ``levels``.
    """

    x: np.ndarray
    g: np.ndarray
    fx: np.ndarray
    s: np.ndarray
    levels: tuple
    quantiles: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    h: float
    n: int
    reps: int
    seed: int
    clamped: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def taus(self):
        return tuple(1.0 - lv for lv in self.levels)

    def level_index(self, level: float) -> int:
        for i, lv in enumerate(self.levels):
            if math.isclose(lv, level, abs_tol=1e-12):
                return i
        raise KeyError(f"level {level} not in band levels {self.levels}")


@dataclass
class CdfBandResult:
    """Band for the conditional distribution function on ``y`` (rows) by ``x`` (columns)."""

    y: np.ndarray
    x: np.ndarray
    g: np.ndarray
    s: np.ndarray
    fx: np.ndarray
    levels: tuple
    quantiles: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    h: float
    n: int
    reps: int
    seed: int
    clamped: np.ndarray
    diagnostics: dict = field(default_factory=dict)


class SpecTestResult(NamedTuple):
    reject: bool
    violations: np.ndarray
    level: float


def multipliers(seed: int, start: int, stop: int, n: int) -> np.ndarray:
    """Standard normal multipliers for replications ``start..stop-1``, one column each.

    Column ``b`` depends only on ``(seed, b)``.
    """
    cols = [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,))).standard_normal(n)
        for b in range(start, stop)
    ]
    return np.column_stack(cols) if cols else np.empty((n, 0))


def _coefficients(resid, kmat, s, n):
    """Rows ``(Y_j - g(x)) K_j(x) / (s(x) sqrt(n))``; zero where ``s(x) = 0``."""
    scale = np.zeros_like(s)
    pos = s > 0
    scale[pos] = 1.0 / (s[pos] * np.sqrt(n))
    return resid * kmat * scale[:, None]


def bootstrap_sups(coef_blocks: Sequence[np.ndarray], reps: int, seed: int) -> np.ndarray:
    """Supremum of ``|sum_j xi_j C[x, j]|`` over all rows of all blocks, per replication."""
    n = coef_blocks[0].shape[1]
    sups = np.empty(reps)
    for lo in range(0, reps, _REP_BLOCK):
        hi = min(reps, lo + _REP_BLOCK)
        xi = multipliers(seed, lo, hi, n)
        best = np.zeros(hi - lo)
        for coef in coef_blocks:
            if coef.shape[0]:
                best = np.maximum(best, np.abs(coef @ xi).max(axis=0))
        sups[lo:hi] = best
    return sups


def order_quantiles(sups, levels) -> np.ndarray:
    """``ceil(level * reps)``-th order statistic of ``sups`` for each level (0 for level 0)."""
    ordered = np.sort(np.asarray(sups))
    reps = ordered.size
    out = []
    for lv in levels:
        if not 0 <= lv < 1:
            raise ValueError(f"levels must lie in [0, 1), got {lv}")
        k = math.ceil(lv * reps - 1e-9)
        out.append(0.0 if k <= 0 else float(ordered[k - 1]))
    return np.array(out)


def multiplier_quantile(s, grid: EstimateGrid, levels=DEFAULT_LEVELS, reps: int = 1000,
                        seed: int = 0, exclude_clamped: bool = False,
                        return_sups: bool = False):
    """Bootstrap quantiles of the sup-norm of the multiplier process over the grid.

    Raises
    ------
    DegenerateVarianceError
        If the variance estimate is zero at every included grid point.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    rows = ~grid.clamped if exclude_clamped else np.ones(grid.x.size, dtype=bool)
    if not np.any(grid.s[rows] > 0):
        raise DegenerateVarianceError("variance estimate is zero on the whole grid (constant response?)")
    resid = s.y[None, :] - grid.g[rows, None]
    coef = _coefficients(resid, grid.kmat[rows], grid.s[rows], s.n)
    sups = bootstrap_sups([coef], reps, seed)
    q = order_quantiles(sups, levels)
    return (q, sups) if return_sups else q


def assemble_band(grid: EstimateGrid, quantiles, levels=DEFAULT_LEVELS, *, n: int | None = None,
                  reps: int = 0, seed: int = 0) -> BandResult:
    """Symmetric band around ``grid.g`` with half-width ``s c / (f_X sqrt(n) h)``."""
    quantiles = np.asarray(quantiles, dtype=float)
    if np.any(quantiles < 0):
        raise ValueError("quantiles must be non-negative")
    n = grid.kmat.shape[1] if n is None else n
    unit = grid.s / (grid.fx_used * np.sqrt(n) * grid.h)
    half = quantiles[:, None] * unit[None, :]
    diagnostics = dict(grid.diagnostics)
    diagnostics["clamped_x"] = grid.x[grid.clamped].tolist()
    return BandResult(grid.x, grid.g, grid.fx, grid.s, tuple(levels), quantiles,
                      grid.g - half, grid.g + half, grid.h, n, reps, seed,
                      grid.clamped, diagnostics)


def spec_test(band: BandResult, g_theta_hat, level_index: int = -1) -> SpecTestResult:
    """Reject the parametric fit if it leaves the band at any grid point."""
    g_theta = np.asarray(g_theta_hat, dtype=float)
    if g_theta.shape != band.x.shape:
        raise InputShapeError(f"parametric fit has shape {g_theta.shape}, band grid {band.x.shape}")
    lo = band.lower[level_index]
    hi = band.upper[level_index]
    outside = (g_theta < lo) | (g_theta > hi)
    return SpecTestResult(bool(np.any(outside)), band.x[outside], band.levels[level_index])


def confidence_band(s, x_grid, h: float, config: BandConfig | None = None, seed: int = 0,
                    cf=None) -> BandResult:
    """Full pipeline: empirical error CF, kernel table, estimates, bootstrap, band."""
    config = config or BandConfig()
    tbl = _table(s, h, config, cf)
    grid = estimate_on_grid(s, tbl, x_grid)
    q = multiplier_quantile(s, grid, config.levels, config.reps, seed, config.exclude_clamped)
    return assemble_band(grid, q, config.levels, n=s.n, reps=config.reps, seed=seed)


def _table(s, h, config, cf=None) -> DeconvTable:
    if cf is None:
        cf = empirical_cf(s.eta, trapezoid_grid(65))
    return build_table(cf, config.kernel, h, config.n_nodes, config.floor)


def cdf_band(s, tbl: DeconvTable, x_grid, y_grid, levels=DEFAULT_LEVELS, reps: int = 1000,
             seed: int = 0, clamp_ratio: float = CLAMP_RATIO) -> CdfBandResult:
    """Band for ``P(Y <= y | X = x)`` jointly over ``y_grid`` and ``x_grid``.

    Every ``y`` uses the same multipliers, and the bootstrap supremum runs
    over the whole product grid.
    """
    y_grid = np.asarray(y_grid, dtype=float)
    if y_grid.ndim != 1 or y_grid.size == 0 or not np.all(np.isfinite(y_grid)):
        raise InputShapeError("y grid must be a non-empty finite vector")
    if np.any(np.diff(y_grid) < 0):
        raise InputShapeError("y grid must be sorted")
    x = np.asarray(x_grid, dtype=float)
    ind = (s.y[:, None] <= y_grid[None, :]).astype(float)
    sums = kernel_sums(s, tbl, x, ind)
    fx = sums.s0 / tbl.h
    if not np.any(fx > 0):
        raise EstimationError("density estimate is non-positive on the whole grid")
    delta = clamp_ratio * float(fx.max())
    clamped = fx < delta
    fx_used = np.where(clamped, delta, fx)
    g = (sums.s1 / tbl.h / fx_used[:, None]).T
    kmat = sums.matrix
    coefs = []
    s_all = np.empty_like(g)
    for i in range(y_grid.size):
        resid = ind[:, i][None, :] - g[i][:, None]
        s_i = np.sqrt(np.mean((resid * kmat) ** 2, axis=1))
        s_all[i] = s_i
        coefs.append(_coefficients(resid, kmat, s_i, s.n))
    if not np.any(s_all > 0):
        raise DegenerateVarianceError("variance estimate is zero on the whole product grid")
    sups = bootstrap_sups(coefs, reps, seed)
    q = order_quantiles(sups, levels)
    unit = s_all / (fx_used[None, :] * np.sqrt(s.n) * tbl.h)
    half = q[:, None, None] * unit[None]
    diagnostics = {"n_clamped": int(clamped.sum()), "n_truncated": tbl.n_truncated}
    return CdfBandResult(y_grid, x, g, s_all, fx, tuple(levels), q, g - half, g + half,
                         tbl.h, s.n, reps, seed, clamped, diagnostics)
