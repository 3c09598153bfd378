"""Data-driven undersmoothing bandwidth selection.

Candidate bandwidths are scanned in increasing order. At each candidate the
sup-norms of the squared bias proxy ``A(x; h)`` and of the variance proxy
``s^2(x; h) / n`` are computed around an errors-in-variables polynomial
pilot fit; the first candidate at which ``c_n`` times the (monotonized)
increase in squared bias outweighs the (monotonized) decrease in variance is
selected.
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from math import comb
from typing import NamedTuple

import numpy as np

from .charfn import KernelSpec, empirical_cf, trapezoid_grid
from .deconv import DEFAULT_NODES, build_table, kernel_matrix
from .errors import InputShapeError, NumericError, PilotError, SelectionError
from .samples import center_eta

log = logging.getLogger(__name__)

DEFAULT_CN_EXPONENT = 0.3
DEFAULT_PILOT_DEGREE = 3
DEFAULT_CANDIDATES = 20


@dataclass(frozen=True)
class PilotFit:
    """Polynomial ``g(x) = sum_p coef[p] x^p`` fitted with measurement-error corrected moments."""

    coef: np.ndarray
    x_moments: np.ndarray
    yx_moments: np.ndarray
    eps_moments: np.ndarray

    @property
    def degree(self) -> int:
        return self.coef.size - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coef)


def corrected_moments(s, order: int):
    """Moments of the latent ``X`` and of ``Y X^k`` up to ``order``.

    Uses ``E[W^k] = sum_q C(k, q) E[X^q] E[e^(k-q)]`` solved recursively for
    ``E[X^k]``; the same recursion holds for ``E[Y W^k]``. ``eta`` is centred
    first.
    """
    eta = center_eta(s).eta
    ks = np.arange(2 * order + 1)
    w_pow = s.w[:, None] ** ks[None, :]
    ew = w_pow.mean(axis=0)
    eyw = (s.y[:, None] * w_pow[:, : order + 1]).mean(axis=0)
    ee = (eta[:, None] ** ks[None, :]).mean(axis=0)
    ex = np.empty(2 * order + 1)
    eyx = np.empty(order + 1)
    for k in range(2 * order + 1):
        ex[k] = ew[k] - sum(comb(k, q) * ex[q] * ee[k - q] for q in range(k))
    for k in range(order + 1):
        eyx[k] = eyw[k] - sum(comb(k, q) * eyx[q] * ee[k - q] for q in range(k))
    return ex, eyx, ee


def pilot_eiv_polyfit(s, degree: int = DEFAULT_PILOT_DEGREE) -> PilotFit:
    """Errors-in-variables polynomial regression of ``Y`` on the latent ``X``.

    Raises
    ------
    PilotError
        If the corrected moment matrix is singular or badly conditioned.
    """
    if degree < 1:
        raise ValueError(f"pilot degree must be >= 1, got {degree}")
    ex, eyx, ee = corrected_moments(s, degree)
    idx = np.arange(degree + 1)
    mat = ex[idx[:, None] + idx[None, :]]
    if not np.all(np.isfinite(mat)) or np.linalg.cond(mat) > 1e12:
        raise PilotError(f"corrected moment matrix of degree {degree} is singular")
    coef = np.linalg.solve(mat, eyx)
    return PilotFit(coef, ex, eyx, ee)


class Criteria(NamedTuple):
    sup_a2: float
    sup_s2_over_n: float


def selector_criteria(s, fit: PilotFit, h: float, x_grid, cf=None, kernel: KernelSpec | None = None,
                      n_nodes: int = DEFAULT_NODES, floor="auto") -> Criteria:
    """``sup_x A(x;h)^2`` and ``sup_x s^2(x;h) / n`` around the pilot fit.

    ``A(x;h) = mean_j (Y_j - pilot(x)) K((x - W_j)/h)`` and
    ``s^2(x;h) = mean_j (Y_j - pilot(x))^2 K^2 - A^2``.
    """
    if cf is None:
        cf = empirical_cf(s.eta, trapezoid_grid(65))
    tbl = build_table(cf, kernel, h, n_nodes, floor)
    x = np.asarray(x_grid, dtype=float)
    kmat = kernel_matrix(tbl, s.w, x)
    terms = (s.y[None, :] - fit(x)[:, None]) * kmat
    a = terms.mean(axis=1)
    s2 = np.mean(terms**2, axis=1) - a**2
    return Criteria(float(np.max(a**2)), float(np.max(s2)) / s.n)


def monotonize(delta_a, delta_s):
    """Forward pass making ``delta_a`` non-decreasing and ``delta_s`` non-increasing."""
    a = np.array(delta_a, dtype=float)
    b = np.array(delta_s, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InputShapeError("difference sequences must be vectors of equal length")
    for j in range(a.size - 1):
        if a[j] > a[j + 1]:
            a[j + 1] = a[j]
        if b[j] < b[j + 1]:
            b[j + 1] = b[j]
    return a, b


def crossing_index(delta_a_mono, delta_s_mono, cn: float):
    """First ``j >= 1`` (0-based candidate index) with ``cn * dA >= -dS``, or ``None``.

    ``delta_*[i]`` is the difference between candidates ``i + 1`` and ``i``.
    """
    hits = np.flatnonzero(cn * np.asarray(delta_a_mono) >= -np.asarray(delta_s_mono))
    return None if hits.size == 0 else int(hits[0]) + 1


def default_candidate_grid(s, n_candidates: int = DEFAULT_CANDIDATES) -> np.ndarray:
    """Geometric grid from ``0.2 sd(W) (n/100)^-1/2`` to ``1.5 sd(W)``."""
    sd = float(np.std(s.w, ddof=1))
    lo = 0.2 * sd * (s.n / 100.0) ** -0.5
    return np.geomspace(lo, 1.5 * sd, n_candidates)


@dataclass(frozen=True)
class BandwidthConfig:
    """Selector settings. ``grid=None`` uses :func:`default_candidate_grid`."""

    x_grid: np.ndarray
    grid: np.ndarray | None = None
    cn_exponent: float = DEFAULT_CN_EXPONENT
    pilot_degree: int = DEFAULT_PILOT_DEGREE
    n_candidates: int = DEFAULT_CANDIDATES
    kernel: KernelSpec = field(default_factory=KernelSpec)
    n_nodes: int = DEFAULT_NODES
    floor: object = "auto"

    def candidates(self, s) -> np.ndarray:
        if self.grid is None:
            return default_candidate_grid(s, self.n_candidates)
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise InputShapeError("candidate grid needs at least two bandwidths")
        if np.any(grid <= 0) or np.any(np.diff(grid) <= 0) or not np.all(np.isfinite(grid)):
            raise InputShapeError("candidate bandwidths must be positive and strictly increasing")
        return grid


@dataclass
class SelectionTrace:
    h_grid: list
    sup_a2: list
    sup_s2_over_n: list
    delta_a: list
    delta_s: list
    delta_a_mono: list
    delta_s_mono: list
    cn: float
    index: int
    h: float
    no_crossing: bool
    pilot_degree: int
    pilot_coef: list
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _fit_pilot(s, degree, notes):
    for d in range(degree, 0, -1):
        try:
            return pilot_eiv_polyfit(s, d)
        except PilotError as exc:
            notes.append(f"pilot degree {d} failed: {exc}")
            log.warning("pilot degree %d failed, falling back", d)
    raise PilotError("pilot fit failed for every degree")


def select_bandwidth(s, cfg: BandwidthConfig, workers: int = 1):
    """Pick the smallest candidate satisfying the monotonized crossing rule.

    Returns ``(h, trace)``. When no candidate satisfies the rule the largest
    one is returned and ``trace.no_crossing`` is set.
    """
    hs = cfg.candidates(s)
    notes: list = []
    fit = _fit_pilot(s, cfg.pilot_degree, notes)
    cf = empirical_cf(s.eta, trapezoid_grid(65))

    def crit(h):
        try:
            return selector_criteria(s, fit, h, cfg.x_grid, cf, cfg.kernel, cfg.n_nodes, cfg.floor)
        except NumericError as exc:
            notes.append(f"h={h:.6g}: {exc}")
            return Criteria(np.nan, np.nan)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(crit, hs))
    else:
        values = [crit(h) for h in hs]
    a2 = np.array([v.sup_a2 for v in values])
    v2 = np.array([v.sup_s2_over_n for v in values])
    if not np.any(np.isfinite(a2) & np.isfinite(v2)):
        raise SelectionError("selection criteria are non-finite at every candidate bandwidth")
    da = np.diff(a2)
    ds = np.diff(v2)
    da_m, ds_m = monotonize(da, ds)
    cn = (s.n / 100.0) ** cfg.cn_exponent
    hit = crossing_index(da_m, ds_m, cn)
    no_crossing = hit is None
    index = hs.size - 1 if no_crossing else hit
    if no_crossing:
        warnings.warn("no candidate bandwidth satisfied the selection rule; using the largest",
                      stacklevel=2)
        notes.append("no-crossing")
    trace = SelectionTrace(
        hs.tolist(), a2.tolist(), v2.tolist(), da.tolist(), ds.tolist(), da_m.tolist(),
        ds_m.tolist(), cn, index, float(hs[index]), no_crossing, fit.degree, fit.coef.tolist(), notes,
    )
    return float(hs[index]), trace
