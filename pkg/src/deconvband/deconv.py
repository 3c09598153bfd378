"""Plug-in deconvolution kernel and its frequency-domain kernel sums.

All integrals over ``t`` are trapezoidal sums over the even half grid on
``[0, 1]``; Hermitian symmetry of the integrand folds in the negative half.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._fourier import cis_lattice, lattice_mean
from .charfn import (
    CharFnTable,
    FrequencyGrid,
    KernelSpec,
    _truncate_values,
    default_floor,
    flat_top_cf,
    trapezoid_grid,
)
from .errors import NumericError

DEFAULT_NODES = 2049
_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DeconvTable:
    """Per-node weights ``phi_K(t_k) / phi_eps(t_k / h)`` for one bandwidth."""

    h: float
    grid: FrequencyGrid
    ratio: np.ndarray
    n_truncated: int = 0
    floor: float | None = None

    @property
    def n_nodes(self) -> int:
        return self.grid.size

    @property
    def coef(self) -> np.ndarray:
        """Quadrature weight times ratio over ``2 pi``."""
        return self.grid.weights * self.ratio / _TWO_PI


@dataclass(frozen=True)
class WeightedEcf:
    """``psi_y(t) = mean_j Y_j exp(i t W_j / h)`` and ``psi_1`` likewise without ``Y``."""

    grid: FrequencyGrid
    psi_y: np.ndarray
    psi_1: np.ndarray


def build_table(cf_eps: CharFnTable, spec: KernelSpec | None = None, h: float = 1.0,
                n_nodes: int = DEFAULT_NODES, floor="auto") -> DeconvTable:
    """Tabulate the plug-in deconvolution kernel at bandwidth ``h``.

    The error CF is re-evaluated exactly at ``t_k / h``. ``floor="auto"``
    uses ``m ** -0.5`` for empirical CFs and no truncation for analytic ones;
    ``None`` disables truncation.
    """
    if not (np.isfinite(h) and h > 0):
        raise NumericError(f"bandwidth must be positive and finite, got {h}")
    if n_nodes < 64:
        raise ValueError(f"n_nodes must be at least 64, got {n_nodes}")
    spec = spec or KernelSpec()
    grid = trapezoid_grid(n_nodes)
    if floor == "auto":
        floor = default_floor(cf_eps)
    phi_k = flat_top_cf(spec, grid.nodes)
    raw = CharFnTable(cf_eps.grid, cf_eps.values, cf_eps.kind, cf_eps.source, None)
    phi_eps = raw.evaluate(grid.nodes / h)
    n_trunc = 0
    if floor is not None:
        # Only nodes where phi_K is non-zero can affect the kernel.
        n_trunc = int(np.count_nonzero((np.abs(phi_eps) < floor) & (phi_k > 0)))
        phi_eps, _ = _truncate_values(phi_eps, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = phi_k / phi_eps
    # phi_K vanishes at |t| = 1 regardless of phi_eps.
    ratio = np.where(phi_k == 0, 0.0 + 0j, ratio)
    if not np.all(np.isfinite(ratio)):
        raise NumericError("deconvolution ratio is not finite; the error CF vanishes on the kernel support")
    return DeconvTable(float(h), grid, ratio, n_trunc, floor)


def kernel_at(tbl: DeconvTable, u) -> np.ndarray | float:
    """Evaluate the deconvolution kernel ``K_n(u)`` (real by Hermitian symmetry)."""
    u_arr = np.asarray(u, dtype=float)
    flat = u_arr.ravel()
    out = np.empty(flat.size)
    coef = tbl.coef
    for lo in range(0, flat.size, 512):
        ph = np.exp(-1j * np.outer(flat[lo:lo + 512], tbl.grid.nodes))
        out[lo:lo + 512] = (ph @ coef).real
    if u_arr.ndim == 0:
        return float(out[0])
    return out.reshape(u_arr.shape)


def kernel_full_sum(tbl: DeconvTable, u) -> np.ndarray:
    """Complex trapezoidal sum over the full sign-symmetric grid.

    Its imaginary part is the mass discarded by :func:`kernel_at`; used as a
    realness check.
    """
    t = tbl.grid.full_nodes()
    w = tbl.grid.full_weights()
    r = np.concatenate([np.conj(tbl.ratio[:0:-1]), tbl.ratio])
    ph = np.exp(-1j * np.outer(np.atleast_1d(np.asarray(u, dtype=float)), t))
    return ph @ (w * r) / _TWO_PI


def _left_factor(tbl, x):
    """``exp(-i t_k x / h) * coef_k`` with grid points as rows."""
    x = np.asarray(x, dtype=float)
    return cis_lattice(tbl.grid.step, tbl.grid.nodes.size, -x / tbl.h).T * tbl.coef


def kernel_matrix(tbl: DeconvTable, w, x_grid) -> np.ndarray:
    """``K_n((x_g - W_j) / h)`` for every grid point (rows) and observation (columns)."""
    left = _left_factor(tbl, x_grid)
    right = cis_lattice(tbl.grid.step, tbl.grid.nodes.size, np.asarray(w, dtype=float) / tbl.h)
    # Re(A @ B) from contiguous real parts; strided views defeat BLAS.
    real = np.ascontiguousarray
    return real(left.real) @ real(right.real) - real(left.imag) @ real(right.imag)


def weighted_ecf(s, tbl: DeconvTable, y=None) -> WeightedEcf:
    """Weighted empirical CFs of ``W / h`` on the table's frequency nodes.

    ``y`` overrides ``s.y``; a ``(n, r)`` matrix yields ``psi_y`` of shape
    ``(n_half, r)``.
    """
    y = s.y if y is None else np.asarray(y, dtype=float)
    nodes = tbl.grid.nodes
    ones = np.ones((s.n, 1))
    weights = np.column_stack([ones, y.reshape(s.n, -1)])
    psi = lattice_mean(tbl.grid.step, nodes.size, s.w / tbl.h, weights)
    psi_y = psi[:, 1:] if y.ndim == 2 else psi[:, 1]
    return WeightedEcf(tbl.grid, psi_y, psi[:, 0])


@dataclass
class KernelSums:
    """Kernel sums on an evaluation grid.

    ``s0 = mean_j K((x - W_j)/h)`` and ``s1 = mean_j Y_j K((x - W_j)/h)``;
    the per-observation kernel values are materialized on first access of
    :attr:`matrix`.
    """

    tbl: DeconvTable
    x: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    w: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        return kernel_matrix(self.tbl, self.w, self.x)


def _invert(tbl, x, psi):
    return (_left_factor(tbl, x) @ psi).real


def kernel_sums(s, tbl: DeconvTable, x_grid, y=None) -> KernelSums:
    """Frequency-domain evaluation of ``s0`` and ``s1`` at every ``x`` in ``x_grid``."""
    x = np.asarray(x_grid, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("evaluation grid contains non-finite points")
    ecf = weighted_ecf(s, tbl, y)
    return KernelSums(tbl, x, _invert(tbl, x, ecf.psi_1), _invert(tbl, x, ecf.psi_y), s.w)
