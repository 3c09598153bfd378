"""Characteristic functions: empirical, analytic error models, flat-top kernel."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._fourier import lattice_mean
from .errors import DataError, InputShapeError

EMPIRICAL = "empirical"
LAPLACE = "analytic-laplace"
PRODUCT = "analytic-product"
CONSTANT_ONE = "constant-one"
GAUSSIAN = "analytic-gaussian"


@dataclass(frozen=True)
class FrequencyGrid:
    """Trapezoidal frequency grid.

    With ``even=True`` only the non-negative half ``0 = t_0 < ... < t_K`` of a
    sign-symmetric grid is stored and ``weights`` already fold in the mirrored
    half, so that ``sum_k w_k Re f(t_k)`` is the full trapezoidal sum of any
    Hermitian ``f``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    even: bool = True

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size < 2:
            raise InputShapeError("nodes and weights must be matching vectors")
        if np.any(np.diff(nodes) <= 0):
            raise InputShapeError("frequency nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise InputShapeError("quadrature weights must be positive")
        if self.even and nodes[0] != 0.0:
            raise InputShapeError("an even grid must start at t = 0")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def step(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def size(self) -> int:
        """Number of nodes of the full (sign-symmetric) grid."""
        return 2 * self.nodes.size - 1 if self.even else self.nodes.size

    def full_nodes(self) -> np.ndarray:
        if not self.even:
            return self.nodes
        return np.concatenate([-self.nodes[:0:-1], self.nodes])

    def full_weights(self) -> np.ndarray:
        if not self.even:
            return self.weights
        half = self.weights.copy()
        half[1:] *= 0.5
        return np.concatenate([half[:0:-1], half])


def trapezoid_grid(n_nodes: int = 2049, half_width: float = 1.0) -> FrequencyGrid:
    """Even trapezoidal grid with ``n_nodes`` points on ``[-half_width, half_width]``.

    ``n_nodes`` must be odd so that ``t = 0`` is a node.
    """
    n_nodes = int(n_nodes)
    if n_nodes < 5 or n_nodes % 2 == 0:
        raise InputShapeError(f"n_nodes must be an odd integer >= 5, got {n_nodes}")
    k = (n_nodes - 1) // 2
    step = half_width / k
    nodes = step * np.arange(k + 1)
    weights = np.full(k + 1, 2.0 * step)
    weights[0] = step
    weights[-1] = step
    return FrequencyGrid(nodes, weights, even=True)


@dataclass(frozen=True)
class KernelSpec:
    """Flat-top kernel parameters: ``phi_K`` equals 1 on ``|t| <= c`` and 0 on ``|t| >= 1``."""

    b: float = 1.0
    c: float = 0.05

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"kernel b must be positive, got {self.b}")
        if not 0 < self.c < 1:
            raise ValueError(f"kernel c must lie in (0, 1), got {self.c}")


def flat_top_cf(spec: KernelSpec, t):
    """Fourier transform of the flat-top kernel, evaluated elementwise."""
    arr = np.asarray(t, dtype=float)
    a = np.abs(np.atleast_1d(arr))
    out = np.where(a <= spec.c, 1.0, 0.0)
    mid = (a > spec.c) & (a < 1.0)
    with np.errstate(over="ignore", under="ignore"):
        inner = spec.b * np.exp(-spec.b / (a[mid] - spec.c) ** 2) / (a[mid] - 1.0) ** 2
        out[mid] = np.exp(-inner)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def _truncate_values(values, floor):
    mod = np.abs(values)
    low = mod < floor
    if not np.any(low):
        return values, 0
    out = values.copy()
    zero = low & (mod == 0)
    nz = low & ~zero
    # Rebuild from the phase: floor / mod and z / |z| both misbehave for subnormal moduli.
    out[nz] = floor * np.exp(1j * np.angle(values[nz]))
    out[zero] = floor + 0j
    return out, int(np.count_nonzero(low))


@dataclass(frozen=True)
class CharFnTable:
    """Characteristic-function values on a frequency grid.

    ``source`` keeps what is needed to re-evaluate the function exactly at
    other frequencies: the error draws for the empirical kind, the scale for
    the analytic kinds. ``floor`` (if set) is re-applied on re-evaluation.
    """

    grid: FrequencyGrid
    values: np.ndarray
    kind: str
    source: object = None
    floor: float | None = None
    n_truncated: int = 0
    supported: bool = field(default=True, compare=False)

    def evaluate(self, t) -> np.ndarray:
        """Values at arbitrary frequencies ``t`` (floor applied if set)."""
        t = np.asarray(t, dtype=float)
        if self.kind == EMPIRICAL:
            vals = _ecf(self.source, t)
        elif self.kind == LAPLACE:
            vals = (1.0 / (1.0 + (self.source * t) ** 2)).astype(complex)
        elif self.kind == PRODUCT:
            vals = (1.0 / (1.0 + (self.source * t) ** 2 / 4.0) ** 2).astype(complex)
        elif self.kind == GAUSSIAN:
            vals = np.exp(-0.5 * (self.source * t) ** 2).astype(complex)
        elif self.kind == CONSTANT_ONE:
            vals = np.ones(t.shape, dtype=complex)
        else:
            raise ValueError(f"unknown characteristic function kind {self.kind!r}")
        if self.floor is not None:
            vals, _ = _truncate_values(vals, self.floor)
        return vals

    def full(self):
        """``(nodes, values)`` on the full sign-symmetric grid."""
        if not self.grid.even:
            return self.grid.nodes, self.values
        vals = np.concatenate([np.conj(self.values[:0:-1]), self.values])
        return self.grid.full_nodes(), vals

    @property
    def m(self):
        return self.source.size if self.kind == EMPIRICAL else None


def _ecf(eta, t):
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    # Lattice fast path: t_k = k * step.
    if flat.size > 2 and flat[0] == 0.0:
        step = flat[1]
        if step > 0 and np.allclose(flat, step * np.arange(flat.size), rtol=0, atol=1e-12 * step * flat.size):
            return lattice_mean(step, flat.size, eta).reshape(t.shape)
    out = np.empty(flat.size, dtype=complex)
    for lo in range(0, flat.size, 256):
        out[lo:lo + 256] = np.exp(1j * np.outer(flat[lo:lo + 256], eta)).mean(axis=1)
    return out.reshape(t.shape)


def empirical_cf(eta, grid: FrequencyGrid) -> CharFnTable:
    """Empirical characteristic function ``(1/m) sum_i exp(i t eta_i)``."""
    eta = np.asarray(eta, dtype=float).ravel()
    if eta.size == 0:
        raise DataError("empirical characteristic function needs at least one draw")
    if not np.all(np.isfinite(eta)):
        raise DataError("error draws contain non-finite values")
    return CharFnTable(grid, _ecf(eta, grid.nodes), EMPIRICAL, source=eta)


def laplace_cf(scale: float, grid: FrequencyGrid) -> CharFnTable:
    """CF ``1 / (1 + scale^2 t^2)`` of a centred Laplace law with the given scale."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    vals = (1.0 / (1.0 + (scale * grid.nodes) ** 2)).astype(complex)
    return CharFnTable(grid, vals, LAPLACE, source=float(scale))


def averaged_pair_cf(component_scale: float, grid: FrequencyGrid) -> CharFnTable:
    """CF of ``(e1 + e2) / 2`` for independent Laplace components of the given scale."""
    if not component_scale > 0:
        raise ValueError(f"component_scale must be positive, got {component_scale}")
    s = float(component_scale)
    vals = (1.0 / (1.0 + (s * grid.nodes) ** 2 / 4.0) ** 2).astype(complex)
    return CharFnTable(grid, vals, PRODUCT, source=s)


def constant_one_cf(grid: FrequencyGrid) -> CharFnTable:
    """The CF of a point mass at zero (no measurement error)."""
    return CharFnTable(grid, np.ones(grid.nodes.size, dtype=complex), CONSTANT_ONE)


def gaussian_cf(scale: float, grid: FrequencyGrid) -> CharFnTable:
    """Super-smooth normal error CF; exploratory only, outside the validated path."""
    warnings.warn("super-smooth error characteristic functions are unsupported", stacklevel=2)
    vals = np.exp(-0.5 * (scale * grid.nodes) ** 2).astype(complex)
    return CharFnTable(grid, vals, GAUSSIAN, source=float(scale), supported=False)


def truncate_cf(cf: CharFnTable, floor: float) -> CharFnTable:
    """Raise every value with modulus below ``floor`` to modulus ``floor``, keeping its phase."""
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor}")
    vals, count = _truncate_values(cf.values, floor)
    return CharFnTable(cf.grid, vals, cf.kind, cf.source, float(floor), count, cf.supported)


def default_floor(cf: CharFnTable):
    """``m ** -0.5`` for empirical tables; analytic tables are left untruncated."""
    if cf.kind == EMPIRICAL:
        return 1.0 / np.sqrt(cf.source.size)
    return None
