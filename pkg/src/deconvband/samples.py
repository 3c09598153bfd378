"""Observed-data containers and the transforms producing ``(Y, W, eta)``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputShapeError


def _as_vector(name, values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InputShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Sample:
    """Responses ``y``, contaminated predictors ``w`` and error draws ``eta``.

    ``diagnostics`` carries bookkeeping from the transforms (e.g. the mean
    removed by :func:`center_eta`).
    """

    y: np.ndarray
    w: np.ndarray
    eta: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = _as_vector("y", self.y)
        w = _as_vector("w", self.w)
        eta = _as_vector("eta", self.eta)
        if y.shape != w.shape:
            raise InputShapeError(f"y and w differ in length ({y.size} != {w.size})")
        if y.size < 2:
            raise DataError("need at least two (y, w) observations")
        if eta.size < 2:
            raise DataError("need at least two measurement-error draws")
        for name, arr in (("y", y), ("w", w), ("eta", eta)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "eta", eta)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def m(self) -> int:
        return self.eta.size

    def with_response(self, y) -> "Sample":
        """Copy of the sample with the response vector replaced."""
        return Sample(y, self.w, self.eta, dict(self.diagnostics))


@dataclass(frozen=True)
class RepeatedMeasurements:
    """Two noisy measurements ``w1``, ``w2`` of the same latent predictor."""

    y: np.ndarray
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        y = _as_vector("y", self.y)
        w1 = _as_vector("w1", self.w1)
        w2 = _as_vector("w2", self.w2)
        if not (y.size == w1.size == w2.size):
            raise InputShapeError(
                f"y, w1, w2 differ in length ({y.size}, {w1.size}, {w2.size})"
            )
        for name, arr in (("y", y), ("w1", w1), ("w2", w2)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)


def from_repeated(rm: RepeatedMeasurements) -> Sample:
    """Half-sum / half-difference transform of repeated measurements.

    ``w = (w1 + w2) / 2`` carries the averaged error, and ``eta = (w1 - w2) / 2``
    has the same law as that error when one of the two errors is conditionally
    symmetric given the other.
    """
    w = 0.5 * (rm.w1 + rm.w2)
    eta = 0.5 * (rm.w1 - rm.w2)
    return Sample(rm.y, w, eta, {"source": "repeated"})


def from_validation(y, w, x_val, w_val) -> Sample:
    """Combine a main ``(y, w)`` sample with validation pairs ``(x, w)``.

    The error draws are ``eta = w_val - x_val``.
    """
    y = _as_vector("y", y)
    w = _as_vector("w", w)
    x_val = _as_vector("x_val", x_val)
    w_val = _as_vector("w_val", w_val)
    if y.size != w.size:
        raise InputShapeError(f"y and w differ in length ({y.size} != {w.size})")
    if x_val.size != w_val.size:
        raise InputShapeError(
            f"x_val and w_val differ in length ({x_val.size} != {w_val.size})"
        )
    return Sample(y, w, w_val - x_val, {"source": "validation"})


def center_eta(s: Sample) -> Sample:
    """Subtract the sample mean from the error draws."""
    mean = float(np.mean(s.eta))
    diagnostics = dict(s.diagnostics)
    diagnostics["eta_mean_removed"] = diagnostics.get("eta_mean_removed", 0.0) + mean
    return Sample(s.y, s.w, s.eta - mean, diagnostics)
