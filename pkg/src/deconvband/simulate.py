"""Data generating processes and the Monte Carlo coverage experiment."""

from __future__ import annotations

import csv
import io
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .band import BandConfig, confidence_band
from .bandwidth import BandwidthConfig, select_bandwidth
from .errors import DeconvBandError, ExperimentError
from .samples import RepeatedMeasurements, Sample, from_repeated

log = logging.getLogger(__name__)

REGRESSIONS = {
    "linear": lambda x: x,
    "quadratic": lambda x: x**2,
    "cubic": lambda x: x**3,
    "sine": np.sin,
    "cosine": np.cos,
}

MODEL1_SCALE = 2.0**-0.5
MODEL2_SCALE = 0.5
_FAILURE_SHARE = 0.02


@dataclass(frozen=True)
class DgpSpec:
    model: str = "model1"
    g_name: str = "linear"
    sigma_x: float = 2.0
    n: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("model1", "model2"):
            raise ValueError(f"model must be 'model1' or 'model2', got {self.model!r}")
        if self.g_name not in REGRESSIONS:
            raise ValueError(f"unknown regression {self.g_name!r}; choose from {sorted(REGRESSIONS)}")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if not self.sigma_x > 0:
            raise ValueError("sigma_x must be positive")

    @property
    def g(self):
        return REGRESSIONS[self.g_name]

    @property
    def interval(self):
        return (-self.sigma_x, self.sigma_x)


def laplace_draws(rng, scale: float, size) -> np.ndarray:
    """Centred Laplace draws by inverting the CDF of uniform draws."""
    u = rng.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def gen_model1(spec: DgpSpec, with_latent: bool = False):
    """Normal ``X``, normal ``U``; Laplace errors with independent Laplace error draws."""
    rng = np.random.default_rng(spec.seed)
    x = spec.sigma_x * rng.standard_normal(spec.n)
    u = rng.standard_normal(spec.n)
    eps = laplace_draws(rng, MODEL1_SCALE, spec.n)
    eta = laplace_draws(rng, MODEL1_SCALE, spec.n)
    s = Sample(spec.g(x) + u, x + eps, eta, {"source": "model1"})
    return (s, x) if with_latent else s


def gen_model2(spec: DgpSpec, with_latent: bool = False):
    """Repeated measurements with two independent Laplace errors per unit."""
    rng = np.random.default_rng(spec.seed)
    x = spec.sigma_x * rng.standard_normal(spec.n)
    u = rng.standard_normal(spec.n)
    e1 = laplace_draws(rng, MODEL2_SCALE, spec.n)
    e2 = laplace_draws(rng, MODEL2_SCALE, spec.n)
    s = from_repeated(RepeatedMeasurements(spec.g(x) + u, x + e1, x + e2))
    return (s, x) if with_latent else s


def generate(spec: DgpSpec, with_latent: bool = False):
    return (gen_model1 if spec.model == "model1" else gen_model2)(spec, with_latent)


def rep_seeds(master_seed: int, rep: int):
    """``(data_seed, bootstrap_seed)`` for one replication."""
    state = np.random.SeedSequence(master_seed, spawn_key=(rep,)).generate_state(2)
    return int(state[0]), int(state[1])


@dataclass
class CoverageReport:
    spec: DgpSpec
    levels: tuple
    coverage: np.ndarray
    reps: int
    covered: np.ndarray
    bandwidths: np.ndarray
    cn_exponent: float
    failures: int = 0
    runtime: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def mean_h(self) -> float:
        return float(np.mean(self.bandwidths)) if self.bandwidths.size else float("nan")

    @property
    def standard_errors(self) -> np.ndarray:
        p = self.coverage
        return np.sqrt(p * (1 - p) / max(self.reps, 1))

    def rows(self):
        model = self.spec.model[-1]
        for lv, cov in zip(self.levels, self.coverage):
            yield {
                "model": model,
                "g": self.spec.g_name,
                "n": self.spec.n,
                "sigma_x": self.spec.sigma_x,
                "cn_exponent": self.cn_exponent,
                "level": lv,
                "coverage": float(cov),
                "reps": self.reps,
            }


CSV_FIELDS = ("model", "g", "n", "sigma_x", "cn_exponent", "level", "coverage", "reps")


def reports_to_csv(reports, fmt=repr) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for rep in reports:
        for row in rep.rows():
            writer.writerow([fmt(v) if isinstance(v, float) else v for v in row.values()])
    return buf.getvalue()


def _one_rep(args):
    spec, band_cfg, bw_cfg, master_seed, rep = args
    data_seed, boot_seed = rep_seeds(master_seed, rep)
    s = generate(replace(spec, seed=data_seed))
    lo, hi = spec.interval
    x_grid = np.linspace(lo, hi, band_cfg.grid_points)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            h, _ = select_bandwidth(s, replace(bw_cfg, x_grid=x_grid))
            band = confidence_band(s, x_grid, h, band_cfg, seed=boot_seed)
    except DeconvBandError as exc:
        return rep, None, float("nan"), str(exc)
    truth = spec.g(x_grid)
    covered = np.all((band.lower <= truth) & (truth <= band.upper), axis=1)
    return rep, covered, h, None


def coverage_experiment(spec: DgpSpec, band_cfg: BandConfig | None = None,
                        bw_cfg: BandwidthConfig | None = None, mc_reps: int = 500,
                        master_seed: int = 0, workers: int = 1) -> CoverageReport:
    """Simulated probability that the band covers ``g`` on ``[-sigma_x, sigma_x]`` everywhere.

    Replication ``r`` is fully determined by ``(master_seed, r)``; results are
    collected by index so the report does not depend on ``workers``.
    """
    band_cfg = band_cfg or BandConfig(reps=500)
    bw_cfg = bw_cfg or BandwidthConfig(x_grid=np.zeros(1))
    if mc_reps < 1:
        raise ValueError("mc_reps must be positive")
    start = time.perf_counter()
    jobs = [(spec, band_cfg, bw_cfg, master_seed, r) for r in range(mc_reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one_rep, jobs, chunksize=4))
    else:
        results = [_one_rep(job) for job in jobs]
    results.sort(key=lambda r: r[0])
    ok = [r for r in results if r[1] is not None]
    failed = [r for r in results if r[1] is None]
    notes = [f"rep {r[0]}: {r[3]}" for r in failed]
    if failed:
        if len(failed) >= _FAILURE_SHARE * mc_reps:
            raise ExperimentError(f"{len(failed)} of {mc_reps} replications failed: {notes[:3]}")
        warnings.warn(f"{len(failed)} replications failed and were excluded", stacklevel=2)
    covered = np.array([r[1] for r in ok], dtype=bool).reshape(len(ok), len(band_cfg.levels))
    coverage = covered.mean(axis=0) if len(ok) else np.full(len(band_cfg.levels), np.nan)
    return CoverageReport(spec, tuple(band_cfg.levels), coverage, len(ok), covered,
                          np.array([r[2] for r in ok]), bw_cfg.cn_exponent, len(failed),
                          time.perf_counter() - start, notes)
