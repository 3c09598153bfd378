"""Uniform confidence bands for errors-in-variables regression via deconvolution kernels."""

from .band import (
    BandConfig,
    BandResult,
    CdfBandResult,
    assemble_band,
    cdf_band,
    confidence_band,
    multiplier_quantile,
    spec_test,
)
from .bandwidth import BandwidthConfig, monotonize, pilot_eiv_polyfit, select_bandwidth, selector_criteria
from .charfn import (
    CharFnTable,
    FrequencyGrid,
    KernelSpec,
    averaged_pair_cf,
    constant_one_cf,
    empirical_cf,
    flat_top_cf,
    laplace_cf,
    trapezoid_grid,
    truncate_cf,
)
from .deconv import DeconvTable, build_table, kernel_at, kernel_sums, weighted_ecf
from .errors import (
    DataError,
    DeconvBandError,
    DegenerateVarianceError,
    EstimationError,
    InputShapeError,
    NumericError,
    PilotError,
    SelectionError,
)
from .estimate import EstimateGrid, estimate_on_grid, zero_sum_check
from .samples import RepeatedMeasurements, Sample, center_eta, from_repeated, from_validation
from .simulate import CoverageReport, DgpSpec, coverage_experiment, gen_model1, gen_model2

__version__ = "0.1.0"
