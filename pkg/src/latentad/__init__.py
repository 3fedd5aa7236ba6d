"""Root-n estimation and one-sided testing of density-weighted average
derivatives when the regressor is latent and observed through two noisy
measures with unknown error distributions.
"""

__version__ = "0.1.0"

from .charfun import CharFunSet, FreqGrid, empirical_cfs, error_cf, estimate_cfs, h_ft_estimate, kotlarski_f_ft
from .errors import (
    ConfigurationError,
    DegenerateVarianceError,
    InvalidInputError,
    InvalidStateError,
    LatentADError,
    NumericalError,
    SchemaError,
    SimulationError,
)
from .estimator import (
    EstimatorConfig,
    ThetaEstimate,
    estimate_theta,
    estimate_theta_direct,
    estimate_theta_known_error,
)
from .inference import TestResult, run_test, studentize, variance_estimate, xi_hat_all
from .ingest import PanelSchema, PanelTable, Sample, build_differences, parse_panel_csv, summary_stats
from .kernels import FLAT_TOP, POLYNOMIAL_ORDER2, KernelSpec, deconv_density, deconv_kernel_eval, kft_eval
from .simulate import PowerTable, SimConfig, dgp_draw, emit_power_outputs, run_power_curve
