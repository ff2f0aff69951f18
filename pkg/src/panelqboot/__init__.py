"""Fixed-effects quantile regression with partitioned wild bootstrap inference."""

__version__ = "0.1.0"

from .errors import NumericalError, PanelQBootError, ValidationError
from .paneldata import PanelDataset, PartitionScheme, load_csv, make_partition, write_csv
from .qrsolver import QuantileFit, SolverOptions, brute_force_fit, check_loss, fit_feqr, score_psi
from .pwb import (
    BootstrapResult,
    WeightLaw,
    bootstrap_sample,
    conditional_score_variance,
    draw_weights,
    run_pwb,
    two_point_law,
)
from .lengthsel import (
    KernelSpec,
    SelectionDiagnostics,
    centered_regressors,
    dependence_estimate,
    select_length_closed_form,
    select_length_per_unit,
)
from .altboot import TaperSpec, block_weights, run_alt_bootstrap, web_weights
from .inference import (
    ConfidenceInterval,
    CovarianceEstimate,
    boot_covariance,
    percentile_ci,
    powell_variance,
    se_ci,
    wald_test,
)
from .simlab import (
    CoverageReport,
    SimConfig,
    gen_ar2,
    gen_panel,
    run_coverage,
    sigma_u2,
    stationary_quantile_oracle,
)

__all__ = [name for name in dir() if not name.startswith("_")]
