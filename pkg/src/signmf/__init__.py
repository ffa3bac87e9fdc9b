"""Poisson and Negative Binomial NMF for mutational signatures, with
SigMoS rank selection and residual diagnostics."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    CountMatrix,
    DispersionVector,
    Factorization,
    Model,
    NumericalError,
    SignmfError,
    ValidationError,
    gkl_divergence,
    model_variance,
    nb_divergence,
    nb_loglik,
    normalize_factorization,
    poisson_loglik,
)
from .engine import FitConfig, fit_model, init_factors, nb_nmf, po_nmf  # noqa: E402
from .dispersion import estimate_dispersion, estimate_shared_dispersion, nb_score_and_curvature  # noqa: E402
from .selection import SigmosConfig, SelectionResult, aic, bic, select_by_ic, sigmos  # noqa: E402
from .simulation import SimConfig, random_signatures, sample_nb, simulate_dataset  # noqa: E402
from .diagnostics import cosine_match, quantile_check, residual_report  # noqa: E402
