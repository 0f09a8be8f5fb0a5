"""Divergence-minimization filters for nonlinear state estimation."""

from ._divkf import (
    CSV_HEADER,
    MeasurementModel,
    akf_update,
    black_scholes_model,
    confidence_radius,
    default_ukf_lambda,
    ekf_update,
    elbo,
    linear_model,
    min_sample_size,
    mkf_update,
    predict,
    radar_model,
    run_experiment,
    skf_update,
    ukf_update,
)

__version__ = "0.1.0"

__all__ = [
    "CSV_HEADER",
    "MeasurementModel",
    "akf_update",
    "black_scholes_model",
    "confidence_radius",
    "default_ukf_lambda",
    "ekf_update",
    "elbo",
    "linear_model",
    "min_sample_size",
    "mkf_update",
    "predict",
    "radar_model",
    "run_experiment",
    "skf_update",
    "ukf_update",
    "__version__",
]
