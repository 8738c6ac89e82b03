from .config import MODELS, ModelConfig
from .gibbs import (
    GibbsSampler,
    Trace,
    inclusion_probs,
    run_gibbs,
    update_theta_bb,
    update_theta_copula,
    update_V,
    update_Z,
)
from .model import DataMatrix, FactorState, flexibility_metric, log_likelihood, recon_error_l1, reconstruct
from .snmf import snmf_fit, snmf_objective

__all__ = [
    "MODELS",
    "DataMatrix",
    "FactorState",
    "GibbsSampler",
    "ModelConfig",
    "Trace",
    "flexibility_metric",
    "inclusion_probs",
    "log_likelihood",
    "recon_error_l1",
    "reconstruct",
    "run_gibbs",
    "snmf_fit",
    "snmf_objective",
    "update_V",
    "update_Z",
    "update_theta_bb",
    "update_theta_copula",
]
