"""Random subset averaging: a two-layer Mallows-weighted ensemble of random-subset OLS fits."""

from rsa_ensemble.errors import DegenerateSampleError, InvalidInputError, RsaError
from rsa_ensemble.linalg import Dataset, LsqSolution
from rsa_ensemble.rsa import RsaConfig, RsaModel, fit_rsa, predict

__all__ = [
    "Dataset",
    "DegenerateSampleError",
    "InvalidInputError",
    "LsqSolution",
    "RsaConfig",
    "RsaError",
    "RsaModel",
    "fit_rsa",
    "predict",
]

__version__ = "0.1.0"
