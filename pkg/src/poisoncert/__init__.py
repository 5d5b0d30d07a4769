"""Certified robustness of random-selection (subsample-and-aggregate) classifiers
against data poisoning."""

from .certify import (
    ABSTAIN,
    Certificate,
    PoisoningModel,
    VoteRecord,
    accuracy_curve,
    certified_accuracy,
    certified_radius,
    certify_prediction,
    delta,
    delta_exact,
)
from .combinatorics import binomial_ratio, cp_lower, cp_upper, log_binomial
from .schemes import (
    Binomial,
    WithoutReplacement,
    WithReplacement,
    miss_probability,
    pi_ratio,
    sample_indices,
    subset_mass,
)

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN", "Binomial", "Certificate", "PoisoningModel", "VoteRecord", "WithReplacement",
    "WithoutReplacement", "accuracy_curve", "binomial_ratio", "certified_accuracy",
    "certified_radius", "certify_prediction", "cp_lower", "cp_upper", "delta", "delta_exact",
    "log_binomial", "miss_probability", "pi_ratio", "sample_indices", "subset_mass",
]
