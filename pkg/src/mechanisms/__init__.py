# Mechanisms module
from .noise import (
    AuditResult,
    GaussianSpec,
    LaplaceSpec,
    RngStream,
    TAG_AUDIT,
    TAG_GAUSSIAN,
    TAG_LAPLACE,
    TAG_PARTITION,
    TAG_SYNTHETIC,
    laplace_inverse_cdf,
    laplace_ratio_audit,
    sample_gaussian_output_noise,
    sample_laplace_matrix,
)

__all__ = [
    "AuditResult",
    "GaussianSpec",
    "LaplaceSpec",
    "RngStream",
    "TAG_AUDIT",
    "TAG_GAUSSIAN",
    "TAG_LAPLACE",
    "TAG_PARTITION",
    "TAG_SYNTHETIC",
    "laplace_inverse_cdf",
    "laplace_ratio_audit",
    "sample_gaussian_output_noise",
    "sample_laplace_matrix",
]
