"""集合梯度推断（EGI）"""

from ..config import EgiConfig
from .ensemble import DesignSystem, EvaluatedEnsemble, build_design_system
from .inference import (
    DerivativeEstimate,
    DerivativePosterior,
    extrapolate_gradient,
    gradient,
    hessian_matvec,
    infer_all_members,
    infer_at,
    infer_bayes,
    infer_extrapolated,
    infer_lsq,
    sample_posterior,
    surrogate_value,
    zero_estimate,
)

__all__ = [
    'EgiConfig',
    'EvaluatedEnsemble',
    'DesignSystem',
    'build_design_system',
    'DerivativeEstimate',
    'DerivativePosterior',
    'infer_lsq',
    'infer_bayes',
    'sample_posterior',
    'gradient',
    'hessian_matvec',
    'extrapolate_gradient',
    'surrogate_value',
    'zero_estimate',
    'infer_at',
    'infer_all_members',
    'infer_extrapolated',
]
