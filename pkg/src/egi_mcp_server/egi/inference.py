"""EGI 求解：最小二乘（最小范数）与 Bayes 后验

梯度 G = Z u¹，Hessian H = Σ_k u²_k z_k z_kᵀ，H 从不在求解路径中显式构造。
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg

from ..config import EgiConfig
from ..errors import DegenerateEnsemble, DimensionMismatch, SingularInnovation, SingularWhitening
from .ensemble import DesignSystem, EvaluatedEnsemble, build_design_system

logger = logging.getLogger(__name__)


def _as_vector(v: Sequence[float], dim: int, what: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (dim,):
        raise DimensionMismatch(f"{what} has shape {arr.shape}, expected ({dim},)")
    return arr


@dataclass(frozen=True)
class DerivativeEstimate:
    """参考点处的梯度与秩受限 Hessian 系数"""
    grad_coeffs: np.ndarray
    hess_coeffs: np.ndarray
    directions: np.ndarray
    reference: np.ndarray
    reference_value: float

    @property
    def dim(self) -> int:
        return self.directions.shape[0]

    def gradient(self) -> np.ndarray:
        return self.directions @ self.grad_coeffs

    def hessian_matvec(self, v: Sequence[float]) -> np.ndarray:
        """Σ_k u²_k z_k ⟨z_k, v⟩"""
        v = _as_vector(v, self.dim, "vector")
        return self.directions @ (self.hess_coeffs * (self.directions.T @ v))

    def hessian(self) -> np.ndarray:
        """显式 d×d Hessian，仅用于小维度诊断"""
        return (self.directions * self.hess_coeffs) @ self.directions.T

    def extrapolate_gradient(self, x: Sequence[float]) -> np.ndarray:
        """∇V(x) ≈ G + H (x - x^j)"""
        x = _as_vector(x, self.dim, "point")
        return self.gradient() + self.hessian_matvec(x - self.reference)

    def extrapolate_many(self, points: np.ndarray) -> np.ndarray:
        """批量外推，points 形状 (n, d)，返回 (n, d)"""
        dx = np.asarray(points, dtype=float) - self.reference
        return self.gradient() + (dx @ self.directions) * self.hess_coeffs @ self.directions.T

    def surrogate_value(self, x: Sequence[float]) -> float:
        """二次代理模型 V(x^j) + Gᵀ(x - x^j) + ½ (x - x^j)ᵀ H (x - x^j)"""
        x = _as_vector(x, self.dim, "point")
        dx = x - self.reference
        return float(self.reference_value + self.gradient() @ dx + 0.5 * dx @ self.hessian_matvec(dx))


@dataclass(frozen=True)
class DerivativePosterior:
    """系数向量 (u¹, u²) 的 Gaussian 后验"""
    mean: np.ndarray
    covariance: np.ndarray
    directions: np.ndarray
    reference: np.ndarray
    reference_value: float

    def estimate_from(self, coeffs: np.ndarray) -> DerivativeEstimate:
        k = self.directions.shape[1]
        return DerivativeEstimate(coeffs[:k].copy(), coeffs[k:].copy(), self.directions,
                                  self.reference, self.reference_value)

    def map_estimate(self) -> DerivativeEstimate:
        """MAP 估计即后验均值"""
        return self.estimate_from(self.mean)


# 与操作同名的函数形式
def gradient(est: DerivativeEstimate) -> np.ndarray:
    return est.gradient()


def hessian_matvec(est: DerivativeEstimate, v: Sequence[float]) -> np.ndarray:
    return est.hessian_matvec(v)


def extrapolate_gradient(est: DerivativeEstimate, x: Sequence[float]) -> np.ndarray:
    return est.extrapolate_gradient(x)


def surrogate_value(est: DerivativeEstimate, x: Sequence[float]) -> float:
    return est.surrogate_value(x)


def zero_estimate(reference: Sequence[float], reference_value: float = 0.0) -> DerivativeEstimate:
    """G = 0, H = 0 的估计，用于集合完全塌缩的情形"""
    reference = np.atleast_1d(np.asarray(reference, dtype=float))
    dim = reference.shape[0]
    return DerivativeEstimate(np.zeros(0), np.zeros(0), np.zeros((dim, 0)), reference, float(reference_value))


def infer_lsq(system: DesignSystem) -> DerivativeEstimate:
    """白化系统 Γ⁻¹A u = Γ⁻¹y 的最小范数最小二乘解

    Raises:
        SingularWhitening: Γ 对角线有零元素
    """
    if np.any(system.gamma <= 0):
        raise SingularWhitening("Gamma has a zero diagonal entry")
    A_w = system.A / system.gamma[:, None]
    y_w = system.y / system.gamma
    # gelsd 基于 SVD，欠定时返回最小范数解
    coeffs, _, rank, _ = linalg.lstsq(A_w, y_w, cond=system.config.rcond, lapack_driver='gelsd')
    k = system.n_kept
    logger.debug(f"EGI 最小二乘: K={k}, rank={rank}")
    return DerivativeEstimate(coeffs[:k], coeffs[k:], system.directions, system.reference, system.reference_value)


def infer_bayes(system: DesignSystem, prior_covariance: Optional[np.ndarray] = None) -> DerivativePosterior:
    """Kalman 形式的 Gaussian 后验

    K = Σ Aᵀ (Γ + A Σ Aᵀ)⁻¹，均值 K y，协方差 Σ - K A Σ。
    config.bayes_gamma_squared 打开时噪声协方差取 Γ²。

    Raises:
        DimensionMismatch: 先验协方差形状不符
        SingularInnovation: Γ + A Σ Aᵀ 数值奇异
    """
    n = system.A.shape[1]
    if prior_covariance is None:
        prior = system.config.prior_scale * np.eye(n)
    else:
        prior = np.asarray(prior_covariance, dtype=float)
        if prior.shape != (n, n):
            raise DimensionMismatch(f"prior covariance has shape {prior.shape}, expected ({n}, {n})")
    noise = system.gamma ** 2 if system.config.bayes_gamma_squared else system.gamma
    A_prior = system.A @ prior                      # A Σ
    innovation = np.diag(noise) + A_prior @ system.A.T
    innovation = 0.5 * (innovation + innovation.T)
    if np.linalg.cond(innovation) > 1.0 / np.finfo(float).eps:
        raise SingularInnovation("innovation matrix is numerically singular")
    try:
        factor = linalg.cho_factor(innovation)
    except linalg.LinAlgError as e:
        raise SingularInnovation(f"innovation matrix is not positive definite: {e}") from e
    gain = linalg.cho_solve(factor, A_prior).T      # Σ Aᵀ S⁻¹
    mean = gain @ system.y
    covariance = prior - gain @ A_prior
    covariance = 0.5 * (covariance + covariance.T)
    return DerivativePosterior(mean, covariance, system.directions, system.reference, system.reference_value)


def sample_posterior(posterior: DerivativePosterior, n_samples: int, rng_seed: int) -> List[DerivativeEstimate]:
    """从后验中抽取 n_samples 个系数样本，给定种子时结果确定"""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    draws = rng.multivariate_normal(posterior.mean, posterior.covariance, size=n_samples,
                                    method='svd', check_valid='ignore')
    return [posterior.estimate_from(row) for row in draws]


def infer_at(ensemble: EvaluatedEnsemble,
             config: Optional[EgiConfig] = None,
             *,
             reference_index: Optional[int] = None,
             reference_point: Optional[Sequence[float]] = None,
             reference_value: Optional[float] = None,
             allow_degenerate: bool = False) -> DerivativeEstimate:
    """构造系统并做最小二乘求解

    allow_degenerate 为 True 时，过滤后无成员的情形返回 G = H = 0。
    """
    try:
        system = build_design_system(ensemble, config, reference_index=reference_index,
                                     reference_point=reference_point, reference_value=reference_value)
    except DegenerateEnsemble:
        if not allow_degenerate:
            raise
        if reference_index is not None:
            return zero_estimate(ensemble.points[reference_index], ensemble.values[reference_index])
        return zero_estimate(reference_point, reference_value)
    return infer_lsq(system)


def infer_all_members(ensemble: EvaluatedEnsemble, config: Optional[EgiConfig] = None,
                      allow_degenerate: bool = False) -> List[DerivativeEstimate]:
    """以每个成员为参考点各做一次求解（J 次）"""
    return [infer_at(ensemble, config, reference_index=j, allow_degenerate=allow_degenerate)
            for j in range(ensemble.size)]


def infer_extrapolated(ensemble: EvaluatedEnsemble, reference_index: int,
                       config: Optional[EgiConfig] = None) -> np.ndarray:
    """只在一个参考成员处求解，再外推出全部成员的梯度，返回 (J, d)"""
    est = infer_at(ensemble, config, reference_index=reference_index)
    return np.vstack([est.extrapolate_gradient(x) for x in ensemble.points])
