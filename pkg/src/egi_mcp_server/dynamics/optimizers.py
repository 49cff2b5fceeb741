"""CBO 与 EGI-CBO

每次迭代的随机数消耗顺序固定：先做 EGI（不消耗随机数），再按成员顺序抽取 J 个
d 维标准正态向量。kappa = 0 时 EGI-CBO 与 CBO 的轨迹逐位一致。
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special

from ..config import CboConfig
from ..egi import EvaluatedEnsemble, infer_at, zero_estimate
from ..errors import DegenerateEnsemble, NonFiniteState
from ..objectives import Potential
from .base import EnsembleDynamics, RunRecord, check_finite

logger = logging.getLogger(__name__)


def weighted_mean(points: np.ndarray, values: np.ndarray, alpha: float) -> np.ndarray:
    """Σ w_j x^j，w = softmax(-alpha (V - min V))

    Args:
        points: (J, d)
        values: (J,)
        alpha: 权重锐度，>= 0
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    shifted = values - np.min(values)
    weights = special.softmax(-alpha * shifted)
    return weights @ points


@dataclass(frozen=True)
class OptState:
    """优化器状态"""
    ensemble: np.ndarray
    values: np.ndarray
    weighted_mean: np.ndarray
    unweighted_mean: np.ndarray
    iteration: int = 0


def make_opt_state(points: np.ndarray, potential: Potential, alpha: float, iteration: int = 0) -> OptState:
    points = np.asarray(points, dtype=float)
    values = potential.eval_many(points)
    if np.all(~np.isfinite(values)) or np.any(np.isnan(values)):
        raise NonFiniteState("potential values are not usable for the weighted mean")
    return OptState(points, values, weighted_mean(points, values, alpha), points.mean(axis=0), iteration)


def _diffusion(diff: np.ndarray, noise: np.ndarray, cfg: CboConfig) -> np.ndarray:
    if cfg.noise_mode == 'norm_proportional':
        return cfg.sigma * np.linalg.norm(diff, axis=1, keepdims=True) * noise
    return cfg.sigma * diff * noise


def _update(state: OptState, grads: np.ndarray, cfg: CboConfig, rng: np.random.Generator,
            potential: Potential) -> OptState:
    """x - τκ g - τλ (x - m^α) + √τ σ_n"""
    diff = state.ensemble - state.weighted_mean
    noise = rng.standard_normal(state.ensemble.shape)
    x_new = (state.ensemble
             - cfg.tau * cfg.kappa * grads
             - cfg.tau * cfg.lambda_drift * diff
             + np.sqrt(cfg.tau) * _diffusion(diff, noise, cfg))
    check_finite(x_new)
    return make_opt_state(x_new, potential, cfg.alpha, state.iteration + 1)


def cbo_step(state: OptState, cfg: CboConfig, rng: np.random.Generator, potential: Potential) -> OptState:
    """一次 CBO Euler–Maruyama 迭代（不使用梯度）"""
    return _update(state, np.zeros_like(state.ensemble), cfg, rng, potential)


def egi_gradients(state: OptState, cfg: CboConfig, potential: Potential) -> np.ndarray:
    """在非加权均值 m_n 处用 {m_n} ∪ {x^i} 做 EGI，返回每个成员的梯度 (J, d)"""
    m = state.unweighted_mean
    v_m = potential.eval(m)
    ensemble = EvaluatedEnsemble.from_arrays(state.ensemble, state.values)
    try:
        est = infer_at(ensemble, cfg.egi_config(), reference_point=m, reference_value=v_m)
    except DegenerateEnsemble:
        # 集合完全塌缩：g = H = 0
        logger.debug(f"第 {state.iteration} 步集合塌缩，EGI 梯度取 0")
        est = zero_estimate(m, v_m)
    if cfg.extrapolate:
        return est.extrapolate_many(state.ensemble)
    return np.tile(est.gradient(), (state.ensemble.shape[0], 1))


def egi_cbo_step(state: OptState, cfg: CboConfig, rng: np.random.Generator, potential: Potential) -> OptState:
    """一次 EGI-CBO 迭代：每步一次 EGI 求解，可选外推到每个成员"""
    grads = egi_gradients(state, cfg, potential)
    return _update(state, grads, cfg, rng, potential)


class ConsensusOptimizer(EnsembleDynamics):
    """CBO / EGI-CBO 动力学"""

    def __init__(self, potential: Potential, config: CboConfig):
        super().__init__(potential, config)
        self._step = egi_cbo_step if config.method == 'egi_cbo' else cbo_step

    def initial_state(self, init: np.ndarray) -> OptState:
        return make_opt_state(init, self.potential, self.config.alpha)

    def step(self, state: OptState, rng: np.random.Generator) -> OptState:
        return self._step(state, self.config, rng, self.potential)

    def summarize(self, state: OptState) -> Tuple[np.ndarray, float, float]:
        return state.weighted_mean, self.potential.eval(state.weighted_mean), 1.0


def run_optimizer(potential: Potential,
                  init: np.ndarray,
                  cfg: CboConfig,
                  trace_every: int = 1,
                  n_iters: Optional[int] = None,
                  record_ensemble: bool = False) -> RunRecord:
    """运行 CBO / EGI-CBO，记录加权均值、V(加权均值) 与扩散度

    Args:
        potential: 目标函数
        init: 初始集合 (J, d)
        cfg: 优化器配置
        trace_every: 轨迹记录间隔
        n_iters: 覆盖 cfg.n_iters
        record_ensemble: 是否记录完整集合

    Returns:
        RunRecord: 运行记录
    """
    return ConsensusOptimizer(potential, cfg).run(init, trace_every=trace_every, n_iters=n_iters,
                                                  record_ensemble=record_ensemble)
