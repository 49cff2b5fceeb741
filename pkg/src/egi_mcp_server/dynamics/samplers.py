"""Langevin 型集合采样器

EGI-LS / ULA、EGI-MALA / MALA、无梯度 ALDI（EKS 为去掉修正项的变体）、
EGI-ALDI 与 EGI-ALDI-extra。随机数消耗顺序：
- LS / ULA: 先算全部梯度，再抽 W (J, d)
- MALA: W (J, d) -> 提案 -> 提案梯度 -> U (J,)
- ALDI 族: 先算漂移，再抽 W (J, J)
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from ..config import SamplerConfig
from ..egi import EvaluatedEnsemble, infer_at
from ..errors import NonFiniteState
from ..objectives import InverseProblemSpec, Potential, make_inverse_problem
from .base import EnsembleDynamics, RunRecord, check_finite

logger = logging.getLogger(__name__)

GradientField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SamplerState:
    """采样器状态，memory 仅 MALA 类方法在 iteration >= 1 时存在"""
    ensemble: np.ndarray
    values: np.ndarray
    iteration: int = 0
    memory: Optional[np.ndarray] = None
    memory_values: Optional[np.ndarray] = None
    accept_count: Optional[np.ndarray] = None


def make_sampler_state(points: np.ndarray, potential: Potential) -> SamplerState:
    points = np.asarray(points, dtype=float)
    check_finite(points)
    return SamplerState(points, potential.eval_many(points), 0, None, None, np.zeros(points.shape[0], dtype=int))


# ---- 梯度来源 ----

def egi_member_gradients(points: np.ndarray, values: np.ndarray, cfg: SamplerConfig,
                         members: Optional[int] = None) -> np.ndarray:
    """以前 members 个点为参考分别做 EGI，其余点只作为数据

    非有限值的点不参与求解；整个系统退化时该成员梯度为 0。
    """
    members = points.shape[0] if members is None else members
    grads = np.zeros((members, points.shape[1]))
    usable = np.isfinite(values)
    usable[:members] = True
    if not np.all(np.isfinite(values[:members])):
        raise NonFiniteState("ensemble members have non-finite potential values")
    ensemble = EvaluatedEnsemble.from_arrays(points[usable], values[usable])
    egi = cfg.egi_config()
    for j in range(members):
        grads[j] = infer_at(ensemble, egi, reference_index=j, allow_degenerate=True).gradient()
    return grads


def exact_gradients(potential: Potential, points: np.ndarray) -> np.ndarray:
    return np.vstack([potential.gradient(x) for x in points])


# ---- Langevin ----

def _langevin_move(state: SamplerState, grads: np.ndarray, cfg: SamplerConfig, rng: np.random.Generator,
                   potential: Potential) -> SamplerState:
    h = cfg.step
    noise = rng.standard_normal(state.ensemble.shape)
    x_new = state.ensemble - h * grads + np.sqrt(2 * h) * noise
    check_finite(x_new)
    return SamplerState(x_new, potential.eval_many(x_new), state.iteration + 1,
                        accept_count=state.accept_count + 1)


def egi_ls_step(state: SamplerState, cfg: SamplerConfig, potential: Potential,
                rng: np.random.Generator) -> SamplerState:
    """EGI-LS：每个成员一次 EGI 求解，然后做一步未修正的 Langevin"""
    grads = egi_member_gradients(state.ensemble, state.values, cfg)
    return _langevin_move(state, grads, cfg, rng, potential)


def ula_step(state: SamplerState, cfg: SamplerConfig, potential: Potential,
             rng: np.random.Generator) -> SamplerState:
    """解析梯度的 ULA，随机数顺序与 egi_ls_step 相同"""
    return _langevin_move(state, exact_gradients(potential, state.ensemble), cfg, rng, potential)


# ---- MALA ----

def log_proposal_density(target: np.ndarray, origin: np.ndarray, grad: np.ndarray, step: float) -> np.ndarray:
    """log q(target | origin) = -||target - (origin - h g)||² / (4h)，按行计算"""
    shift = target - (origin - step * grad)
    return -np.sum(shift ** 2, axis=-1) / (4.0 * step)


def log_acceptance(v_x: np.ndarray, v_prop: np.ndarray, log_q_fwd: np.ndarray, log_q_bwd: np.ndarray) -> np.ndarray:
    """log α = -V(prop) + V(x) + log q_bwd - log q_fwd；V(prop) 非有限时为 -inf"""
    with np.errstate(invalid='ignore'):
        log_alpha = -v_prop + v_x + log_q_bwd - log_q_fwd
    return np.where(np.isfinite(v_prop), log_alpha, -np.inf)


def _mala_move(state: SamplerState, cfg: SamplerConfig, potential: Potential, rng: np.random.Generator,
               current_grads: Callable[[SamplerState], np.ndarray],
               proposal_grads: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> SamplerState:
    h = cfg.step
    x = state.ensemble
    grads = current_grads(state)
    noise = rng.standard_normal(x.shape)
    proposal = x - h * grads + np.sqrt(2 * h) * noise
    check_finite(proposal, "proposal")
    v_prop = potential.eval_many(proposal)

    finite = np.isfinite(v_prop)
    prop_grads = np.zeros_like(proposal)
    if np.any(finite):
        prop_grads[finite] = proposal_grads(proposal[finite], v_prop[finite])
    uniforms = rng.random(x.shape[0])

    log_alpha = log_acceptance(state.values, v_prop,
                               log_proposal_density(proposal, x, grads, h),
                               log_proposal_density(x, proposal, prop_grads, h))
    with np.errstate(divide='ignore'):
        accept = np.log(uniforms) < log_alpha

    x_new = np.where(accept[:, None], proposal, x)
    v_new = np.where(accept, v_prop, state.values)
    # 接受：记住旧位置；拒绝：记住被拒绝的提案
    memory = np.where(accept[:, None], x, proposal)
    memory_values = np.where(accept, state.values, v_prop)
    return SamplerState(x_new, v_new, state.iteration + 1, memory, memory_values,
                        state.accept_count + accept.astype(int))


def _augmented(state: SamplerState) -> Tuple[np.ndarray, np.ndarray]:
    """当前集合 ∪ 记忆（仅保留有限值的记忆点）"""
    if state.memory is None:
        return state.ensemble, state.values
    keep = np.isfinite(state.memory_values)
    return (np.vstack([state.ensemble, state.memory[keep]]),
            np.concatenate([state.values, state.memory_values[keep]]))


def egi_mala_step(state: SamplerState, cfg: SamplerConfig, potential: Potential,
                  rng: np.random.Generator) -> SamplerState:
    """EGI-MALA：当前点梯度使用记忆增广集合，提案梯度只用提案集合，每步 2J 次求解"""
    def current(s: SamplerState) -> np.ndarray:
        points, values = _augmented(s)
        return egi_member_gradients(points, values, cfg, members=s.ensemble.shape[0])

    def proposed(points: np.ndarray, values: np.ndarray) -> np.ndarray:
        return egi_member_gradients(points, values, cfg)

    return _mala_move(state, cfg, potential, rng, current, proposed)


def mala_step(state: SamplerState, cfg: SamplerConfig, potential: Potential,
              rng: np.random.Generator) -> SamplerState:
    """解析梯度的 MALA，随机数顺序与 egi_mala_step 相同"""
    return _mala_move(state, cfg, potential, rng,
                      lambda s: exact_gradients(potential, s.ensemble),
                      lambda points, values: exact_gradients(potential, points))


# ---- ALDI 族 ----

def ensemble_covariance(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """返回 (均值, 中心化偏差 (J, d), C = devᵀ dev / J)"""
    mean = points.mean(axis=0)
    dev = points - mean
    return mean, dev, dev.T @ dev / points.shape[0]


def _aldi_move(state: SamplerState, drift: np.ndarray, dev: np.ndarray, cfg: SamplerConfig,
               rng: np.random.Generator, potential: Potential) -> SamplerState:
    """x + τ drift + τ (d+1)/J (x - x̄) + √(2τ) C^{1/2} W，C^{1/2} = devᵀ/√J"""
    J, d = state.ensemble.shape
    tau = cfg.step
    x_new = state.ensemble + tau * drift
    if cfg.aldi_correction:
        x_new = x_new + tau * (d + 1) / J * dev
    noise = rng.standard_normal((J, J))
    x_new = x_new + np.sqrt(2 * tau) * (noise @ dev) / np.sqrt(J)
    check_finite(x_new)
    return SamplerState(x_new, potential.eval_many(x_new), state.iteration + 1,
                        accept_count=state.accept_count + 1)


def aldi_gradfree_step(state: SamplerState, cfg: SamplerConfig, problem: InverseProblemSpec,
                       potential: Potential, rng: np.random.Generator) -> SamplerState:
    """无梯度 ALDI：漂移 -[D Γ⁻¹ (G(x) - y) + C Σ₀⁻¹ (x - μ₀)]"""
    x = state.ensemble
    _, dev, C = ensemble_covariance(x)
    forward = np.asarray(problem.forward(x), dtype=float)           # (J, l)
    D = dev.T @ (forward - forward.mean(axis=0)) / x.shape[0]       # (d, l)
    misfit = (forward - problem.data) @ problem.noise_precision      # (J, l)
    prior = (x - problem.prior_mean) @ problem.prior_precision       # (J, d)
    drift = -(misfit @ D.T + prior @ C)
    return _aldi_move(state, drift, dev, cfg, rng, potential)


def egi_aldi_step(state: SamplerState, cfg: SamplerConfig, potential: Potential,
                  rng: np.random.Generator) -> SamplerState:
    """EGI-ALDI：每个成员用 {x^i} ∪ {x̄} 做 EGI，漂移 -C g"""
    x = state.ensemble
    mean, dev, C = ensemble_covariance(x)
    points = np.vstack([x, mean])
    values = np.append(state.values, potential.eval(mean))
    grads = egi_member_gradients(points, values, cfg, members=x.shape[0])
    return _aldi_move(state, -grads @ C, dev, cfg, rng, potential)


def egi_aldi_extra_step(state: SamplerState, cfg: SamplerConfig, potential: Potential,
                        rng: np.random.Generator) -> SamplerState:
    """EGI-ALDI-extra：只在 x̄ 处求解一次，再外推 g + H (x - x̄)"""
    x = state.ensemble
    mean, dev, C = ensemble_covariance(x)
    ensemble = EvaluatedEnsemble.from_arrays(x, state.values)
    est = infer_at(ensemble, cfg.egi_config(), reference_point=mean, reference_value=potential.eval(mean),
                   allow_degenerate=True)
    grads = est.extrapolate_many(x)
    return _aldi_move(state, -grads @ C, dev, cfg, rng, potential)


# ---- 运行 ----

class EnsembleSampler(EnsembleDynamics):
    """采样器动力学：burn_in 之后把每步的集合并入样本池"""

    def __init__(self, potential: Potential, config: SamplerConfig,
                 burn_in: Optional[int] = None, problem: Optional[InverseProblemSpec] = None):
        super().__init__(potential, config)
        self.burn_in = config.n_iters // 4 if burn_in is None else burn_in
        if config.method == 'aldi_gradfree' and problem is None:
            problem = make_inverse_problem(potential.name)
        self.problem = problem
        self._pool = []

    def initial_state(self, init: np.ndarray) -> SamplerState:
        if init.shape[0] < 2:
            raise ValueError("samplers need at least 2 ensemble members")
        return make_sampler_state(init, self.potential)

    def step(self, state: SamplerState, rng: np.random.Generator) -> SamplerState:
        method = self.config.method
        if method == 'aldi_gradfree':
            return aldi_gradfree_step(state, self.config, self.problem, self.potential, rng)
        return _STEPS[method](state, self.config, self.potential, rng)

    def summarize(self, state: SamplerState) -> Tuple[np.ndarray, float, float]:
        mean = state.ensemble.mean(axis=0)
        if state.iteration == 0:
            accept = 1.0
        else:
            accept = float(state.accept_count.sum()) / (state.iteration * state.ensemble.shape[0])
        return mean, self.potential.eval(mean), accept

    def pre_run(self, state: SamplerState, record: RunRecord):
        self._pool = []
        record.burn_in = self.burn_in

    def post_step(self, state: SamplerState, record: RunRecord):
        if state.iteration > self.burn_in:
            self._pool.append(state.ensemble.copy())

    def post_run(self, state: SamplerState, record: RunRecord):
        if self._pool:
            record.samples = np.vstack(self._pool)
        else:
            record.samples = np.empty((0, state.ensemble.shape[1]))
            record.extra["empty_sample_pool"] = True
            logger.warning(f"{self.method}: burn_in={self.burn_in} 之后没有保留任何样本")


_STEPS = {
    'egi_ls': egi_ls_step,
    'ula': ula_step,
    'egi_mala': egi_mala_step,
    'mala': mala_step,
    'egi_aldi': egi_aldi_step,
    'egi_aldi_extra': egi_aldi_extra_step,
}


def run_sampler(potential: Potential,
                init: np.ndarray,
                cfg: SamplerConfig,
                burn_in: Optional[int] = None,
                trace_every: int = 1,
                problem: Optional[InverseProblemSpec] = None,
                n_iters: Optional[int] = None,
                record_ensemble: bool = False) -> RunRecord:
    """运行采样器，burn_in 之后的状态按成员和迭代合并为样本

    Args:
        potential: 目标势函数 V
        init: 初始集合 (J, d)，J >= 2
        cfg: 采样器配置
        burn_in: 丢弃的迭代数，默认 n_iters 的 25%
        trace_every: 轨迹记录间隔
        problem: aldi_gradfree 需要的反问题，缺省时按势函数名查找
        n_iters: 覆盖 cfg.n_iters
        record_ensemble: 是否记录完整集合

    Returns:
        RunRecord: 含样本池、接受率与样本矩
    """
    sampler = EnsembleSampler(potential, cfg, burn_in=burn_in, problem=problem)
    return sampler.run(init, trace_every=trace_every, n_iters=n_iters, record_ensemble=record_ensemble)
