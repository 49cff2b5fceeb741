"""配置管理模块

实验配置采用扁平的 ``key = value`` 文本格式：``#`` 开始注释，数组写作 ``[a, b, c]``。
解析得到的键值表交给 pydantic 模型校验，未知配置项一律拒绝。
"""

import logging
import math
import os
import re
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from typing_extensions import Annotated

from .errors import ConfigValidationError, ParseError

# 配置日志
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

_KEY_RE = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')
_INT_RE = re.compile(r'^[+-]?\d+$')

OPTIMIZER_METHODS = ('cbo', 'egi_cbo')
SAMPLER_METHODS = ('egi_ls', 'egi_mala', 'aldi_gradfree', 'egi_aldi', 'egi_aldi_extra', 'ula', 'mala')


class EgiConfig(BaseModel):
    """EGI 推断参数

    dup_tolerance 为相对阈值：||x^i - x^j|| < dup_tolerance * (1 + ||x^j||) 的成员被丢弃。
    """
    model_config = ConfigDict(extra='forbid', frozen=True)

    gamma: float = Field(1.0, gt=0)
    xi: float = Field(0.0, ge=0)
    dup_tolerance: float = Field(1e-12, gt=0)
    bayes_gamma_squared: bool = False  # Bayes 更新中把 Γ² 当协方差
    prior_scale: float = Field(1.0, gt=0)  # 默认先验 Σ = prior_scale * I
    rcond: float = Field(1e-10, gt=0, lt=1)  # 最小二乘的相对奇异值截断


class CboConfig(BaseModel):
    """CBO / EGI-CBO 运行参数

    alpha 即权重锐度参数（文献中也记作 beta）。配置文件里的 ``lambda`` 对应 lambda_drift。
    """
    model_config = ConfigDict(extra='forbid', frozen=True, populate_by_name=True)

    method: Literal['cbo', 'egi_cbo'] = 'egi_cbo'
    alpha: float = Field(100.0, gt=0)
    lambda_drift: float = Field(1.0, ge=0, alias='lambda')
    sigma: float = Field(0.5, ge=0)
    kappa: float = Field(1.0, ge=0)
    xi: float = Field(0.0, ge=0)
    gamma: float = Field(1.0, gt=0)
    tau: float = Field(0.01, gt=0)
    n_iters: int = Field(1000, ge=1)
    noise_mode: Literal['norm_proportional', 'component_wise'] = 'norm_proportional'
    extrapolate: bool = False
    rcond: float = Field(1e-10, gt=0, lt=1)
    seed: int = 0

    def egi_config(self) -> EgiConfig:
        return EgiConfig(gamma=self.gamma, xi=self.xi, rcond=self.rcond)


class SamplerConfig(BaseModel):
    """采样器运行参数，step 即步长 h（或 τ）"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    method: Literal['egi_ls', 'egi_mala', 'aldi_gradfree', 'egi_aldi', 'egi_aldi_extra', 'ula', 'mala'] = 'egi_mala'
    step: float = Field(0.01, gt=0)
    n_iters: int = Field(1000, ge=1)
    xi: float = Field(0.0, ge=0)
    gamma: float = Field(1.0, gt=0)
    aldi_correction: bool = True  # 关闭即为 EKS
    rcond: float = Field(1e-10, gt=0, lt=1)
    seed: int = 0

    def egi_config(self) -> EgiConfig:
        return EgiConfig(gamma=self.gamma, xi=self.xi, rcond=self.rcond)


AlgorithmConfig = Annotated[Union[CboConfig, SamplerConfig], Field(discriminator='method')]


class ExperimentConfig(BaseModel):
    """一次实验（可含多次 Monte Carlo 运行）的完整配置"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    experiment_name: Annotated[str, Field(pattern=r'^[A-Za-z_][A-Za-z0-9_\-]*$')]
    potential: str
    dim: int = Field(ge=1)
    ensemble_size: int = Field(ge=1)
    init_box_lower: List[float]
    init_box_upper: List[float]
    allow_degenerate_box: bool = False
    algorithm: AlgorithmConfig
    n_mc_runs: int = Field(1, ge=1)
    base_seed: int = 0
    output_dir: str = 'results'
    trace_every: int = Field(10, ge=1)
    record_ensemble: bool = False
    burn_in: Optional[int] = Field(None, ge=0)
    hist_bin_width: float = Field(0.5, gt=0)
    marginal_bins: int = Field(40, ge=1)
    marginal_lower: float = -6.0
    marginal_upper: float = 6.0
    marginal_axis: int = Field(0, ge=0)
    reference_nodes: int = Field(800, ge=100)

    @model_validator(mode='before')
    @classmethod
    def _broadcast_box(cls, data: Any) -> Any:
        """标量盒子边界按 dim 展开"""
        if isinstance(data, dict) and isinstance(data.get('dim'), int):
            data = dict(data)
            for key in ('init_box_lower', 'init_box_upper'):
                value = data.get(key)
                if isinstance(value, (int, float)) and not isinstance(value, bool):
                    data[key] = [float(value)] * data['dim']
        return data

    @property
    def is_sampler(self) -> bool:
        return isinstance(self.algorithm, SamplerConfig)

    @property
    def effective_burn_in(self) -> int:
        """未配置时取 n_iters 的 25%"""
        if self.burn_in is not None:
            return self.burn_in
        return self.algorithm.n_iters // 4

    def dynamics_seed(self, run_index: int) -> int:
        """第 k 次 Monte Carlo 运行的动力学种子"""
        return self.base_seed + run_index + 1

    def snapshot(self) -> Dict[str, Any]:
        """配置快照（写入 meta.json）"""
        return self.model_dump(mode='json', by_alias=True)


def _parse_scalar(raw: str, line_no: int) -> Any:
    text = raw.strip()
    if not text:
        raise ParseError("empty value", line_no)
    lowered = text.lower()
    if lowered in ('true', 'false'):
        return lowered == 'true'
    if _INT_RE.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ('"', "'"):
        return text[1:-1]
    if any(ch in text for ch in '[]=,'):
        raise ParseError(f"malformed value '{text}'", line_no)
    return text


def parse_document(text: str) -> Dict[str, Any]:
    """把扁平配置文本解析为键值表（不做语义校验）

    Raises:
        ParseError: 语法错误或重复的配置项，带行号
    """
    values: Dict[str, Any] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        content = line.split('#', 1)[0].strip()
        if not content:
            continue
        if '=' not in content:
            raise ParseError(f"expected 'key = value', got '{content}'", line_no)
        key, raw = (part.strip() for part in content.split('=', 1))
        if not _KEY_RE.match(key):
            raise ParseError(f"invalid key '{key}'", line_no)
        if key in values:
            raise ParseError(f"duplicate key '{key}'", line_no)
        if raw.startswith('['):
            if not raw.endswith(']'):
                raise ParseError(f"unterminated array for '{key}'", line_no)
            inner = raw[1:-1].strip()
            values[key] = [_parse_scalar(item, line_no) for item in inner.split(',')] if inner else []
        else:
            values[key] = _parse_scalar(raw, line_no)
    return values


_EXPERIMENT_KEYS = set(ExperimentConfig.model_fields) - {'algorithm'}


def _error_key(error: Dict[str, Any]) -> Optional[str]:
    names = [part for part in error.get('loc', ()) if isinstance(part, str)]
    # 去掉判别字段带来的 'cbo' / 'egi_mala' 等标签
    names = [name for name in names if name not in OPTIMIZER_METHODS + SAMPLER_METHODS]
    return names[-1] if names else None


def _check_consistency(cfg: ExperimentConfig) -> None:
    from .objectives import has_inverse_problem, potential_names

    if cfg.potential not in potential_names():
        raise ConfigValidationError(f"unknown potential '{cfg.potential}'", 'potential')
    for key in ('init_box_lower', 'init_box_upper'):
        bounds = getattr(cfg, key)
        if len(bounds) != cfg.dim:
            raise ConfigValidationError(f"expected {cfg.dim} bounds, got {len(bounds)}", key)
        if not all(math.isfinite(b) for b in bounds):
            raise ConfigValidationError("bounds must be finite", key)
    for lo, hi in zip(cfg.init_box_lower, cfg.init_box_upper):
        if lo > hi or (lo == hi and not cfg.allow_degenerate_box):
            raise ConfigValidationError("lower bound must be below upper bound", 'init_box_upper')
    if cfg.is_sampler and cfg.ensemble_size < 2:
        raise ConfigValidationError("samplers need at least 2 ensemble members", 'ensemble_size')
    if cfg.is_sampler and cfg.algorithm.method == 'aldi_gradfree' and not has_inverse_problem(cfg.potential):
        raise ConfigValidationError(
            f"aldi_gradfree needs an inverse problem, '{cfg.potential}' has none", 'potential')
    if cfg.burn_in is not None and cfg.burn_in > cfg.algorithm.n_iters:
        raise ConfigValidationError("burn_in exceeds n_iters", 'burn_in')
    if cfg.marginal_axis >= cfg.dim:
        raise ConfigValidationError("axis out of range", 'marginal_axis')
    if cfg.marginal_lower >= cfg.marginal_upper:
        raise ConfigValidationError("lower must be below upper", 'marginal_upper')


def build_config(values: Dict[str, Any]) -> ExperimentConfig:
    """由键值表构造并校验 ExperimentConfig

    Raises:
        ConfigValidationError: 缺少必填项、未知配置项或取值非法
    """
    if 'experiment_name' not in values:
        raise ConfigValidationError("field required", 'experiment_name')
    if 'algorithm' not in values:
        raise ConfigValidationError("field required", 'algorithm')
    experiment = {key: value for key, value in values.items() if key in _EXPERIMENT_KEYS}
    algorithm = {key: value for key, value in values.items() if key not in _EXPERIMENT_KEYS}
    algorithm['method'] = algorithm.pop('algorithm')
    experiment['algorithm'] = algorithm
    try:
        cfg = ExperimentConfig.model_validate(experiment)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigValidationError(first.get('msg', str(e)), _error_key(first)) from e
    _check_consistency(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """解析并校验实验配置文本"""
    return build_config(parse_document(text))


def load_config(config_file: str) -> ExperimentConfig:
    """从配置文件加载实验配置

    Args:
        config_file: 配置文件路径

    Returns:
        ExperimentConfig: 配置对象
    """
    if not os.path.exists(config_file):
        raise ConfigValidationError(f"config file not found: {config_file}")
    with open(config_file, 'r', encoding='utf-8') as f:
        cfg = parse_config(f.read())
    logger.info(f"已从 {config_file} 加载配置 {cfg.experiment_name}")
    return cfg


def apply_overrides(cfg: ExperimentConfig,
                    seed: Optional[int] = None,
                    output_dir: Optional[str] = None,
                    trace_every: Optional[int] = None) -> ExperimentConfig:
    """命令行参数覆盖配置文件中的值"""
    update: Dict[str, Any] = {}
    if seed is not None:
        update['base_seed'] = seed
    if output_dir:
        update['output_dir'] = output_dir
    if trace_every is not None:
        if trace_every < 1:
            raise ConfigValidationError("must be >= 1", 'trace_every')
        update['trace_every'] = trace_every
    return cfg.model_copy(update=update) if update else cfg
