"""集合动力学基础框架

EnsembleDynamics 定义单步迭代与运行模板，RunRecord 保存一次运行的轨迹，
RecordFormatter 把记录整理成字典，DynamicsFactory 按方法名创建动力学实例。
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from ..errors import EgiError, NonFiniteState, RunAborted
from ..objectives import Potential

logger = logging.getLogger(__name__)


def ensemble_spread(points: np.ndarray) -> float:
    """最大两两距离，单成员集合为 0"""
    if points.shape[0] < 2:
        return 0.0
    return float(np.max(pdist(points)))


def check_finite(points: np.ndarray, what: str = "ensemble") -> None:
    if not np.all(np.isfinite(points)):
        raise NonFiniteState(f"{what} contains non-finite coordinates")


@dataclass
class TraceRow:
    """一行轨迹：iteration, 均值坐标, V(均值), 扩散度, 接受率"""
    iteration: int
    mean: np.ndarray
    v_mean: float
    spread: float
    accept_rate: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "mean": self.mean.tolist(),
            "V_mean": self.v_mean,
            "spread": self.spread,
            "accept_rate": self.accept_rate,
        }


@dataclass
class RunRecord:
    """一次运行的完整记录"""
    method: str
    potential: str
    seed: int
    config: Dict[str, Any]
    rows: List[TraceRow] = field(default_factory=list)
    ensembles: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    final_ensemble: Optional[np.ndarray] = None
    final_mean: Optional[np.ndarray] = None
    final_value: Optional[float] = None
    samples: Optional[np.ndarray] = None
    burn_in: Optional[int] = None
    accept_rate: float = 1.0
    n_iters: int = 0
    abort_reason: Optional[str] = None
    abort_iteration: Optional[int] = None
    duration: Optional[float] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def aborted(self) -> bool:
        return self.abort_reason is not None

    @property
    def sample_count(self) -> int:
        return 0 if self.samples is None else int(self.samples.shape[0])

    def sample_moments(self) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        """样本均值与方差（逐坐标），样本池为空时返回 (None, None)"""
        if not self.sample_count:
            return None, None
        return self.samples.mean(axis=0), self.samples.var(axis=0)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式（不含原始样本与轨迹集合）"""
        mean, var = self.sample_moments()
        return {
            "success": not self.aborted,
            "method": self.method,
            "potential": self.potential,
            "seed": self.seed,
            "n_iters": self.n_iters,
            "final_mean": None if self.final_mean is None else self.final_mean.tolist(),
            "final_value": self.final_value,
            "accept_rate": self.accept_rate,
            "sample_count": self.sample_count,
            "sample_mean": None if mean is None else mean.tolist(),
            "sample_var": None if var is None else var.tolist(),
            "abort_reason": self.abort_reason,
            "abort_iteration": self.abort_iteration,
            "trace_rows": len(self.rows),
            **self.extra,
        }


class EnsembleDynamics(ABC):
    """集合动力学基类

    子类实现 initial_state / step / summarize；run() 负责迭代、记录和异常包装。
    """

    def __init__(self, potential: Potential, config: Any):
        """初始化

        Args:
            potential: 势函数
            config: CboConfig 或 SamplerConfig
        """
        self.potential = potential
        self.config = config

    @property
    def method(self) -> str:
        return self.config.method

    @abstractmethod
    def initial_state(self, init: np.ndarray) -> Any:
        """由初始点构造状态"""

    @abstractmethod
    def step(self, state: Any, rng: np.random.Generator) -> Any:
        """执行一次迭代"""

    @abstractmethod
    def summarize(self, state: Any) -> Tuple[np.ndarray, float, float]:
        """返回 (均值, V(均值), 接受率)"""

    def pre_run(self, state: Any, record: RunRecord):
        """运行前的钩子"""
        pass

    def post_step(self, state: Any, record: RunRecord):
        """每步之后的钩子"""
        pass

    def post_run(self, state: Any, record: RunRecord):
        """运行结束（含中止）时的钩子"""
        pass

    def _trace(self, state: Any, record: RunRecord, record_ensemble: bool):
        mean, v_mean, accept = self.summarize(state)
        record.rows.append(TraceRow(state.iteration, mean.copy(), v_mean, ensemble_spread(state.ensemble), accept))
        if record_ensemble:
            record.ensembles.append((state.iteration, state.ensemble.copy()))

    def _finish(self, state: Any, record: RunRecord):
        mean, v_mean, accept = self.summarize(state)
        record.final_ensemble = state.ensemble.copy()
        record.final_mean = mean.copy()
        record.final_value = v_mean
        record.accept_rate = accept
        record.n_iters = state.iteration
        self.post_run(state, record)

    def run(self, init: np.ndarray, trace_every: int = 1, n_iters: Optional[int] = None,
            record_ensemble: bool = False) -> RunRecord:
        """执行完整运行

        Args:
            init: 初始集合 (J, d)
            trace_every: 轨迹记录间隔
            n_iters: 覆盖配置中的迭代次数（可为 0）
            record_ensemble: 是否在轨迹点记录完整集合

        Returns:
            RunRecord: 运行记录

        Raises:
            RunAborted: 某一步抛出 EgiError，携带迭代序号和部分记录
        """
        if trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        n_iters = self.config.n_iters if n_iters is None else n_iters
        init = np.asarray(init, dtype=float)
        if init.ndim != 2 or init.shape[1] != self.potential.dim:
            raise ValueError(f"init has shape {init.shape}, expected (J, {self.potential.dim})")

        record = RunRecord(method=self.method, potential=self.potential.name, seed=self.config.seed,
                           config=self.config.model_dump(mode='json', by_alias=True))
        rng = np.random.default_rng(self.config.seed)
        start = time.perf_counter()
        logger.info(f"开始运行 {self.method}: potential={self.potential.name}, J={init.shape[0]}, "
                    f"N={n_iters}, seed={self.config.seed}")

        state = self.initial_state(init)
        self.pre_run(state, record)
        self._trace(state, record, record_ensemble)
        iteration = 0
        try:
            for iteration in range(1, n_iters + 1):
                state = self.step(state, rng)
                self.post_step(state, record)
                if iteration % trace_every == 0:
                    self._trace(state, record, record_ensemble)
        except EgiError as e:
            record.abort_reason = str(e)
            record.abort_iteration = iteration
            record.duration = time.perf_counter() - start
            self._finish(state, record)
            logger.error(f"{self.method} 在第 {iteration} 次迭代中止: {e}")
            raise RunAborted(str(e), iteration, record) from e

        record.duration = time.perf_counter() - start
        self._finish(state, record)
        logger.info(f"运行结束 {self.method}: final V={record.final_value:.6g}, 用时 {record.duration:.2f}s")
        return record


class RecordFormatter(ABC):
    """运行记录格式化器基类"""

    @abstractmethod
    def format(self, record: RunRecord) -> Dict[str, Any]:
        """格式化运行记录

        Args:
            record: 运行记录

        Returns:
            Dict[str, Any]: 格式化后的结果
        """


class SummaryFormatter(RecordFormatter):
    """摘要：最终均值、函数值与样本矩"""

    def format(self, record: RunRecord) -> Dict[str, Any]:
        return record.to_dict()


class TraceFormatter(RecordFormatter):
    """摘要加完整轨迹"""

    def format(self, record: RunRecord) -> Dict[str, Any]:
        result = record.to_dict()
        result["trace"] = [row.to_dict() for row in record.rows]
        return result


DynamicsBuilder = Callable[..., EnsembleDynamics]


class DynamicsFactory:
    """动力学工厂类"""

    def __init__(self):
        self._builders: Dict[str, DynamicsBuilder] = {}
        self._formatters: Dict[str, RecordFormatter] = {}

    def register(self, method: str, builder: DynamicsBuilder):
        """注册动力学构造函数"""
        self._builders[method] = builder

    def register_formatter(self, name: str, formatter: RecordFormatter):
        """注册记录格式化器"""
        self._formatters[name] = formatter

    @property
    def methods(self) -> List[str]:
        return sorted(self._builders)

    def get_formatter(self, name: str) -> RecordFormatter:
        """获取记录格式化器"""
        if name not in self._formatters:
            raise ValueError(f"Formatter '{name}' not found")
        return self._formatters[name]

    def create(self, potential: Potential, config: Any, **kwargs) -> EnsembleDynamics:
        """按 config.method 创建动力学实例"""
        if config.method not in self._builders:
            raise ValueError(f"Dynamics '{config.method}' not found")
        return self._builders[config.method](potential, config, **kwargs)
