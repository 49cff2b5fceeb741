"""集合数据与 EGI 线性系统构造"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..config import EgiConfig
from ..errors import DegenerateEnsemble, DimensionMismatch, NonFiniteValue

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvaluatedEnsemble:
    """J 个点及其势函数值

    points 形状为 (J, d)，values 形状为 (J,)。
    """
    points: np.ndarray
    values: np.ndarray

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_arrays(cls, points: Sequence, values: Sequence) -> 'EvaluatedEnsemble':
        """由点列表和函数值构造集合，并检查维度与有限性

        Args:
            points: J 个 d 维点；一维数组视为 J 个一维点
            values: J 个势函数值

        Returns:
            EvaluatedEnsemble: 校验后的集合
        """
        if isinstance(points, np.ndarray) and points.ndim == 2:
            pts = points.astype(float, copy=True)
        else:
            rows = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
            dims = {row.shape for row in rows}
            if len(dims) > 1:
                raise DimensionMismatch(f"points have differing shapes: {sorted(dims)}")
            pts = np.vstack(rows) if rows else np.empty((0, 1))
        vals = np.asarray(values, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise DimensionMismatch("points must be vectors of dimension >= 1")
        if pts.shape[0] != vals.shape[0]:
            raise DimensionMismatch(f"{pts.shape[0]} points but {vals.shape[0]} values")
        if pts.shape[0] < 1:
            raise DegenerateEnsemble("ensemble is empty")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteValue("potential values must be finite")
        return cls(pts, vals)


@dataclass(frozen=True)
class DesignSystem:
    """参考点 x^j 处的线性反问题 y = A u + Γ ε

    K 为保留成员数；A 形状 (K, 2K)，directions / deviations 形状 (d, K)，
    gamma 为 Γ 的对角线。
    """
    A: np.ndarray
    y: np.ndarray
    gamma: np.ndarray
    directions: np.ndarray
    deviations: np.ndarray
    reference: np.ndarray
    reference_value: float
    kept_indices: Tuple[int, ...]
    config: EgiConfig

    @property
    def Gamma(self) -> np.ndarray:
        return np.diag(self.gamma)

    @property
    def n_kept(self) -> int:
        return len(self.kept_indices)


def build_design_system(ensemble: EvaluatedEnsemble,
                        config: Optional[EgiConfig] = None,
                        *,
                        reference_index: Optional[int] = None,
                        reference_point: Optional[Sequence[float]] = None,
                        reference_value: Optional[float] = None) -> DesignSystem:
    """构造 EGI 线性系统

    参考点可以是集合成员（reference_index），也可以是集合外的点
    （reference_point + reference_value），后者用于 {m} ∪ {x^i} 形式。

    Args:
        ensemble: 已求值的集合
        config: EGI 参数，默认 EgiConfig()
        reference_index: 参考成员下标
        reference_point: 外部参考点
        reference_value: 外部参考点处的势函数值

    Returns:
        DesignSystem: 去重后的线性系统

    Raises:
        DimensionMismatch: 参考点维度不符
        DegenerateEnsemble: 过滤后没有可用成员
        NonFiniteValue: 参考值非有限
    """
    config = config or EgiConfig()
    if (reference_index is None) == (reference_point is None):
        raise ValueError("give exactly one of reference_index or reference_point")

    if reference_index is not None:
        if not -ensemble.size <= reference_index < ensemble.size:
            raise IndexError(f"reference_index {reference_index} out of range")
        ref_idx = reference_index % ensemble.size
        reference = ensemble.points[ref_idx].copy()
        ref_value = float(ensemble.values[ref_idx])
        candidates = [i for i in range(ensemble.size) if i != ref_idx]
    else:
        reference = np.atleast_1d(np.asarray(reference_point, dtype=float))
        if reference.shape != (ensemble.dim,):
            raise DimensionMismatch(f"reference point has shape {reference.shape}, expected ({ensemble.dim},)")
        if reference_value is None:
            raise ValueError("reference_value is required with reference_point")
        ref_value = float(reference_value)
        if not np.isfinite(ref_value):
            raise NonFiniteValue("reference value must be finite")
        candidates = list(range(ensemble.size))

    threshold = config.dup_tolerance * (1.0 + np.linalg.norm(reference))
    offsets = ensemble.points[candidates] - reference if candidates else np.empty((0, ensemble.dim))
    norms = np.linalg.norm(offsets, axis=1)
    keep = norms >= threshold
    kept = tuple(int(i) for i, flag in zip(candidates, keep) if flag)
    if len(kept) < len(candidates):
        logger.debug(f"丢弃 {len(candidates) - len(kept)} 个与参考点重合的成员")
    if not kept:
        raise DegenerateEnsemble("no ensemble member survives duplicate filtering")

    X = offsets[keep]                       # (K, d)
    r = norms[keep]
    Z = X / r[:, None]                      # 单位方向
    XtZ = X @ Z.T                           # (K, K)
    A = np.hstack([XtZ, 0.5 * XtZ ** 2])
    y = ensemble.values[list(kept)] - ref_value
    gamma = config.gamma ** 2 * (r ** 3 / 6.0 + config.xi)

    return DesignSystem(
        A=A,
        y=y,
        gamma=gamma,
        directions=Z.T.copy(),
        deviations=X.T.copy(),
        reference=reference,
        reference_value=ref_value,
        kept_indices=kept,
        config=config,
    )
