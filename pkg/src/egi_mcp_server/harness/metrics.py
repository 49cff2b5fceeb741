"""直方图、参考边缘分布与总变差距离"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from ..dynamics.base import RunRecord
from ..errors import BinMismatch, DimensionMismatch, QuadratureOverflow
from ..objectives import Potential

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarginalHistogram:
    """等宽一维直方图

    counts 为区间内的样本数（参考分布时为归一化质量），densities 积分为 1。
    样本直方图满足 counts.sum() + outside == 样本数，区间外的样本只计入 outside。
    """
    axis: int
    edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray
    outside: int = 0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def masses(self) -> np.ndarray:
        return self.densities * self.widths


def _edges(lower: float, upper: float, n_bins: int) -> np.ndarray:
    if n_bins < 1 or not lower < upper:
        raise ValueError("need n_bins >= 1 and lower < upper")
    return np.linspace(lower, upper, n_bins + 1)


def marginal_histogram(samples: np.ndarray, axis: int, lower: float = -6.0, upper: float = 6.0,
                       n_bins: int = 40) -> MarginalHistogram:
    """样本在某一坐标上的直方图，区间外的样本计入 outside"""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or not 0 <= axis < samples.shape[1]:
        raise DimensionMismatch(f"axis {axis} invalid for samples of shape {samples.shape}")
    edges = _edges(lower, upper, n_bins)
    counts, _ = np.histogram(samples[:, axis], bins=edges)
    total = int(counts.sum())
    if total == 0:
        raise ValueError("no samples fall inside the histogram range")
    densities = counts / (total * np.diff(edges))
    return MarginalHistogram(axis, edges, counts, densities, samples.shape[0] - total)


def reference_marginal(potential: Potential, axis: int = 0, grid_extent: Tuple[float, float] = (-8.0, 8.0),
                       n_nodes: int = 800, n_bins: int = 40,
                       bin_range: Tuple[float, float] = (-6.0, 6.0)) -> MarginalHistogram:
    """对 exp(-V) 做张量网格求积得到参考边缘分布

    边缘坐标上每个分箱用中点规则细分，其余坐标在 grid_extent 上取 n_nodes 个中点。
    质量在 bin_range 内归一化，与样本直方图的归一化方式一致。

    Raises:
        DimensionMismatch: 势函数维度不是 1 或 2
        QuadratureOverflow: -V 在网格上没有有限的最大值
    """
    if potential.dim not in (1, 2) or not 0 <= axis < potential.dim:
        raise DimensionMismatch(f"reference marginal needs a 1d or 2d potential, got dim={potential.dim}")
    if n_nodes < 100:
        raise ValueError("n_nodes must be >= 100")
    edges = _edges(bin_range[0], bin_range[1], n_bins)
    sub = max(1, math.ceil(n_nodes / n_bins))
    fine = np.linspace(edges[0], edges[-1], n_bins * sub + 1)
    t = 0.5 * (fine[:-1] + fine[1:])

    if potential.dim == 1:
        log_density = -potential.eval_many(t[:, None])
    else:
        lo, hi = grid_extent
        s_edges = np.linspace(lo, hi, n_nodes + 1)
        s = 0.5 * (s_edges[:-1] + s_edges[1:])
        tt, ss = np.meshgrid(t, s, indexing='ij')
        grid = np.stack([tt, ss], axis=-1) if axis == 0 else np.stack([ss, tt], axis=-1)
        log_joint = -potential.eval_many(grid.reshape(-1, 2)).reshape(t.size, s.size)
        # 对另一坐标积分（对数域）
        log_density = logsumexp(log_joint, axis=1) + np.log(np.diff(s_edges)[0])

    peak = np.max(log_density)
    if not np.isfinite(peak):
        raise QuadratureOverflow("exp(-V) has no finite maximum on the quadrature grid")
    weights = np.exp(log_density - peak) * np.diff(fine)
    masses = weights.reshape(n_bins, sub).sum(axis=1)
    masses = masses / masses.sum()
    return MarginalHistogram(axis, edges, masses, masses / np.diff(edges))


def tv_distance(h1: MarginalHistogram, h2: MarginalHistogram) -> float:
    """½ Σ |p_i - q_i|，p、q 为归一化分箱质量"""
    if h1.edges.shape != h2.edges.shape or not np.array_equal(h1.edges, h2.edges):
        raise BinMismatch("histograms have different bin edges")
    return float(0.5 * np.sum(np.abs(h1.masses - h2.masses)))


@dataclass(frozen=True)
class Histogram2D:
    """正方形分箱计数，counts[i, k] 对应 x_edges[i:i+2] × y_edges[k:k+2]"""
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray


def final_mean_histogram_2d(records: Sequence[RunRecord], bin_width: float = 0.5) -> Histogram2D:
    """统计各次运行最终加权均值落在哪个正方形分箱，分箱中心位于 bin_width 的整数倍"""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    means = [r.final_mean for r in records if r.final_mean is not None]
    if not means:
        raise ValueError("no record has a final mean")
    points = np.vstack(means)
    if points.shape[1] != 2:
        raise DimensionMismatch(f"final means are {points.shape[1]}d, expected 2d")
    idx = np.floor(points / bin_width + 0.5).astype(int)
    low, high = idx.min(axis=0), idx.max(axis=0)
    counts = np.zeros(tuple(high - low + 1), dtype=int)
    np.add.at(counts, (idx[:, 0] - low[0], idx[:, 1] - low[1]), 1)
    x_edges = (np.arange(low[0], high[0] + 2) - 0.5) * bin_width
    y_edges = (np.arange(low[1], high[1] + 2) - 0.5) * bin_width
    return Histogram2D(x_edges, y_edges, counts)
