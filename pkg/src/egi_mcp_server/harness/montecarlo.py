"""实验运行：初始集合、Monte Carlo 批处理与结果汇总

所有运行共享由 base_seed 生成的初始集合，第 k 次运行的动力学种子为 base_seed + k + 1。
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..config import ExperimentConfig
from ..dynamics import default_factory
from ..dynamics.base import RunRecord
from ..errors import RunAborted
from ..objectives import Potential, make_potential
from .metrics import (Histogram2D, MarginalHistogram, final_mean_histogram_2d, marginal_histogram,
                      reference_marginal, tv_distance)
from .writer import csv_text, atomic_write, write_record

logger = logging.getLogger(__name__)

FACTORY = default_factory()


def sample_init_ensemble(lower: Sequence[float], upper: Sequence[float], ensemble_size: int, seed: int) -> np.ndarray:
    """盒子内独立均匀抽样 (J, d)"""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("invalid init box")
    rng = np.random.default_rng(seed)
    return rng.uniform(lower, upper, size=(ensemble_size, lower.shape[0]))


def run_single(cfg: ExperimentConfig, potential: Potential, init: np.ndarray, run_index: int) -> RunRecord:
    """第 run_index 次运行；中止时返回带中止原因的部分记录"""
    seed = cfg.dynamics_seed(run_index)
    algorithm = cfg.algorithm.model_copy(update={'seed': seed})
    options = {'burn_in': cfg.effective_burn_in} if cfg.is_sampler else {}
    dynamics = FACTORY.create(potential, algorithm, **options)
    try:
        return dynamics.run(init, trace_every=cfg.trace_every, record_ensemble=cfg.record_ensemble)
    except RunAborted as e:
        logger.warning(f"{cfg.experiment_name} 第 {run_index} 次运行中止: {e}")
        return e.record


def run_monte_carlo(cfg: ExperimentConfig, max_workers: Optional[int] = None) -> List[RunRecord]:
    """执行 n_mc_runs 次独立运行，结果按 k 排序

    Args:
        cfg: 实验配置
        max_workers: 线程池大小，默认 min(n_mc_runs, cpu 数)
    """
    potential = make_potential(cfg.potential, cfg.dim)
    init = sample_init_ensemble(cfg.init_box_lower, cfg.init_box_upper, cfg.ensemble_size, cfg.base_seed)
    n_runs = cfg.n_mc_runs
    if n_runs == 1:
        return [run_single(cfg, potential, init, 0)]

    workers = max_workers or min(n_runs, os.cpu_count() or 1)
    records: List[Optional[RunRecord]] = [None] * n_runs
    logger.info(f"{cfg.experiment_name}: 开始 {n_runs} 次 Monte Carlo 运行（{workers} 个线程）")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(run_single, cfg, potential, init, k): k for k in range(n_runs)}
        done = 0
        for future in as_completed(futures):
            k = futures[future]
            records[k] = future.result()
            done += 1
            if done % max(1, n_runs // 10) == 0:
                logger.info(f"{cfg.experiment_name}: 已完成 {done}/{n_runs}")
    return records


@dataclass
class ExperimentResult:
    """一次实验的全部运行及派生指标"""
    config: ExperimentConfig
    records: List[RunRecord]
    reference: Optional[MarginalHistogram] = None
    marginals: List[Optional[MarginalHistogram]] = field(default_factory=list)
    tv: List[Optional[float]] = field(default_factory=list)
    histogram: Optional[Histogram2D] = None
    files: List[str] = field(default_factory=list)

    @property
    def n_aborted(self) -> int:
        return sum(1 for r in self.records if r.aborted)

    def summary(self) -> Dict[str, Any]:
        finals = [r.final_value for r in self.records if r.final_value is not None]
        tvs = [t for t in self.tv if t is not None]
        return {
            "success": self.n_aborted == 0,
            "experiment": self.config.experiment_name,
            "method": self.config.algorithm.method,
            "runs": len(self.records),
            "aborted": self.n_aborted,
            "median_final_value": float(np.median(finals)) if finals else None,
            "median_tv_distance": float(np.median(tvs)) if tvs else None,
        }


def _sampler_metrics(cfg: ExperimentConfig, potential: Potential, records: List[RunRecord], result: ExperimentResult):
    if potential.dim > 2:
        return
    result.reference = reference_marginal(potential, axis=cfg.marginal_axis, n_nodes=cfg.reference_nodes,
                                          n_bins=cfg.marginal_bins,
                                          bin_range=(cfg.marginal_lower, cfg.marginal_upper))
    for record in records:
        if not record.sample_count:
            result.marginals.append(None)
            result.tv.append(None)
            continue
        try:
            hist = marginal_histogram(record.samples, cfg.marginal_axis, cfg.marginal_lower,
                                      cfg.marginal_upper, cfg.marginal_bins)
        except ValueError:
            logger.warning(f"{cfg.experiment_name}: 样本全部落在直方图区间之外")
            result.marginals.append(None)
            result.tv.append(None)
            continue
        distance = tv_distance(hist, result.reference)
        record.extra['tv_distance'] = distance
        result.marginals.append(hist)
        result.tv.append(distance)


def summary_csv(records: Sequence[RunRecord]) -> str:
    dim = next((r.final_mean.shape[0] for r in records if r.final_mean is not None), 0)
    header = ['run', 'seed', 'status', *[f'final_mean_{i}' for i in range(dim)], 'V_final_mean', 'accept_rate']
    rows = []
    for k, r in enumerate(records):
        mean = list(r.final_mean) if r.final_mean is not None else [None] * dim
        rows.append([k, r.seed, 'aborted' if r.aborted else 'ok', *mean, r.final_value, r.accept_rate])
    return csv_text(header, rows)


def histogram_csv(hist: Histogram2D) -> str:
    rows = []
    for i in range(hist.counts.shape[0]):
        for k in range(hist.counts.shape[1]):
            if hist.counts[i, k]:
                rows.append([hist.x_edges[i], hist.x_edges[i + 1], hist.y_edges[k], hist.y_edges[k + 1],
                             int(hist.counts[i, k])])
    return csv_text(['x_lower', 'x_upper', 'y_lower', 'y_upper', 'count'], rows)


def run_experiment(cfg: ExperimentConfig, write: bool = True, max_workers: Optional[int] = None) -> ExperimentResult:
    """运行实验并（可选）写出结果文件

    输出目录为 output_dir/experiment_name，每次运行写入 run_{k:03d}/，
    另有 summary.csv 与（二维时）final_mean_hist.csv。
    """
    potential = make_potential(cfg.potential, cfg.dim)
    records = run_monte_carlo(cfg, max_workers=max_workers)
    result = ExperimentResult(cfg, records)

    if cfg.is_sampler:
        _sampler_metrics(cfg, potential, records, result)
    finished = [r for r in records if not r.aborted]
    if potential.dim == 2 and any(r.final_mean is not None for r in finished):
        result.histogram = final_mean_histogram_2d(finished, cfg.hist_bin_width)

    if write:
        root = os.path.join(cfg.output_dir, cfg.experiment_name)
        for k, record in enumerate(records):
            marginal = result.marginals[k] if result.marginals else None
            extra = {'experiment': cfg.experiment_name, 'run_index': k, 'experiment_config': cfg.snapshot()}
            result.files.extend(write_record(record, os.path.join(root, f'run_{k:03d}'),
                                             marginal=marginal, reference=result.reference, extra=extra))
        summary_path = os.path.join(root, 'summary.csv')
        atomic_write(summary_path, summary_csv(records))
        result.files.append(summary_path)
        if result.histogram is not None:
            hist_path = os.path.join(root, 'final_mean_hist.csv')
            atomic_write(hist_path, histogram_csv(result.histogram))
            result.files.append(hist_path)
        logger.info(f"{cfg.experiment_name}: 结果已写入 {root}")
    return result
