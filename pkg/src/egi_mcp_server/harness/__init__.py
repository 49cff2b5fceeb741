"""实验运行、指标与结果输出"""

from .metrics import (Histogram2D, MarginalHistogram, final_mean_histogram_2d, marginal_histogram,
                      reference_marginal, tv_distance)
from .montecarlo import ExperimentResult, run_experiment, run_monte_carlo, run_single, sample_init_ensemble
from .writer import write_record

__all__ = [
    'MarginalHistogram',
    'Histogram2D',
    'marginal_histogram',
    'reference_marginal',
    'tv_distance',
    'final_mean_histogram_2d',
    'sample_init_ensemble',
    'run_single',
    'run_monte_carlo',
    'run_experiment',
    'ExperimentResult',
    'write_record',
]
