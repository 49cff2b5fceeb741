"""集合动力学：CBO 类优化器与 Langevin 类采样器"""

from .base import (DynamicsFactory, EnsembleDynamics, RecordFormatter, RunRecord, SummaryFormatter,
                   TraceFormatter, TraceRow)
from .optimizers import ConsensusOptimizer, OptState, cbo_step, egi_cbo_step, run_optimizer, weighted_mean
from .samplers import (EnsembleSampler, SamplerState, aldi_gradfree_step, egi_aldi_extra_step, egi_aldi_step,
                       egi_ls_step, egi_mala_step, mala_step, run_sampler, ula_step)


def default_factory() -> DynamicsFactory:
    """注册全部方法与格式化器的工厂"""
    factory = DynamicsFactory()
    for method in ('cbo', 'egi_cbo'):
        factory.register(method, ConsensusOptimizer)
    for method in ('egi_ls', 'egi_mala', 'aldi_gradfree', 'egi_aldi', 'egi_aldi_extra', 'ula', 'mala'):
        factory.register(method, EnsembleSampler)
    factory.register_formatter('summary', SummaryFormatter())
    factory.register_formatter('trace', TraceFormatter())
    return factory


__all__ = [
    'DynamicsFactory',
    'EnsembleDynamics',
    'RecordFormatter',
    'SummaryFormatter',
    'TraceFormatter',
    'RunRecord',
    'TraceRow',
    'default_factory',
    'OptState',
    'ConsensusOptimizer',
    'weighted_mean',
    'cbo_step',
    'egi_cbo_step',
    'run_optimizer',
    'SamplerState',
    'EnsembleSampler',
    'egi_ls_step',
    'ula_step',
    'egi_mala_step',
    'mala_step',
    'aldi_gradfree_step',
    'egi_aldi_step',
    'egi_aldi_extra_step',
    'run_sampler',
]
