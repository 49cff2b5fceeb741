"""EGI MCP Server入口点

子命令：
    gradinf <file>    对点值文件做 EGI，打印梯度与 Hessian
    optimize <config> 单次 CBO / EGI-CBO 运行
    sample <config>   单次采样器运行
    mc <config>       完整 Monte Carlo 批处理
    serve             启动 MCP 服务器（无子命令时的默认行为）

退出码：0 成功，1 配置/输入错误，2 运行中止或写出失败。
"""

import argparse
import csv
import json
import logging
import sys
from typing import List, Optional, Sequence, Tuple

from .config import EgiConfig, ExperimentConfig, apply_overrides, load_config
from .egi import EvaluatedEnsemble, build_design_system, infer_bayes, infer_lsq, sample_posterior
from .errors import EgiError, RecordWriteError, RunAborted
from .harness import run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORTED = 2


def read_points_file(path: str) -> Tuple[List[List[float]], List[float]]:
    """读取 CSV 点值文件：每行 x_0, ..., x_{d-1}, V；# 注释行与表头行跳过"""
    points, values = [], []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        for row in csv.reader(f):
            cells = [c.strip() for c in row if c.strip()]
            if not cells or cells[0].startswith('#'):
                continue
            try:
                numbers = [float(c) for c in cells]
            except ValueError:
                if not points:
                    continue  # 表头
                raise
            if len(numbers) < 2:
                raise ValueError(f"row needs at least one coordinate and a value: {row}")
            points.append(numbers[:-1])
            values.append(numbers[-1])
    return points, values


def _print(payload: dict):
    print(json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True))


def cmd_gradinf(args: argparse.Namespace) -> int:
    points, values = read_points_file(args.file)
    ensemble = EvaluatedEnsemble.from_arrays(points, values)
    config = EgiConfig(gamma=args.gamma, xi=args.xi, bayes_gamma_squared=args.gamma_squared)
    system = build_design_system(ensemble, config, reference_index=args.reference_index)
    est = infer_lsq(system)
    payload = {
        "success": True,
        "reference": est.reference.tolist(),
        "reference_value": est.reference_value,
        "kept_indices": list(system.kept_indices),
        "gradient": est.gradient().tolist(),
        "hessian": est.hessian().tolist(),
    }
    if args.posterior_samples:
        posterior = infer_bayes(system)
        samples = sample_posterior(posterior, args.posterior_samples, args.seed)
        payload["posterior_mean_gradient"] = posterior.map_estimate().gradient().tolist()
        payload["posterior_gradient_samples"] = [s.gradient().tolist() for s in samples]
    _print(payload)
    return EXIT_OK


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    return apply_overrides(cfg, seed=args.seed, output_dir=args.out, trace_every=args.trace_every)


def _run(cfg: ExperimentConfig) -> int:
    result = run_experiment(cfg)
    _print(result.summary())
    return EXIT_ABORTED if result.n_aborted else EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if cfg.is_sampler:
        raise ValueError(f"'{cfg.algorithm.method}' is a sampler, use the sample subcommand")
    return _run(cfg.model_copy(update={'n_mc_runs': 1}))


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if not cfg.is_sampler:
        raise ValueError(f"'{cfg.algorithm.method}' is an optimizer, use the optimize subcommand")
    return _run(cfg.model_copy(update={'n_mc_runs': 1}))


def cmd_mc(args: argparse.Namespace) -> int:
    return _run(_load(args))


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import EgiMcpServer

    EgiMcpServer().run()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='egi-mcp-server', description='Ensemble-based gradient inference toolkit')
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    sub = parser.add_subparsers(dest='command')

    grad = sub.add_parser('gradinf', help='infer gradient and Hessian from a points/values CSV file')
    grad.add_argument('file')
    grad.add_argument('--reference-index', type=int, default=0)
    grad.add_argument('--xi', type=float, default=0.0)
    grad.add_argument('--gamma', type=float, default=1.0)
    grad.add_argument('--gamma-squared', action='store_true', help='use Gamma squared as Bayes noise covariance')
    grad.add_argument('--posterior-samples', type=int, default=0)
    grad.add_argument('--seed', type=int, default=0)
    grad.set_defaults(func=cmd_gradinf)

    for name, func, text in (('optimize', cmd_optimize, 'single CBO / EGI-CBO run'),
                             ('sample', cmd_sample, 'single sampler run'),
                             ('mc', cmd_mc, 'Monte Carlo batch')):
        p = sub.add_parser(name, help=text)
        p.add_argument('config')
        p.add_argument('--seed', type=int, default=None, help='override base_seed')
        p.add_argument('--out', default=None, help='override output_dir')
        p.add_argument('--trace-every', type=int, default=None)
        p.set_defaults(func=func)

    serve = sub.add_parser('serve', help='start the MCP server')
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主函数"""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.getLogger().setLevel(getattr(logging, args.log_level))
    func = getattr(args, 'func', cmd_serve)
    try:
        return func(args)
    except (RunAborted, RecordWriteError) as e:
        logger.error(str(e))
        return EXIT_ABORTED
    except (ValueError, IndexError, OSError) as e:
        # ParseError / ConfigValidationError 等输入错误都是 ValueError
        logger.error(str(e))
        return EXIT_INVALID
    except EgiError as e:
        logger.error(str(e))
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
