"""EGI MCP Server实现"""

import logging
from typing import Any, Dict, List, Optional

from mcp.server.fastmcp import FastMCP

from .config import EgiConfig, parse_config
from .egi import EvaluatedEnsemble, build_design_system, infer_lsq
from .harness import run_experiment
from .harness.montecarlo import FACTORY
from .objectives import has_inverse_problem, make_potential, potential_names

logger = logging.getLogger(__name__)


def _failure(e: Exception) -> Dict[str, Any]:
    logger.error(f"工具调用失败: {e}")
    return {"success": False, "error": str(e), "error_type": type(e).__name__}


class EgiMcpServer:
    """EGI MCP服务器：把势函数、梯度推断和实验运行暴露为 MCP 工具"""

    def __init__(self, name: str = "egi-toolkit"):
        """
        初始化EGI MCP服务器
        Initialize EGI MCP Server

        Args:
            name (str): 服务器名称 / Server name
        """
        self.name = name
        self.mcp = FastMCP(name)
        self._setup_tools()

    def _setup_tools(self):
        """设置MCP工具"""

        @self.mcp.tool()
        def list_potentials() -> Dict:
            """列出已注册的势函数 / List registered potentials

            Returns:
                Dict: 名称、维度、是否有解析 Hessian、是否有反问题形式
            """
            try:
                entries = []
                for name in potential_names():
                    p = make_potential(name)
                    entries.append({
                        "name": name,
                        "dim": p.dim,
                        "has_hessian": p.exact_hessian is not None,
                        "has_inverse_problem": has_inverse_problem(name),
                        "domain": [p.domain[0].tolist(), p.domain[1].tolist()],
                    })
                return {"success": True, "potentials": entries}
            except Exception as e:
                return _failure(e)

        @self.mcp.tool()
        def evaluate_potential(name: str, point: List[float], dim: Optional[int] = None) -> Dict:
            """计算势函数值与解析梯度 / Evaluate a potential and its analytic gradient

            Args:
                name: 势函数名称
                point: 坐标
                dim: 维度，固定维度的势函数可省略
            """
            try:
                p = make_potential(name, dim if dim is not None else len(point))
                result: Dict[str, Any] = {"success": True, "name": name, "value": p.eval(point)}
                if p.exact_gradient is not None:
                    result["gradient"] = p.gradient(point).tolist()
                return result
            except Exception as e:
                return _failure(e)

        @self.mcp.tool()
        def infer_gradient(points: List[List[float]], values: List[float], reference_index: int = 0,
                           xi: float = 0.0, gamma: float = 1.0) -> Dict:
            """从点值数据推断参考点处的梯度与 Hessian / Infer gradient and Hessian from point evaluations

            Args:
                points: J 个 d 维点
                values: J 个势函数值
                reference_index: 参考成员下标
                xi: 局部性参数 ξ
                gamma: 噪声尺度 γ
            """
            try:
                ensemble = EvaluatedEnsemble.from_arrays(points, values)
                system = build_design_system(ensemble, EgiConfig(gamma=gamma, xi=xi), reference_index=reference_index)
                est = infer_lsq(system)
                return {
                    "success": True,
                    "reference": est.reference.tolist(),
                    "gradient": est.gradient().tolist(),
                    "hessian": est.hessian().tolist(),
                    "kept_indices": list(system.kept_indices),
                }
            except Exception as e:
                return _failure(e)

        @self.mcp.tool(name="run_experiment")
        def run_experiment_config(config_text: str, write: bool = False, detail: str = "none") -> Dict:
            """按扁平配置文本运行实验 / Run an experiment from a flat key = value config

            Args:
                config_text: 配置文本
                write: 是否写出结果文件
                detail: 逐次运行的明细，"none"、"summary" 或 "trace"
            """
            try:
                formatter = None if detail == "none" else FACTORY.get_formatter(detail)
                cfg = parse_config(config_text)
                result = run_experiment(cfg, write=write)
                summary = result.summary()
                summary["files"] = result.files
                if formatter is not None:
                    summary["records"] = [formatter.format(r) for r in result.records]
                return summary
            except Exception as e:
                return _failure(e)

        self._tools = {
            "list_potentials": list_potentials,
            "evaluate_potential": evaluate_potential,
            "infer_gradient": infer_gradient,
            "run_experiment": run_experiment_config,
        }

    def run(self):
        """运行服务器"""
        print(f"Starting {self.name}...")
        self.mcp.run()
