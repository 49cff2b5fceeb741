"""EGI MCP Server

集合梯度推断（EGI）及其增强的 CBO 优化器与 Langevin 类采样器
"""

__version__ = "0.1.0"
