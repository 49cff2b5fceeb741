"""异常定义 / Error hierarchy

所有库代码抛出的异常都继承自 EgiError。输入校验类异常同时继承 ValueError。
"""

from typing import Any, Optional


class EgiError(Exception):
    """工具包异常基类"""


class DimensionMismatch(EgiError, ValueError):
    """点或向量维度不一致"""


class DegenerateEnsemble(EgiError, ValueError):
    """重复点过滤后没有可用的集合成员"""


class NonFiniteValue(EgiError, ValueError):
    """势函数值中存在非有限值"""


class SingularWhitening(EgiError):
    """Gamma 对角线存在零元素，无法做白化"""


class SingularInnovation(EgiError):
    """Gamma + A Σ Aᵀ 数值奇异"""


class NonFiniteState(EgiError):
    """迭代过程中出现非有限坐标（动力学不稳定）"""


class UnknownPotential(EgiError, ValueError):
    """未注册的势函数名称"""


class BadDimension(EgiError, ValueError):
    """势函数不支持该维度"""


class ParseError(EgiError, ValueError):
    """配置文件语法错误"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigValidationError(EgiError, ValueError):
    """配置校验失败，key 指出出错的配置项"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class BinMismatch(EgiError, ValueError):
    """两个直方图的分箱边界不一致"""


class QuadratureOverflow(EgiError):
    """参考边缘分布积分溢出"""


class RecordWriteError(EgiError, OSError):
    """结果文件写入失败"""


class RunAborted(EgiError):
    """单次运行在某一迭代中止

    Args:
        message: 中止原因
        iteration: 出错的迭代序号
        record: 截至出错时的部分运行记录
    """

    def __init__(self, message: str, iteration: int, record: Any = None):
        self.iteration = iteration
        self.record = record
        super().__init__(f"iteration {iteration}: {message}")
