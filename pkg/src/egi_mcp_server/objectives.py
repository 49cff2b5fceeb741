"""基准势函数注册表

所有势函数都按最后一个轴向量化：输入形状 (d,) 返回标量，(n, d) 返回 (n,)。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BadDimension, DimensionMismatch, UnknownPotential

logger = logging.getLogger(__name__)

VectorMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Potential:
    """命名的标量势函数

    Args:
        name: 注册名
        dim: 维度 d
        func: 向量化的 V
        exact_gradient: 解析梯度（单点）
        exact_hessian: 解析 Hessian（单点）
        known_minima: (点, 函数值) 列表
        domain: 基准区域 (lower, upper)，随机测试与默认初始盒子使用
    """
    name: str
    dim: int
    func: VectorMap
    exact_gradient: Optional[VectorMap] = None
    exact_hessian: Optional[VectorMap] = None
    known_minima: Tuple[Tuple[np.ndarray, float], ...] = ()
    domain: Tuple[np.ndarray, np.ndarray] = field(default=(np.zeros(1), np.ones(1)))

    def _point(self, x: Sequence[float]) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"{self.name}: point has shape {x.shape}, expected ({self.dim},)")
        return x

    def eval(self, x: Sequence[float]) -> float:
        return float(self.func(self._point(x)))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """批量求值，points 形状 (n, d)"""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise DimensionMismatch(f"{self.name}: points have shape {points.shape}, expected (n, {self.dim})")
        return np.asarray(self.func(points), dtype=float).reshape(points.shape[0])

    def gradient(self, x: Sequence[float]) -> np.ndarray:
        if self.exact_gradient is None:
            raise NotImplementedError(f"{self.name} has no analytic gradient")
        return np.asarray(self.exact_gradient(self._point(x)), dtype=float).reshape(self.dim)

    def hessian(self, x: Sequence[float]) -> np.ndarray:
        if self.exact_hessian is None:
            raise NotImplementedError(f"{self.name} has no analytic Hessian")
        return np.asarray(self.exact_hessian(self._point(x)), dtype=float).reshape(self.dim, self.dim)


@dataclass(frozen=True)
class InverseProblemSpec:
    """y = G(x) + η，η ~ N(0, noise_cov)，先验 N(prior_mean, prior_cov)

    forward 按最后一个轴向量化，返回 (..., l)；jacobian 返回单点的 (l, d)。
    """
    name: str
    forward: VectorMap
    data: np.ndarray
    noise_cov: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    jacobian: Optional[VectorMap] = None

    def __post_init__(self):
        for label, cov in (('noise_cov', self.noise_cov), ('prior_cov', self.prior_cov)):
            if not np.allclose(cov, cov.T):
                raise ValueError(f"{label} must be symmetric")
            if np.any(np.linalg.eigvalsh(cov) <= 0):
                raise ValueError(f"{label} must be positive definite")

    @property
    def dim(self) -> int:
        return self.prior_mean.shape[0]

    @property
    def noise_precision(self) -> np.ndarray:
        return np.linalg.inv(self.noise_cov)

    @property
    def prior_precision(self) -> np.ndarray:
        return np.linalg.inv(self.prior_cov)

    def misfit(self, x: np.ndarray) -> np.ndarray:
        """Φ(x) = ½ ||y - G(x)||²_Γ"""
        r = self.data - self.forward(x)
        return 0.5 * np.einsum('...i,ij,...j->...', r, self.noise_precision, r)

    def value(self, x: np.ndarray) -> np.ndarray:
        dx = x - self.prior_mean
        return self.misfit(x) + 0.5 * np.einsum('...i,ij,...j->...', dx, self.prior_precision, dx)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self.jacobian is None:
            raise NotImplementedError(f"{self.name} has no forward Jacobian")
        r = self.data - self.forward(x)
        return -self.jacobian(x).T @ (self.noise_precision @ r) + self.prior_precision @ (x - self.prior_mean)

    def potential(self) -> Potential:
        """由反问题导出的势函数 V = Φ + 先验项"""
        lower = self.prior_mean - 2.0 * np.sqrt(np.diag(self.prior_cov))
        upper = self.prior_mean + 2.0 * np.sqrt(np.diag(self.prior_cov))
        return Potential(
            name=self.name,
            dim=self.dim,
            func=self.value,
            exact_gradient=self.gradient if self.jacobian is not None else None,
            domain=(lower, upper),
        )


def _box(lower: float, upper: float, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.full(dim, float(lower)), np.full(dim, float(upper))


# ---- 1d Rastrigin 变体 x² + 3(1 - cos 2πx) ----

def _rastrigin1d(dim: int) -> Potential:
    return Potential(
        name='rastrigin1d_variant',
        dim=1,
        func=lambda x: x[..., 0] ** 2 + 3.0 * (1.0 - np.cos(2 * np.pi * x[..., 0])),
        exact_gradient=lambda x: 2 * x + 6 * np.pi * np.sin(2 * np.pi * x),
        exact_hessian=lambda x: np.atleast_2d(2 + 12 * np.pi ** 2 * np.cos(2 * np.pi * x[0])),
        known_minima=((np.zeros(1), 0.0),),
        domain=_box(-3.0, 4.0, 1),
    )


# ---- 2d Rastrigin ----

def _rastrigin2d(dim: int) -> Potential:
    return Potential(
        name='rastrigin2d',
        dim=2,
        func=lambda x: 20.0 + np.sum(x ** 2 - 10.0 * np.cos(2 * np.pi * x), axis=-1),
        exact_gradient=lambda x: 2 * x + 20 * np.pi * np.sin(2 * np.pi * x),
        exact_hessian=lambda x: np.diag(2 + 40 * np.pi ** 2 * np.cos(2 * np.pi * x)),
        known_minima=((np.zeros(2), 0.0),),
        domain=_box(-4.0, -1.0, 2),
    )


# ---- Himmelblau ----

def _himmelblau_value(x: np.ndarray) -> np.ndarray:
    u, v = x[..., 0], x[..., 1]
    return (u ** 2 + v - 11) ** 2 + (u + v ** 2 - 7) ** 2


def _himmelblau_gradient(x: np.ndarray) -> np.ndarray:
    u, v = x
    a = u ** 2 + v - 11
    b = u + v ** 2 - 7
    return np.array([4 * u * a + 2 * b, 2 * a + 4 * v * b])


def _himmelblau_hessian(x: np.ndarray) -> np.ndarray:
    u, v = x
    a = u ** 2 + v - 11
    b = u + v ** 2 - 7
    cross = 4 * u + 4 * v
    return np.array([[4 * a + 8 * u ** 2 + 2, cross],
                     [cross, 4 * b + 8 * v ** 2 + 2]])


def _polish_minimum(start: Sequence[float], steps: int = 8) -> np.ndarray:
    """从六位小数的近似极小点出发做几步 Newton 迭代"""
    x = np.asarray(start, dtype=float)
    for _ in range(steps):
        x = x - np.linalg.solve(_himmelblau_hessian(x), _himmelblau_gradient(x))
    return x


_HIMMELBLAU_MINIMA = tuple(
    (_polish_minimum(p), 0.0)
    for p in ((3.0, 2.0), (-2.805118, 3.131312), (-3.779310, -3.283186), (3.584428, -1.848126))
)


def _himmelblau(dim: int) -> Potential:
    return Potential(
        name='himmelblau',
        dim=2,
        func=_himmelblau_value,
        exact_gradient=_himmelblau_gradient,
        exact_hessian=_himmelblau_hessian,
        known_minima=_HIMMELBLAU_MINIMA,
        domain=_box(-2.0, 2.0, 2),
    )


# ---- 高维光滑例子 ----

def _shifted_quadratic(dim: int) -> Potential:
    return Potential(
        name='shifted_quadratic',
        dim=dim,
        func=lambda x: 0.5 * np.sum((x - 1.0) ** 2, axis=-1),
        exact_gradient=lambda x: x - 1.0,
        exact_hessian=lambda x: np.eye(dim),
        known_minima=((np.ones(dim), 0.0),),
        domain=_box(-4.0, -1.0, dim),
    )


def _quartic_norm(dim: int) -> Potential:
    return Potential(
        name='quartic_norm',
        dim=dim,
        func=lambda x: np.sum(x ** 2, axis=-1) ** 2,
        exact_gradient=lambda x: 4 * np.dot(x, x) * x,
        exact_hessian=lambda x: 4 * np.dot(x, x) * np.eye(dim) + 8 * np.outer(x, x),
        known_minima=((np.zeros(dim), 0.0),),
        domain=_box(-0.4, 0.4, dim),
    )


def _standard_gaussian(dim: int) -> Potential:
    return Potential(
        name='standard_gaussian',
        dim=dim,
        func=lambda x: 0.5 * np.sum(x ** 2, axis=-1),
        exact_gradient=lambda x: x.copy(),
        exact_hessian=lambda x: np.eye(dim),
        known_minima=((np.zeros(dim), 0.0),),
        domain=_box(-3.0, 3.0, dim),
    )


# ---- 反问题 ----

def _banana_forward(x: np.ndarray) -> np.ndarray:
    return ((x[..., 1] - 2.0) ** 2 - (x[..., 0] - 3.5) - 1.0)[..., None]


def _banana_jacobian(x: np.ndarray) -> np.ndarray:
    return np.array([[-1.0, 2.0 * (x[1] - 2.0)]])


def _banana_problem() -> InverseProblemSpec:
    # y = 0，噪声标准差 1/2，先验 N(0, 2² I)
    return InverseProblemSpec(
        name='banana_posterior',
        forward=_banana_forward,
        data=np.zeros(1),
        noise_cov=np.array([[0.25]]),
        prior_mean=np.zeros(2),
        prior_cov=4.0 * np.eye(2),
        jacobian=_banana_jacobian,
    )


def _banana_hessian(x: np.ndarray) -> np.ndarray:
    a = _banana_forward(x)[0]
    grad_a = _banana_jacobian(x)[0]
    return 4.0 * np.outer(grad_a, grad_a) + 4.0 * a * np.diag([0.0, 2.0]) + 0.25 * np.eye(2)


def _banana(dim: int) -> Potential:
    base = _banana_problem().potential()
    return replace(base, exact_hessian=_banana_hessian, domain=_box(0.0, 4.0, 2))


def _linear_gaussian_problem() -> InverseProblemSpec:
    # G(x) = x, y = 1, Γ = 1, 先验 N(0, 1)；后验 N(1/2, 1/2)
    return InverseProblemSpec(
        name='linear_gaussian_1d',
        forward=lambda x: x[..., :1],
        data=np.ones(1),
        noise_cov=np.eye(1),
        prior_mean=np.zeros(1),
        prior_cov=np.eye(1),
        jacobian=lambda x: np.eye(1),
    )


def _linear_gaussian(dim: int) -> Potential:
    base = _linear_gaussian_problem().potential()
    return replace(base, exact_hessian=lambda x: 2.0 * np.eye(1),
                   known_minima=((np.full(1, 0.5), 0.25),), domain=_box(-1.0, 2.0, 1))


# 名称 -> (构造函数, 固定维度, 默认维度)
_REGISTRY: Dict[str, Tuple[Callable[[int], Potential], Optional[int], int]] = {
    'rastrigin1d_variant': (_rastrigin1d, 1, 1),
    'rastrigin2d': (_rastrigin2d, 2, 2),
    'himmelblau': (_himmelblau, 2, 2),
    'shifted_quadratic': (_shifted_quadratic, None, 10),
    'quartic_norm': (_quartic_norm, None, 50),
    'banana_posterior': (_banana, 2, 2),
    'standard_gaussian': (_standard_gaussian, None, 1),
    'linear_gaussian_1d': (_linear_gaussian, 1, 1),
}

_INVERSE_PROBLEMS: Dict[str, Callable[[], InverseProblemSpec]] = {
    'banana_posterior': _banana_problem,
    'linear_gaussian_1d': _linear_gaussian_problem,
}


def potential_names() -> List[str]:
    return sorted(_REGISTRY)


def has_inverse_problem(name: str) -> bool:
    return name in _INVERSE_PROBLEMS


def make_potential(name: str, dim: Optional[int] = None) -> Potential:
    """按名称构造势函数

    Args:
        name: 注册名
        dim: 维度；固定维度的势函数可省略

    Raises:
        UnknownPotential: 名称未注册
        BadDimension: 维度与势函数不兼容
    """
    if name not in _REGISTRY:
        raise UnknownPotential(f"unknown potential '{name}', available: {', '.join(potential_names())}")
    builder, fixed_dim, default_dim = _REGISTRY[name]
    if dim is None:
        dim = default_dim
    if dim < 1 or (fixed_dim is not None and dim != fixed_dim):
        raise BadDimension(f"{name} does not support dim={dim}")
    return builder(dim)


def make_inverse_problem(name: str) -> InverseProblemSpec:
    """按名称构造反问题"""
    if name not in _INVERSE_PROBLEMS:
        raise UnknownPotential(f"'{name}' has no inverse-problem form")
    return _INVERSE_PROBLEMS[name]()


def finite_difference_gradient(p: Potential, x: Sequence[float], step: float = 1e-5) -> np.ndarray:
    """中心差分梯度"""
    if step <= 0:
        raise ValueError("step must be positive")
    x = p._point(x)
    shifts = step * np.eye(p.dim)
    return (p.eval_many(x + shifts) - p.eval_many(x - shifts)) / (2.0 * step)
