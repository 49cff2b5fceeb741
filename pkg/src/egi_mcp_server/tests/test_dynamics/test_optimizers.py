"""CBO / EGI-CBO 测试"""

import numpy as np
import pytest

from egi_mcp_server.config import CboConfig
from egi_mcp_server.dynamics import ConsensusOptimizer, cbo_step, egi_cbo_step, run_optimizer, weighted_mean
from egi_mcp_server.dynamics.optimizers import egi_gradients, make_opt_state
from egi_mcp_server.errors import NonFiniteState, RunAborted
from egi_mcp_server.objectives import Potential, make_potential


class TestWeightedMean:
    """加权均值测试"""

    def test_zero_alpha_is_mean(self):
        """alpha = 0 时为算术平均"""
        points = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]])
        np.testing.assert_allclose(weighted_mean(points, [5.0, 1.0, 3.0], 0.0), points.mean(axis=0))

    def test_laplace_limit(self):
        """alpha 较大时趋向最小值成员"""
        m = weighted_mean(np.array([[0.0], [1.0]]), [0.0, 10.0], 100.0)
        assert abs(m[0]) < 1e-12

    def test_equal_values_midpoint(self):
        """取值相同时为等权平均"""
        m = weighted_mean(np.array([[-1.0, 2.0], [3.0, 4.0]]), [7.0, 7.0], 1e6)
        np.testing.assert_allclose(m, [1.0, 3.0])

    def test_convex_combination(self):
        """加权均值落在集合的包围盒内"""
        rng = np.random.default_rng(0)
        points = rng.normal(size=(6, 3))
        m = weighted_mean(points, rng.uniform(0, 1e3, size=6), 50.0)
        assert np.all(m >= points.min(axis=0) - 1e-12)
        assert np.all(m <= points.max(axis=0) + 1e-12)

    def test_large_values_no_overflow(self):
        """极大势函数值不溢出"""
        m = weighted_mean(np.array([[0.0], [1.0]]), [1e300, 1e300], 100.0)
        np.testing.assert_allclose(m, [0.5])

    def test_negative_alpha(self):
        """负 alpha 报错"""
        with pytest.raises(ValueError):
            weighted_mean(np.zeros((2, 1)), [0.0, 1.0], -1.0)


class TestCboStep:
    """单步迭代测试"""

    @pytest.fixture(autouse=True)
    def setup(self):
        """测试前准备"""
        self.rastrigin = make_potential('rastrigin2d')
        self.quadratic = make_potential('shifted_quadratic', 1)
        self.init = np.random.default_rng(3).uniform(-4.0, -1.0, size=(6, 2))

    def test_single_member_fixed_point(self):
        """单成员集合是不动点"""
        for method in ('cbo', 'egi_cbo'):
            cfg = CboConfig(method=method, sigma=1.0, kappa=1.0, tau=0.1)
            state = make_opt_state(np.array([[0.3, -0.7]]), self.rastrigin, cfg.alpha)
            step = cbo_step if method == 'cbo' else egi_cbo_step
            new = step(state, cfg, np.random.default_rng(0), self.rastrigin)
            np.testing.assert_array_equal(new.ensemble, state.ensemble)
            assert new.iteration == 1

    def test_deterministic_contraction(self):
        """无噪声时一步收缩到加权均值"""
        cfg = CboConfig(method='cbo', sigma=0.0, lambda_drift=1.0, tau=1.0)
        state = make_opt_state(self.init, self.rastrigin, cfg.alpha)
        new = cbo_step(state, cfg, np.random.default_rng(0), self.rastrigin)
        np.testing.assert_allclose(new.ensemble, np.tile(state.weighted_mean, (6, 1)), atol=1e-12)

    def test_same_seed_same_successor(self):
        """相同种子得到相同的下一步"""
        cfg = CboConfig(method='egi_cbo', kappa=0.5)
        state = make_opt_state(self.init, self.rastrigin, cfg.alpha)
        a = egi_cbo_step(state, cfg, np.random.default_rng(9), self.rastrigin)
        b = egi_cbo_step(state, cfg, np.random.default_rng(9), self.rastrigin)
        np.testing.assert_array_equal(a.ensemble, b.ensemble)

    @pytest.mark.parametrize("noise_mode", ['norm_proportional', 'component_wise'])
    def test_kappa_zero_matches_cbo(self, noise_mode):
        """kappa = 0 时 EGI-CBO 与 CBO 逐位一致"""
        common = dict(alpha=100.0, lambda_drift=1.5, sigma=0.7, tau=0.01, n_iters=1000, seed=4,
                      noise_mode=noise_mode)
        egi = run_optimizer(self.rastrigin, self.init, CboConfig(method='egi_cbo', kappa=0.0, **common))
        cbo = run_optimizer(self.rastrigin, self.init, CboConfig(method='cbo', kappa=0.0, **common))
        np.testing.assert_array_equal(egi.final_ensemble, cbo.final_ensemble)
        for row_a, row_b in zip(egi.rows, cbo.rows):
            np.testing.assert_array_equal(row_a.mean, row_b.mean)

    def test_quadratic_gradient_descent(self):
        """二次函数上的梯度下降步"""
        cfg = CboConfig(method='egi_cbo', lambda_drift=0.0, sigma=0.0, kappa=1.0, tau=0.1)
        points = np.array([[-1.0], [0.0], [2.0]])
        state = make_opt_state(points, self.quadratic, cfg.alpha)
        new = egi_cbo_step(state, cfg, np.random.default_rng(0), self.quadratic)
        expected_shift = -0.1 * (points.mean() - 1.0)
        np.testing.assert_allclose(new.ensemble, points + expected_shift, atol=1e-10)

    def test_quadratic_extrapolated_descent(self):
        """二次函数上外推梯度的下降步"""
        cfg = CboConfig(method='egi_cbo', lambda_drift=0.0, sigma=0.0, kappa=1.0, tau=0.1, extrapolate=True)
        points = np.array([[-1.0], [0.0], [2.0]])
        state = make_opt_state(points, self.quadratic, cfg.alpha)
        new = egi_cbo_step(state, cfg, np.random.default_rng(0), self.quadratic)
        np.testing.assert_allclose(new.ensemble, points - 0.1 * (points - 1.0), atol=1e-10)

    def test_extrapolation_with_flat_curvature(self):
        """线性函数上外推梯度不变"""
        linear = Potential(name='linear', dim=2, func=lambda x: x[..., 0] - 2.0 * x[..., 1],
                           exact_gradient=lambda x: np.array([1.0, -2.0]))
        cfg = CboConfig(method='egi_cbo', extrapolate=True)
        state = make_opt_state(self.init, linear, cfg.alpha)
        grads = egi_gradients(state, cfg, linear)
        np.testing.assert_allclose(grads, np.tile([1.0, -2.0], (6, 1)), atol=1e-8)

    def test_collapsed_ensemble_zero_gradient(self):
        """塌缩集合的梯度为 0"""
        cfg = CboConfig(method='egi_cbo')
        state = make_opt_state(np.tile([1.0, 2.0], (4, 1)), self.rastrigin, cfg.alpha)
        np.testing.assert_array_equal(egi_gradients(state, cfg, self.rastrigin), np.zeros((4, 2)))

    def test_affine_equivariance(self):
        """旋转加平移下的等变性"""
        # σ = 0：漂移与 EGI 梯度在旋转加平移下等变
        angle = 0.7
        R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        shift = np.array([3.0, -1.0])
        base = make_potential('himmelblau')
        moved = Potential(name='moved', dim=2,
                          func=lambda y: base.func((y - shift) @ R))
        cfg = CboConfig(method='egi_cbo', kappa=0.5, sigma=0.0, tau=0.01, n_iters=20)
        a = run_optimizer(base, self.init, cfg)
        b = run_optimizer(moved, self.init @ R.T + shift, cfg)
        np.testing.assert_allclose(b.final_ensemble, a.final_ensemble @ R.T + shift, atol=1e-6)


class TestRunOptimizer:
    """完整运行测试"""

    @pytest.fixture(autouse=True)
    def setup(self):
        """测试前准备"""
        self.rastrigin = make_potential('rastrigin2d')
        self.init = np.random.default_rng(5).uniform(-4.0, -1.0, size=(4, 2))

    def test_zero_iterations(self):
        """零次迭代只记录初始状态"""
        record = run_optimizer(self.rastrigin, self.init, CboConfig(), n_iters=0)
        assert len(record.rows) == 1
        assert record.rows[0].iteration == 0
        assert record.n_iters == 0
        np.testing.assert_array_equal(record.final_ensemble, self.init)

    def test_trace_rows(self):
        """轨迹按间隔记录"""
        record = run_optimizer(self.rastrigin, self.init, CboConfig(n_iters=25), trace_every=10)
        assert [row.iteration for row in record.rows] == [0, 10, 20]
        assert record.final_mean.shape == (2,)
        assert record.final_value == pytest.approx(self.rastrigin.eval(record.final_mean))
        assert record.config['lambda'] == 1.0

    def test_seed_reproducibility(self):
        """相同种子结果可复现"""
        cfg = CboConfig(n_iters=50, seed=11)
        a = run_optimizer(self.rastrigin, self.init, cfg)
        b = run_optimizer(self.rastrigin, self.init, cfg)
        np.testing.assert_array_equal(a.final_ensemble, b.final_ensemble)

    def test_divergence_aborts(self):
        """发散时中止并保留部分记录"""
        cfg = CboConfig(method='cbo', lambda_drift=0.0, sigma=1e200, tau=1.0, n_iters=10, noise_mode='component_wise')
        with pytest.raises(RunAborted) as info:
            run_optimizer(self.rastrigin, self.init, cfg)
        assert info.value.record.aborted
        assert info.value.iteration >= 1
        assert isinstance(info.value.__cause__, NonFiniteState)

    def test_invalid_init_shape(self):
        """初始集合形状不符报错"""
        with pytest.raises(ValueError):
            ConsensusOptimizer(self.rastrigin, CboConfig()).run(np.zeros((3, 5)))

    def test_record_ensemble(self):
        """按间隔记录完整集合"""
        record = run_optimizer(self.rastrigin, self.init, CboConfig(n_iters=4), trace_every=2, record_ensemble=True)
        assert [it for it, _ in record.ensembles] == [0, 2, 4]
        assert record.ensembles[-1][1].shape == (4, 2)


@pytest.mark.slow
class TestBenchmarks:
    """基准问题上的小规模复现"""

    def test_shifted_quadratic_egi_beats_cbo(self):
        """十维二次函数上 EGI-CBO 指数收敛而 CBO 停滞（5 个种子的中位数）"""
        p = make_potential('shifted_quadratic', 10)
        common = dict(alpha=100.0, lambda_drift=1.0, sigma=0.2, tau=0.01, n_iters=5000,
                      noise_mode='component_wise')
        egi_values, cbo_values = [], []
        for seed in range(5):
            init = np.random.default_rng(seed).uniform(-4.0, -1.0, size=(20, 10))
            cbo = run_optimizer(p, init, CboConfig(method='cbo', kappa=0.0, seed=seed + 1, **common),
                                trace_every=1000)
            egi = run_optimizer(p, init, CboConfig(method='egi_cbo', kappa=4.0, seed=seed + 1, **common),
                                trace_every=1000)
            cbo_values.append(cbo.final_value)
            egi_values.append(egi.final_value)
        egi_median = float(np.median(egi_values))
        assert egi_median < 1e-6
        assert float(np.median(cbo_values)) >= 100.0 * egi_median

    def test_himmelblau_reaches_a_minimum(self):
        """J=3、ξ=0 时至少 3/5 次运行在某一步达到 V < 1e-3"""
        p = make_potential('himmelblau')
        reached = 0
        for seed in range(5):
            init = np.random.default_rng(seed).uniform(-2.0, 2.0, size=(3, 2))
            cfg = CboConfig(method='egi_cbo', alpha=100.0, lambda_drift=1.0, sigma=0.5, kappa=1.0, xi=0.0,
                            tau=0.01, n_iters=3000, seed=seed + 1)
            record = run_optimizer(p, init, cfg, trace_every=1)
            if min(row.v_mean for row in record.rows) < 1e-3:
                reached += 1
        assert reached >= 3


if __name__ == '__main__':
    pytest.main()
