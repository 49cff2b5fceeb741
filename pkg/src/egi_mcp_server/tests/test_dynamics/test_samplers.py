"""采样器测试"""

import numpy as np
import pytest

from egi_mcp_server.config import SamplerConfig
from egi_mcp_server.dynamics import (EnsembleSampler, aldi_gradfree_step, egi_aldi_extra_step, egi_aldi_step,
                                     egi_ls_step, egi_mala_step, mala_step, run_sampler, ula_step)
from egi_mcp_server.dynamics.samplers import (egi_member_gradients, ensemble_covariance, log_acceptance,
                                              log_proposal_density, make_sampler_state)
from egi_mcp_server.objectives import Potential, make_inverse_problem, make_potential


def _run_steps(step, state, cfg, potential, seed, n_steps):
    rng = np.random.default_rng(seed)
    for _ in range(n_steps):
        state = step(state, cfg, potential, rng)
    return state


def _half_gaussian() -> Potential:
    """x > 0 上的 ½x²，其余位置为 +inf"""
    def value(x):
        with np.errstate(invalid='ignore'):
            return np.where(x[..., 0] > 0, 0.5 * x[..., 0] ** 2, np.inf)

    return Potential(name='half_gaussian', dim=1, func=value, exact_gradient=lambda x: x.copy())


class TestGradientSources:
    """EGI 梯度与解析梯度一致性测试"""

    def test_member_gradients_exact_on_quadratic(self):
        """二次函数上逐成员梯度精确"""
        p = make_potential('shifted_quadratic', 2)
        points = np.random.default_rng(0).normal(size=(8, 2))
        grads = egi_member_gradients(points, p.eval_many(points), SamplerConfig())
        np.testing.assert_allclose(grads, points - 1.0, atol=1e-9)

    def test_member_gradients_skip_infinite_data(self):
        """跳过取值为无穷的成员"""
        p = make_potential('standard_gaussian', 1)
        points = np.array([[0.5], [1.0], [-0.7], [2.0]])
        values = np.append(p.eval_many(points[:3]), np.inf)
        grads = egi_member_gradients(points, values, SamplerConfig(), members=3)
        np.testing.assert_allclose(grads, points[:3], atol=1e-9)


class TestLangevin:
    """EGI-LS 与 ULA 测试"""

    def test_egi_ls_matches_ula(self):
        """二次函数上 EGI-LS 与 ULA 轨迹一致"""
        p = make_potential('shifted_quadratic', 2)
        cfg = SamplerConfig(method='egi_ls', step=0.01)
        init = make_sampler_state(np.random.default_rng(1).normal(size=(8, 2)), p)
        egi = _run_steps(egi_ls_step, init, cfg, p, seed=3, n_steps=100)
        exact = _run_steps(ula_step, init, cfg, p, seed=3, n_steps=100)
        np.testing.assert_allclose(egi.ensemble, exact.ensemble, atol=1e-8)
        assert egi.iteration == 100

    def test_flat_potential_is_brownian(self):
        """常数势函数下只有布朗增量"""
        flat = Potential(name='flat', dim=2, func=lambda x: np.zeros(x.shape[:-1]),
                         exact_gradient=lambda x: np.zeros(2))
        cfg = SamplerConfig(method='egi_ls', step=0.02)
        state = make_sampler_state(np.random.default_rng(2).normal(size=(5, 2)), flat)
        new = egi_ls_step(state, cfg, flat, np.random.default_rng(7))
        noise = np.random.default_rng(7).standard_normal((5, 2))
        np.testing.assert_allclose(new.ensemble, state.ensemble + np.sqrt(0.04) * noise, atol=1e-12)

    def test_unadjusted_accept_rate(self):
        """未修正方法的接受率为 1"""
        p = make_potential('standard_gaussian', 1)
        init = np.random.default_rng(0).normal(size=(4, 1))
        record = run_sampler(p, init, SamplerConfig(method='ula', n_iters=20), burn_in=5)
        assert record.accept_rate == 1.0
        assert record.sample_count == 15 * 4


class TestMala:
    """EGI-MALA 与 MALA 测试"""

    def test_equal_values_accepts(self):
        """取值与提议密度相同时必然接受"""
        log_alpha = log_acceptance(np.array([1.0]), np.array([1.0]), np.array([-0.3]), np.array([-0.3]))
        assert log_alpha[0] == 0.0

    def test_infinite_proposal_rejected(self):
        """支撑集外的提议必然拒绝"""
        log_alpha = log_acceptance(np.array([1.0, 1.0]), np.array([np.inf, 2.0]), np.zeros(2), np.zeros(2))
        assert log_alpha[0] == -np.inf
        assert log_alpha[1] == pytest.approx(-1.0)

    def test_proposal_density_swap(self):
        """交换当前点与提议点时对数接受率取反"""
        rng = np.random.default_rng(4)
        x, prop, gx, gp = rng.normal(size=(4, 3, 2))
        v_x, v_prop = rng.normal(size=(2, 3))
        fwd = log_proposal_density(prop, x, gx, 0.1)
        bwd = log_proposal_density(x, prop, gp, 0.1)
        np.testing.assert_allclose(fwd, -np.sum((prop - x + 0.1 * gx) ** 2, axis=1) / 0.4)
        np.testing.assert_allclose(log_acceptance(v_x, v_prop, fwd, bwd),
                                   -log_acceptance(v_prop, v_x, bwd, fwd))

    @pytest.mark.parametrize("dim,members,step", [(1, 4, 0.5), (2, 8, 0.1)])
    def test_egi_mala_matches_mala(self, dim, members, step):
        """二次函数上 EGI-MALA 与 MALA 轨迹一致"""
        p = make_potential('standard_gaussian', dim)
        cfg = SamplerConfig(method='egi_mala', step=step)
        init = make_sampler_state(np.random.default_rng(dim).normal(size=(members, dim)), p)
        egi = _run_steps(egi_mala_step, init, cfg, p, seed=5, n_steps=100)
        exact = _run_steps(mala_step, init, cfg, p, seed=5, n_steps=100)
        np.testing.assert_allclose(egi.ensemble, exact.ensemble, atol=1e-8)
        np.testing.assert_array_equal(egi.accept_count, exact.accept_count)

    def test_memory_update(self):
        """接受时记忆保留旧点，拒绝时保留提议"""
        p = make_potential('standard_gaussian', 1)
        cfg = SamplerConfig(method='mala', step=0.5)
        state = make_sampler_state(np.array([[0.1], [-0.4], [1.2]]), p)
        assert state.memory is None
        new = mala_step(state, cfg, p, np.random.default_rng(0))
        moved = np.any(new.ensemble != state.ensemble, axis=1)
        np.testing.assert_array_equal(new.memory[moved], state.ensemble[moved])
        assert np.all(new.memory[~moved] != state.ensemble[~moved])

    @pytest.mark.parametrize("step_fn", [mala_step, egi_mala_step])
    def test_outside_support_never_accepted(self, step_fn):
        """迭代始终留在支撑集内"""
        p = _half_gaussian()
        cfg = SamplerConfig(method='egi_mala', step=0.5)
        state = make_sampler_state(np.array([[0.05], [0.3], [0.8], [1.5]]), p)
        rng = np.random.default_rng(11)
        for _ in range(30):
            state = step_fn(state, cfg, p, rng)
            assert np.all(state.ensemble > 0)
            assert np.all(np.isfinite(state.values))


class TestAldi:
    """ALDI 族测试"""

    @pytest.fixture(autouse=True)
    def setup(self):
        """测试前准备"""
        self.linear = make_potential('linear_gaussian_1d')
        self.problem = make_inverse_problem('linear_gaussian_1d')

    def test_covariance(self):
        """集合协方差"""
        points = np.array([[0.0, 1.0], [2.0, 1.0], [1.0, 4.0]])
        mean, dev, C = ensemble_covariance(points)
        np.testing.assert_allclose(mean, [1.0, 2.0])
        np.testing.assert_allclose(C, np.cov(points.T, bias=True))

    def test_egi_aldi_matches_gradfree_on_linear_problem(self):
        """线性问题上 EGI-ALDI 与无梯度 ALDI 一致"""
        cfg = SamplerConfig(method='egi_aldi', step=0.05)
        state = make_sampler_state(np.array([[-0.5], [0.2], [0.9], [1.4], [2.0]]), self.linear)
        egi = egi_aldi_step(state, cfg, self.linear, np.random.default_rng(6))
        gradfree = aldi_gradfree_step(state, cfg, self.problem, self.linear, np.random.default_rng(6))
        np.testing.assert_allclose(egi.ensemble, gradfree.ensemble, atol=1e-8)

    def test_extrapolated_matches_per_member(self):
        """二次函数上外推与逐成员求解一致"""
        p = make_potential('standard_gaussian', 2)
        cfg = SamplerConfig(method='egi_aldi', step=0.01)
        init = make_sampler_state(np.random.default_rng(8).normal(size=(8, 2)), p)
        per_member = _run_steps(egi_aldi_step, init, cfg, p, seed=9, n_steps=20)
        extrapolated = _run_steps(egi_aldi_extra_step, init, cfg, p, seed=9, n_steps=20)
        np.testing.assert_allclose(extrapolated.ensemble, per_member.ensemble, atol=1e-8)

    def test_collapsed_ensemble_is_stationary(self):
        """塌缩集合保持不动"""
        cfg = SamplerConfig(method='egi_aldi', step=0.1)
        state = make_sampler_state(np.full((4, 1), 0.5), self.linear)
        for step_fn in (egi_aldi_step, egi_aldi_extra_step):
            new = step_fn(state, cfg, self.linear, np.random.default_rng(0))
            np.testing.assert_array_equal(new.ensemble, state.ensemble)
        new = aldi_gradfree_step(state, cfg, self.problem, self.linear, np.random.default_rng(0))
        np.testing.assert_array_equal(new.ensemble, state.ensemble)

    def test_subspace_confinement(self):
        """迭代留在初始集合张成的仿射子空间内"""
        p = make_potential('standard_gaussian', 5)
        cfg = SamplerConfig(method='egi_aldi', step=0.05)
        init = np.random.default_rng(10).normal(size=(3, 5))
        state = _run_steps(egi_aldi_step, make_sampler_state(init, p), cfg, p, seed=12, n_steps=50)
        basis = np.linalg.svd(init - init.mean(axis=0))[2][:2]          # 初始偏差张成的平面
        offsets = state.ensemble - init.mean(axis=0)
        residual = offsets - offsets @ basis.T @ basis
        assert np.max(np.abs(residual)) < 1e-8

    def test_correction_switch(self):
        """修正项开关"""
        with_term = SamplerConfig(method='aldi_gradfree', step=0.1)
        without = SamplerConfig(method='aldi_gradfree', step=0.1, aldi_correction=False)
        state = make_sampler_state(np.array([[0.0], [1.0], [2.0]]), self.linear)
        a = aldi_gradfree_step(state, with_term, self.problem, self.linear, np.random.default_rng(1))
        b = aldi_gradfree_step(state, without, self.problem, self.linear, np.random.default_rng(1))
        _, dev, _ = ensemble_covariance(state.ensemble)
        np.testing.assert_allclose(a.ensemble - b.ensemble, 0.1 * 2 / 3 * dev, atol=1e-12)


class TestRunSampler:
    """完整采样运行测试"""

    @pytest.fixture(autouse=True)
    def setup(self):
        """测试前准备"""
        self.potential = make_potential('standard_gaussian', 2)
        self.init = np.random.default_rng(0).normal(size=(6, 2))

    def test_empty_pool(self):
        """样本池为空时的记录"""
        record = run_sampler(self.potential, self.init, SamplerConfig(method='egi_ls', n_iters=10), burn_in=10)
        assert record.sample_count == 0
        assert record.samples.shape == (0, 2)
        assert record.extra['empty_sample_pool'] is True
        assert record.sample_moments() == (None, None)

    def test_default_burn_in(self):
        """默认 burn-in 为迭代数的 25%"""
        record = run_sampler(self.potential, self.init, SamplerConfig(method='ula', n_iters=40))
        assert record.burn_in == 10
        assert record.sample_count == 30 * 6

    def test_needs_two_members(self):
        """采样至少需要两个成员"""
        with pytest.raises(ValueError):
            run_sampler(self.potential, self.init[:1], SamplerConfig(method='ula'))

    def test_seed_reproducibility(self):
        """相同种子结果可复现"""
        cfg = SamplerConfig(method='egi_mala', n_iters=30, seed=3)
        a = run_sampler(self.potential, self.init, cfg)
        b = run_sampler(self.potential, self.init, cfg)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert a.accept_rate == b.accept_rate

    def test_accept_rate_range(self):
        """大步长时接受率介于 0 与 1 之间"""
        record = run_sampler(self.potential, self.init, SamplerConfig(method='mala', step=1.5, n_iters=50))
        assert 0.0 < record.accept_rate < 1.0

    def test_gradfree_resolves_problem_by_name(self):
        """按势函数名解析反问题"""
        sampler = EnsembleSampler(make_potential('banana_posterior'), SamplerConfig(method='aldi_gradfree'))
        assert sampler.problem.name == 'banana_posterior'


@pytest.mark.slow
class TestSamplingAccuracy:
    """采样精度（小规模复现）"""

    def test_egi_ls_moments(self):
        """EGI-LS 样本矩与 ULA 平稳分布一致"""
        p = make_potential('shifted_quadratic', 1)
        init = np.random.default_rng(1).normal(size=(20, 1))
        h = 0.1
        record = run_sampler(p, init, SamplerConfig(method='egi_ls', step=h, n_iters=5000, seed=2),
                             burn_in=500, trace_every=500)
        mean, var = record.sample_moments()
        assert abs(mean[0] - 1.0) < 0.05
        # 未修正 Langevin 的平稳方差为 1 / (1 - h/2)
        assert abs(var[0] - 1.0 / (1.0 - h / 2)) < 0.1

    def test_egi_mala_invariance(self):
        """Metropolis 修正消除离散偏差：一维标准正态上的样本矩"""
        p = make_potential('standard_gaussian', 1)
        init = np.random.default_rng(3).normal(size=(10, 1))
        record = run_sampler(p, init, SamplerConfig(method='egi_mala', step=0.5, n_iters=50000, seed=4),
                             burn_in=5000, trace_every=5000)
        mean, var = record.sample_moments()
        assert abs(mean[0]) < 0.03
        assert abs(var[0] - 1.0) < 0.05

    def test_aldi_linear_gaussian(self):
        """线性高斯反问题上的后验矩 N(1/2, 1/2)"""
        p = make_potential('linear_gaussian_1d')
        init = np.random.default_rng(5).uniform(-1.0, 2.0, size=(20, 1))
        record = run_sampler(p, init, SamplerConfig(method='aldi_gradfree', step=0.01, n_iters=20000, seed=6),
                             burn_in=5000, trace_every=1000)
        mean, var = record.sample_moments()
        assert abs(mean[0] - 0.5) < 0.05
        assert abs(var[0] - 0.5) < 0.05


if __name__ == '__main__':
    pytest.main()
