"""Step rules, generation drivers, and teacher-forced deviation traces.

Frozen hand values on the (2, 0.1, 0.2) schedule with x0=1, z=0.5:
  degrade(t=2)       = 1.1131032685303162
  ddim 2->1 (eps=z)  = 1.1067971810589328
  ddpm mean at t=2   = 1.0331987235233655
"""

import numpy as np
import pytest

from compsamp.denoisers import (CompensationHandle, DenoiserHandle, comp_init,
                                denoiser_init, predict_eps, x0_from_eps)
from compsamp.samplers import (SamplerParams, Trajectory, cold_step,
                               cold_step_teacher, comp_step_learned,
                               comp_step_oracle, ddim_step, ddpm_step,
                               generate, make_time_grid, sigma_for_pair,
                               trace_deviation)
from compsamp.schedule import build_linear_schedule, degrade


def gaussian_oracle(d=1, sigma0_sq=1.0):
    return DenoiserHandle(kind="gaussian-oracle", mu=np.zeros(d),
                          sigma0_sq=sigma0_sq)


class TestSamplerParams:
    def test_valid(self):
        sp = SamplerParams(rule="ddim", time_grid=(10, 5, 1))
        assert sp.time_grid == (10, 5, 1)

    @pytest.mark.parametrize("kwargs", [
        {"rule": "euler", "time_grid": (2, 1)},
        {"rule": "ddim", "time_grid": ()},
        {"rule": "ddim", "time_grid": (5, 5, 1)},
        {"rule": "ddim", "time_grid": (1, 5)},
        {"rule": "ddim", "time_grid": (5, 0)},
        {"rule": "ddim", "time_grid": (5, 1), "eta": -0.5},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SamplerParams(**kwargs)


class TestMakeTimeGrid:
    def test_full(self):
        assert make_time_grid(5, 5) == (5, 4, 3, 2, 1)

    def test_strided(self):
        grid = make_time_grid(100, 10)
        assert len(grid) == 10
        assert grid[0] == 100 and grid[-1] == 1
        assert all(a > b for a, b in zip(grid, grid[1:]))

    @pytest.mark.parametrize("nfe", [0, 101])
    def test_invalid(self, nfe):
        with pytest.raises(ValueError):
            make_time_grid(100, nfe)


class TestSigmaForPair:
    def test_eta_zero(self, sched100):
        assert sigma_for_pair(sched100, 50, 40, 0.0) == 0.0

    def test_t_prev_zero(self, sched100):
        assert sigma_for_pair(sched100, 1, 0, 1.0) == 0.0

    def test_eta_one_below_f(self, sched100):
        for t, p in [(100, 90), (50, 49), (10, 3)]:
            sigma = sigma_for_pair(sched100, t, p, 1.0)
            assert 0.0 < sigma <= sched100.f(p) + 1e-12


class TestDdpmStep:
    def test_vanishing_step_limit(self):
        s = build_linear_schedule(1, 1e-9, 1e-9)
        h = gaussian_oracle()
        x = np.array([0.8])
        out = ddpm_step(x, 1, h, s, np.random.default_rng(0),
                        eps_hat=np.zeros(1))
        assert out[0] == pytest.approx(0.8, abs=1e-6)

    def test_hand_mean(self, sched2):
        x = np.array([1.1131032685303162])
        rng_step = np.random.default_rng(21)
        out = ddpm_step(x, 2, gaussian_oracle(), sched2, rng_step,
                        eps_hat=np.array([0.5]))
        # subtract the identical noise draw to recover the posterior mean
        xi = np.random.default_rng(21).standard_normal(1)
        mean = out - np.sqrt(sched2.betas[1]) * xi
        assert mean[0] == pytest.approx(1.0331987235233655, abs=1e-12)

    def test_no_noise_at_t1(self, sched2):
        x = np.array([0.4])
        a = ddpm_step(x, 1, gaussian_oracle(), sched2, np.random.default_rng(1))
        b = ddpm_step(x, 1, gaussian_oracle(), sched2, np.random.default_rng(2))
        np.testing.assert_array_equal(a, b)

    def test_reproducible(self, sched2):
        x = np.array([0.4])
        a = ddpm_step(x, 2, gaussian_oracle(), sched2, np.random.default_rng(5))
        b = ddpm_step(x, 2, gaussian_oracle(), sched2, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_t_out_of_range(self, sched2):
        with pytest.raises(ValueError):
            ddpm_step(np.zeros(1), 3, gaussian_oracle(), sched2,
                      np.random.default_rng(0))


class TestDdimStep:
    def test_exact_denoiser_identity(self, sched100, rng):
        x0 = rng.standard_normal(3)
        z = rng.standard_normal(3)
        for t, p in [(100, 99), (50, 20), (10, 0)]:
            x_t = degrade(x0, z, sched100, t)
            out = ddim_step(x_t, t, p, gaussian_oracle(3), sched100,
                            eps_hat=z)
            np.testing.assert_allclose(out, degrade(x0, z, sched100, p),
                                       atol=1e-12)

    def test_hand_value(self, sched2):
        out = ddim_step(np.array([1.1131032685303162]), 2, 1,
                        gaussian_oracle(), sched2, eps_hat=np.array([0.5]))
        assert out[0] == pytest.approx(1.1067971810589328, abs=1e-12)

    def test_t_prev_zero_returns_x0_hat(self, sched2, rng):
        x = rng.standard_normal(2)
        eps = rng.standard_normal(2)
        out = ddim_step(x, 1, 0, gaussian_oracle(2), sched2, eps_hat=eps)
        np.testing.assert_allclose(out, x0_from_eps(x, eps, 1, sched2),
                                   atol=1e-12)

    def test_sigma_too_large(self, sched2):
        with pytest.raises(ValueError, match="sigma"):
            ddim_step(np.zeros(1), 2, 1, gaussian_oracle(), sched2,
                      sigma=1.0)

    def test_stochastic_needs_rng(self, sched100):
        with pytest.raises(ValueError, match="rng"):
            ddim_step(np.zeros(1), 50, 40, gaussian_oracle(), sched100,
                      sigma=0.1)

    def test_bad_pair(self, sched100):
        with pytest.raises(ValueError):
            ddim_step(np.zeros(1), 40, 50, gaussian_oracle(), sched100)


class TestColdStep:
    def test_collapses_to_ddim(self, sched100, rng):
        h = gaussian_oracle(4)
        for t, p in [(100, 99), (60, 30), (5, 1)]:
            x = rng.standard_normal(4)
            np.testing.assert_allclose(
                cold_step(x, t, p, h, sched100),
                ddim_step(x, t, p, h, sched100), atol=1e-12)

    def test_teacher_forced_bias_leak(self, sched100, rng):
        x0 = rng.standard_normal(3)
        z = rng.standard_normal(3)
        b = np.array([0.2, -0.1, 0.05])
        for t, p in [(100, 99), (40, 10)]:
            x_t = degrade(x0, z, sched100, t)
            out = cold_step_teacher(x_t, t, p, x0 + b, z, sched100)
            expected = degrade(x0, z, sched100, p) \
                + (sched100.g(p) - sched100.g(t)) * b
            np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_teacher_forced_perfect(self, sched100, rng):
        x0 = rng.standard_normal(2)
        z = rng.standard_normal(2)
        x_t = degrade(x0, z, sched100, 80)
        out = cold_step_teacher(x_t, 80, 79, x0, z, sched100)
        np.testing.assert_allclose(out, degrade(x0, z, sched100, 79),
                                   atol=1e-12)


class TestCompStepOracle:
    def test_hand_value_adversarial(self, sched2):
        out = comp_step_oracle(np.array([1.1131032685303162]), 2, 1,
                               np.array([0.7]), np.array([1.0]),
                               np.array([0.5]), sched2)
        assert out[0] == pytest.approx(1.1067971810589328, abs=1e-12)

    def test_reduces_to_cold_when_perfect(self, sched100, rng):
        x0 = rng.standard_normal(2)
        z = rng.standard_normal(2)
        x_t = degrade(x0, z, sched100, 60)
        np.testing.assert_allclose(
            comp_step_oracle(x_t, 60, 59, x0, x0, z, sched100),
            cold_step_teacher(x_t, 60, 59, x0, z, sched100), atol=1e-15)

    def test_identity_random_sweep(self, sched100, rng):
        for _ in range(200):
            d = 8
            x0 = rng.standard_normal(d)
            z = rng.standard_normal(d)
            x0_hat = rng.standard_normal(d) * 3.0
            t = int(rng.integers(2, 101))
            p = int(rng.integers(0, t))
            x_t = degrade(x0, z, sched100, t)
            out = comp_step_oracle(x_t, t, p, x0_hat, x0, z, sched100)
            assert np.max(np.abs(out - degrade(x0, z, sched100, p))) < 1e-10

    def test_shape_mismatch(self, sched100):
        with pytest.raises(ValueError):
            comp_step_oracle(np.zeros(2), 10, 9, np.zeros(3), np.zeros(2),
                             np.zeros(2), sched100)


class TestCompStepLearned:
    def test_zero_module_equals_ddim(self, sched100, rng):
        h = gaussian_oracle(2)
        c = CompensationHandle(params=comp_init(2, (8, 8), seed=0))
        x = rng.standard_normal(2)
        out = comp_step_learned(x, 50, 40, h, c, sched100)
        base = ddim_step(x, 50, 40, h, sched100)
        np.testing.assert_array_equal(out, base)

    def test_use_comp_false_is_ddim(self, sched100, rng):
        params = comp_init(2, (8,), seed=1)
        params.weights[-1][:] = rng.standard_normal(params.weights[-1].shape)
        c = CompensationHandle(params=params)
        h = gaussian_oracle(2)
        x = rng.standard_normal(2)
        out = comp_step_learned(x, 50, 40, h, c, sched100, use_comp=False)
        np.testing.assert_array_equal(out, ddim_step(x, 50, 40, h, sched100))

    def test_exact_comp_matches_oracle_step(self, sched100, rng):
        # full-grid stride: module output pinned to the true w(t)(x0_hat - x0)
        h = gaussian_oracle(2)
        x0 = rng.standard_normal(2)
        z = rng.standard_normal(2)
        t, p = 60, 59
        x_t = degrade(x0, z, sched100, t)
        eps_hat = predict_eps(h, x_t, t, sched100)
        x0_hat = x0_from_eps(x_t, eps_hat, t, sched100)
        c_exact = sched100.w(t) * (x0_hat - x0)
        learned = ddim_step(x_t, t, p, h, sched100) + c_exact
        oracle_out = comp_step_oracle(x_t, t, p, x0_hat, x0, eps_hat, sched100)
        np.testing.assert_allclose(learned, oracle_out, atol=1e-12)


class TestGenerate:
    def test_deterministic(self, sched100):
        h = gaussian_oracle(2)
        sp = SamplerParams(rule="ddim", time_grid=make_time_grid(100, 10))
        a, _ = generate(h, None, sp, sched100, n=16, d=2, seed=3)
        b, _ = generate(h, None, sp, sched100, n=16, d=2, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_single_step_collapse(self, sched100):
        h = gaussian_oracle(2)
        sp = SamplerParams(rule="ddim", time_grid=(100,))
        out, _ = generate(h, None, sp, sched100, n=1, d=2, seed=7)
        x_T = np.random.default_rng(np.random.SeedSequence(7)) \
            .standard_normal((1, 2))
        eps = predict_eps(h, x_T, 100, sched100)
        np.testing.assert_allclose(out, x0_from_eps(x_T, eps, 100, sched100),
                                   atol=1e-12)

    def test_oracle_ddim_covariance(self, sched100):
        h = gaussian_oracle(2)
        sp = SamplerParams(rule="ddim", time_grid=make_time_grid(100, 100))
        out, _ = generate(h, None, sp, sched100, n=10_000, d=2, seed=11)
        cov = np.cov(out.T)
        np.testing.assert_allclose(cov, np.eye(2), atol=0.05)
        assert np.abs(out.mean(axis=0)).max() < 0.04

    def test_trajectories(self, sched100):
        h = gaussian_oracle(1)
        grid = make_time_grid(100, 5)
        sp = SamplerParams(rule="ddim", time_grid=grid)
        _, trajs = generate(h, None, sp, sched100, n=2, d=1, seed=0,
                            keep_trajectories=True)
        assert len(trajs) == 2
        assert trajs[0].times == [grid[0], *grid[1:], 0]
        assert all(a > b for a, b in
                   zip(trajs[0].times, trajs[0].times[1:]))

    def test_rejects_comp_oracle_rule(self, sched100):
        sp = SamplerParams(rule="comp-oracle", time_grid=(100, 1))
        with pytest.raises(ValueError, match="teacher-forced"):
            generate(gaussian_oracle(1), None, sp, sched100, n=1, d=1, seed=0)

    def test_ddpm_requires_full_grid(self, sched100):
        sp = SamplerParams(rule="ddpm", time_grid=make_time_grid(100, 10))
        with pytest.raises(ValueError, match="full unit-stride"):
            generate(gaussian_oracle(1), None, sp, sched100, n=1, d=1, seed=0)

    def test_grid_must_start_at_t_max(self, sched100):
        sp = SamplerParams(rule="ddim", time_grid=(50, 1))
        with pytest.raises(ValueError, match="t_max"):
            generate(gaussian_oracle(1), None, sp, sched100, n=1, d=1, seed=0)

    def test_comp_learned_needs_module(self, sched100):
        sp = SamplerParams(rule="comp-learned",
                           time_grid=make_time_grid(100, 100))
        with pytest.raises(ValueError, match="compensation"):
            generate(gaussian_oracle(1), None, sp, sched100, n=1, d=1, seed=0)

    def test_comp_learned_zero_module_bitwise_ddim(self, sched100):
        h = gaussian_oracle(2)
        c = CompensationHandle(params=comp_init(2, (8,), seed=2))
        grid = make_time_grid(100, 100)
        a, _ = generate(h, c, SamplerParams(rule="comp-learned",
                                            time_grid=grid),
                        sched100, n=8, d=2, seed=5)
        b, _ = generate(h, None, SamplerParams(rule="ddim", time_grid=grid),
                        sched100, n=8, d=2, seed=5)
        np.testing.assert_array_equal(a, b)


class TestTraceDeviation:
    def test_comp_oracle_flat(self, sched100, rng):
        x0 = rng.standard_normal(2)
        z = rng.standard_normal(2)
        traj = trace_deviation(x0, z, sched100, "comp-oracle",
                               lambda x, t: x0 + 0.5, make_time_grid(100, 100))
        assert max(traj.deviations) < 1e-10

    def test_cold_bias_telescopes(self, sched100, rng):
        x0 = rng.standard_normal(2)
        z = rng.standard_normal(2)
        b = np.array([0.1, -0.05])
        traj = trace_deviation(x0, z, sched100, "cold", lambda x, t: x0 + b,
                               make_time_grid(100, 100))
        for t, dev in zip(traj.times, traj.deviations):
            expected = abs(sched100.g(t) - sched100.g(100)) * np.linalg.norm(b)
            assert dev == pytest.approx(expected, abs=1e-9)

    def test_perfect_reconstruction_all_rules(self, sched100, rng):
        x0 = rng.standard_normal(2)
        z = rng.standard_normal(2)
        for rule in ("ddim", "cold", "comp-oracle"):
            traj = trace_deviation(x0, z, sched100, rule, lambda x, t: x0,
                                   make_time_grid(100, 100))
            assert max(traj.deviations) < 1e-9

    def test_ddim_strided_equals_full_with_perfect_reconstruction(
            self, sched100, rng):
        x0 = rng.standard_normal(2)
        z = rng.standard_normal(2)
        full = trace_deviation(x0, z, sched100, "ddim", lambda x, t: x0,
                               make_time_grid(100, 100))
        coarse = trace_deviation(x0, z, sched100, "ddim", lambda x, t: x0,
                                 make_time_grid(100, 10))
        np.testing.assert_allclose(full.iterates[-1], coarse.iterates[-1],
                                   atol=1e-10)

    def test_invalid_rule_and_grid(self, sched100):
        with pytest.raises(ValueError):
            trace_deviation(np.zeros(1), np.zeros(1), sched100, "ddpm",
                            lambda x, t: x, (100, 1))
        with pytest.raises(ValueError):
            trace_deviation(np.zeros(1), np.zeros(1), sched100, "ddim",
                            lambda x, t: x, (50, 1))


def test_trajectory_defaults():
    t = Trajectory()
    assert t.times == [] and t.iterates == [] and t.deviations == []
