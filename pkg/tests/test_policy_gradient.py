"""Policy network, PPO objective and update, rollout and curriculum.

Gradients are checked against central finite differences; the sampler against
Monte Carlo moments; trajectory likelihoods against per-step recomputation.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from energytrader.env import OBS_DIM, DayAheadEnv, EnvConfig
from energytrader.policy_gradient import (
    DEFAULT_SCHEDULE,
    CurriculumStage,
    PolicyParameters,
    TrainerConfig,
    TrainingDivergence,
    Trajectory,
    build_batch,
    collect_trajectory,
    discounted_return,
    evaluate_policy,
    init_params,
    ppo_objective,
    ppo_update,
    returns_to_go,
    sample_action,
    scale_schedule,
    squash,
    train_curriculum,
    trajectory_log_prob,
    validate_schedule,
)
from energytrader.policy_gradient.network import action_log_prob, log_squash_jacobian, policy_mean

FD_STEP = 1e-5


def mini_params(seed: int = 0, hidden: int = 4) -> PolicyParameters:
    rng = np.random.default_rng(seed)
    p = PolicyParameters.initialize(OBS_DIM, hidden, rng, policy_out_scale=1.0)
    p.arrays["log_std"] = rng.uniform(-1.0, 0.0, 4)
    return p


def random_trajectory(rng: np.random.Generator, params: PolicyParameters, length: int = 24) -> Trajectory:
    states = rng.normal(size=(length, params.obs_dim))
    pre = rng.normal(size=(length, 4))
    logp = action_log_prob(params, states, pre)
    return Trajectory(
        states=states,
        pre_actions=pre,
        # collection-time log-probs a little off the current policy, so ratios differ from one
        log_probs=logp + rng.uniform(-0.15, 0.15, length),
        rewards=rng.normal(size=length),
        values=rng.normal(size=length),
    )


def fd_gradient(params: PolicyParameters, batch, config) -> dict[str, np.ndarray]:
    out = {}
    for name, arr in params.arrays.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + FD_STEP
            up = ppo_objective(params, batch, config, with_grad=False)[0]
            arr[idx] = orig - FD_STEP
            down = ppo_objective(params, batch, config, with_grad=False)[0]
            arr[idx] = orig
            g[idx] = (up - down) / (2 * FD_STEP)
        out[name] = g
    return out


def relative_error(a: dict, b: dict) -> float:
    va = np.concatenate([a[k].ravel() for k in sorted(a)])
    vb = np.concatenate([b[k].ravel() for k in sorted(a)])
    return float(np.linalg.norm(va - vb) / max(np.linalg.norm(va), np.linalg.norm(vb), 1e-12))


class TestSquash:
    def test_ranges(self):
        pre = np.array([[-50.0, 0.0, 50.0, -50.0], [0.0, 0.0, 0.0, 50.0]])
        out = squash(pre)
        assert np.all(out[:, :3] >= 0) and np.all(out[:, :3] <= 1)
        assert out[1, 3] == pytest.approx(1.0) and out[0, 3] == pytest.approx(-1.0)
        assert out[1, 0] == pytest.approx(0.5)

    @settings(max_examples=100, deadline=None)
    @given(x=st.floats(-8, 8))
    def test_jacobian_matches_direct_formula(self, x):
        pre = np.full(4, x)
        sig = 1.0 / (1.0 + np.exp(-x))
        direct = 3 * np.log(sig * (1.0 - sig)) + np.log(1.0 - np.tanh(x) ** 2)
        assert log_squash_jacobian(pre) == pytest.approx(direct, rel=1e-7, abs=1e-7)

    def test_jacobian_matches_finite_difference(self):
        pre = np.array([0.3, -1.2, 2.0, 0.7])
        h = 1e-6
        num = (squash(pre + h) - squash(pre - h)) / (2 * h)
        assert log_squash_jacobian(pre) == pytest.approx(float(np.sum(np.log(num))), rel=1e-8)

    def test_jacobian_finite_when_saturated(self):
        assert np.isfinite(log_squash_jacobian(np.array([800.0, -800.0, 0.0, 400.0])))


class TestSampler:
    def test_deterministic_returns_squashed_mean(self):
        p = mini_params()
        x = np.linspace(-1, 1, OBS_DIM)
        action, pre, _ = sample_action(p, x, deterministic=True)
        np.testing.assert_allclose(pre, policy_mean(p, x)[0])
        np.testing.assert_allclose(action, squash(pre))

    def test_stochastic_needs_rng(self):
        with pytest.raises(ValueError):
            sample_action(mini_params(), np.zeros(OBS_DIM))

    def test_monte_carlo_moments(self):
        p = mini_params(3)
        x = np.linspace(-1, 1, OBS_DIM)
        rng = np.random.default_rng(0)
        pre = np.array([sample_action(p, x, rng)[1] for _ in range(20000)])
        mean, std = policy_mean(p, x)[0], np.exp(p["log_std"])
        assert np.all(np.abs(pre.mean(axis=0) - mean) <= 4 * std / np.sqrt(20000))
        np.testing.assert_allclose(pre.std(axis=0), std, rtol=0.03)

    def test_reported_log_prob_matches_density(self):
        p = mini_params(1)
        x = np.ones(OBS_DIM) * 0.3
        _, pre, logp = sample_action(p, x, np.random.default_rng(2))
        assert logp == pytest.approx(float(action_log_prob(p, x, pre)[0]))

    def test_action_bias_sets_initial_mean(self):
        p = init_params(TrainerConfig(init_action_bias=(-3.5, -3.5, 0.0, 0.0)))
        action, _, _ = sample_action(p, np.zeros(OBS_DIM), deterministic=True)
        assert action[0] < 0.05 and action[2] == pytest.approx(0.5, abs=0.02)

    def test_per_dim_init_log_std(self):
        p = init_params(TrainerConfig(init_log_std=(1.0, -0.5, -0.5, -1.5)))
        np.testing.assert_allclose(p["log_std"], [1.0, -0.5, -0.5, -1.5])


class TestReturns:
    def test_example(self):
        assert discounted_return([1, 1, 1], 0.5) == 1.75

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            r = rng.normal(size=int(rng.integers(1, 30)))
            gamma = float(rng.uniform(0.01, 0.99))
            direct = sum(v * gamma**i for i, v in enumerate(r))
            assert abs(discounted_return(r, gamma) - direct) <= 1e-12 * max(1.0, abs(direct))

    def test_returns_to_go_first_entry(self):
        r = np.array([1.0, -2.0, 0.5, 3.0])
        rtg = returns_to_go(r, 0.9)
        assert rtg[0] == pytest.approx(discounted_return(r, 0.9))
        assert rtg[-1] == 3.0

    @pytest.mark.parametrize("gamma", [0.0, 1.0, 1.5])
    def test_gamma_range(self, gamma):
        with pytest.raises(ValueError):
            discounted_return([1.0], gamma)


class TestTrajectoryLogProb:
    def test_equals_sum_of_step_log_probs(self, exact_env):
        p = mini_params(2)
        traj = collect_trajectory(p, exact_env, 0, np.random.default_rng(4))
        assert trajectory_log_prob(p, traj) == pytest.approx(float(traj.log_probs.sum()), rel=1e-10)

    def test_empty(self):
        p = mini_params()
        empty = Trajectory(np.zeros((0, OBS_DIM)), np.zeros((0, 4)), np.zeros(0), np.zeros(0), np.zeros(0))
        assert trajectory_log_prob(p, empty) == 0.0


class TestObjectiveGradient:
    @pytest.mark.parametrize("objective", ["ppo_clip", "reinforce"])
    def test_matches_finite_difference(self, objective):
        rng = np.random.default_rng(17)
        p = mini_params(5)
        config = TrainerConfig(objective=objective, entropy_coeff=0.01, value_coeff=0.5)
        for _ in range(5):
            trajs = [random_trajectory(rng, p, int(rng.integers(3, 10))) for _ in range(2)]
            batch = build_batch(trajs, 0.9, normalize=objective == "ppo_clip")
            _, grads, _ = ppo_objective(p, batch, config)
            assert relative_error(grads, fd_gradient(p, batch, config)) < 1e-4

    def test_ratio_one_gives_mean_advantage(self):
        rng = np.random.default_rng(0)
        p = mini_params()
        traj = random_trajectory(rng, p)
        traj.log_probs = action_log_prob(p, traj.states, traj.pre_actions)
        batch = build_batch([traj], 0.9)
        _, _, stats = ppo_objective(p, batch, TrainerConfig())
        assert stats["objective"] == pytest.approx(float(batch.advantages.mean()))
        assert stats["mean_ratio"] == pytest.approx(1.0)
        assert stats["approx_kl"] == pytest.approx(0.0, abs=1e-12)

    def test_clipped_steps_carry_no_policy_gradient(self):
        rng = np.random.default_rng(1)
        p = mini_params()
        traj = random_trajectory(rng, p, 6)
        # ratio e^1 with positive advantages: every step is clipped
        traj.log_probs = action_log_prob(p, traj.states, traj.pre_actions) - 1.0
        batch = build_batch([traj], 0.9, normalize=False)
        batch.advantages = np.abs(batch.advantages) + 0.1
        config = TrainerConfig(value_coeff=0.0)
        _, grads, stats = ppo_objective(p, batch, config)
        assert stats["clip_fraction"] == 1.0
        assert all(np.all(g == 0) for g in grads.values())

    def test_input_parameters_untouched(self):
        rng = np.random.default_rng(2)
        p = mini_params()
        before = p.copy()
        ppo_update(p, [random_trajectory(rng, p)], TrainerConfig(hidden_size=4))
        for k in p.arrays:
            np.testing.assert_array_equal(p[k], before[k])


class TestUpdate:
    def test_improves_surrogate_on_fixed_batch(self):
        rng = np.random.default_rng(3)
        p = mini_params()
        batch = build_batch([random_trajectory(rng, p) for _ in range(4)], 0.9)
        config = TrainerConfig(learning_rate=1e-3, epochs_per_batch=5, value_coeff=0.0, clip_epsilon=10.0)
        new, _ = ppo_update(p, batch, config)
        assert ppo_objective(new, batch, config, False)[0] > ppo_objective(p, batch, config, False)[0]

    def test_target_kl_stops_early(self):
        rng = np.random.default_rng(4)
        p = mini_params()
        batch = build_batch([random_trajectory(rng, p) for _ in range(4)], 0.9)
        config = TrainerConfig(learning_rate=0.05, epochs_per_batch=50, target_kl=1e-4)
        _, stats = ppo_update(p, batch, config)
        assert stats["approx_kl"] > 1.5e-4

    def test_non_finite_gradient_raises(self):
        rng = np.random.default_rng(5)
        p = mini_params()
        traj = random_trajectory(rng, p)
        traj.rewards[3] = np.nan
        with pytest.raises(TrainingDivergence):
            ppo_update(p, [traj], TrainerConfig(objective="reinforce"))

    def test_many_updates_stay_finite(self):
        rng = np.random.default_rng(6)
        p = mini_params()
        config = TrainerConfig(learning_rate=1e-3, epochs_per_batch=1, max_grad_norm=0.5)
        for _ in range(300):
            p, _ = ppo_update(p, [random_trajectory(rng, p, 8)], config, rng=rng)
        assert p.is_finite()

    def test_sgd_step_is_plain_gradient(self):
        rng = np.random.default_rng(7)
        p = mini_params()
        batch = build_batch([random_trajectory(rng, p)], 0.9)
        config = TrainerConfig(optimizer="sgd", learning_rate=1e-3, epochs_per_batch=1)
        _, grads, _ = ppo_objective(p, batch, config)
        new, _ = ppo_update(p, batch, config)
        for k in p.arrays:
            np.testing.assert_allclose(new[k], p[k] + 1e-3 * grads[k])

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(gamma=1.0),
            dict(learning_rate=0.0),
            dict(objective="a2c"),
            dict(optimizer="rmsprop"),
            dict(init_log_std=(0.0, 0.0)),
            dict(target_kl=-1.0),
        ],
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainerConfig(**kwargs)


class TestBuildBatch:
    def test_advantages_standardized(self):
        rng = np.random.default_rng(0)
        p = mini_params()
        batch = build_batch([random_trajectory(rng, p) for _ in range(3)], 0.95)
        assert batch.advantages.mean() == pytest.approx(0.0, abs=1e-12)
        assert batch.advantages.std() == pytest.approx(1.0)
        assert batch.n_episodes == 3 and len(batch) == 72

    def test_episode_returns_per_step(self):
        rng = np.random.default_rng(1)
        p = mini_params()
        trajs = [random_trajectory(rng, p, 5) for _ in range(2)]
        batch = build_batch(trajs, 0.5, normalize=False)
        assert np.all(batch.episode_returns[:5] == discounted_return(trajs[0].rewards, 0.5))
        assert list(batch.episode_index) == [0] * 5 + [1] * 5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_batch([], 0.9)


class TestEvaluatePolicy:
    def test_full_days_without_early_stop(self, env):
        p = init_params(TrainerConfig(seed=1))
        result = evaluate_policy(p, env, episodes=2)
        assert [len(ep) for ep in result.episodes] == [24, 24]
        assert len(result.summary.hours) == 48
        assert env.config.early_stop  # restored afterwards

    def test_deterministic_evaluation_repeats(self, env):
        p = init_params(TrainerConfig(seed=2))
        a = evaluate_policy(p, env, episodes=1)
        b = evaluate_policy(p, env, episodes=1)
        assert a.rewards == b.rewards

    def test_untrained_policy_is_badly_balanced(self, env):
        """An untrained policy is nowhere near the 2% band."""
        result = evaluate_policy(init_params(TrainerConfig(seed=0)), env, episodes=1)
        assert result.summary.mean_imbalance_gap > 10.0

    def test_episodes_validated(self, env):
        with pytest.raises(ValueError):
            evaluate_policy(init_params(TrainerConfig()), env, episodes=0)


class TestCurriculum:
    def test_default_schedule_matches_stage_table(self):
        assert [(s.imbalance_gap_target_pct, s.best_bound_gap_target_pct, s.timesteps) for s in DEFAULT_SCHEDULE] == [
            (40, 40, 40_000), (20, 30, 50_000), (10, 20, 60_000), (5, 10, 80_000), (2, 10, 100_000),
        ]
        assert sum(s.timesteps for s in DEFAULT_SCHEDULE) == 330_000

    def test_scale(self):
        scaled = scale_schedule(DEFAULT_SCHEDULE, 0.2)
        assert sum(s.timesteps for s in scaled) == 66_000
        assert scaled[0].imbalance_gap_target_pct == 40.0
        assert scale_schedule(DEFAULT_SCHEDULE, 1e-9)[0].timesteps == 1
        with pytest.raises(ValueError):
            scale_schedule(DEFAULT_SCHEDULE, 0.0)

    def test_schedule_must_tighten(self):
        with pytest.raises(ValueError):
            validate_schedule((CurriculumStage(5, 10, 100), CurriculumStage(10, 10, 100)))
        with pytest.raises(ValueError):
            validate_schedule((CurriculumStage(5, 10, 200), CurriculumStage(5, 10, 100)))
        with pytest.raises(ValueError):
            validate_schedule(())

    def test_stage_budgets_and_targets(self, env):
        stages = (CurriculumStage(40, 40, 200), CurriculumStage(20, 30, 300))
        config = TrainerConfig(batch_trajectories=4, hidden_size=8, seed=3)
        _, log = train_curriculum(env, stages, config)
        assert log.total_timesteps >= 500
        # overshoot stays under one batch of full days
        assert log.total_timesteps < 500 + 4 * 24
        assert [t.imbalance_gap_target_pct for t in log.stage_targets] == [40, 20]
        assert {r["stage"] for r in log.rows} == {0, 1}
        assert env.targets.imbalance_gap_target_pct == 20

    def test_workers_do_not_change_result(self, default_profile):
        stages = (CurriculumStage(40, 40, 300),)
        config = TrainerConfig(batch_trajectories=4, hidden_size=8, seed=5)
        runs = []
        for workers in (1, 3):
            env = DayAheadEnv(default_profile)
            params, log = train_curriculum(env, stages, config, workers=workers)
            runs.append((params, log.to_csv()))
        assert runs[0][1] == runs[1][1]
        for k in runs[0][0].arrays:
            np.testing.assert_array_equal(runs[0][0][k], runs[1][0][k])

    def test_log_csv_header(self, env):
        _, log = train_curriculum(env, (CurriculumStage(40, 40, 48),), TrainerConfig(batch_trajectories=2, hidden_size=4))
        assert log.to_csv().splitlines()[0] == "stage,batch,timesteps,objective,clip_fraction,value_loss,success_rate"

    def test_continues_from_given_params(self, default_profile):
        env = DayAheadEnv(default_profile, config=EnvConfig(perturbation_amplitude=0.0))
        config = TrainerConfig(batch_trajectories=2, hidden_size=4)
        start = init_params(config)
        out, _ = train_curriculum(env, (CurriculumStage(40, 40, 48),), config, params=start)
        assert out.hidden == 4
        assert any(not np.array_equal(out[k], start[k]) for k in out.arrays)


def test_trainer_config_is_a_frozen_dataclass():
    with pytest.raises(dataclasses.FrozenInstanceError):
        TrainerConfig().gamma = 0.5
