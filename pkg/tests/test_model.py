import json
import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from helpers import ALL_VARIANTS, make_params, oracle_joint, small_config
from redslds.model import (
    LatentTrajectory,
    ModelConfig,
    countdown_ok,
    joint_log_density,
    load_model_json,
    params_from_dict,
    params_to_dict,
    save_model_json,
    simulate,
    transition_kernel,
)


class TestSimulate:
    def test_single_mode_is_plain_lgssm(self):
        rng = np.random.default_rng(101)
        config = small_config("slds", num_modes=1, latent_dim=2, obs_dim=3)
        params = make_params(config, rng)
        obs, traj = simulate(params, config, 50, rng)
        assert np.all(traj.states == 0)
        assert np.all(traj.durations == 1)
        assert obs.shape == (50, 3)

    def test_vanishing_noise_matches_deterministic_recursion(self):
        rng = np.random.default_rng(102)
        config = small_config("slds", num_modes=1, latent_dim=2, obs_dim=2)
        params = make_params(config, rng)
        for mode in params.modes:
            mode.q_cov = 1e-12 * np.eye(2)
            mode.s_cov = 1e-12 * np.eye(2)
        params.init.sigma_init = 1e-12 * np.ones((1, 1, 1)) * np.eye(2)
        obs, traj = simulate(params, config, 20, np.random.default_rng(7))
        mode = params.modes[0]
        x = params.init.mu_init[0].copy()
        for t in range(20):
            if t > 0:
                x = mode.a_mat @ x + mode.a_bias
            assert np.abs(traj.latents[t] - x).max() < 1e-4

    def test_segments_match_drawn_durations(self):
        rng = np.random.default_rng(103)
        config = small_config("redslds", num_modes=2, latent_dim=1, obs_dim=1,
                              max_duration=5)
        params = make_params(config, rng)
        _, traj = simulate(params, config, 400, rng)
        # every segment of constant state has length equal to the duration
        # recorded at its first step (final segment may be cut by T)
        s, d = traj.states, traj.durations
        t = 0
        while t < 400:
            run = 1
            while t + run < 400 and s[t + run] == s[t] and d[t + run] == d[t + run - 1] - 1:
                run += 1
            if t + run < 400:
                assert run == d[t]
            t += run

    def test_countdown_law_always_holds(self):
        rng = np.random.default_rng(104)
        for variant in ALL_VARIANTS:
            config = small_config(variant, max_duration=4)
            params = make_params(config, rng)
            for _ in range(5):
                _, traj = simulate(params, config, 100, rng)
                traj.validate(config)

    def test_seed_determinism(self):
        config = small_config("redslds", latent_dim=2, obs_dim=2, max_duration=4)
        params = make_params(config, np.random.default_rng(105))
        obs_a, tr_a = simulate(params, config, 60, np.random.default_rng(9))
        obs_b, tr_b = simulate(params, config, 60, np.random.default_rng(9))
        assert np.array_equal(obs_a, obs_b)
        assert np.array_equal(tr_a.latents, tr_b.latents)
        assert np.array_equal(tr_a.states, tr_b.states)


class TestJointLogDensity:
    def test_single_step_base_case(self):
        rng = np.random.default_rng(111)
        config = small_config("redslds", latent_dim=2, obs_dim=2, max_duration=3)
        params = make_params(config, rng)
        obs, traj = simulate(params, config, 1, rng)
        assert joint_log_density(params, config, obs, traj) == pytest.approx(
            oracle_joint(params, config, obs, traj), abs=1e-10
        )

    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_matches_factor_oracle(self, variant):
        rng = np.random.default_rng(112)
        config = small_config(variant, num_modes=3, latent_dim=2, obs_dim=2,
                              max_duration=3)
        params = make_params(config, rng)
        for _ in range(25):
            obs, traj = simulate(params, config, 12, rng)
            assert joint_log_density(params, config, obs, traj) == pytest.approx(
                oracle_joint(params, config, obs, traj), abs=1e-8
            )

    def test_quadrature_marginal_matches_oracle(self):
        # Sum over every admissible (s, d) grid and shared Gauss-Hermite nodes
        # over x; any disagreement localizes to the factorization itself.
        rng = np.random.default_rng(113)
        config = small_config("redslds", num_modes=2, latent_dim=1, obs_dim=1,
                              max_duration=2)
        params = make_params(config, rng)
        obs = rng.standard_normal((3, 1))

        nodes, weights = np.polynomial.hermite_e.hermegauss(8)
        scale = 2.0
        log_w = np.log(weights) + 0.5 * nodes**2 + math.log(scale)
        xs = scale * nodes

        paths = []
        for s0 in range(2):
            for d0 in (1, 2):
                paths.append([(s0, d0)])
        for _ in range(2):
            grown = []
            for path in paths:
                s_prev, d_prev = path[-1]
                if d_prev > 1:
                    grown.append(path + [(s_prev, d_prev - 1)])
                else:
                    for s_new in range(2):
                        for d_new in (1, 2):
                            grown.append(path + [(s_new, d_new)])
            paths = grown

        def marginal(joint_fn):
            terms = []
            for path in paths:
                states = np.array([p[0] for p in path])
                durs = np.array([p[1] for p in path])
                for i0 in range(8):
                    for i1 in range(8):
                        for i2 in range(8):
                            lat = np.array([[xs[i0]], [xs[i1]], [xs[i2]]])
                            traj = LatentTrajectory(states, durs, lat)
                            val = joint_fn(params, config, obs, traj)
                            terms.append(val + log_w[i0] + log_w[i1] + log_w[i2])
            terms = np.array(terms)
            finite = terms[np.isfinite(terms)]
            top = finite.max()
            return top + math.log(np.exp(finite - top).sum())

        mine = marginal(joint_log_density)
        ref = marginal(oracle_joint)
        assert abs(mine - ref) < 1e-8 * abs(ref)

    def test_countdown_violation_is_neg_inf(self):
        rng = np.random.default_rng(114)
        config = small_config("edslds", max_duration=4)
        params = make_params(config, rng)
        obs, traj = simulate(params, config, 10, rng)
        bad_states = traj.states.copy()
        bad_durs = traj.durations.copy()
        bad_durs[3] = 3
        bad_states[4] = (bad_states[3] + 1) % 2
        bad = LatentTrajectory(bad_states, bad_durs, traj.latents)
        assert joint_log_density(params, config, obs, bad) == float("-inf")

    def test_self_simulated_data_always_finite(self):
        rng = np.random.default_rng(115)
        for variant in ALL_VARIANTS:
            config = small_config(variant, max_duration=3)
            params = make_params(config, rng)
            vals = []
            for _ in range(50):
                obs, traj = simulate(params, config, 30, rng)
                vals.append(joint_log_density(params, config, obs, traj))
            vals = np.array(vals)
            assert np.all(np.isfinite(vals))
            assert np.isfinite(vals.std() / math.sqrt(vals.size))


class TestTransitionKernel:
    def test_running_duration_is_point_mass(self):
        rng = np.random.default_rng(121)
        config = small_config("redslds", num_modes=3, max_duration=4)
        params = make_params(config, rng)
        table = transition_kernel((1, 3), np.zeros(1), params, config)
        expected = np.zeros((3, 4))
        expected[1, 1] = 1.0  # state 1, duration 2 (0-based column 1)
        assert np.array_equal(table, expected)

    def test_zero_logits_give_uniform_sticks(self):
        rng = np.random.default_rng(122)
        config = small_config("redslds", num_modes=2, max_duration=2)
        params = make_params(config, rng)
        for reg in params.state_reg + params.dur_reg:
            reg.weights[:] = 0.0
            reg.bias[:] = 0.0
        table = transition_kernel((0, 1), np.zeros(1), params, config)
        assert np.allclose(table, 0.25)

    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_normalization(self, variant):
        rng = np.random.default_rng(123)
        config = small_config(variant, num_modes=3, latent_dim=2, obs_dim=2,
                              max_duration=4)
        params = make_params(config, rng)
        for _ in range(100):
            x_prev = rng.standard_normal(2)
            table = transition_kernel((0, 1), x_prev, params, config)
            assert abs(table.sum() - 1.0) < 1e-12

    def test_variant_degeneracy_dmax_one(self):
        # An rSLDS kernel and a duration-augmented kernel with support {1}
        # must agree state by state.
        rng = np.random.default_rng(124)
        config_r = small_config("rslds", num_modes=3, latent_dim=2, obs_dim=2)
        params = make_params(config_r, rng)
        config_d = ModelConfig(
            num_modes=3, latent_dim=2, obs_dim=2, max_duration=1,
            recurrent_state=True, explicit_duration=True, recurrent_duration=True,
            shared_emissions=config_r.shared_emissions,
        )
        from redslds.stickbreak import StickRegression

        params_d = make_params(config_d, rng)
        params_d.modes = params.modes
        params_d.init = params.init
        params_d.state_reg = params.state_reg
        params_d.dur_reg = [
            StickRegression(np.zeros((0, 2)), np.zeros(0)) for _ in range(3)
        ]
        for _ in range(20):
            x_prev = rng.standard_normal(2)
            a = transition_kernel((1, 1), x_prev, params, config_r)
            b = transition_kernel((1, 1), x_prev, params_d, config_d)
            assert np.abs(a - b).max() < 1e-12


class TestSerialization:
    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_bit_exact_round_trip(self, variant, tmp_path):
        rng = np.random.default_rng(131)
        config = small_config(variant, num_modes=3, latent_dim=2, obs_dim=4,
                              max_duration=5)
        params = make_params(config, rng)
        path = tmp_path / "model.json"
        save_model_json(path, params, config)
        loaded, config2 = load_model_json(path)
        assert config2 == config
        for a, b in zip(params.modes, loaded.modes):
            assert np.array_equal(a.a_mat, b.a_mat)
            assert np.array_equal(a.q_cov, b.q_cov)
            assert np.array_equal(a.c_mat, b.c_mat)
            assert np.array_equal(a.s_cov, b.s_cov)
        assert np.array_equal(params.init.pi0, loaded.init.pi0)
        if params.state_reg is not None:
            for a, b in zip(params.state_reg, loaded.state_reg):
                assert np.array_equal(a.weights, b.weights)
                assert np.array_equal(a.bias, b.bias)
        if params.trans is not None:
            assert np.array_equal(params.trans, loaded.trans)
        # second serialization is byte-identical
        doc1 = json.dumps(params_to_dict(params, config))
        doc2 = json.dumps(params_to_dict(*params_from_dict(json.loads(doc1))))
        assert doc1 == doc2


def test_countdown_ok_helper():
    assert countdown_ok(np.array([0, 0, 1]), np.array([2, 1, 1]))
    assert not countdown_ok(np.array([0, 1, 1]), np.array([2, 1, 1]))
    assert not countdown_ok(np.array([0, 0, 1]), np.array([3, 1, 1]))


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(num_modes=2, latent_dim=1, obs_dim=1, recurrent_duration=True)
    with pytest.raises(ValueError):
        ModelConfig.from_variant("nope", num_modes=2, latent_dim=1, obs_dim=1)
    cfg = ModelConfig.from_variant("redslds", num_modes=2, latent_dim=1, obs_dim=1)
    assert cfg.variant == "redslds"
    assert cfg.explicit_duration and cfg.recurrent_state and cfg.recurrent_duration
