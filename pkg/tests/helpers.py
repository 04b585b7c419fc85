"""Shared construction of small random-but-valid models for tests."""

import math

import numpy as np
from scipy.stats import multivariate_normal

from redslds.model import InitParams, ModeParams, ModelConfig, ModelParams
from redslds.stickbreak import StickRegression


def random_spd(dim, rng, lo=0.2, hi=0.8):
    basis = np.linalg.qr(rng.standard_normal((dim, dim)))[0]
    eigs = rng.uniform(lo, hi, size=dim)
    return basis @ np.diag(eigs) @ basis.T


def random_mode(m_dim, n_dim, rng, dyn_scale=0.6, noise=0.3):
    rot = np.linalg.qr(rng.standard_normal((m_dim, m_dim)))[0]
    return ModeParams(
        a_mat=dyn_scale * rot,
        a_bias=0.3 * rng.standard_normal(m_dim),
        q_cov=random_spd(m_dim, rng, noise * 0.5, noise),
        c_mat=rng.standard_normal((n_dim, m_dim)),
        c_bias=0.2 * rng.standard_normal(n_dim),
        s_cov=random_spd(n_dim, rng, noise * 0.5, noise),
    )


def make_params(config: ModelConfig, rng, reg_scale=0.8) -> ModelParams:
    k, m, d = config.num_modes, config.latent_dim, config.dmax_eff
    modes = [random_mode(m, config.obs_dim, rng) for _ in range(k)]
    init = InitParams(
        pi0=rng.dirichlet(np.ones(k)),
        mu_init=rng.standard_normal((k, m)),
        sigma_init=np.stack([random_spd(m, rng) for _ in range(k)]),
    )
    params = ModelParams(modes=modes, init=init)
    if config.recurrent_state:
        params.state_reg = [
            StickRegression(
                weights=reg_scale * rng.standard_normal((k - 1, m)),
                bias=reg_scale * rng.standard_normal(k - 1),
            )
            for _ in range(k)
        ]
    else:
        params.trans = rng.dirichlet(np.ones(k), size=k)
    if config.recurrent_duration:
        params.dur_reg = [
            StickRegression(
                weights=reg_scale * rng.standard_normal((d - 1, m)),
                bias=reg_scale * rng.standard_normal(d - 1),
            )
            for _ in range(k)
        ]
    elif config.explicit_duration:
        params.dur_table = rng.dirichlet(np.ones(d), size=k)
    params.validate(config)
    return params


ALL_VARIANTS = ["slds", "rslds", "edslds", "redslds"]


# --------------------------------------------------------------------------
# independent factor-product oracle (explicit loops, scipy densities)
# --------------------------------------------------------------------------

def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def stick_probs(v):
    probs, remaining = [], 1.0
    for vk in np.atleast_1d(v):
        s = sigmoid(vk)
        probs.append(s * remaining)
        remaining *= 1.0 - s
    probs.append(remaining)
    return np.array(probs)


def oracle_state_probs(params, config, k_prev, x_prev):
    if config.recurrent_state:
        reg = params.state_reg[k_prev]
        return stick_probs(reg.weights @ x_prev + reg.bias)
    return params.trans[k_prev]


def oracle_dur_probs(params, config, k, x_prev):
    if config.dmax_eff == 1:
        return np.ones(1)
    if config.recurrent_duration:
        reg = params.dur_reg[k]
        return stick_probs(reg.weights @ x_prev + reg.bias)
    return params.dur_table[k]


def oracle_joint(params, config, obs, traj):
    """Joint log-density by literal factor products, independent of the package."""
    s, d, x = traj.states, traj.durations, traj.latents
    total = math.log(params.init.pi0[s[0]])
    total += math.log(
        oracle_dur_probs(params, config, s[0], params.init.mu_init[s[0]])[d[0] - 1]
    )
    total += multivariate_normal(
        params.init.mu_init[s[0]], params.init.sigma_init[s[0]]
    ).logpdf(x[0])
    for t in range(1, len(s)):
        if d[t - 1] > 1:
            if s[t] != s[t - 1] or d[t] != d[t - 1] - 1:
                return float("-inf")
        else:
            total += math.log(oracle_state_probs(params, config, s[t - 1], x[t - 1])[s[t]])
            total += math.log(oracle_dur_probs(params, config, s[t], x[t - 1])[d[t] - 1])
        mode = params.modes[s[t]]
        total += multivariate_normal(
            mode.a_mat @ x[t - 1] + mode.a_bias, mode.q_cov
        ).logpdf(x[t])
    for t in range(len(s)):
        mode = params.modes[s[t]]
        total += multivariate_normal(mode.c_mat @ x[t] + mode.c_bias, mode.s_cov).logpdf(
            obs[t]
        )
    return total


def random_countdown_path(num_modes, dmax, n_steps, rng):
    """Random (states, durations) pair satisfying the countdown law."""
    states = np.zeros(n_steps, dtype=int)
    durations = np.zeros(n_steps, dtype=int)
    t = 0
    while t < n_steps:
        k = int(rng.integers(num_modes))
        run = int(rng.integers(1, dmax + 1))
        for j in range(min(run, n_steps - t)):
            states[t + j] = k
            durations[t + j] = run - j
        t += run
    return states, durations


def random_omegas(config, states, durations, rng):
    """Positive PG-style auxiliaries exactly where the indicators fire."""
    n_steps = len(states)
    omega_s = np.zeros((n_steps, config.num_modes - 1))
    omega_d = np.zeros((n_steps, config.dmax_eff - 1))
    for t in range(1, n_steps):
        if durations[t - 1] != 1:
            continue
        if config.recurrent_state:
            active = min(states[t] + 1, config.num_modes - 1)
            omega_s[t, :active] = rng.uniform(0.05, 1.0, size=active)
        if config.recurrent_duration:
            active = min(int(durations[t]), config.dmax_eff - 1)
            omega_d[t, :active] = rng.uniform(0.05, 1.0, size=active)
    if config.recurrent_duration and config.dmax_eff > 1:
        active = min(int(durations[0]), config.dmax_eff - 1)
        omega_d[0, :active] = rng.uniform(0.05, 1.0, size=active)
    return omega_s, omega_d


def enumerate_admissible_paths(num_modes, dmax, n_steps):
    """All (states, durations) sequences obeying the countdown law."""
    paths = [[(k, d)] for k in range(num_modes) for d in range(1, dmax + 1)]
    for _ in range(n_steps - 1):
        grown = []
        for path in paths:
            k_prev, d_prev = path[-1]
            if d_prev > 1:
                grown.append(path + [(k_prev, d_prev - 1)])
            else:
                grown.extend(
                    path + [(k, d)]
                    for k in range(num_modes)
                    for d in range(1, dmax + 1)
                )
        paths = grown
    out = []
    for path in paths:
        out.append(
            (np.array([p[0] for p in path]), np.array([p[1] for p in path]))
        )
    return out


def small_config(variant, num_modes=2, latent_dim=1, obs_dim=1, max_duration=3,
                 shared_emissions=False):
    return ModelConfig.from_variant(
        variant,
        num_modes=num_modes,
        latent_dim=latent_dim,
        obs_dim=obs_dim,
        max_duration=max_duration,
        shared_emissions=shared_emissions,
    )
