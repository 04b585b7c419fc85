"""Backward information filter over the continuous latents, plus a dense oracle.

Given a fixed (state, duration) path and Polya-gamma auxiliaries, the
continuous latents form a time-varying linear-Gaussian chain with extra
quadratic potentials on x_{t-1} wherever a change point fires.  Messages run
backward in information form; pseudo-observations are then drawn forward.

Conventions: arrays are 0-based in time.  omega_s[t] / omega_d[t] hold the
auxiliaries for the transition INTO step t (t >= 1); omega_d[0] belongs to
the initial duration, carries no potential on x, and is ignored here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import chol_jitter
from .model import ModelConfig, ModelParams
from .stickbreak import kappa_vec

__all__ = [
    "BackwardMessages",
    "backward_info_filter",
    "sample_pseudo_obs",
    "posterior_marginals",
    "dense_information",
    "dense_gaussian_oracle",
]


@dataclass
class BackwardMessages:
    """Information-form backward messages theta_b[t], lambda_b[t] per step.

    lambda_pred0/theta_pred0 mirror the final prediction past the first step;
    nothing consumes them (the first latent is drawn against the explicit
    initial density instead).
    """

    theta_b: np.ndarray
    lambda_b: np.ndarray
    theta_pred0: np.ndarray = field(default=None)
    lambda_pred0: np.ndarray = field(default=None)


class _ModeCache:
    """Per-mode solves shared by the filter, the sampler and the oracle."""

    def __init__(self, params: ModelParams, config: ModelConfig):
        m_dim = config.latent_dim
        eye = np.eye(m_dim)
        self.q_inv, self.ct_si, self.ct_si_c = [], [], []
        for mode in params.modes:
            low_q = chol_jitter(mode.q_cov)
            qi = np.linalg.solve(low_q.T, np.linalg.solve(low_q, eye))
            self.q_inv.append(0.5 * (qi + qi.T))
            low_s = chol_jitter(mode.s_cov)
            si_c = np.linalg.solve(low_s.T, np.linalg.solve(low_s, mode.c_mat))
            self.ct_si.append(si_c.T)
            ct_si_c = mode.c_mat.T @ si_c
            self.ct_si_c.append(0.5 * (ct_si_c + ct_si_c.T))
        self.sigma0_inv = []
        for k in range(config.num_modes):
            low0 = chol_jitter(params.init.sigma_init[k])
            s0i = np.linalg.solve(low0.T, np.linalg.solve(low0, eye))
            self.sigma0_inv.append(0.5 * (s0i + s0i.T))


def _recurrent_terms(
    params: ModelParams,
    config: ModelConfig,
    states: np.ndarray,
    durations: np.ndarray,
    omega_s: np.ndarray,
    omega_d: np.ndarray,
    t_into: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Precision/information contributions on x_{t-1} from the change-point
    potentials of the transition into step t_into; zero unless d[t-1] = 1."""
    m_dim = config.latent_dim
    lam = np.zeros((m_dim, m_dim))
    theta = np.zeros(m_dim)
    if durations[t_into - 1] != 1:
        return lam, theta
    if config.recurrent_state and config.num_modes > 1:
        reg = params.state_reg[states[t_into - 1]]
        omega = omega_s[t_into]
        kappa = kappa_vec(states[t_into] + 1, config.num_modes)
        lam += (reg.weights * omega[:, None]).T @ reg.weights
        theta += reg.weights.T @ (kappa - omega * reg.bias)
    if config.recurrent_duration and config.dmax_eff > 1:
        reg = params.dur_reg[states[t_into]]
        omega = omega_d[t_into]
        kappa = kappa_vec(int(durations[t_into]), config.dmax_eff)
        lam += (reg.weights * omega[:, None]).T @ reg.weights
        theta += reg.weights.T @ (kappa - omega * reg.bias)
    return lam, theta


def _recurrent_arrays(
    params: ModelParams,
    config: ModelConfig,
    states: np.ndarray,
    durations: np.ndarray,
    omega_s: np.ndarray,
    omega_d: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Change-point contributions for every step at once.

    Index t of the returned arrays is the potential on x_t coming from the
    transition into t+1; rows without a change point stay zero.
    """
    n_steps, m_dim = len(states), config.latent_dim
    rec_lam = np.zeros((n_steps, m_dim, m_dim))
    rec_theta = np.zeros((n_steps, m_dim))
    hot = np.flatnonzero(durations[:-1] == 1)
    if not hot.size:
        return rec_lam, rec_theta

    if config.recurrent_state and config.num_modes > 1:
        owners = states[hot]
        outcomes = states[hot + 1] + 1  # 1-based
        omg = omega_s[hot + 1]
        rows = np.arange(1, config.num_modes)
        kap = (outcomes[:, None] == rows) - 0.5 * (outcomes[:, None] >= rows)
        for k in np.unique(owners):
            sel = owners == k
            reg = params.state_reg[k]
            rec_lam[hot[sel]] += np.einsum(
                "tj,jm,jn->tmn", omg[sel], reg.weights, reg.weights
            )
            rec_theta[hot[sel]] += (kap[sel] - omg[sel] * reg.bias) @ reg.weights

    if config.recurrent_duration and config.dmax_eff > 1:
        owners = states[hot + 1]
        outcomes = durations[hot + 1]
        omg = omega_d[hot + 1]
        rows = np.arange(1, config.dmax_eff)
        kap = (outcomes[:, None] == rows) - 0.5 * (outcomes[:, None] >= rows)
        for k in np.unique(owners):
            sel = owners == k
            reg = params.dur_reg[k]
            rec_lam[hot[sel]] += np.einsum(
                "tj,jm,jn->tmn", omg[sel], reg.weights, reg.weights
            )
            rec_theta[hot[sel]] += (kap[sel] - omg[sel] * reg.bias) @ reg.weights

    return rec_lam, rec_theta


def backward_info_filter(
    params: ModelParams,
    config: ModelConfig,
    obs: np.ndarray,
    states: np.ndarray,
    durations: np.ndarray,
    omega_s: np.ndarray | None,
    omega_d: np.ndarray | None,
    cache: _ModeCache | None = None,
) -> BackwardMessages:
    """Backward recursion producing the messages the forward sampler consumes.

    The predict step uses the Joseph-style split J = L^b (L^b + Q^{-1})^{-1},
    which keeps the predicted precision symmetric PSD; change-point potentials
    enter the prediction additively, gated by the countdown indicator.
    """
    n_steps, m_dim = obs.shape[0], config.latent_dim
    if cache is None:
        cache = _ModeCache(params, config)
    eye = np.eye(m_dim)

    # emission information terms and change-point potentials, batched
    emit_lam = np.stack(cache.ct_si_c)[states]
    emit_theta = np.zeros((n_steps, m_dim))
    for k in range(config.num_modes):
        sel = states == k
        emit_theta[sel] = (obs[sel] - params.modes[k].c_bias) @ cache.ct_si[k].T
    rec_lam, rec_theta = _recurrent_arrays(
        params, config, states, durations, omega_s, omega_d
    )

    theta_b = np.zeros((n_steps, m_dim))
    lambda_b = np.zeros((n_steps, m_dim, m_dim))
    lambda_b[-1] = emit_lam[-1]
    theta_b[-1] = emit_theta[-1]

    a_mats = [mode.a_mat for mode in params.modes]
    a_biases = [mode.a_bias for mode in params.modes]
    for t in range(n_steps - 2, -1, -1):
        k_next = states[t + 1]
        a_mat = a_mats[k_next]
        q_inv = cache.q_inv[k_next]
        lam_next = lambda_b[t + 1]

        gain = np.linalg.solve(lam_next + q_inv, lam_next).T  # J tilde
        leave = eye - gain
        lam_pred = a_mat.T @ (
            leave @ lam_next @ leave.T + gain @ q_inv @ gain.T
        ) @ a_mat
        theta_pred = a_mat.T @ (
            leave @ (theta_b[t + 1] - lam_next @ a_biases[k_next])
        )
        lambda_b[t] = 0.5 * (lam_pred + lam_pred.T) + rec_lam[t] + emit_lam[t]
        theta_b[t] = theta_pred + rec_theta[t] + emit_theta[t]

    # final prediction past the first step; mirrored but never consumed
    k0 = states[0]
    q_inv = cache.q_inv[k0]
    gain = np.linalg.solve(lambda_b[0] + q_inv, lambda_b[0]).T
    leave = eye - gain
    lam0 = a_mats[k0].T @ (
        leave @ lambda_b[0] @ leave.T + gain @ q_inv @ gain.T
    ) @ a_mats[k0]
    theta0 = a_mats[k0].T @ leave @ (theta_b[0] - lambda_b[0] @ a_biases[k0])

    return BackwardMessages(
        theta_b=theta_b,
        lambda_b=lambda_b,
        theta_pred0=theta0,
        lambda_pred0=0.5 * (lam0 + lam0.T),
    )


def sample_pseudo_obs(
    messages: BackwardMessages,
    params: ModelParams,
    config: ModelConfig,
    states: np.ndarray,
    rng: np.random.Generator,
    cache: _ModeCache | None = None,
) -> np.ndarray:
    """Forward joint draw of x_{1:T} from the backward messages.

    The per-step conditional is linear-Gaussian in the previous latent, so
    everything except the one-step recursion itself is batched: x_t =
    F_t x_{t-1} + g_t + L_t^{-T} z_t with stacked factorizations.
    """
    n_steps, m_dim = messages.theta_b.shape
    if cache is None:
        cache = _ModeCache(params, config)
    k0 = states[0]

    lam = np.stack(cache.q_inv)[states] + messages.lambda_b
    lam[0] = cache.sigma0_inv[k0] + messages.lambda_b[0]
    qi_a = np.stack(
        [cache.q_inv[k] @ params.modes[k].a_mat for k in range(config.num_modes)]
    )[states]
    rhs = np.stack(
        [cache.q_inv[k] @ params.modes[k].a_bias for k in range(config.num_modes)]
    )[states] + messages.theta_b
    rhs[0] = cache.sigma0_inv[k0] @ params.init.mu_init[k0] + messages.theta_b[0]

    noise_raw = rng.standard_normal((n_steps, m_dim))
    try:
        low = np.linalg.cholesky(lam)
    except np.linalg.LinAlgError:
        low = np.stack([chol_jitter(lam[t]) for t in range(n_steps)])
    noise = np.linalg.solve(np.transpose(low, (0, 2, 1)), noise_raw[..., None])[..., 0]
    step_gain = np.linalg.solve(lam, qi_a)
    shift = np.linalg.solve(lam, rhs[..., None])[..., 0]

    lat = np.zeros((n_steps, m_dim))
    lat[0] = shift[0] + noise[0]
    for t in range(1, n_steps):
        lat[t] = step_gain[t] @ lat[t - 1] + shift[t] + noise[t]
    return lat


def posterior_marginals(
    messages: BackwardMessages,
    params: ModelParams,
    config: ModelConfig,
    states: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step posterior means/covariances implied by the sampling pass.

    Chains the forward conditionals: each step is linear-Gaussian in the
    previous latent, so marginals propagate in closed form.
    """
    n_steps, m_dim = messages.theta_b.shape
    cache = _ModeCache(params, config)
    means = np.zeros((n_steps, m_dim))
    covs = np.zeros((n_steps, m_dim, m_dim))

    k0 = states[0]
    lam = cache.sigma0_inv[k0] + messages.lambda_b[0]
    theta = cache.sigma0_inv[k0] @ params.init.mu_init[k0] + messages.theta_b[0]
    low = chol_jitter(lam)
    eye = np.eye(m_dim)
    cov = np.linalg.solve(low.T, np.linalg.solve(low, eye))
    covs[0] = 0.5 * (cov + cov.T)
    means[0] = covs[0] @ theta

    for t in range(1, n_steps):
        k = states[t]
        mode = params.modes[k]
        q_inv = cache.q_inv[k]
        low = chol_jitter(q_inv + messages.lambda_b[t])
        step_cov = np.linalg.solve(low.T, np.linalg.solve(low, eye))
        step_cov = 0.5 * (step_cov + step_cov.T)
        fwd = step_cov @ q_inv @ mode.a_mat
        shift = step_cov @ (q_inv @ mode.a_bias + messages.theta_b[t])
        means[t] = fwd @ means[t - 1] + shift
        covs[t] = fwd @ covs[t - 1] @ fwd.T + step_cov
    return means, covs


def dense_information(
    params: ModelParams,
    config: ModelConfig,
    obs: np.ndarray,
    states: np.ndarray,
    durations: np.ndarray,
    omega_s: np.ndarray | None,
    omega_d: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Joint precision and information vector of the stacked latents."""
    n_steps, m_dim = obs.shape[0], config.latent_dim
    dim = n_steps * m_dim
    if dim > 64:
        raise ValueError("dense oracle is restricted to T * M <= 64")
    cache = _ModeCache(params, config)

    prec = np.zeros((dim, dim))
    info = np.zeros(dim)

    def block(t):
        return slice(t * m_dim, (t + 1) * m_dim)

    k0 = states[0]
    prec[block(0), block(0)] += cache.sigma0_inv[k0]
    info[block(0)] += cache.sigma0_inv[k0] @ params.init.mu_init[k0]

    for t in range(n_steps):
        k = states[t]
        prec[block(t), block(t)] += cache.ct_si_c[k]
        info[block(t)] += cache.ct_si[k] @ (obs[t] - params.modes[k].c_bias)

    for t in range(1, n_steps):
        k = states[t]
        mode = params.modes[k]
        q_inv = cache.q_inv[k]
        a_q = mode.a_mat.T @ q_inv
        prec[block(t - 1), block(t - 1)] += a_q @ mode.a_mat
        prec[block(t), block(t)] += q_inv
        prec[block(t - 1), block(t)] -= a_q
        prec[block(t), block(t - 1)] -= a_q.T
        info[block(t - 1)] -= a_q @ mode.a_bias
        info[block(t)] += q_inv @ mode.a_bias

        rec_lam, rec_theta = _recurrent_terms(
            params, config, states, durations, omega_s, omega_d, t
        )
        prec[block(t - 1), block(t - 1)] += rec_lam
        info[block(t - 1)] += rec_theta

    return prec, info


def dense_gaussian_oracle(
    params: ModelParams,
    config: ModelConfig,
    obs: np.ndarray,
    states: np.ndarray,
    durations: np.ndarray,
    omega_s: np.ndarray | None,
    omega_d: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked mean/covariance of x_{1:T} by assembling every potential.

    Ground truth for the message-based paths; restricted to small problems.
    """
    prec, info = dense_information(
        params, config, obs, states, durations, omega_s, omega_d
    )
    low = chol_jitter(prec)
    cov = np.linalg.solve(low.T, np.linalg.solve(low, np.eye(prec.shape[0])))
    cov = 0.5 * (cov + cov.T)
    return cov @ info, cov
