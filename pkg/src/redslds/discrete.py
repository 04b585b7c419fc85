"""Exact filtering and joint sampling of the discrete (state, duration) chain.

Conditioned on the continuous latents, the pair z_t = (s_t, d_t) is a Markov
chain whose kernel is mostly deterministic: a running duration has a single
successor, so the forward recursion only mixes over change points.  That
sparsity brings the cost per step down from (K D)^2 to K^2 + K D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import (
    NumericalAbort,
    chol_jitter,
    logsumexp_fast,
    sample_categorical,
)
from .model import ModelConfig, ModelParams
from .stickbreak import log_pmf_sb_all

__all__ = [
    "ForwardLattice",
    "local_evidence",
    "forward_filter",
    "backward_sample",
    "trajectory_joint_log_density",
]

_NEG_INF = float("-inf")


@dataclass
class ForwardLattice:
    """Normalized forward messages plus the kernel slices both passes share.

    log_alpha[t, k, j] is the filtered log-probability of state k with
    duration j+1 after rescaling; log_normalizers[t] restores the scale and
    sums to the log-evidence of (y, x).  Kernel rows at t = 0 are unused.
    """

    log_alpha: np.ndarray
    log_normalizers: np.ndarray
    log_state_kernel: np.ndarray
    log_dur_kernel: np.ndarray


def _mode_gaussian_terms(params: ModelParams, config: ModelConfig,
                         obs: np.ndarray, lat: np.ndarray) -> np.ndarray:
    """(T, K) log N(x_t | x_{t-1}, k) + log N(y_t | x_t, k); init density at t=0."""
    n_steps = obs.shape[0]
    out = np.zeros((n_steps, config.num_modes))
    half_log_2pi = 0.5 * np.log(2.0 * np.pi)
    # overflowing quadratics become -inf evidence, caught by the filter
    with np.errstate(over="ignore"):
        for k, mode in enumerate(params.modes):
            low_q = chol_jitter(mode.q_cov)
            low_s = chol_jitter(mode.s_cov)
            low_0 = chol_jitter(params.init.sigma_init[k])

            resid = lat[1:] - lat[:-1] @ mode.a_mat.T - mode.a_bias
            white = np.linalg.solve(low_q, resid.T)
            dyn = -0.5 * np.sum(white * white, axis=0) \
                - np.log(np.diag(low_q)).sum() - config.latent_dim * half_log_2pi

            resid0 = lat[0] - params.init.mu_init[k]
            white0 = np.linalg.solve(low_0, resid0)
            init = -0.5 * white0 @ white0 - np.log(np.diag(low_0)).sum() \
                - config.latent_dim * half_log_2pi

            resid_y = obs - lat @ mode.c_mat.T - mode.c_bias
            white_y = np.linalg.solve(low_s, resid_y.T)
            emit = -0.5 * np.sum(white_y * white_y, axis=0) \
                - np.log(np.diag(low_s)).sum() - config.obs_dim * half_log_2pi

            out[0, k] = init + emit[0]
            out[1:, k] = dyn + emit[1:]
    return out


def _kernel_slices(params: ModelParams, config: ModelConfig,
                   lat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Change-point kernels for every step, evaluated at x_{t-1}."""
    n_steps = lat.shape[0]
    k_modes, d_eff = config.num_modes, config.dmax_eff

    state = np.zeros((n_steps, k_modes, k_modes))
    if config.recurrent_state:
        for k_prev, reg in enumerate(params.state_reg):
            state[1:, k_prev, :] = log_pmf_sb_all(reg.logits(lat[:-1]))
    else:
        state[1:] = np.log(params.trans)[None, :, :]

    dur = np.zeros((n_steps, k_modes, d_eff))
    if config.recurrent_duration and d_eff > 1:
        for k_new, reg in enumerate(params.dur_reg):
            dur[1:, k_new, :] = log_pmf_sb_all(reg.logits(lat[:-1]))
    elif config.explicit_duration and not config.recurrent_duration:
        dur[1:] = np.log(params.dur_table)[None, :, :]
    return state, dur


def local_evidence(params: ModelParams, config: ModelConfig, y_t: np.ndarray,
                   x_t: np.ndarray, x_prev: np.ndarray | None, t: int) -> np.ndarray:
    """(K, dmax_eff) log-likelihood slice at one step; duration-independent."""
    from .distributions import mvn_logpdf

    column = np.zeros(config.num_modes)
    for k, mode in enumerate(params.modes):
        if t == 0:
            column[k] = mvn_logpdf(
                x_t, params.init.mu_init[k], chol_jitter(params.init.sigma_init[k])
            )
        else:
            if x_prev is None:
                raise ValueError("x_prev is required for t >= 1")
            column[k] = mvn_logpdf(
                x_t, mode.a_mat @ x_prev + mode.a_bias, chol_jitter(mode.q_cov)
            )
        column[k] += mvn_logpdf(
            y_t, mode.c_mat @ x_t + mode.c_bias, chol_jitter(mode.s_cov)
        )
    return np.broadcast_to(column[:, None], (config.num_modes, config.dmax_eff)).copy()


def forward_filter(params: ModelParams, config: ModelConfig,
                   obs: np.ndarray, lat: np.ndarray) -> ForwardLattice:
    """Filtered lattice over (s_t, d_t) given observations and pseudo-latents."""
    if obs.shape[0] != lat.shape[0]:
        raise ValueError("observations and latents must share their length")
    n_steps = obs.shape[0]
    k_modes, d_eff = config.num_modes, config.dmax_eff

    evidence = _mode_gaussian_terms(params, config, obs, lat)
    state_kernel, dur_kernel = _kernel_slices(params, config, lat)

    log_alpha = np.full((n_steps, k_modes, d_eff), _NEG_INF)
    normalizers = np.zeros(n_steps)

    init_dur = np.stack(
        [params.initial_duration_log_pmf(config, k) for k in range(k_modes)]
    )
    slab = np.log(params.init.pi0)[:, None] + init_dur + evidence[0][:, None]
    normalizers[0] = logsumexp_fast(slab)
    if not np.isfinite(normalizers[0]):
        raise NumericalAbort("forward filter: impossible evidence at t=0")
    log_alpha[0] = slab - normalizers[0]

    for t in range(1, n_steps):
        prev = log_alpha[t - 1]
        cont = np.full((k_modes, d_eff), _NEG_INF)
        if d_eff > 1:
            cont[:, : d_eff - 1] = prev[:, 1:]
        change = logsumexp_fast(
            prev[:, 0][:, None] + state_kernel[t], axis=0
        )  # (K,) over new states
        slab = np.logaddexp(cont, change[:, None] + dur_kernel[t])
        slab += evidence[t][:, None]
        normalizers[t] = logsumexp_fast(slab)
        if not np.isfinite(normalizers[t]):
            raise NumericalAbort(f"forward filter: impossible evidence at t={t}")
        log_alpha[t] = slab - normalizers[t]

    return ForwardLattice(
        log_alpha=log_alpha,
        log_normalizers=normalizers,
        log_state_kernel=state_kernel,
        log_dur_kernel=dur_kernel,
    )


def trajectory_joint_log_density(params: ModelParams, config: ModelConfig,
                                 obs: np.ndarray, traj) -> float:
    """Joint log-density of (y, x, s, d); batched equivalent of the model-level
    evaluator, used for per-iteration diagnostics."""
    from .model import countdown_ok

    s, d, lat = traj.states, traj.durations, traj.latents
    if not countdown_ok(s, d):
        return _NEG_INF
    evidence = _mode_gaussian_terms(params, config, obs, lat)
    state_kernel, dur_kernel = _kernel_slices(params, config, lat)
    n_steps = len(s)

    total = float(evidence[np.arange(n_steps), s].sum())
    total += float(np.log(params.init.pi0[s[0]]))
    init_dur = params.initial_duration_log_pmf(config, s[0])
    if d[0] > init_dur.shape[0]:
        return _NEG_INF
    total += float(init_dur[d[0] - 1])
    change = np.flatnonzero(d[:-1] == 1) + 1
    total += float(state_kernel[change, s[change - 1], s[change]].sum())
    total += float(dur_kernel[change, s[change], d[change] - 1].sum())
    return total


def backward_sample(lattice: ForwardLattice, params: ModelParams,
                    config: ModelConfig, obs: np.ndarray, lat: np.ndarray,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Joint posterior draw of (s_{1:T}, d_{1:T}) from a filtered lattice.

    Works backwards: the final pair comes from the last filtered slab, each
    earlier pair from its filtered probability times the transition into the
    already-sampled successor.  Countdown structure restricts predecessors of
    (k, d) to (k, d+1) plus every change-point pair (k', 1).
    """
    n_steps, k_modes, d_eff = lattice.log_alpha.shape
    states = np.zeros(n_steps, dtype=int)
    durations = np.zeros(n_steps, dtype=int)

    flat = sample_categorical(lattice.log_alpha[-1].ravel(), rng)
    states[-1], durations[-1] = divmod(flat, d_eff)
    durations[-1] += 1

    for t in range(n_steps - 1, 0, -1):
        k_next, d_next = states[t], durations[t]
        prev = lattice.log_alpha[t - 1]
        # candidate 0..K-1: change-point predecessors (k', 1)
        cand = prev[:, 0] + lattice.log_state_kernel[t][:, k_next] \
            + lattice.log_dur_kernel[t][k_next, d_next - 1]
        if d_next < d_eff:
            cand = np.append(cand, prev[k_next, d_next])  # countdown predecessor
        pick = sample_categorical(cand, rng)
        if pick < k_modes:
            states[t - 1], durations[t - 1] = pick, 1
        else:
            states[t - 1], durations[t - 1] = k_next, d_next + 1

    return states, durations
