"""Blocked Gibbs sweep and its conditional parameter updates.

One sweep per sequence resamples the discrete pair (s, d) by forward
filtering / backward sampling, refreshes the Polya-gamma auxiliaries, and
redraws the continuous latents through the backward information filter.
Parameter updates then run globally: MNIW conditionals for dynamics and
emissions, Gaussian rows for the stick-breaking regressions, Dirichlet rows
for the table-based variants.

The auxiliaries are refreshed immediately after the discrete draw, before
the continuous latents condition on them; the discrete step marginalizes
the auxiliaries, and that refresh is exactly what keeps the collapsed move
a valid block update of (z, omega).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arhmm import fit_arhmm
from .discrete import backward_sample, forward_filter, trajectory_joint_log_density
from .distributions import (
    InfoGaussian,
    MNIWParams,
    NumericalAbort,
    chol_jitter,
    jitter_event_count,
    mniw_posterior,
    reset_jitter_count,
    sample_dirichlet,
    sample_info_gaussian,
    sample_inv_wishart,
    sample_mniw,
    sample_pg1_batch,
)
from .infofilter import _ModeCache, backward_info_filter, sample_pseudo_obs
from .model import (
    InitParams,
    LatentTrajectory,
    ModeParams,
    ModelConfig,
    ModelParams,
    params_from_dict,
    params_to_dict,
)
from .stickbreak import StickRegression, stick_row_posteriors

__all__ = [
    "Priors",
    "ChainState",
    "Diagnostics",
    "default_priors",
    "sample_params_from_prior",
    "resample_pg",
    "sweep",
    "update_dynamics",
    "update_emissions",
    "update_state_regression",
    "update_duration_model",
    "update_transition_matrix",
    "initialize",
    "fit",
    "save_checkpoint",
    "load_checkpoint",
]

_CHECKPOINT_VERSION = 1


@dataclass
class Priors:
    """Hyperparameters for every conditional the sweep draws from."""

    dynamics: MNIWParams
    emissions: MNIWParams
    state_row_cov: np.ndarray
    dur_row_cov: np.ndarray
    trans_alpha: float = 1.0
    dur_alpha: float = 1.0
    init_mu_cov: np.ndarray | None = None
    init_sigma_scale: np.ndarray | None = None
    init_sigma_dof: float | None = None


def default_priors(
    config: ModelConfig,
    *,
    dyn_v0_scale: float = 1.0,
    emis_v0_scale: float = 1.0,
    dyn_s0: np.ndarray | None = None,
    emis_s0: np.ndarray | None = None,
    dyn_n0: float | None = None,
    emis_n0: float | None = None,
    state_row_cov_scale: float = 1.0,
    dur_row_cov_scale: float = 1.0,
    trans_alpha: float = 1.0,
    dur_alpha: float = 1.0,
) -> Priors:
    """Fixed-scale priors; the CLI substitutes data-driven scale matrices."""
    m_dim, n_dim = config.latent_dim, config.obs_dim
    return Priors(
        dynamics=MNIWParams(
            m0=np.zeros((m_dim, m_dim + 1)),
            v0=dyn_v0_scale * np.eye(m_dim + 1),
            s0=np.eye(m_dim) if dyn_s0 is None else dyn_s0,
            n0=float(m_dim + 2) if dyn_n0 is None else dyn_n0,
        ),
        emissions=MNIWParams(
            m0=np.zeros((n_dim, m_dim + 1)),
            v0=emis_v0_scale * np.eye(m_dim + 1),
            s0=np.eye(n_dim) if emis_s0 is None else emis_s0,
            n0=float(n_dim + 2) if emis_n0 is None else emis_n0,
        ),
        state_row_cov=state_row_cov_scale * np.eye(m_dim + 1),
        dur_row_cov=dur_row_cov_scale * np.eye(m_dim + 1),
        trans_alpha=trans_alpha,
        dur_alpha=dur_alpha,
        init_mu_cov=np.eye(m_dim),
        init_sigma_scale=np.eye(m_dim),
        init_sigma_dof=float(m_dim + 2),
    )


@dataclass
class ChainState:
    """Everything one Gibbs chain carries between sweeps."""

    params: ModelParams
    trajectories: list[LatentTrajectory]
    omega_s: list[np.ndarray]
    omega_d: list[np.ndarray]
    iteration: int
    rng: np.random.Generator
    last_evidence: float = float("nan")


@dataclass
class Diagnostics:
    """Per-iteration scalars recorded during a fit."""

    joint_log_density: list[float] = field(default_factory=list)
    evidence_proxy: list[float] = field(default_factory=list)
    occupancy: list[np.ndarray] = field(default_factory=list)
    jitter_retries: list[int] = field(default_factory=list)


# ---------------------------------------------------------------------------
# prior draws
# ---------------------------------------------------------------------------

def _split_dyn(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return block[:, :-1], block[:, -1]


def sample_params_from_prior(
    config: ModelConfig, priors: Priors, rng: np.random.Generator
) -> ModelParams:
    """Full parameter draw from the prior; shared emissions draw once."""
    k_modes, m_dim, d_eff = config.num_modes, config.latent_dim, config.dmax_eff
    modes = []
    shared_emission = None
    if config.shared_emissions:
        shared_emission = sample_mniw(priors.emissions, rng)
    for _ in range(k_modes):
        dyn_block, q_cov = sample_mniw(priors.dynamics, rng)
        emis_block, s_cov = (
            shared_emission
            if shared_emission is not None
            else sample_mniw(priors.emissions, rng)
        )
        a_mat, a_bias = _split_dyn(dyn_block)
        c_mat, c_bias = _split_dyn(emis_block)
        modes.append(
            ModeParams(
                a_mat=a_mat, a_bias=a_bias, q_cov=q_cov,
                c_mat=c_mat.copy(), c_bias=c_bias.copy(), s_cov=s_cov.copy(),
            )
        )

    mu_low = chol_jitter(priors.init_mu_cov)
    init = InitParams(
        pi0=sample_dirichlet(np.full(k_modes, priors.trans_alpha), rng),
        mu_init=np.stack([mu_low @ rng.standard_normal(m_dim) for _ in range(k_modes)]),
        sigma_init=np.stack(
            [
                sample_inv_wishart(priors.init_sigma_scale, priors.init_sigma_dof, rng)
                for _ in range(k_modes)
            ]
        ),
    )
    params = ModelParams(modes=modes, init=init)

    row_dim = m_dim + 1
    if config.recurrent_state:
        low = chol_jitter(priors.state_row_cov)
        params.state_reg = []
        for _ in range(k_modes):
            rows = np.stack(
                [low @ rng.standard_normal(row_dim) for _ in range(k_modes - 1)]
            ) if k_modes > 1 else np.zeros((0, row_dim))
            params.state_reg.append(
                StickRegression(weights=rows[:, :m_dim], bias=rows[:, m_dim])
            )
    else:
        params.trans = np.stack(
            [
                sample_dirichlet(np.full(k_modes, priors.trans_alpha), rng)
                for _ in range(k_modes)
            ]
        )
    if config.recurrent_duration:
        low = chol_jitter(priors.dur_row_cov)
        params.dur_reg = []
        for _ in range(k_modes):
            rows = np.stack(
                [low @ rng.standard_normal(row_dim) for _ in range(d_eff - 1)]
            ) if d_eff > 1 else np.zeros((0, row_dim))
            params.dur_reg.append(
                StickRegression(weights=rows[:, :m_dim], bias=rows[:, m_dim])
            )
    elif config.explicit_duration:
        params.dur_table = np.stack(
            [
                sample_dirichlet(np.full(d_eff, priors.dur_alpha), rng)
                for _ in range(k_modes)
            ]
        )
    params.validate(config)
    return params


# ---------------------------------------------------------------------------
# Polya-gamma refresh
# ---------------------------------------------------------------------------

def resample_pg(
    params: ModelParams,
    config: ModelConfig,
    states: np.ndarray,
    durations: np.ndarray,
    latents: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Fresh auxiliaries given (s, d, x); exact zeros where indicators are off.

    Row t of either array belongs to the transition into step t; row 0 of the
    duration array belongs to the initial duration, whose regressor is the
    initial latent mean of the starting mode.
    """
    n_steps = len(states)
    k_modes, d_eff = config.num_modes, config.dmax_eff
    omega_s = np.zeros((n_steps, max(k_modes - 1, 0)))
    omega_d = np.zeros((n_steps, max(d_eff - 1, 0)))
    change = np.flatnonzero(durations[:-1] == 1) + 1

    if config.recurrent_state and k_modes > 1 and change.size:
        owners = states[change - 1]
        for k in range(k_modes):
            here = change[owners == k]
            if not here.size:
                continue
            logits = params.state_reg[k].logits(latents[here - 1])
            n_active = np.minimum(states[here] + 1, k_modes - 1)
            cols = np.arange(k_modes - 1)
            mask = cols[None, :] < n_active[:, None]
            rows_idx, cols_idx = np.nonzero(mask)
            draws = sample_pg1_batch(logits[mask], rng)
            omega_s[here[rows_idx], cols_idx] = draws

    if config.recurrent_duration and d_eff > 1:
        for k in range(k_modes):
            here = change[states[change] == k] if change.size else np.zeros(0, int)
            regressors, outcomes, targets = [], [], []
            if here.size:
                regressors.append(latents[here - 1])
                outcomes.append(durations[here])
                targets.append(here)
            if states[0] == k:
                regressors.append(params.init.mu_init[k][None, :])
                outcomes.append(np.array([durations[0]]))
                targets.append(np.zeros(1, int))
            if not regressors:
                continue
            regs = np.vstack(regressors)
            outs = np.concatenate(outcomes)
            target_rows = np.concatenate(targets)
            logits = params.dur_reg[k].logits(regs)
            n_active = np.minimum(outs, d_eff - 1)
            cols = np.arange(d_eff - 1)
            mask = cols[None, :] < n_active[:, None]
            rows_idx, cols_idx = np.nonzero(mask)
            draws = sample_pg1_batch(logits[mask], rng)
            omega_d[target_rows[rows_idx], cols_idx] = draws

    return omega_s, omega_d


# ---------------------------------------------------------------------------
# parameter conditionals
# ---------------------------------------------------------------------------

def _stack_transitions(trajectories: list[LatentTrajectory]):
    x_prev = np.vstack([tr.latents[:-1] for tr in trajectories])
    x_cur = np.vstack([tr.latents[1:] for tr in trajectories])
    s_prev = np.concatenate([tr.states[:-1] for tr in trajectories])
    s_cur = np.concatenate([tr.states[1:] for tr in trajectories])
    d_prev = np.concatenate([tr.durations[:-1] for tr in trajectories])
    d_cur = np.concatenate([tr.durations[1:] for tr in trajectories])
    return x_prev, x_cur, s_prev, s_cur, d_prev, d_cur


def update_dynamics(
    trajectories: list[LatentTrajectory],
    config: ModelConfig,
    priors: Priors,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-mode MNIW draws for (A, a, Q) from assigned latent transitions."""
    x_prev, x_cur, _, s_cur, _, _ = _stack_transitions(trajectories)
    design = np.column_stack([x_prev, np.ones(x_prev.shape[0])])
    out = []
    for k in range(config.num_modes):
        sel = s_cur == k
        post = mniw_posterior(priors.dynamics, design[sel], x_cur[sel])
        block, q_cov = sample_mniw(post, rng)
        a_mat, a_bias = _split_dyn(block)
        out.append((a_mat, a_bias, q_cov))
    return out


def update_emissions(
    trajectories: list[LatentTrajectory],
    data: list[np.ndarray],
    config: ModelConfig,
    priors: Priors,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-mode (or pooled) MNIW draws for (C, c, S)."""
    lat = np.vstack([tr.latents for tr in trajectories])
    obs = np.vstack(data)
    modes = np.concatenate([tr.states for tr in trajectories])
    design = np.column_stack([lat, np.ones(lat.shape[0])])
    if config.shared_emissions:
        post = mniw_posterior(priors.emissions, design, obs)
        block, s_cov = sample_mniw(post, rng)
        c_mat, c_bias = _split_dyn(block)
        return [(c_mat.copy(), c_bias.copy(), s_cov.copy())] * config.num_modes
    out = []
    for k in range(config.num_modes):
        sel = modes == k
        post = mniw_posterior(priors.emissions, design[sel], obs[sel])
        block, s_cov = sample_mniw(post, rng)
        c_mat, c_bias = _split_dyn(block)
        out.append((c_mat, c_bias, s_cov))
    return out


def _draw_stick_rows(thetas, lams, rng) -> np.ndarray:
    """One Gaussian draw per information-form row posterior."""
    draws = np.zeros_like(thetas)
    for j in range(thetas.shape[0]):
        draws[j] = sample_info_gaussian(InfoGaussian(thetas[j], lams[j]), rng)
    return draws


def update_state_regression(
    trajectories: list[LatentTrajectory],
    omega_s: list[np.ndarray],
    config: ModelConfig,
    priors: Priors,
    rng: np.random.Generator,
) -> list[StickRegression]:
    """Row-wise Gaussian draws of (R^S_k, r^S_k) from change-point data.

    The rows of mode k cover transitions leaving k: regressor is the latent
    before the change, outcome the state after it.
    """
    k_modes, m_dim = config.num_modes, config.latent_dim
    x_prev, _, s_prev, s_cur, d_prev, _ = _stack_transitions(trajectories)
    om = np.vstack([o[1:] for o in omega_s]) if omega_s else np.zeros((0, k_modes - 1))
    change = d_prev == 1
    out = []
    for k in range(k_modes):
        sel = change & (s_prev == k)
        thetas, lams = stick_row_posteriors(
            priors.state_row_cov, x_prev[sel], s_cur[sel] + 1, om[sel]
        )
        draws = _draw_stick_rows(thetas, lams, rng)
        out.append(StickRegression(weights=draws[:, :m_dim], bias=draws[:, m_dim]))
    return out


def update_duration_model(
    trajectories: list[LatentTrajectory],
    omega_d: list[np.ndarray],
    params: ModelParams,
    config: ModelConfig,
    priors: Priors,
    rng: np.random.Generator,
):
    """Duration conditional: regression rows (recurrent) or Dirichlet rows.

    The initial duration of each sequence is part of the likelihood of the
    duration model, with the starting mode's initial latent mean as its
    regressor; dropping it would bias the conditional.
    """
    k_modes, m_dim, d_eff = config.num_modes, config.latent_dim, config.dmax_eff
    x_prev, _, _, s_cur, d_prev, d_cur = _stack_transitions(trajectories)
    change = d_prev == 1

    if not config.recurrent_duration:
        counts = np.zeros((k_modes, d_eff))
        for k in range(k_modes):
            sel = change & (s_cur == k)
            counts[k] = np.bincount(d_cur[sel] - 1, minlength=d_eff)
        for tr in trajectories:
            counts[tr.states[0], tr.durations[0] - 1] += 1
        return np.stack(
            [
                sample_dirichlet(priors.dur_alpha + counts[k], rng)
                for k in range(k_modes)
            ]
        )

    om = np.vstack([o[1:] for o in omega_d]) if omega_d else np.zeros((0, d_eff - 1))
    out = []
    for k in range(k_modes):
        sel = change & (s_cur == k)
        xs = [x_prev[sel]]
        outcomes = [d_cur[sel]]
        oms = [om[sel]]
        for tr, od in zip(trajectories, omega_d):
            if tr.states[0] == k:
                xs.append(params.init.mu_init[k][None, :])
                outcomes.append(np.array([tr.durations[0]]))
                oms.append(od[0][None, :])
        thetas, lams = stick_row_posteriors(
            priors.dur_row_cov, np.vstack(xs), np.concatenate(outcomes), np.vstack(oms)
        )
        draws = _draw_stick_rows(thetas, lams, rng)
        out.append(StickRegression(weights=draws[:, :m_dim], bias=draws[:, m_dim]))
    return out


def update_transition_matrix(
    trajectories: list[LatentTrajectory],
    config: ModelConfig,
    priors: Priors,
    rng: np.random.Generator,
) -> np.ndarray:
    """Dirichlet conjugate rows from change-point transition counts."""
    k_modes = config.num_modes
    _, _, s_prev, s_cur, d_prev, _ = _stack_transitions(trajectories)
    change = d_prev == 1
    counts = np.zeros((k_modes, k_modes))
    for k in range(k_modes):
        sel = change & (s_prev == k)
        counts[k] = np.bincount(s_cur[sel], minlength=k_modes)
    return np.stack(
        [sample_dirichlet(priors.trans_alpha + counts[k], rng) for k in range(k_modes)]
    )


def _update_pi0(trajectories, config, priors, rng):
    counts = np.bincount(
        [tr.states[0] for tr in trajectories], minlength=config.num_modes
    )
    return sample_dirichlet(priors.trans_alpha + counts, rng)


def _update_parameters(state: ChainState, data, config, priors) -> None:
    params, rng = state.params, state.rng
    for k, (a_mat, a_bias, q_cov) in enumerate(
        update_dynamics(state.trajectories, config, priors, rng)
    ):
        params.modes[k].a_mat = a_mat
        params.modes[k].a_bias = a_bias
        params.modes[k].q_cov = q_cov
    for k, (c_mat, c_bias, s_cov) in enumerate(
        update_emissions(state.trajectories, data, config, priors, rng)
    ):
        params.modes[k].c_mat = c_mat
        params.modes[k].c_bias = c_bias
        params.modes[k].s_cov = s_cov
    if config.recurrent_state:
        params.state_reg = update_state_regression(
            state.trajectories, state.omega_s, config, priors, rng
        )
    else:
        params.trans = update_transition_matrix(
            state.trajectories, config, priors, rng
        )
    if config.explicit_duration:
        result = update_duration_model(
            state.trajectories, state.omega_d, params, config, priors, rng
        )
        if config.recurrent_duration:
            params.dur_reg = result
        else:
            params.dur_table = result
    params.init.pi0 = _update_pi0(state.trajectories, config, priors, rng)


def _refresh_all_pg(state: ChainState, config: ModelConfig) -> None:
    for i, tr in enumerate(state.trajectories):
        state.omega_s[i], state.omega_d[i] = resample_pg(
            state.params, config, tr.states, tr.durations, tr.latents, state.rng
        )


# ---------------------------------------------------------------------------
# the sweep
# ---------------------------------------------------------------------------

def sweep(
    state: ChainState,
    data: list[np.ndarray],
    config: ModelConfig,
    priors: Priors,
) -> ChainState:
    """One full blocked update: per sequence z, then omega, then x; then theta."""
    rng = state.rng
    evidence = 0.0
    cache = _ModeCache(state.params, config)
    try:
        for i, obs in enumerate(data):
            lat = state.trajectories[i].latents
            lattice = forward_filter(state.params, config, obs, lat)
            states, durations = backward_sample(
                lattice, state.params, config, obs, lat, rng
            )
            evidence += float(lattice.log_normalizers.sum())
            omega_s, omega_d = resample_pg(
                state.params, config, states, durations, lat, rng
            )
            msgs = backward_info_filter(
                state.params, config, obs, states, durations, omega_s, omega_d,
                cache=cache,
            )
            new_lat = sample_pseudo_obs(
                msgs, state.params, config, states, rng, cache=cache
            )
            state.trajectories[i] = LatentTrajectory(states, durations, new_lat)
            state.omega_s[i], state.omega_d[i] = omega_s, omega_d
    except NumericalAbort as exc:
        raise NumericalAbort(
            f"sweep {state.iteration}, sequence {i}: {exc}"
        ) from exc
    _update_parameters(state, data, config, priors)
    state.iteration += 1
    state.last_evidence = evidence
    return state


# ---------------------------------------------------------------------------
# initialization and fitting
# ---------------------------------------------------------------------------

def run_length_countdown(path: np.ndarray, dmax: int) -> np.ndarray:
    """Duration counters matching the runs of a state path, capped at dmax."""
    durations = np.zeros(len(path), dtype=int)
    start = 0
    while start < len(path):
        stop = start
        while stop < len(path) and path[stop] == path[start]:
            stop += 1
        pos = start
        remaining = stop - start
        while remaining > 0:
            block = min(remaining, dmax)
            durations[pos : pos + block] = np.arange(block, 0, -1)
            pos += block
            remaining -= block
        start = stop
    return durations


def pca_project(data: list[np.ndarray], latent_dim: int):
    """Pooled principal-component scores; raises on constant input."""
    pooled = np.vstack(data)
    if pooled.std(axis=0).max() < 1e-12:
        raise ValueError("degenerate data: every feature is constant")
    center = pooled.mean(axis=0)
    _, _, vt = np.linalg.svd(pooled - center, full_matrices=False)
    components = vt[:latent_dim]
    return [(seq - center) @ components.T for seq in data], center, components


def initialize(
    data: list[np.ndarray],
    config: ModelConfig,
    priors: Priors,
    scheme: str,
    rng: np.random.Generator,
    n_arhmm_restarts: int = 5,
    n_warm_updates: int = 5,
) -> ChainState:
    """ARHMM/PCA chain construction.

    Scheme "I" follows the prior draw of the parameters with a few
    auxiliary+parameter updates at frozen latents; scheme "II" leaves the
    prior draw untouched so early sweeps explore more broadly.
    """
    if scheme not in ("I", "II"):
        raise ValueError(f"unknown init scheme {scheme!r}; expected 'I' or 'II'")
    projected, _, _ = pca_project(data, config.latent_dim)
    arhmm = fit_arhmm(projected, config.num_modes, n_arhmm_restarts, rng)

    trajectories = []
    for lat, path in zip(projected, arhmm.state_paths):
        durations = run_length_countdown(path, config.dmax_eff)
        trajectories.append(LatentTrajectory(path.copy(), durations, lat.copy()))

    params = sample_params_from_prior(config, priors, rng)
    pooled = np.vstack(projected)
    all_states = np.concatenate([tr.states for tr in trajectories])
    base_cov = np.cov(pooled.T).reshape(config.latent_dim, config.latent_dim)
    base_cov = base_cov + 1e-6 * np.eye(config.latent_dim)
    for k in range(config.num_modes):
        assigned = pooled[all_states == k]
        params.init.mu_init[k] = (
            assigned.mean(axis=0) if assigned.size else pooled.mean(axis=0)
        )
        params.init.sigma_init[k] = base_cov.copy()
    params.init.pi0 = _update_pi0(trajectories, config, priors, rng)

    state = ChainState(
        params=params,
        trajectories=trajectories,
        omega_s=[np.zeros(0)] * len(data),
        omega_d=[np.zeros(0)] * len(data),
        iteration=0,
        rng=rng,
    )
    _refresh_all_pg(state, config)
    if scheme == "I":
        for _ in range(n_warm_updates):
            _refresh_all_pg(state, config)
            _update_parameters(state, data, config, priors)
    return state


def fit(
    data: list[np.ndarray],
    config: ModelConfig,
    priors: Priors,
    n_iter: int,
    scheme: str,
    rng: np.random.Generator,
    snapshot_every: int = 10,
    checkpoint_path: str | Path | None = None,
    state: ChainState | None = None,
) -> tuple[list[ChainState], Diagnostics]:
    """Initialize (unless resuming) and run n_iter sweeps with diagnostics.

    Snapshots are deep copies kept every snapshot_every iterations plus the
    final state.  A numerical abort flushes the current state to the
    checkpoint path before propagating.
    """
    if state is None:
        state = initialize(data, config, priors, scheme, rng)
    snapshots: list[ChainState] = []
    diagnostics = Diagnostics()
    if n_iter == 0:
        return [copy.deepcopy(state)], diagnostics

    for step in range(n_iter):
        reset_jitter_count()
        try:
            sweep(state, data, config, priors)
        except NumericalAbort:
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, state, config)
            raise
        diagnostics.jitter_retries.append(jitter_event_count())
        diagnostics.evidence_proxy.append(state.last_evidence)
        diagnostics.joint_log_density.append(
            sum(
                trajectory_joint_log_density(state.params, config, obs, tr)
                for obs, tr in zip(data, state.trajectories)
            )
        )
        diagnostics.occupancy.append(
            np.bincount(
                np.concatenate([tr.states for tr in state.trajectories]),
                minlength=config.num_modes,
            )
        )
        if (step + 1) % snapshot_every == 0 and step + 1 < n_iter:
            snapshots.append(copy.deepcopy(state))
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, state, config)
    snapshots.append(copy.deepcopy(state))
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, state, config)
    return snapshots, diagnostics


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def chain_state_to_dict(state: ChainState, config: ModelConfig) -> dict:
    return {
        "format_version": _CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "last_evidence": state.last_evidence,
        "model": params_to_dict(state.params, config),
        "trajectories": [
            {
                "states": tr.states.tolist(),
                "durations": tr.durations.tolist(),
                "latents": tr.latents.tolist(),
            }
            for tr in state.trajectories
        ],
        "omega_s": [om.tolist() for om in state.omega_s],
        "omega_d": [om.tolist() for om in state.omega_d],
        "rng_state": state.rng.bit_generator.state,
    }


def chain_state_from_dict(doc: dict) -> tuple[ChainState, ModelConfig]:
    if doc.get("format_version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')}")
    params, config = params_from_dict(doc["model"])
    trajectories = [
        LatentTrajectory(
            states=np.array(tr["states"], dtype=int),
            durations=np.array(tr["durations"], dtype=int),
            latents=np.array(tr["latents"], dtype=float),
        )
        for tr in doc["trajectories"]
    ]
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng_state"]
    state = ChainState(
        params=params,
        trajectories=trajectories,
        omega_s=[np.array(om, dtype=float) for om in doc["omega_s"]],
        omega_d=[np.array(om, dtype=float) for om in doc["omega_d"]],
        iteration=int(doc["iteration"]),
        rng=rng,
        last_evidence=float(doc["last_evidence"]),
    )
    return state, config


def save_checkpoint(path: str | Path, state: ChainState, config: ModelConfig) -> None:
    Path(path).write_text(
        json.dumps(chain_state_to_dict(state, config)), encoding="utf-8"
    )


def load_checkpoint(path: str | Path) -> tuple[ChainState, ModelConfig]:
    return chain_state_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
