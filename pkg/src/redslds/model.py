"""Generative model: parameter containers, simulation, joint density.

One parameterization serves four variants.  A duration counter d_t freezes
the discrete state while it counts down; when it hits 1 the next state and a
fresh duration are drawn, either from fixed tables or from stick-breaking
regressions on the previous continuous state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import chol_jitter, mvn_logpdf, sample_categorical
from .stickbreak import StickRegression, log_pmf_sb_all

__all__ = [
    "ModeParams",
    "InitParams",
    "ModelConfig",
    "ModelParams",
    "LatentTrajectory",
    "VARIANTS",
    "simulate",
    "joint_log_density",
    "transition_kernel",
    "save_model_json",
    "load_model_json",
]

# variant -> (recurrent_state, explicit_duration, recurrent_duration)
VARIANTS = {
    "slds": (False, False, False),
    "rslds": (True, False, False),
    "edslds": (False, True, False),
    "redslds": (True, True, True),
}


@dataclass
class ModeParams:
    """Per-regime linear dynamics and emission parameters."""

    a_mat: np.ndarray
    a_bias: np.ndarray
    q_cov: np.ndarray
    c_mat: np.ndarray
    c_bias: np.ndarray
    s_cov: np.ndarray

    def validate(self, latent_dim: int, obs_dim: int) -> None:
        if self.a_mat.shape != (latent_dim, latent_dim):
            raise ValueError("dynamics matrix shape mismatch")
        if self.c_mat.shape != (obs_dim, latent_dim):
            raise ValueError("emission matrix shape mismatch")
        for name, mat in (("q_cov", self.q_cov), ("s_cov", self.s_cov)):
            if np.abs(mat - mat.T).max() > 1e-10 * max(np.abs(mat).max(), 1.0):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(mat).min() <= 0:
                raise ValueError(f"{name} is not positive definite")


@dataclass
class InitParams:
    """Initial state distribution and per-mode initial Gaussians."""

    pi0: np.ndarray
    mu_init: np.ndarray
    sigma_init: np.ndarray

    def validate(self, num_modes: int, latent_dim: int) -> None:
        if abs(self.pi0.sum() - 1.0) > 1e-12:
            raise ValueError("pi0 must sum to 1")
        if self.mu_init.shape != (num_modes, latent_dim):
            raise ValueError("mu_init shape mismatch")
        if self.sigma_init.shape != (num_modes, latent_dim, latent_dim):
            raise ValueError("sigma_init shape mismatch")


@dataclass(frozen=True)
class ModelConfig:
    num_modes: int
    latent_dim: int
    obs_dim: int
    max_duration: int = 50
    recurrent_state: bool = False
    explicit_duration: bool = False
    recurrent_duration: bool = False
    shared_emissions: bool = True

    def __post_init__(self) -> None:
        if min(self.num_modes, self.latent_dim, self.obs_dim, self.max_duration) < 1:
            raise ValueError("model dimensions must be positive")
        if self.recurrent_duration and not self.explicit_duration:
            raise ValueError("recurrent durations require explicit durations")

    @property
    def dmax_eff(self) -> int:
        """Duration support actually used; 1 when durations are implicit."""
        return self.max_duration if self.explicit_duration else 1

    @property
    def variant(self) -> str:
        key = (self.recurrent_state, self.explicit_duration, self.recurrent_duration)
        for name, flags in VARIANTS.items():
            if flags == key:
                return name
        return "custom"

    @classmethod
    def from_variant(cls, variant: str, **kwargs) -> "ModelConfig":
        try:
            rec_s, exp_d, rec_d = VARIANTS[variant.lower()]
        except KeyError:
            raise ValueError(
                f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}"
            ) from None
        return cls(
            recurrent_state=rec_s,
            explicit_duration=exp_d,
            recurrent_duration=rec_d,
            **kwargs,
        )


@dataclass
class ModelParams:
    """Full parameter set; exactly the fields the variant demands are set."""

    modes: list[ModeParams]
    init: InitParams
    trans: np.ndarray | None = None
    state_reg: list[StickRegression] | None = None
    dur_reg: list[StickRegression] | None = None
    dur_table: np.ndarray | None = None

    def validate(self, config: ModelConfig) -> None:
        if len(self.modes) != config.num_modes:
            raise ValueError("wrong number of mode parameter blocks")
        for mode in self.modes:
            mode.validate(config.latent_dim, config.obs_dim)
        self.init.validate(config.num_modes, config.latent_dim)
        if config.recurrent_state:
            if self.state_reg is None or self.trans is not None:
                raise ValueError("recurrent-state variant needs state_reg, not trans")
        else:
            if self.trans is None or self.state_reg is not None:
                raise ValueError("non-recurrent variant needs trans, not state_reg")
            if np.abs(self.trans.sum(axis=1) - 1.0).max() > 1e-12:
                raise ValueError("transition rows must sum to 1")
        needs_table = config.explicit_duration and not config.recurrent_duration
        if config.recurrent_duration and self.dur_reg is None:
            raise ValueError("recurrent-duration variant needs dur_reg")
        if needs_table and self.dur_table is None:
            raise ValueError("explicit-duration variant needs dur_table")
        if not config.recurrent_duration and self.dur_reg is not None:
            raise ValueError("dur_reg set on a non-recurrent-duration variant")
        if not needs_table and self.dur_table is not None:
            raise ValueError("dur_table set on the wrong variant")

    # -- discrete kernels --------------------------------------------------

    def initial_duration_log_pmf(self, config: ModelConfig, k: int) -> np.ndarray:
        """Log pmf of d_1 given s_1 = k, over durations 1..dmax_eff.

        The recurrent regression is evaluated at the initial latent mean of
        mode k, matching the generative definition of the first duration.
        """
        d_eff = config.dmax_eff
        if d_eff == 1:
            return np.zeros(1)
        if config.recurrent_duration:
            logits = self.dur_reg[k].logits(self.init.mu_init[k])
            return log_pmf_sb_all(logits)
        return np.log(self.dur_table[k])

    def state_transition_log_pmf(
        self, config: ModelConfig, k_prev: int, x_prev: np.ndarray
    ) -> np.ndarray:
        """Log pmf over the next state at a change point."""
        if config.recurrent_state:
            return log_pmf_sb_all(self.state_reg[k_prev].logits(x_prev))
        return np.log(self.trans[k_prev])

    def duration_log_pmf(
        self, config: ModelConfig, k_new: int, x_prev: np.ndarray
    ) -> np.ndarray:
        """Log pmf over the fresh duration drawn at a change point."""
        d_eff = config.dmax_eff
        if d_eff == 1:
            return np.zeros(1)
        if config.recurrent_duration:
            return log_pmf_sb_all(self.dur_reg[k_new].logits(x_prev))
        return np.log(self.dur_table[k_new])


@dataclass
class LatentTrajectory:
    """Discrete states, duration counters and continuous latents for one run."""

    states: np.ndarray
    durations: np.ndarray
    latents: np.ndarray

    def validate(self, config: ModelConfig) -> None:
        s, d = self.states, self.durations
        if not (len(s) == len(d) == len(self.latents)):
            raise ValueError("trajectory component lengths disagree")
        if d.min() < 1 or d.max() > config.dmax_eff:
            raise ValueError("duration outside 1..dmax")
        if s.min() < 0 or s.max() >= config.num_modes:
            raise ValueError("state index outside 0..K-1")
        if not countdown_ok(s, d):
            raise ValueError("countdown law violated")


def countdown_ok(states: np.ndarray, durations: np.ndarray) -> bool:
    """True when every d > 1 step freezes the state and decrements d."""
    prev_d = durations[:-1]
    busy = prev_d > 1
    if not busy.any():
        return True
    same_state = states[1:][busy] == states[:-1][busy]
    decremented = durations[1:][busy] == prev_d[busy] - 1
    return bool(np.all(same_state) and np.all(decremented))


def transition_kernel(
    z_prev: tuple[int, int],
    x_prev: np.ndarray,
    params: ModelParams,
    config: ModelConfig,
) -> np.ndarray:
    """Probability table over (state, duration) pairs for the next step.

    Returns a (K, dmax_eff) matrix.  A running duration forces the single
    countdown successor; at a change point the state law and the per-state
    duration law factorize.
    """
    s_prev, d_prev = z_prev
    d_eff = config.dmax_eff
    out = np.zeros((config.num_modes, d_eff))
    if d_prev > 1:
        out[s_prev, d_prev - 2] = 1.0
        return out
    state_log = params.state_transition_log_pmf(config, s_prev, x_prev)
    for k in range(config.num_modes):
        dur_log = params.duration_log_pmf(config, k, x_prev)
        out[k] = np.exp(state_log[k] + dur_log)
    return out


def simulate(
    params: ModelParams,
    config: ModelConfig,
    n_steps: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, LatentTrajectory]:
    """Draw (observations, trajectory) of length n_steps from the model."""
    params.validate(config)
    k_modes, m_dim, n_dim = config.num_modes, config.latent_dim, config.obs_dim
    q_low = [chol_jitter(mode.q_cov) for mode in params.modes]
    s_low = [chol_jitter(mode.s_cov) for mode in params.modes]
    init_low = [chol_jitter(params.init.sigma_init[k]) for k in range(k_modes)]

    states = np.zeros(n_steps, dtype=int)
    durations = np.zeros(n_steps, dtype=int)
    latents = np.zeros((n_steps, m_dim))
    obs = np.zeros((n_steps, n_dim))

    s = sample_categorical(np.log(params.init.pi0), rng)
    d = 1 + sample_categorical(params.initial_duration_log_pmf(config, s), rng)
    x = params.init.mu_init[s] + init_low[s] @ rng.standard_normal(m_dim)
    for t in range(n_steps):
        if t > 0:
            x_prev = latents[t - 1]
            if d > 1:
                d -= 1
            else:
                s = sample_categorical(
                    params.state_transition_log_pmf(config, s, x_prev), rng
                )
                d = 1 + sample_categorical(
                    params.duration_log_pmf(config, s, x_prev), rng
                )
            mode = params.modes[s]
            x = (
                mode.a_mat @ x_prev
                + mode.a_bias
                + q_low[s] @ rng.standard_normal(m_dim)
            )
        states[t], durations[t] = s, d
        latents[t] = x
        mode = params.modes[s]
        obs[t] = mode.c_mat @ x + mode.c_bias + s_low[s] @ rng.standard_normal(n_dim)

    return obs, LatentTrajectory(states=states, durations=durations, latents=latents)


def joint_log_density(
    params: ModelParams,
    config: ModelConfig,
    obs: np.ndarray,
    traj: LatentTrajectory,
) -> float:
    """Exact log of the joint over (y, x, s, d).

    Deterministic countdown factors contribute 0 when satisfied and -inf
    when violated; violation is a return value, not an exception.
    """
    s, d, x = traj.states, traj.durations, traj.latents
    n_steps = len(s)
    q_low = [chol_jitter(mode.q_cov) for mode in params.modes]
    s_low = [chol_jitter(mode.s_cov) for mode in params.modes]

    total = float(np.log(params.init.pi0[s[0]]))
    dur0 = params.initial_duration_log_pmf(config, s[0])
    if d[0] > dur0.shape[0]:
        return float("-inf")
    total += float(dur0[d[0] - 1])
    total += float(
        mvn_logpdf(
            x[0],
            params.init.mu_init[s[0]],
            chol_jitter(params.init.sigma_init[s[0]]),
        )
    )

    for t in range(1, n_steps):
        if d[t - 1] > 1:
            if s[t] != s[t - 1] or d[t] != d[t - 1] - 1:
                return float("-inf")
        else:
            state_log = params.state_transition_log_pmf(config, s[t - 1], x[t - 1])
            dur_log = params.duration_log_pmf(config, s[t], x[t - 1])
            if d[t] > dur_log.shape[0]:
                return float("-inf")
            total += float(state_log[s[t]] + dur_log[d[t] - 1])
        mode = params.modes[s[t]]
        total += float(
            mvn_logpdf(x[t], mode.a_mat @ x[t - 1] + mode.a_bias, q_low[s[t]])
        )

    for t in range(n_steps):
        mode = params.modes[s[t]]
        total += float(mvn_logpdf(obs[t], mode.c_mat @ x[t] + mode.c_bias, s_low[s[t]]))

    return total


# ---------------------------------------------------------------------------
# serialization (versioned JSON, bit-exact round trip)
# ---------------------------------------------------------------------------

_FORMAT_VERSION = 1


def _config_to_dict(config: ModelConfig) -> dict:
    return {
        "num_modes": config.num_modes,
        "latent_dim": config.latent_dim,
        "obs_dim": config.obs_dim,
        "max_duration": config.max_duration,
        "recurrent_state": config.recurrent_state,
        "explicit_duration": config.explicit_duration,
        "recurrent_duration": config.recurrent_duration,
        "shared_emissions": config.shared_emissions,
    }


def params_to_dict(params: ModelParams, config: ModelConfig) -> dict:
    doc: dict = {
        "format_version": _FORMAT_VERSION,
        "config": _config_to_dict(config),
        "modes": [
            {
                "a_mat": mode.a_mat.tolist(),
                "a_bias": mode.a_bias.tolist(),
                "q_cov": mode.q_cov.tolist(),
                "c_mat": mode.c_mat.tolist(),
                "c_bias": mode.c_bias.tolist(),
                "s_cov": mode.s_cov.tolist(),
            }
            for mode in params.modes
        ],
        "init": {
            "pi0": params.init.pi0.tolist(),
            "mu_init": params.init.mu_init.tolist(),
            "sigma_init": params.init.sigma_init.tolist(),
        },
    }
    if params.trans is not None:
        doc["trans"] = params.trans.tolist()
    if params.state_reg is not None:
        doc["state_reg"] = [
            {"weights": reg.weights.tolist(), "bias": reg.bias.tolist()}
            for reg in params.state_reg
        ]
    if params.dur_reg is not None:
        doc["dur_reg"] = [
            {"weights": reg.weights.tolist(), "bias": reg.bias.tolist()}
            for reg in params.dur_reg
        ]
    if params.dur_table is not None:
        doc["dur_table"] = params.dur_table.tolist()
    return doc


def params_from_dict(doc: dict) -> tuple[ModelParams, ModelConfig]:
    if doc.get("format_version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')}")
    config = ModelConfig(**doc["config"])
    modes = [
        ModeParams(
            a_mat=np.array(m["a_mat"]),
            a_bias=np.array(m["a_bias"]),
            q_cov=np.array(m["q_cov"]),
            c_mat=np.array(m["c_mat"]),
            c_bias=np.array(m["c_bias"]),
            s_cov=np.array(m["s_cov"]),
        )
        for m in doc["modes"]
    ]
    init = InitParams(
        pi0=np.array(doc["init"]["pi0"]),
        mu_init=np.array(doc["init"]["mu_init"]),
        sigma_init=np.array(doc["init"]["sigma_init"]),
    )
    params = ModelParams(
        modes=modes,
        init=init,
        trans=np.array(doc["trans"]) if "trans" in doc else None,
        state_reg=[
            StickRegression(np.array(r["weights"]), np.array(r["bias"]))
            for r in doc["state_reg"]
        ]
        if "state_reg" in doc
        else None,
        dur_reg=[
            StickRegression(np.array(r["weights"]), np.array(r["bias"]))
            for r in doc["dur_reg"]
        ]
        if "dur_reg" in doc
        else None,
        dur_table=np.array(doc["dur_table"]) if "dur_table" in doc else None,
    )
    return params, config


def save_model_json(path: str | Path, params: ModelParams, config: ModelConfig) -> None:
    Path(path).write_text(
        json.dumps(params_to_dict(params, config), indent=1), encoding="utf-8"
    )


def load_model_json(path: str | Path) -> tuple[ModelParams, ModelConfig]:
    return params_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
