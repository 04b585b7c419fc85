"""Stick-breaking multinomial link and its Polya-gamma augmentation.

A real (L-1)-vector v maps to L category probabilities by splitting the
remaining stick with logistic weights.  Conditioned on PG auxiliaries the
link's likelihood in the regression weights is Gaussian, which is what makes
the weight rows conjugate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import sample_pg1_batch

__all__ = [
    "StickRegression",
    "PGAuxiliaries",
    "log_sigmoid",
    "pi_sb",
    "log_pmf_sb",
    "kappa_vec",
    "sample_pg_aux",
    "regression_row_posterior",
    "stick_row_posteriors",
]


@dataclass
class StickRegression:
    """Weights R of shape (L-1, M) and bias r of length L-1 for an L-way link."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def n_categories(self) -> int:
        return self.weights.shape[0] + 1

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Stick logits R x + r; x may be a vector or an (n, M) batch."""
        return x @ self.weights.T + self.bias

    def validate(self) -> None:
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError("weight rows and bias length disagree")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("stick regression parameters must be finite")


@dataclass
class PGAuxiliaries:
    """Per-row PG draws and kappa statistics for one categorical outcome."""

    omega: np.ndarray
    kappa: np.ndarray


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable log of the logistic function."""
    return -np.logaddexp(0.0, -np.asarray(z, dtype=float))


def pi_sb(v: np.ndarray) -> np.ndarray:
    """Probability vector of length L from stick logits of length L-1.

    Component k is sigma(v_k) times the product of sigma(-v_j) for j < k;
    the last component is the unbroken remainder.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    sig = np.exp(log_sigmoid(v))
    remain = np.concatenate(([1.0], np.cumprod(1.0 - sig)))
    return np.concatenate((sig * remain[:-1], remain[-1:]))


def log_pmf_sb(outcome: int, v: np.ndarray) -> float:
    """Log-probability of a 1-based category under the stick-breaking link.

    Uses the product form directly: log sigma(v_k) at the taken break plus
    log sigma(-v_j) for every declined break before it.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    n_cat = v.shape[0] + 1
    if not 1 <= outcome <= n_cat:
        raise ValueError(f"outcome {outcome} outside 1..{n_cat}")
    total = float(log_sigmoid(-v[: outcome - 1]).sum())
    if outcome < n_cat:
        total += float(log_sigmoid(v[outcome - 1]))
    return total


def log_pmf_sb_all(v: np.ndarray) -> np.ndarray:
    """Log-probabilities of all L categories; v may be (L-1,) or (n, L-1)."""
    v = np.asarray(v, dtype=float)
    squeeze = v.ndim == 1
    v = np.atleast_2d(v)
    take = log_sigmoid(v)
    decline = log_sigmoid(-v)
    cum = np.concatenate(
        (np.zeros((v.shape[0], 1)), np.cumsum(decline, axis=1)), axis=1
    )
    out = np.concatenate((take + cum[:, :-1], cum[:, -1:]), axis=1)
    return out[0] if squeeze else out


def kappa_vec(outcome: int, n_categories: int) -> np.ndarray:
    """kappa_k = I[outcome = k] - 0.5 I[outcome >= k] for k = 1..L-1."""
    if not 1 <= outcome <= n_categories:
        raise ValueError(f"outcome {outcome} outside 1..{n_categories}")
    k = np.arange(1, n_categories)
    return (k == outcome).astype(float) - 0.5 * (outcome >= k)


def sample_pg_aux(outcome: int, v: np.ndarray, rng: np.random.Generator) -> PGAuxiliaries:
    """PG auxiliaries for one outcome: omega_k ~ PG(I[outcome >= k], v_k).

    Rows the outcome never reached have indicator zero, hence omega exactly 0.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    n_cat = v.shape[0] + 1
    kappa = kappa_vec(outcome, n_cat)
    omega = np.zeros(n_cat - 1)
    n_active = min(outcome, n_cat - 1)
    if n_active:
        omega[:n_active] = sample_pg1_batch(v[:n_active], rng)
    return PGAuxiliaries(omega=omega, kappa=kappa)


def regression_row_posterior(
    prior_mean: np.ndarray,
    prior_cov: np.ndarray,
    data: list[tuple[np.ndarray, float, float]],
) -> "InfoGaussian":
    """Gaussian posterior for one augmented weight row (R_k, r_k).

    Each datum (x, kappa, omega) contributes a pseudo-observation of the
    logit R_k x + r_k with precision omega and target kappa/omega; the
    augmented regressor is (x, 1).  Callers exclude omega = 0 points.
    """
    from .distributions import InfoGaussian, chol_jitter

    prior_mean = np.asarray(prior_mean, dtype=float)
    dim = prior_mean.shape[0]
    low = chol_jitter(np.asarray(prior_cov, dtype=float))
    eye = np.eye(dim)
    prec0 = np.linalg.solve(low.T, np.linalg.solve(low, eye))
    lam = 0.5 * (prec0 + prec0.T)
    theta = lam @ prior_mean
    if data:
        xs = np.stack([np.append(np.atleast_1d(x), 1.0) for x, _, _ in data])
        kappas = np.array([k for _, k, _ in data])
        omegas = np.array([w for _, _, w in data])
        if np.any(omegas <= 0):
            raise ValueError("regression data must carry strictly positive omega")
        lam = lam + (xs * omegas[:, None]).T @ xs
        theta = theta + xs.T @ kappas
    return InfoGaussian(theta=theta, lam=0.5 * (lam + lam.T))


def stick_row_posteriors(
    prior_cov: np.ndarray,
    regressors: np.ndarray,
    outcomes: np.ndarray,
    omegas: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """All row posteriors of one stick regression at once, zero prior mean.

    regressors is (n, M) raw (the intercept is appended here), outcomes are
    1-based categories of length n, omegas (n, L-1).  Row k uses the points
    with outcome >= k+1; agrees with regression_row_posterior row by row.
    Returns (thetas (L-1, M+1), lams (L-1, M+1, M+1)).
    """
    from .distributions import chol_jitter

    n_rows = omegas.shape[1]
    dim = regressors.shape[1] + 1
    low = chol_jitter(np.asarray(prior_cov, dtype=float))
    prec0 = np.linalg.solve(low.T, np.linalg.solve(low, np.eye(dim)))
    prec0 = 0.5 * (prec0 + prec0.T)

    design = np.column_stack([regressors, np.ones(regressors.shape[0])])
    rows = np.arange(1, n_rows + 1)
    active = outcomes[:, None] >= rows[None, :]
    gated_omega = np.where(active, omegas, 0.0)
    kappa = np.where(active, (outcomes[:, None] == rows[None, :]) - 0.5, 0.0)

    lams = prec0[None] + np.einsum("ij,im,in->jmn", gated_omega, design, design)
    thetas = kappa.T @ design
    return thetas, 0.5 * (lams + np.swapaxes(lams, 1, 2))
