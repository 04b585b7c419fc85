"""Seeded samplers and density evaluators used throughout the Gibbs sweep.

Covers the Polya-gamma distribution (exact draws, no truncation bias),
matrix-normal-inverse-Wishart draws and conjugate updates, Gaussians in
moment and information form, Dirichlet rows and categorical picks.  All
samplers consume a ``numpy.random.Generator`` and are pure functions of
(parameters, generator state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

__all__ = [
    "NumericalAbort",
    "PGParams",
    "InfoGaussian",
    "MNIWParams",
    "DirichletParams",
    "sample_pg",
    "sample_pg1_batch",
    "pg_mean",
    "sample_inv_wishart",
    "sample_mniw",
    "mniw_posterior",
    "info_to_moment",
    "sample_info_gaussian",
    "chol_jitter",
    "jitter_event_count",
    "reset_jitter_count",
    "mvn_logpdf",
    "sample_dirichlet",
    "sample_categorical",
]


class NumericalAbort(RuntimeError):
    """A linear-algebra step failed beyond the bounded jitter schedule."""


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PGParams:
    """Polya-gamma shape/tilt pair.  b = 0 is the point mass at zero."""

    b: int
    c: float

    def validate(self) -> None:
        if int(self.b) != self.b or self.b < 0:
            raise ValueError(f"PG shape b must be a nonnegative integer, got {self.b}")
        if not math.isfinite(self.c):
            raise ValueError(f"PG tilt c must be finite, got {self.c}")


@dataclass
class InfoGaussian:
    """Gaussian in information form: theta = precision * mean, lam = precision."""

    theta: np.ndarray
    lam: np.ndarray

    def validate(self, tol: float = 1e-10) -> None:
        lam = self.lam
        scale = max(np.abs(lam).max(), 1.0)
        if np.abs(lam - lam.T).max() > tol * scale:
            raise ValueError("information matrix is not symmetric")
        eigs = np.linalg.eigvalsh(0.5 * (lam + lam.T))
        if eigs.min() < -tol * scale:
            raise ValueError("information matrix is not positive semi-definite")


@dataclass
class MNIWParams:
    """Matrix-normal-inverse-Wishart over a (coefficients, covariance) pair.

    m0 is the p x q coefficient mean, v0 the q x q column covariance, s0 the
    p x p inverse-Wishart scale and n0 the degrees of freedom (> p - 1).
    """

    m0: np.ndarray
    v0: np.ndarray
    s0: np.ndarray
    n0: float

    def validate(self) -> None:
        p, q = self.m0.shape
        if self.v0.shape != (q, q) or self.s0.shape != (p, p):
            raise ValueError("MNIW shape mismatch between m0, v0, s0")
        for name, mat in (("v0", self.v0), ("s0", self.s0)):
            if np.abs(mat - mat.T).max() > 1e-10 * max(np.abs(mat).max(), 1.0):
                raise ValueError(f"MNIW {name} is not symmetric")
            if np.linalg.eigvalsh(mat).min() <= 0:
                raise ValueError(f"MNIW {name} is not positive definite")
        if self.n0 <= p - 1:
            raise ValueError(f"MNIW degrees of freedom {self.n0} <= rows - 1 = {p - 1}")


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    def validate(self) -> None:
        if np.any(np.asarray(self.alpha) <= 0):
            raise ValueError("Dirichlet concentration entries must be positive")


# ---------------------------------------------------------------------------
# Polya-gamma
# ---------------------------------------------------------------------------

# Truncation point splitting the proposal into a truncated inverse-Gaussian
# piece on (0, t] and an exponential tail on (t, inf).
_PG_T = 0.64


def pg_mean(b: float, c: float) -> float:
    """Closed-form mean of PG(b, c): (b / 2c) tanh(c / 2), with limit b/4 at c=0."""
    if c == 0.0:
        return b / 4.0
    return (b / (2.0 * c)) * math.tanh(c / 2.0)


def _log_acoef(n: int, x: np.ndarray) -> np.ndarray:
    """Log of the n-th alternating-series coefficient of the Jacobi density."""
    half = n + 0.5
    out = np.empty_like(x)
    left = x <= _PG_T
    xl = x[left]
    out[left] = (
        math.log(math.pi * half)
        + 1.5 * (np.log(2.0 / math.pi) - np.log(xl))
        - 2.0 * half * half / xl
    )
    xr = x[~left]
    out[~left] = math.log(math.pi * half) - half * half * math.pi**2 * xr / 2.0
    return out


def _inv_gauss_cdf_at_t(z: np.ndarray) -> np.ndarray:
    """CDF at t of an inverse Gaussian with mean 1/z and shape 1 (Levy at z=0)."""
    rt = math.sqrt(_PG_T)
    b1 = (_PG_T * z - 1.0) / rt
    b2 = (_PG_T * z + 1.0) / rt
    return ndtr(b1) + np.exp(2.0 * z + log_ndtr(-b2))


def _trunc_inv_gauss(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draws from an inverse Gaussian with mean 1/z, shape 1, truncated to (0, t]."""
    out = np.empty_like(z)
    small = z < 1.0 / _PG_T

    # Mean above the cut: rejection from a truncated Levy proposal.
    idx = np.flatnonzero(small)
    while idx.size:
        m = idx.size
        e1 = rng.exponential(size=m)
        e2 = rng.exponential(size=m)
        ok = e1 * e1 <= 2.0 * e2 / _PG_T
        x = _PG_T / (1.0 + _PG_T * e1) ** 2
        accept = ok & (rng.random(m) <= np.exp(-0.5 * z[idx] ** 2 * x))
        out[idx[accept]] = x[accept]
        idx = idx[~accept]

    # Mean below the cut: plain inverse-Gaussian draws until one lands in (0, t].
    idx = np.flatnonzero(~small)
    while idx.size:
        m = idx.size
        mu = 1.0 / z[idx]
        y = rng.standard_normal(m) ** 2
        x = mu + 0.5 * mu * mu * y - 0.5 * mu * np.sqrt(4.0 * mu * y + (mu * y) ** 2)
        flip = rng.random(m) > mu / (mu + x)
        x[flip] = mu[flip] ** 2 / x[flip]
        accept = x <= _PG_T
        out[idx[accept]] = x[accept]
        idx = idx[~accept]

    return out


def sample_pg1_batch(c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact PG(1, c) draws for an array of tilts.

    Accept/reject on the tilted Jacobi density via its alternating partial
    sums; the proposal mixes a truncated inverse Gaussian with an exponential
    tail.  The law depends on c only through |c|.
    """
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if not np.all(np.isfinite(c)):
        raise ValueError("PG tilt values must be finite")
    z = np.abs(c) / 2.0

    # mixture weight of the exponential tail, in logs so extreme tilts
    # (where both pieces underflow) stay exact
    k = math.pi**2 / 8.0 + z * z / 2.0
    log_p = np.log(math.pi / (2.0 * k)) - k * _PG_T
    log_q = math.log(2.0) - z + np.log(_inv_gauss_cdf_at_t(z))
    exp_weight = np.exp(log_p - np.logaddexp(log_p, log_q))

    out = np.empty_like(z)
    idx = np.arange(z.size)
    while idx.size:
        m = idx.size
        zi = z[idx]
        use_tail = rng.random(m) < exp_weight[idx]
        x = np.empty(m)
        n_tail = int(use_tail.sum())
        if n_tail:
            x[use_tail] = _PG_T + rng.exponential(size=n_tail) / k[idx][use_tail]
        if n_tail < m:
            x[~use_tail] = _trunc_inv_gauss(zi[~use_tail], rng)

        # Alternating-series squeeze: odd partial sums bound the density from
        # below (accept), even ones from above (reject and repropose).
        s = np.exp(_log_acoef(0, x))
        y = rng.random(m) * s
        accept = np.zeros(m, dtype=bool)
        undecided = np.ones(m, dtype=bool)
        n = 0
        while undecided.any():
            n += 1
            sub = np.flatnonzero(undecided)
            an = np.exp(_log_acoef(n, x[sub]))
            if n % 2 == 1:
                s[sub] -= an
                hit = y[sub] <= s[sub]
                accept[sub[hit]] = True
            else:
                s[sub] += an
                hit = y[sub] > s[sub]
            undecided[sub[hit]] = False

        out[idx[accept]] = x[accept] / 4.0
        idx = idx[~accept]

    return out


def sample_pg(params: PGParams, rng: np.random.Generator) -> float:
    """Draw from PG(b, c) for integer b >= 0; b-fold convolution of PG(1, c)."""
    params.validate()
    b = int(params.b)
    if b == 0:
        return 0.0
    draws = sample_pg1_batch(np.full(b, params.c), rng)
    return float(draws.sum())


# ---------------------------------------------------------------------------
# Cholesky with bounded jitter
# ---------------------------------------------------------------------------

_jitter_events = 0


def jitter_event_count() -> int:
    return _jitter_events


def reset_jitter_count() -> None:
    global _jitter_events
    _jitter_events = 0


def chol_jitter(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding relative jitter on failure.

    Jitter starts at 1e-9 * trace/dim and escalates by decades at most three
    times; anything worse raises NumericalAbort so failures stay visible.
    """
    global _jitter_events
    mat = 0.5 * (mat + mat.T)
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    dim = mat.shape[0]
    base = 1e-9 * max(np.trace(mat) / dim, np.finfo(float).tiny)
    eye = np.eye(dim)
    for decade in range(4):
        _jitter_events += 1
        try:
            return np.linalg.cholesky(mat + base * 10.0**decade * eye)
        except np.linalg.LinAlgError:
            continue
    raise NumericalAbort(
        f"Cholesky failed for a {dim}x{dim} matrix after jitter up to "
        f"{base * 1e3:.3e}"
    )


# ---------------------------------------------------------------------------
# Gaussians
# ---------------------------------------------------------------------------

def info_to_moment(msg: InfoGaussian) -> tuple[np.ndarray, np.ndarray]:
    """Moment-form (mean, covariance) of an information-form Gaussian."""
    low = chol_jitter(msg.lam)
    eye = np.eye(msg.lam.shape[0])
    inv_low = np.linalg.solve(low, eye)
    cov = inv_low.T @ inv_low
    cov = 0.5 * (cov + cov.T)
    mean = cov @ msg.theta
    return mean, cov


def sample_info_gaussian(msg: InfoGaussian, rng: np.random.Generator) -> np.ndarray:
    """One draw from N^{-1}(theta, lam) without forming the covariance."""
    low = chol_jitter(msg.lam)
    mean = np.linalg.solve(low.T, np.linalg.solve(low, msg.theta))
    noise = np.linalg.solve(low.T, rng.standard_normal(msg.theta.shape[0]))
    return mean + noise


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov_low: np.ndarray) -> np.ndarray:
    """Gaussian log-density with a precomputed lower Cholesky of the covariance.

    x may be a single vector or an (n, d) batch; mean broadcasts likewise.
    """
    x = np.atleast_2d(x)
    resid = x - mean
    white = np.linalg.solve(cov_low, resid.T)
    quad = np.sum(white * white, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(cov_low)))
    d = cov_low.shape[0]
    out = -0.5 * (quad + logdet + d * math.log(2.0 * math.pi))
    return out if out.size > 1 else out[0]


# ---------------------------------------------------------------------------
# matrix-normal-inverse-Wishart
# ---------------------------------------------------------------------------

def sample_inv_wishart(s0: np.ndarray, n0: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw with scale s0 and degrees of freedom n0 > p - 1.

    Bartlett construction on the precision; valid for non-integer n0 and
    keeps all randomness on the supplied generator.
    """
    p = s0.shape[0]
    low_s = chol_jitter(s0)
    eye = np.eye(p)
    s_inv = np.linalg.solve(low_s.T, np.linalg.solve(low_s, eye))
    low_prec = chol_jitter(0.5 * (s_inv + s_inv.T))

    bart = np.zeros((p, p))
    for i in range(p):
        bart[i, i] = math.sqrt(rng.chisquare(n0 - i))
        bart[i, :i] = rng.standard_normal(i)
    # low_prec @ bart is the lower Cholesky factor of the Wishart draw.
    factor = low_prec @ bart
    inv_factor = np.linalg.solve(factor, eye)
    sigma = inv_factor.T @ inv_factor
    return 0.5 * (sigma + sigma.T)


def sample_mniw(params: MNIWParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw (coefficients, covariance) from an MNIW law.

    The covariance is inverse-Wishart(s0, n0); conditionally the coefficient
    matrix is matrix-normal with mean m0, row covariance equal to the drawn
    covariance and column covariance v0.
    """
    params.validate()
    sigma = sample_inv_wishart(params.s0, params.n0, rng)
    low_row = chol_jitter(sigma)
    low_col = chol_jitter(params.v0)
    noise = rng.standard_normal(params.m0.shape)
    coeff = params.m0 + low_row @ noise @ low_col.T
    return coeff, sigma


def mniw_posterior(prior: MNIWParams, regressors: np.ndarray, targets: np.ndarray) -> MNIWParams:
    """Conjugate MNIW update from regression data.

    regressors is (n, q) and targets (n, p) for the model
    target = coeff @ regressor + noise, noise ~ N(0, covariance).
    """
    v0_low = chol_jitter(prior.v0)
    eye_q = np.eye(prior.v0.shape[0])
    v0_inv = np.linalg.solve(v0_low.T, np.linalg.solve(v0_low, eye_q))

    s_uu = v0_inv + regressors.T @ regressors
    s_wu = prior.m0 @ v0_inv + targets.T @ regressors
    s_ww = prior.m0 @ v0_inv @ prior.m0.T + targets.T @ targets

    suu_low = chol_jitter(0.5 * (s_uu + s_uu.T))
    v_post = np.linalg.solve(suu_low.T, np.linalg.solve(suu_low, eye_q))
    v_post = 0.5 * (v_post + v_post.T)
    m_post = s_wu @ v_post
    s_post = prior.s0 + s_ww - m_post @ s_wu.T
    s_post = 0.5 * (s_post + s_post.T)
    return MNIWParams(m_post, v_post, s_post, prior.n0 + regressors.shape[0])


# ---------------------------------------------------------------------------
# discrete draws
# ---------------------------------------------------------------------------

def sample_dirichlet(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    DirichletParams(np.asarray(alpha, dtype=float)).validate()
    return rng.dirichlet(alpha)


def sample_categorical(log_probs: np.ndarray, rng: np.random.Generator) -> int:
    """Index draw from unnormalized log-probabilities."""
    shifted = log_probs - log_probs.max()
    probs = np.exp(shifted)
    cdf = np.cumsum(probs)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


def logsumexp_fast(arr: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Low-overhead logsumexp for small dense arrays; -inf slices stay -inf."""
    top = np.max(arr, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(arr - safe).sum(axis=axis))
    if axis is None:
        return float(out + safe.ravel()[0])
    return out + np.squeeze(safe, axis=axis)
