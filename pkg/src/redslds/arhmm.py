"""Autoregressive HMM fit by EM, used only to seed the Gibbs chain.

Emissions are AR(1) Gaussians on the projected series; the first point of
each sequence enters as a regressor only.  Restarts keep the best local
optimum by log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ARHMMResult", "fit_arhmm"]

_COV_FLOOR = 1e-8


@dataclass
class ARHMMResult:
    state_paths: list[np.ndarray]
    log_likelihood: float
    trans: np.ndarray
    init_probs: np.ndarray
    coeffs: np.ndarray
    biases: np.ndarray
    covs: np.ndarray
    ll_trace: list[float]


def _emission_loglik(series, coeffs, biases, covs):
    """(T, K) log-density table; row 0 is zero (no emission at the anchor)."""
    n_steps, dim = series.shape
    n_modes = coeffs.shape[0]
    out = np.zeros((n_steps, n_modes))
    for k in range(n_modes):
        low = np.linalg.cholesky(covs[k])
        resid = series[1:] - series[:-1] @ coeffs[k].T - biases[k]
        white = np.linalg.solve(low, resid.T)
        out[1:, k] = (
            -0.5 * np.sum(white * white, axis=0)
            - np.log(np.diag(low)).sum()
            - 0.5 * dim * np.log(2.0 * np.pi)
        )
    return out


def _forward_backward(log_ev, init_probs, trans):
    """Scaled Baum-Welch pass; returns responsibilities, transition counts
    and the sequence log-likelihood."""
    n_steps, n_modes = log_ev.shape
    shift = log_ev.max(axis=1)
    ev = np.exp(log_ev - shift[:, None])
    alpha = np.zeros((n_steps, n_modes))
    scale = np.zeros(n_steps)
    a = init_probs * ev[0]
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for t in range(1, n_steps):
        a = (alpha[t - 1] @ trans) * ev[t]
        scale[t] = a.sum()
        alpha[t] = a / scale[t]
    beta = np.ones((n_steps, n_modes))
    for t in range(n_steps - 2, -1, -1):
        beta[t] = (trans @ (ev[t + 1] * beta[t + 1])) / scale[t + 1]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = (alpha[:-1].T @ (ev[1:] * beta[1:] / scale[1:, None])) * trans
    return gamma, xi, float(np.log(scale).sum() + shift.sum())


def _m_step(series_list, gammas, xis, n_modes, dim):
    init_probs = np.zeros(n_modes)
    for gamma in gammas:
        init_probs += gamma[0]
    init_probs = (init_probs + 1e-12) / (init_probs + 1e-12).sum()

    trans = sum(xis) + 1e-12
    trans /= trans.sum(axis=1, keepdims=True)

    coeffs = np.zeros((n_modes, dim, dim))
    biases = np.zeros((n_modes, dim))
    covs = np.zeros((n_modes, dim, dim))
    for k in range(n_modes):
        gram = np.zeros((dim + 1, dim + 1))
        cross = np.zeros((dim + 1, dim))
        total = 0.0
        for series, gamma in zip(series_list, gammas):
            design = np.column_stack([series[:-1], np.ones(len(series) - 1)])
            weights = gamma[1:, k]
            gram += (design * weights[:, None]).T @ design
            cross += (design * weights[:, None]).T @ series[1:]
            total += weights.sum()
        try:
            beta = np.linalg.solve(gram, cross)
        except np.linalg.LinAlgError:
            beta = np.linalg.lstsq(gram, cross, rcond=None)[0]
        coeffs[k] = beta[:dim].T
        biases[k] = beta[dim]
        acc = np.zeros((dim, dim))
        for series, gamma in zip(series_list, gammas):
            resid = series[1:] - series[:-1] @ coeffs[k].T - biases[k]
            acc += (resid * gamma[1:, k][:, None]).T @ resid
        cov = acc / max(total, 1e-12)
        cov = 0.5 * (cov + cov.T)
        eigs = np.linalg.eigvalsh(cov)
        if eigs.min() < _COV_FLOOR:
            cov += (_COV_FLOOR - min(eigs.min(), 0.0)) * np.eye(dim)
        covs[k] = cov
    return init_probs, trans, coeffs, biases, covs


def _viterbi(log_ev, log_pi, log_trans):
    n_steps, n_modes = log_ev.shape
    score = log_pi + log_ev[0]
    back = np.zeros((n_steps, n_modes), dtype=int)
    for t in range(1, n_steps):
        cand = score[:, None] + log_trans
        back[t] = cand.argmax(axis=0)
        score = cand[back[t], np.arange(n_modes)] + log_ev[t]
    path = np.zeros(n_steps, dtype=int)
    path[-1] = score.argmax()
    for t in range(n_steps - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _em_once(series_list, n_modes, rng, max_iter, rel_tol):
    dim = series_list[0].shape[1]
    gammas = []
    for series in series_list:
        assign = rng.integers(n_modes, size=len(series))
        gamma = np.zeros((len(series), n_modes))
        gamma[np.arange(len(series)), assign] = 1.0
        gammas.append(gamma)
    xis = [np.ones((n_modes, n_modes)) for _ in series_list]
    init_probs, trans, coeffs, biases, covs = _m_step(
        series_list, gammas, xis, n_modes, dim
    )

    prev_ll = -np.inf
    ll = -np.inf
    trace = []
    for _ in range(max_iter):
        gammas, xis, ll = [], [], 0.0
        for series in series_list:
            log_ev = _emission_loglik(series, coeffs, biases, covs)
            gamma, xi, seq_ll = _forward_backward(log_ev, init_probs, trans)
            gammas.append(gamma)
            xis.append(xi)
            ll += seq_ll
        trace.append(ll)
        if np.isfinite(prev_ll) and abs(ll - prev_ll) < rel_tol * abs(prev_ll):
            break
        prev_ll = ll
        init_probs, trans, coeffs, biases, covs = _m_step(
            series_list, gammas, xis, n_modes, dim
        )
    return ll, init_probs, trans, coeffs, biases, covs, trace


def fit_arhmm(
    series_list: list[np.ndarray],
    n_modes: int,
    n_restarts: int,
    rng: np.random.Generator,
    max_iter: int = 200,
    rel_tol: float = 1e-6,
) -> ARHMMResult:
    """Best-of-restarts EM fit with Viterbi decoding of every sequence."""
    if min(len(series) for series in series_list) < n_modes + 2:
        raise ValueError("each series must be at least n_modes + 2 long")
    best = None
    for _ in range(max(1, n_restarts)):
        fit = _em_once(series_list, n_modes, rng, max_iter, rel_tol)
        if best is None or fit[0] > best[0]:
            best = fit
    ll, init_probs, trans, coeffs, biases, covs, trace = best
    log_pi, log_trans = np.log(init_probs), np.log(trans)
    paths = [
        _viterbi(_emission_loglik(series, coeffs, biases, covs), log_pi, log_trans)
        for series in series_list
    ]
    return ARHMMResult(
        state_paths=paths,
        log_likelihood=ll,
        trans=trans,
        init_probs=init_probs,
        coeffs=coeffs,
        biases=biases,
        covs=covs,
        ll_trace=trace,
    )
