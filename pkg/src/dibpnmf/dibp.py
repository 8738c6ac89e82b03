"""Coupled stick-breaking states and their Markov-chain updates.

Two families live here:

* paired chains ``mu1``, ``mu2`` whose stick ratios ``nu_k = mu_k / mu_{k-1}``
  are drawn jointly from a bivariate beta or an FGM copula, and
* a single shared chain ``mu`` thresholded through per-column Gaussian
  variables (the GP-coupled construction).

Columns are indexed from 0. The stick before column 0 is fixed at 1, and the
last column has no successor factor in its conditional density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy import special

from .errors import ContractError, DomainError
from .stats import (
    NEG_INF,
    BivariateBetaParams,
    FgmParams,
    GaussKernelParams,
    beta1_logpdf,
    bivariate_beta_logpdf,
    bivariate_beta_sample,
    fgm_pair_logpdf,
    fgm_pair_sample,
    gamma_logpdf,
    truncated_beta_sample,
    truncated_normal_sample,
)

Coupling = Union[BivariateBetaParams, FgmParams]

_TINY = 1e-300


@dataclass
class PairedStickState:
    mu1: np.ndarray
    mu2: np.ndarray
    coupling: Coupling

    @property
    def K(self):
        return len(self.mu1)

    def copy(self):
        return PairedStickState(self.mu1.copy(), self.mu2.copy(), self.coupling)

    def ratios(self):
        """Stick ratios ``(nu1, nu2)`` recovered from the cumulative products."""
        prev1 = np.concatenate(([1.0], self.mu1[:-1]))
        prev2 = np.concatenate(([1.0], self.mu2[:-1]))
        return self.mu1 / prev1, self.mu2 / prev2


@dataclass
class GpStickState:
    mu: np.ndarray  # (K,)
    g: np.ndarray  # (K, 2)
    h1: np.ndarray  # (M, K)
    h2: np.ndarray  # (N, K)
    kernel: GaussKernelParams
    alpha: float = 1.0
    hs: float = 1.0

    @property
    def K(self):
        return len(self.mu)

    def copy(self):
        return GpStickState(
            self.mu.copy(), self.g.copy(), self.h1.copy(), self.h2.copy(), self.kernel, self.alpha, self.hs
        )


def pair_logpdf(nu1, nu2, coupling: Coupling):
    if isinstance(coupling, BivariateBetaParams):
        return bivariate_beta_logpdf(nu1, nu2, coupling)
    if isinstance(coupling, FgmParams):
        return fgm_pair_logpdf(nu1, nu2, coupling)
    raise DomainError(f"unknown coupling {coupling!r}")


def marginal_shapes(coupling: Coupling):
    """Beta(., 1) shapes of the two stick-ratio margins.

    These also set the truncated-beta proposal ``Beta(shape / K, 1)``.
    """
    if isinstance(coupling, BivariateBetaParams):
        return coupling.a, coupling.b
    if isinstance(coupling, FgmParams):
        return coupling.alpha1, coupling.alpha2
    raise DomainError(f"unknown coupling {coupling!r}")


def sample_pairs(coupling: Coupling, rng, size):
    if isinstance(coupling, BivariateBetaParams):
        return bivariate_beta_sample(coupling, rng, size)
    if isinstance(coupling, FgmParams):
        return fgm_pair_sample(coupling, rng, size)
    raise DomainError(f"unknown coupling {coupling!r}")


def chains_from_ratios(nu1, nu2):
    """Cumulative products, clipped away from 0 so logs stay finite."""
    nu1 = np.clip(np.asarray(nu1, dtype=float), _TINY, 1.0)
    nu2 = np.clip(np.asarray(nu2, dtype=float), _TINY, 1.0)
    return np.maximum(np.cumprod(nu1), _TINY), np.maximum(np.cumprod(nu2), _TINY)


def init_chains(coupling: Coupling, K, rng):
    """Draw ``K`` ratio pairs from the coupling and return the stick chains."""
    if K < 1:
        raise ContractError(f"K must be >= 1, got {K}")
    nu1, nu2 = sample_pairs(coupling, rng, K)
    # Ratios of exactly 1 sit on the boundary; nudge them inside.
    nu1 = np.minimum(nu1, 1.0 - 1e-16)
    nu2 = np.minimum(nu2, 1.0 - 1e-16)
    mu1, mu2 = chains_from_ratios(nu1, nu2)
    return PairedStickState(mu1, mu2, coupling)


# ---------------------------------------------------------------------------
# Paired-chain conditionals


def _ratio_term(prev1, prev2, cur1, cur2, coupling):
    """``log p(cur/prev pair) - log(prev1 prev2)``, the change-of-variables factor."""
    n1 = cur1 / prev1
    n2 = cur2 / prev2
    if not (0.0 < n1 < 1.0 and 0.0 < n2 < 1.0):
        return NEG_INF
    return pair_logpdf(n1, n2, coupling) - math.log(prev1) - math.log(prev2)


def _conditional_at(k, m1, m2, mu1, mu2, coupling):
    K = len(mu1)
    p1 = 1.0 if k == 0 else float(mu1[k - 1])
    p2 = 1.0 if k == 0 else float(mu2[k - 1])
    out = _ratio_term(p1, p2, m1, m2, coupling)
    if k < K - 1 and out > NEG_INF:
        out += _ratio_term(m1, m2, float(mu1[k + 1]), float(mu2[k + 1]), coupling)
    return out


def conditional_pair_logpdf(k, state: PairedStickState):
    """Log conditional density of ``(mu1[k], mu2[k])`` given the neighbouring sticks.

    Includes the normalising Jacobians, so for ``K == 1`` it equals the joint
    ratio density itself. Returns -inf if the ordering is violated.
    """
    if not 0 <= k < state.K:
        raise ContractError(f"column index {k} out of range for K={state.K}")
    return _conditional_at(k, float(state.mu1[k]), float(state.mu2[k]), state.mu1, state.mu2, state.coupling)


def column_bernoulli_loglik(mu_k, z_column):
    """Log-probability of a binary column under i.i.d. Bernoulli(mu_k)."""
    z = np.asarray(z_column)
    ones = int(z.sum())
    return _bernoulli_counts(mu_k, ones, z.size - ones)


def _bernoulli_counts(p, ones, zeros):
    out = 0.0
    if ones:
        if p <= 0.0:
            return NEG_INF
        out += ones * math.log(p)
    if zeros:
        if p >= 1.0:
            return NEG_INF
        out += zeros * math.log1p(-p)
    return out


def _interval(mu, k):
    lo = float(mu[k + 1]) if k < len(mu) - 1 else 0.0
    hi = float(mu[k - 1]) if k > 0 else 1.0
    return lo, hi


def stick_log_accept_ratio(k, state: PairedStickState, counts1, counts2, proposal):
    """Log M-H ratio for moving column ``k`` of both chains to ``proposal``.

    ``counts1`` and ``counts2`` are ``(ones, zeros)`` for column ``k`` of the two
    masks. The proposal density is the product of truncated Beta(shape/K, 1)
    laws; their truncation constants cancel because the interval is fixed.
    """
    K = state.K
    s1, s2 = marginal_shapes(state.coupling)
    q1, q2 = s1 / K, s2 / K
    c1, c2 = float(state.mu1[k]), float(state.mu2[k])
    n1, n2 = proposal

    def target(m1, m2):
        lp = _conditional_at(k, m1, m2, state.mu1, state.mu2, state.coupling)
        if lp == NEG_INF:
            return lp
        return lp + _bernoulli_counts(m1, *counts1) + _bernoulli_counts(m2, *counts2)

    new = target(n1, n2)
    if new == NEG_INF:
        return NEG_INF
    old = target(c1, c2)
    log_q_old = beta1_logpdf(c1, q1) + beta1_logpdf(c2, q2)
    log_q_new = beta1_logpdf(n1, q1) + beta1_logpdf(n2, q2)
    return new - old + log_q_old - log_q_new


def _column_counts(Z, k):
    ones = int(Z[:, k].sum())
    return ones, Z.shape[0] - ones


def _mh_column(k, state, counts1, counts2, rng):
    K = state.K
    s1, s2 = marginal_shapes(state.coupling)
    lo1, hi1 = _interval(state.mu1, k)
    lo2, hi2 = _interval(state.mu2, k)
    if lo1 >= hi1 or lo2 >= hi2:
        # Neighbours coincide; the column is pinned.
        return False
    prop = (
        truncated_beta_sample(s1 / K, lo1, hi1, rng),
        truncated_beta_sample(s2 / K, lo2, hi2, rng),
    )
    log_r = stick_log_accept_ratio(k, state, counts1, counts2, prop)
    if log_r >= 0.0 or rng.random() < math.exp(log_r):
        state.mu1[k], state.mu2[k] = prop
        return True
    return False


def mh_update_sticks(k, state: PairedStickState, Z1, Z2, rng):
    """One Metropolis-Hastings move of column ``k`` of both chains, in place.

    Returns whether the proposal was accepted.
    """
    return _mh_column(k, state, _column_counts(Z1, k), _column_counts(Z2, k), rng)


def sweep_sticks(state: PairedStickState, Z1, Z2, rng):
    """Update every column in order; returns the number of accepted moves."""
    ones1 = Z1.sum(axis=0).astype(int)
    ones2 = Z2.sum(axis=0).astype(int)
    M, N = Z1.shape[0], Z2.shape[0]
    accepted = 0
    for k in range(state.K):
        accepted += _mh_column(
            k, state, (int(ones1[k]), M - int(ones1[k])), (int(ones2[k]), N - int(ones2[k])), rng
        )
    return accepted


# ---------------------------------------------------------------------------
# GP-coupled shared sticks


def init_gp_state(K, M, N, rng, kernel=None, alpha=1.0, hs=1.0):
    """Prior draw of the shared-stick state, plus the masks its thresholds imply."""
    if K < 1:
        raise ContractError(f"K must be >= 1, got {K}")
    kernel = kernel or GaussKernelParams()
    nu = np.minimum(rng.beta(alpha, 1.0, K), 1.0 - 1e-16)
    mu = np.maximum(np.cumprod(np.maximum(nu, _TINY)), _TINY)
    cov = kernel.covariance()
    g = rng.multivariate_normal(np.zeros(2), cov, size=K, method="cholesky")
    h1 = g[:, 0] + kernel.eta * rng.standard_normal((M, K))
    h2 = g[:, 1] + kernel.eta * rng.standard_normal((N, K))
    state = GpStickState(mu, g, h1, h2, kernel, alpha, hs)
    thr = gp_thresholds(state)
    return state, (h1 < thr).astype(np.int8), (h2 < thr).astype(np.int8)


def gp_thresholds(state: GpStickState, mu=None):
    """``F^{-1}(mu_k | 0, sigma^2 + eta^2)``; the kernel diagonal is the same for both matrices."""
    mu = state.mu if mu is None else mu
    scale = math.sqrt(state.kernel.sigma**2 + state.kernel.eta**2)
    return special.ndtri(mu) * scale


def _gamma_from_mu(mu, g_t, kernel):
    if not 0.0 < mu < 1.0:
        raise DomainError(f"stick weight must lie in (0, 1), got {mu}")
    scale = math.sqrt(kernel.sigma**2 + kernel.eta**2)
    return float(special.ndtr((special.ndtri(mu) * scale - g_t) / kernel.eta))


def gp_gamma(k, t, state: GpStickState):
    """Inclusion probability for column ``k`` of matrix ``t`` (1 or 2)."""
    if t not in (1, 2):
        raise ContractError(f"matrix index must be 1 or 2, got {t}")
    return _gamma_from_mu(float(state.mu[k]), float(state.g[k, t - 1]), state.kernel)


def gp_gamma_all(state: GpStickState):
    """``(2, K)`` array of inclusion probabilities for both matrices."""
    thr = gp_thresholds(state)
    return special.ndtr((thr[None, :] - state.g.T) / state.kernel.eta)


def gp_mu_log_target(k, mu_k, state: GpStickState, counts1, counts2):
    """Unnormalised log conditional of the shared stick ``mu_k``."""
    if not 0.0 < mu_k < 1.0:
        return NEG_INF
    lp = -math.log(mu_k)
    if k == state.K - 1:
        lp += state.alpha * math.log(mu_k)
    for t, (ones, zeros) in ((0, counts1), (1, counts2)):
        if ones or zeros:
            gam = _gamma_from_mu(mu_k, float(state.g[k, t]), state.kernel)
            lp += _bernoulli_counts(gam, ones, zeros)
    return lp


def _gp_mu_step(k, state, counts1, counts2, rng, proposal=None):
    K = state.K
    lo, hi = _interval(state.mu, k)
    q = state.alpha / K
    if proposal is None:
        if lo >= hi:
            return False
        proposal = truncated_beta_sample(q, lo, hi, rng)
    cur = float(state.mu[k])
    new = gp_mu_log_target(k, proposal, state, counts1, counts2)
    if new == NEG_INF:
        return False
    log_r = new - gp_mu_log_target(k, cur, state, counts1, counts2) + beta1_logpdf(cur, q) - beta1_logpdf(proposal, q)
    if log_r >= 0.0 or rng.random() < math.exp(log_r):
        state.mu[k] = proposal
        return True
    return False


def gp_mu_log_accept_ratio(k, state: GpStickState, Z1, Z2, proposal):
    K = state.K
    q = state.alpha / K
    c1, c2 = _column_counts(Z1, k), _column_counts(Z2, k)
    cur = float(state.mu[k])
    new = gp_mu_log_target(k, proposal, state, c1, c2)
    if new == NEG_INF:
        return NEG_INF
    return new - gp_mu_log_target(k, cur, state, c1, c2) + beta1_logpdf(cur, q) - beta1_logpdf(proposal, q)


def gp_update_mu(k, state: GpStickState, Z1, Z2, rng):
    """M-H move of the shared stick ``mu_k`` with a truncated Beta(alpha/K, 1) proposal."""
    return _gp_mu_step(k, state, _column_counts(Z1, k), _column_counts(Z2, k), rng)


def gp_sweep_mu(state: GpStickState, Z1, Z2, rng):
    ones1 = Z1.sum(axis=0).astype(int)
    ones2 = Z2.sum(axis=0).astype(int)
    M, N = Z1.shape[0], Z2.shape[0]
    accepted = 0
    for k in range(state.K):
        accepted += _gp_mu_step(k, state, (int(ones1[k]), M - int(ones1[k])), (int(ones2[k]), N - int(ones2[k])), rng)
    return accepted


def gp_g_posterior(k, state: GpStickState):
    """Mean and covariance of the Gaussian conditional of ``g_k``."""
    eta2 = state.kernel.eta**2
    prior_prec = np.linalg.inv(state.kernel.covariance())
    counts = np.array([state.h1.shape[0], state.h2.shape[0]], dtype=float)
    sums = np.array([state.h1[:, k].sum(), state.h2[:, k].sum()])
    cov = np.linalg.inv(prior_prec + np.diag(counts / eta2))
    return cov @ sums / eta2, cov


def gp_update_g(k, state: GpStickState, rng):
    """Exact Gibbs draw of ``g_k``."""
    mean, cov = gp_g_posterior(k, state)
    chol = np.linalg.cholesky(cov)
    state.g[k] = mean + chol @ rng.standard_normal(2)
    return state.g[k]


def gp_sweep_g(state: GpStickState, rng):
    for k in range(state.K):
        gp_update_g(k, state, rng)


def gp_update_h(n, k, t, state: GpStickState, Z, rng):
    """Truncated-normal draw of one threshold variable ``h^t_{n,k}``.

    ``Z`` is the mask of matrix ``t``. Support is below the stick threshold
    when the entry is on and above it otherwise.
    """
    h = state.h1 if t == 1 else state.h2
    thr = float(gp_thresholds(state, state.mu[k : k + 1])[0])
    side = "below" if Z[n, k] else "above"
    h[n, k] = truncated_normal_sample(state.g[k, t - 1], state.kernel.eta**2, thr, side, rng)
    return h[n, k]


def gp_sweep_h(state: GpStickState, Z1, Z2, rng, diagnostics=None):
    """Redraw every threshold variable, vectorised per matrix."""
    thr = gp_thresholds(state)
    var = state.kernel.eta**2
    for t, (h, Z) in enumerate(((state.h1, Z1), (state.h2, Z2))):
        if h.size == 0:
            continue
        mean = np.broadcast_to(state.g[:, t], h.shape)
        bound = np.broadcast_to(thr, h.shape)
        on = Z.astype(bool)
        below = truncated_normal_sample(mean[on], var, bound[on], "below", rng, diagnostics)
        above = truncated_normal_sample(mean[~on], var, bound[~on], "above", rng, diagnostics)
        h[on] = below
        h[~on] = above


def _mvn2_logpdf_rows(g, cov):
    """Sum of zero-mean bivariate normal log-densities over the rows of ``g``."""
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return NEG_INF
    if g.shape[0] == 0:
        return 0.0
    sol = np.linalg.solve(chol, g.T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(-0.5 * (sol**2).sum() - g.shape[0] * (math.log(2.0 * math.pi) + 0.5 * logdet))


def gp_s_log_target(s, state: GpStickState):
    """Log density of ``log s``: gamma(hs, 1) prior, kernel likelihood of g, and Jacobian ``s``."""
    if s <= 0:
        return NEG_INF
    return gamma_logpdf(s, state.hs, 1.0) + _mvn2_logpdf_rows(state.g, state.kernel.covariance(s)) + math.log(s)


def gp_update_s(state: GpStickState, rng, step=0.1, proposal=None):
    """Random-walk M-H move of the kernel length scale in log space.

    Returns whether the move was accepted; ``state.kernel`` is replaced on accept.
    """
    cur = state.kernel.s
    if proposal is None:
        proposal = cur * math.exp(step * rng.standard_normal())
    log_r = gp_s_log_target(proposal, state) - gp_s_log_target(cur, state)
    if log_r >= 0.0 or rng.random() < math.exp(log_r):
        state.kernel = replace(state.kernel, s=proposal)
        return True
    return False


def effective_k(Z1, Z2):
    """Number of columns switched on somewhere in both masks."""
    if Z1.shape[1] != Z2.shape[1]:
        raise ContractError(f"masks have {Z1.shape[1]} and {Z2.shape[1]} columns")
    return int(np.sum(Z1.any(axis=0) & Z2.any(axis=0)))
