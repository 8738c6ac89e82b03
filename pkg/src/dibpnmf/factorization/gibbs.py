"""Metropolis-within-Gibbs samplers for the three coupled-IBP factorizations.

Per-iteration schedules:

* ``bb``:     sticks, Z, (a, b), V
* ``copula``: sticks, Z, (alpha1, alpha2), rho, V
* ``gp``:     sticks, Z, g, h, s, V
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import special

from .. import dibp
from ..dibp import GpStickState, PairedStickState
from ..errors import ContractError, SamplerAbort
from ..stats import BivariateBetaParams, FgmParams, GaussKernelParams, gamma_logpdf
from . import _kernels
from .config import ModelConfig
from .model import DataMatrix, FactorState, _as_data, log_likelihood

NEG_INF = -math.inf


# ---------------------------------------------------------------------------
# Mask and loading updates


def inclusion_probs(sticks, side):
    """Per-column prior inclusion probabilities for mask ``side`` (1 or 2)."""
    if isinstance(sticks, PairedStickState):
        return np.asarray(sticks.mu1 if side == 1 else sticks.mu2, dtype=float)
    if isinstance(sticks, GpStickState):
        return np.ascontiguousarray(dibp.gp_gamma_all(sticks)[side - 1])
    return np.asarray(sticks, dtype=float)


def _oriented(side, Y, state, R):
    W = Y.weights()
    if side == 1:
        return Y.values, W, R, state.V1, state.Z1, state.V2, state.Z2
    if side == 2:
        return Y.values.T, W.T, R.T, state.V2, state.Z2, state.V1, state.Z1
    raise ContractError(f"side must be 1 or 2, got {side}")


def update_Z(side, state: FactorState, Y, sticks, rng, epsilon=0.01):
    """Gibbs pass over one binary mask; returns the number of flipped entries.

    ``sticks`` may be a stick state or an explicit vector of inclusion
    probabilities.
    """
    Y = _as_data(Y)
    prior = inclusion_probs(sticks, side)
    R = state.A @ state.X.T
    Yo, Wo, Ro, Vs, Zs, Vo, Zo = _oriented(side, Y, state, R)
    U = rng.random(Vs.shape)
    return int(_kernels.z_scan(Yo, Wo, Ro, Vs, Zs, Vo, Zo, prior, float(epsilon), U))


def z_conditional(side, m, k, state: FactorState, Y, p_k, epsilon=0.01):
    """``(P(z=1), P(z=0))`` for one mask entry with everything else held fixed."""
    Y = _as_data(Y)
    R = state.A @ state.X.T
    Yo, Wo, Ro, Vs, Zs, Vo, Zo = _oriented(side, Y, state, R)
    c = Vs[m, k] * Vo[:, k] * Zo[:, k]
    base = Ro[m] - Zs[m, k] * c + epsilon
    obs = Wo[m] != 0
    ll0 = float(np.sum((-np.log(base) - Yo[m] / base)[obs]))
    ll1 = float(np.sum((-np.log(base + c) - Yo[m] / (base + c))[obs]))
    lp1 = math.log(p_k) + ll1 if p_k > 0 else NEG_INF
    lp0 = math.log1p(-p_k) + ll0 if p_k < 1 else NEG_INF
    return _kernels.two_state_prob(lp1, lp0)


def update_V(side, state: FactorState, Y, config: ModelConfig, rng):
    """Loading pass for one side; returns ``(accepted, attempted)`` M-H counts."""
    Y = _as_data(Y)
    tau = config.tau1 if side == 1 else config.tau2
    R = state.A @ state.X.T
    Yo, Wo, Ro, Vs, Zs, Vo, Zo = _oriented(side, Y, state, R)
    P = rng.standard_exponential(Vs.shape) / tau
    U = rng.random(Vs.shape)
    acc, att = _kernels.v_scan(Yo, Wo, Ro, Vs, Zs, Vo, Zo, float(config.epsilon), P, U)
    return int(acc), int(att)


def v_log_accept_ratio(side, m, k, state: FactorState, Y, proposal, epsilon=0.01):
    """Log likelihood ratio driving the independence M-H move of one loading."""
    Y = _as_data(Y)
    R = state.A @ state.X.T
    Yo, Wo, Ro, Vs, Zs, Vo, Zo = _oriented(side, Y, state, R)
    if Zs[m, k] == 0:
        return 0.0
    c = Vo[:, k] * Zo[:, k]
    r_old = Ro[m] + epsilon
    r_new = r_old + (proposal - Vs[m, k]) * c
    obs = Wo[m] != 0
    lo = (-np.log(r_old) - Yo[m] / r_old)[obs]
    ln = (-np.log(r_new) - Yo[m] / r_new)[obs]
    return float(np.sum(ln - lo))


# ---------------------------------------------------------------------------
# Coupling-parameter updates


def _safe_ratios(sticks: PairedStickState):
    nu1, nu2 = sticks.ratios()
    lo, hi = 1e-300, 1.0 - 1e-16
    return np.clip(nu1, lo, hi), np.clip(nu2, lo, hi)


def bb_theta_log_target(a, b, nu1, nu2, hp_shape=1.0, hp_rate=1.0):
    """Log posterior of ``(log a, log b)`` given stick-ratio pairs, with ``c = 1``."""
    if a <= 0 or b <= 0:
        return NEG_INF
    c = 1.0
    log_norm = special.gammaln(a) + special.gammaln(b) + special.gammaln(c) - special.gammaln(a + b + c)
    dens = (
        (a - 1.0) * np.log(nu1)
        + (b - 1.0) * np.log(nu2)
        + (b + c - 1.0) * np.log1p(-nu1)
        + (a + c - 1.0) * np.log1p(-nu2)
        - (a + b + c) * np.log1p(-nu1 * nu2)
    ).sum() - len(nu1) * log_norm
    prior = gamma_logpdf(a, hp_shape, hp_rate) + gamma_logpdf(b, hp_shape, hp_rate)
    return float(dens + prior + math.log(a) + math.log(b))


def update_theta_bb(sticks: PairedStickState, rng, hp_shape=1.0, hp_rate=1.0, step=0.1, proposal=None):
    """Joint log-space random-walk move of ``(a, b)``; returns whether it was accepted."""
    cp = sticks.coupling
    if proposal is None:
        z = rng.standard_normal(2)
        proposal = (cp.a * math.exp(step * z[0]), cp.b * math.exp(step * z[1]))
    nu1, nu2 = _safe_ratios(sticks)
    log_r = bb_theta_log_target(*proposal, nu1, nu2, hp_shape, hp_rate) - bb_theta_log_target(
        cp.a, cp.b, nu1, nu2, hp_shape, hp_rate
    )
    if log_r >= 0.0 or rng.random() < math.exp(log_r):
        sticks.coupling = BivariateBetaParams(proposal[0], proposal[1], cp.c)
        return True
    return False


def _fgm_copula_terms(nu1, nu2, rho, alpha1, alpha2):
    u = np.power(nu1, alpha1)
    v = np.power(nu2, alpha2)
    d = 1.0 + rho * (2.0 * u - 1.0) * (2.0 * v - 1.0)
    if np.any(d <= 0):
        return NEG_INF
    return float(np.log(d).sum())


def copula_alpha_log_target(alpha1, alpha2, rho, nu1, nu2, hp_shape=1.0, hp_rate=1.0):
    """Log posterior of ``(log alpha1, log alpha2)``: prior times the FGM joint density."""
    if alpha1 <= 0 or alpha2 <= 0:
        return NEG_INF
    cop = _fgm_copula_terms(nu1, nu2, rho, alpha1, alpha2)
    if cop == NEG_INF:
        return NEG_INF
    K = len(nu1)
    margins = (
        K * math.log(alpha1)
        + (alpha1 - 1.0) * float(np.log(nu1).sum())
        + K * math.log(alpha2)
        + (alpha2 - 1.0) * float(np.log(nu2).sum())
    )
    prior = gamma_logpdf(alpha1, hp_shape, hp_rate) + gamma_logpdf(alpha2, hp_shape, hp_rate)
    return cop + margins + prior + math.log(alpha1) + math.log(alpha2)


def copula_rho_log_target(rho, alpha1, alpha2, nu1, nu2):
    if not -1.0 <= rho <= 1.0:
        return NEG_INF
    return _fgm_copula_terms(nu1, nu2, rho, alpha1, alpha2)


def update_theta_copula(sticks: PairedStickState, rng, hp_shape=1.0, hp_rate=1.0, step=0.1):
    """Move ``(alpha1, alpha2)`` by log-space random walk, then ``rho`` by a Uniform(-1, 1)
    independence proposal. Returns ``(alpha_accepted, rho_accepted)``.
    """
    cp = sticks.coupling
    nu1, nu2 = _safe_ratios(sticks)
    z = rng.standard_normal(2)
    a1, a2 = cp.alpha1 * math.exp(step * z[0]), cp.alpha2 * math.exp(step * z[1])
    log_r = copula_alpha_log_target(a1, a2, cp.rho, nu1, nu2, hp_shape, hp_rate) - copula_alpha_log_target(
        cp.alpha1, cp.alpha2, cp.rho, nu1, nu2, hp_shape, hp_rate
    )
    acc_alpha = log_r >= 0.0 or rng.random() < math.exp(log_r)
    if acc_alpha:
        cp = FgmParams(cp.rho, a1, a2)
    rho_new = rng.uniform(-1.0, 1.0)
    log_r = copula_rho_log_target(rho_new, cp.alpha1, cp.alpha2, nu1, nu2) - copula_rho_log_target(
        cp.rho, cp.alpha1, cp.alpha2, nu1, nu2
    )
    acc_rho = log_r >= 0.0 or rng.random() < math.exp(log_r)
    if acc_rho:
        cp = FgmParams(rho_new, cp.alpha1, cp.alpha2)
    sticks.coupling = cp
    return bool(acc_alpha), bool(acc_rho)


# ---------------------------------------------------------------------------
# Driver


ACCEPT_KEYS = {
    "bb": ("sticks", "theta", "V"),
    "copula": ("sticks", "alpha", "rho", "V"),
    "gp": ("sticks", "s", "V"),
}
THETA_KEYS = {
    "bb": ("a", "b"),
    "copula": ("alpha1", "alpha2", "rho"),
    "gp": ("s",),
}


def theta_values(sticks):
    if isinstance(sticks, GpStickState):
        return {"s": sticks.kernel.s}
    cp = sticks.coupling
    if isinstance(cp, BivariateBetaParams):
        return {"a": cp.a, "b": cp.b}
    return {"alpha1": cp.alpha1, "alpha2": cp.alpha2, "rho": cp.rho}


@dataclass
class Trace:
    """Per-iteration diagnostics plus the retained (post burn-in, thinned) samples."""

    model: str
    burn_in: int
    thin: int
    initial_loglik: float = NEG_INF
    loglik: list = field(default_factory=list)
    effective_k: list = field(default_factory=list)
    accept: dict = field(default_factory=dict)
    theta: dict = field(default_factory=dict)
    retained: list = field(default_factory=list)  # iteration indices
    samples: list = field(default_factory=list)  # FactorState copies, if kept
    best_index: int = -1
    best_loglik: float = NEG_INF

    def __post_init__(self):
        for key in ACCEPT_KEYS[self.model]:
            self.accept.setdefault(key, [])
        for key in THETA_KEYS[self.model]:
            self.theta.setdefault(key, [])

    def __len__(self):
        return len(self.loglik)

    def is_kept(self, i):
        """Whether iteration ``i`` falls on the thinning cadence (burn-in included)."""
        return (i - self.burn_in) % self.thin == 0

    def rows(self):
        """Trace rows at the thinning cadence, burn-in rows flagged rather than dropped."""
        for i in range(len(self.loglik)):
            if not self.is_kept(i):
                continue
            row = {"iteration": i, "burn_in": int(i < self.burn_in), "loglik": self.loglik[i],
                   "effective_k": self.effective_k[i]}
            for key, vals in self.accept.items():
                row[f"accept_{key}"] = vals[i]
            for key, vals in self.theta.items():
                row[key] = vals[i]
            yield row


def _rate(acc, att):
    return acc / att if att else math.nan


class GibbsSampler:
    """Owns one chain: data, configuration, random stream and current state."""

    def __init__(self, Y, config: ModelConfig, rng=None, state=None, sticks=None, iteration=0):
        self.Y = _as_data(Y)
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.iteration = iteration
        M, N = self.Y.shape
        if state is None:
            state, sticks = self._initial_state(M, N)
        self.state = state
        self.sticks = sticks
        self.diagnostics = {}
        self.best_state = None
        self.best_sticks = None
        self.best_rng_state = None
        self.best_iteration = -1

    def _initial_state(self, M, N):
        cfg, rng = self.config, self.rng
        K = cfg.K
        if cfg.model == "gp":
            kernel = GaussKernelParams(cfg.sigma, cfg.s0, cfg.eta, cfg.t1, cfg.t2)
            sticks, Z1, Z2 = dibp.init_gp_state(K, M, N, rng, kernel, cfg.alpha, cfg.hs)
        else:
            if cfg.model == "bb":
                coupling = BivariateBetaParams(cfg.a0, cfg.b0, 1.0)
            else:
                coupling = FgmParams(cfg.rho0, cfg.alpha1, cfg.alpha2)
            sticks = dibp.init_chains(coupling, K, rng)
            Z1 = (rng.random((M, K)) < sticks.mu1).astype(np.int8)
            Z2 = (rng.random((N, K)) < sticks.mu2).astype(np.int8)
        V1 = rng.standard_exponential((M, K)) / cfg.tau1
        V2 = rng.standard_exponential((N, K)) / cfg.tau2
        return FactorState(V1, V2, Z1, Z2), sticks

    def log_likelihood(self):
        return log_likelihood(self.Y, self.state, self.config.epsilon)

    def _check(self, family, values=None):
        if values is not None:
            if not np.all(np.isfinite(values)):
                raise SamplerAbort(self.iteration, family, "non-finite parameter")
            return None
        ll = self.log_likelihood()
        if not math.isfinite(ll):
            raise SamplerAbort(self.iteration, family, f"log-likelihood {ll}")
        return ll

    def step(self):
        """Run one full iteration; returns a dict of diagnostics for it."""
        cfg, rng, st, sk, Y = self.config, self.rng, self.state, self.sticks, self.Y
        K = cfg.K
        acc = {}
        if cfg.model == "gp":
            acc["sticks"] = dibp.gp_sweep_mu(sk, st.Z1, st.Z2, rng) / K
            self._check("sticks", sk.mu)
        else:
            acc["sticks"] = dibp.sweep_sticks(sk, st.Z1, st.Z2, rng) / K
            self._check("sticks", np.concatenate((sk.mu1, sk.mu2)))

        update_Z(1, st, Y, sk, rng, cfg.epsilon)
        update_Z(2, st, Y, sk, rng, cfg.epsilon)
        self._check("Z")

        if cfg.model == "bb":
            acc["theta"] = float(update_theta_bb(sk, rng, cfg.hp_shape, cfg.hp_rate, cfg.theta_step))
            self._check("theta", [sk.coupling.a, sk.coupling.b])
        elif cfg.model == "copula":
            a, r = update_theta_copula(sk, rng, cfg.hp_shape, cfg.hp_rate, cfg.theta_step)
            acc["alpha"], acc["rho"] = float(a), float(r)
            self._check("theta", [sk.coupling.alpha1, sk.coupling.alpha2, sk.coupling.rho])
        else:
            dibp.gp_sweep_g(sk, rng)
            self._check("g", sk.g)
            dibp.gp_sweep_h(sk, st.Z1, st.Z2, rng, self.diagnostics)
            self._check("h", np.concatenate((sk.h1.ravel(), sk.h2.ravel())))
            acc["s"] = float(dibp.gp_update_s(sk, rng, cfg.s_step))
            self._check("s", [sk.kernel.s])

        a1, t1 = update_V(1, st, Y, cfg, rng)
        a2, t2 = update_V(2, st, Y, cfg, rng)
        acc["V"] = _rate(a1 + a2, t1 + t2)
        ll = self._check("V")
        self.iteration += 1
        return {"loglik": ll, "effective_k": dibp.effective_k(st.Z1, st.Z2), "accept": acc,
                "theta": theta_values(sk)}

    def run(self, n_iter=None, trace: Optional[Trace] = None):
        """Advance the chain, filling ``trace``; returns ``(best_state, trace)``."""
        cfg = self.config
        n_iter = cfg.max_iter - self.iteration if n_iter is None else n_iter
        if trace is None:
            trace = Trace(cfg.model, cfg.burn_in, cfg.thin, initial_loglik=self.log_likelihood())
        best = None
        for _ in range(n_iter):
            i = self.iteration
            rec = self.step()
            trace.loglik.append(rec["loglik"])
            trace.effective_k.append(rec["effective_k"])
            for key in trace.accept:
                trace.accept[key].append(rec["accept"][key])
            for key in trace.theta:
                trace.theta[key].append(rec["theta"][key])
            if i >= cfg.burn_in and trace.is_kept(i):
                trace.retained.append(i)
                if cfg.keep_samples:
                    trace.samples.append(self.state.copy())
                if rec["loglik"] > trace.best_loglik:
                    trace.best_loglik = rec["loglik"]
                    trace.best_index = i
                    best = (self.state.copy(), self.sticks.copy(), self.rng.bit_generator.state, i)
        if best is not None:
            self.best_state, self.best_sticks, self.best_rng_state, self.best_iteration = best
        return self.best_state, trace


def run_gibbs(Y, config: ModelConfig):
    """Run the configured sampler from a fresh seeded state.

    Returns ``(best_state, trace)`` where ``best_state`` is the retained sample
    with the largest data log-likelihood.
    """
    sampler = GibbsSampler(Y, config)
    return sampler.run()
