"""Compiled inner scans for the mask and loading updates.

Each scan walks the rows of one factor matrix. The caller passes the data,
weights and running reconstruction ``R = A @ X.T`` oriented so that rows of
``R`` match rows of the matrix being updated (i.e. transposed for side 2).
All randomness arrives as pre-drawn arrays so results depend only on the
caller's generator.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def two_state_prob(logp1, logp0):
    """Normalise two log-weights; returns ``(P(1), P(0))``."""
    if logp1 == -np.inf and logp0 == -np.inf:
        return 0.5, 0.5
    top = max(logp1, logp0)
    w1 = math.exp(logp1 - top)
    w0 = math.exp(logp0 - top)
    tot = w1 + w0
    return w1 / tot, w0 / tot


@njit(cache=True)
def z_scan(Y, W, R, Vs, Zs, Vo, Zo, prior, eps, U):
    """Gibbs pass over every entry of the mask ``Zs``; updates ``Zs`` and ``R`` in place.

    Returns the number of entries that flipped.
    """
    rows, K = Vs.shape
    cols = Vo.shape[0]
    flips = 0
    for m in range(rows):
        for k in range(K):
            cur = Zs[m, k]
            p = prior[k]
            ll0 = 0.0
            ll1 = 0.0
            vmk = Vs[m, k]
            if vmk != 0.0:
                for n in range(cols):
                    if W[m, n] == 0:
                        continue
                    c = vmk * Vo[n, k] * Zo[n, k]
                    if c == 0.0:
                        continue
                    base = R[m, n] - cur * c + eps
                    r1 = base + c
                    y = Y[m, n]
                    ll0 += -math.log(base) - y / base
                    ll1 += -math.log(r1) - y / r1
            if p <= 0.0:
                new = 0
            elif p >= 1.0:
                new = 1
            else:
                p1, _ = two_state_prob(math.log(p) + ll1, math.log1p(-p) + ll0)
                new = 1 if U[m, k] < p1 else 0
            if new != cur:
                flips += 1
                delta = (new - cur) * vmk
                if delta != 0.0:
                    for n in range(cols):
                        R[m, n] += delta * Vo[n, k] * Zo[n, k]
                Zs[m, k] = new
    return flips


@njit(cache=True)
def v_scan(Y, W, R, Vs, Zs, Vo, Zo, eps, P, U):
    """Loading pass: prior redraw where the mask is off, independence M-H elsewhere.

    ``P`` holds gamma-prior proposals and ``U`` uniforms, both shaped like ``Vs``.
    Returns ``(accepted, attempted)`` for the M-H moves.
    """
    rows, K = Vs.shape
    cols = Vo.shape[0]
    accepted = 0
    attempted = 0
    for m in range(rows):
        for k in range(K):
            vnew = P[m, k]
            if Zs[m, k] == 0:
                Vs[m, k] = vnew
                continue
            attempted += 1
            vold = Vs[m, k]
            diff = 0.0
            for n in range(cols):
                if W[m, n] == 0:
                    continue
                c = Vo[n, k] * Zo[n, k]
                if c == 0.0:
                    continue
                r_old = R[m, n] + eps
                r_new = r_old + (vnew - vold) * c
                y = Y[m, n]
                diff += (-math.log(r_new) - y / r_new) - (-math.log(r_old) - y / r_old)
            if U[m, k] < math.exp(min(diff, 0.0)):
                accepted += 1
                delta = vnew - vold
                for n in range(cols):
                    R[m, n] += delta * Vo[n, k] * Zo[n, k]
                Vs[m, k] = vnew
    return accepted, attempted
