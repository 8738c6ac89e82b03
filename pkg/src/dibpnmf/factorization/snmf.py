"""Sparse NMF baseline with an optional observation mask.

Minimises ``||W * (Y - A X^T)||_F^2 + lam (||A||_1 + ||X||_1)`` by
multiplicative updates; the L1 weight enters each update denominator.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, NumericalError
from .model import _as_data

FLOOR = 1e-12


def snmf_objective(Y, W, A, X, lam):
    resid = W * (Y - A @ X.T)
    return float(np.sum(resid * resid) + lam * (A.sum() + X.sum()))


def snmf_fit(Y, k, lambda_l1=0.0, iters=500, seed=0, A0=None, X0=None):
    """Fit ``Y ~ A X^T`` with nonnegative ``A`` (M x k) and ``X`` (N x k).

    Returns ``(A, X, objective)`` where ``objective[0]`` is the starting value
    and ``objective[i]`` the value after ``i`` sweeps.
    """
    Y = _as_data(Y)
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    V = Y.values
    W = Y.weights().astype(float)
    M, N = V.shape
    rng = np.random.default_rng(seed)
    WV = W * V
    scale = np.sqrt(max(WV.sum() / max(W.sum(), 1.0), FLOOR) / k)
    A = rng.uniform(0.1, 1.0, (M, k)) * scale if A0 is None else np.array(A0, dtype=float)
    X = rng.uniform(0.1, 1.0, (N, k)) * scale if X0 is None else np.array(X0, dtype=float)
    half = 0.5 * lambda_l1
    obj = [snmf_objective(V, W, A, X, lambda_l1)]
    for it in range(iters):
        A *= (WV @ X) / np.maximum((W * (A @ X.T)) @ X + half, FLOOR)
        np.maximum(A, FLOOR, out=A)
        X *= (WV.T @ A) / np.maximum((W * (A @ X.T)).T @ A + half, FLOOR)
        np.maximum(X, FLOOR, out=X)
        val = snmf_objective(V, W, A, X, lambda_l1)
        if not np.isfinite(val):
            raise NumericalError("SNMF objective became non-finite", iteration=it + 1)
        obj.append(val)
    return A, X, obj
