"""Data containers, the masked exponential likelihood and reconstruction helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ContractError, DomainError


@dataclass
class DataMatrix:
    """Nonnegative observations with an optional 0/1 mask (1 = observed/training)."""

    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ContractError(f"data must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise DomainError("data values must be finite and nonnegative")
        if self.mask is not None:
            self.mask = np.asarray(self.mask).astype(np.int8)
            if self.mask.shape != self.values.shape:
                raise ContractError(f"mask shape {self.mask.shape} != data shape {self.values.shape}")
            if np.any((self.mask != 0) & (self.mask != 1)):
                raise DomainError("mask entries must be 0 or 1")

    @property
    def shape(self):
        return self.values.shape

    def weights(self):
        """The mask as an int8 array, all ones when absent."""
        if self.mask is None:
            return np.ones(self.values.shape, dtype=np.int8)
        return self.mask

    def with_mask(self, mask):
        return DataMatrix(self.values, mask)


@dataclass
class FactorState:
    """Loadings ``V1`` (M x K), ``V2`` (N x K) and binary masks ``Z1``, ``Z2``."""

    V1: np.ndarray
    V2: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray

    @property
    def K(self):
        return self.V1.shape[1]

    @property
    def A(self):
        return self.V1 * self.Z1

    @property
    def X(self):
        return self.V2 * self.Z2

    def copy(self):
        return FactorState(self.V1.copy(), self.V2.copy(), self.Z1.copy(), self.Z2.copy())


def _as_data(Y):
    return Y if isinstance(Y, DataMatrix) else DataMatrix(Y)


def reconstruct(state: FactorState):
    """``(V1 * Z1) @ (V2 * Z2).T``."""
    return state.A @ state.X.T


def log_likelihood(Y, state: FactorState, epsilon):
    """Sum of exponential log-densities with mean ``(A X^T)_{mn} + epsilon`` over observed entries."""
    Y = _as_data(Y)
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    rate = reconstruct(state) + epsilon
    if rate.shape != Y.shape:
        raise ContractError(f"state reconstructs {rate.shape}, data is {Y.shape}")
    terms = -np.log(rate) - Y.values / rate
    return float(np.where(Y.weights() != 0, terms, 0.0).sum())


def recon_error_l1(Y, Yhat, mask=None):
    """Entrywise L1 distance, optionally restricted to entries where ``mask`` is 1."""
    Y = np.asarray(Y.values if isinstance(Y, DataMatrix) else Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape:
        raise ContractError(f"shape mismatch {Y.shape} vs {Yhat.shape}")
    diff = np.abs(Y - Yhat)
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != Y.shape:
            raise ContractError(f"mask shape {mask.shape} != {Y.shape}")
        diff = np.where(mask != 0, diff, 0.0)
    return float(diff.sum())


def flexibility_metric(Z1, Z2):
    """Mean absolute gap between per-column one-counts of the two masks."""
    Z1 = np.asarray(Z1)
    Z2 = np.asarray(Z2)
    if Z1.shape[1] != Z2.shape[1]:
        raise ContractError(f"masks have {Z1.shape[1]} and {Z2.shape[1]} columns")
    if Z1.shape[1] == 0:
        raise ContractError("flexibility needs at least one column")
    n1 = (Z1 != 0).sum(axis=0)
    n2 = (Z2 != 0).sum(axis=0)
    return float(np.abs(n1 - n2).mean())
