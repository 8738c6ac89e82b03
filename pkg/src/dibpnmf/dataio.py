"""Matrix and rating loaders, synthetic generators, and versioned snapshots.

File formats
------------
Dense CSV
    Comma-separated numbers, one matrix row per line, UTF-8, optional single
    header line. Every row must have the same number of cells.
Triplets
    ASCII lines ``row col value`` separated by spaces or tabs, 1-based
    indices. Blank lines and lines starting with ``#`` are skipped.
Snapshot
    JSON object ``{"format": "dibpnmf-snapshot", "version": 1,
    "checksum": <sha256 of the canonical payload>, "payload": {...}}``.
    Arrays are stored as ``{"dtype", "shape", "data"}`` with row-major data.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .dibp import GpStickState, PairedStickState
from .errors import ContractError, DomainError, ParseError, SnapshotError
from .factorization.config import ModelConfig
from .factorization.model import DataMatrix, FactorState
from .stats import BivariateBetaParams, FgmParams, GaussKernelParams

SNAPSHOT_FORMAT = "dibpnmf-snapshot"
SNAPSHOT_VERSION = 1


# ---------------------------------------------------------------------------
# Loaders


def _parse_number(text, path, line, column):
    try:
        val = float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell {text!r}", path, line, column) from None
    if not np.isfinite(val):
        raise ParseError(f"non-finite cell {text!r}", path, line, column)
    if val < 0:
        raise ParseError(f"negative value {val} (data must be nonnegative)", path, line, column)
    return val


def load_dense_csv(path, header=False):
    """Read a rectangular nonnegative CSV into a :class:`DataMatrix`."""
    path = Path(path)
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not cells or all(not c.strip() for c in cells):
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(f"expected {width} cells, found {len(cells)}", path, lineno)
            rows.append([_parse_number(c.strip(), path, lineno, j + 1) for j, c in enumerate(cells)])
    if not rows:
        raise ParseError("no data rows", path)
    return DataMatrix(np.array(rows, dtype=float))


@dataclass
class RatingTriplets:
    """Observed ratings as 0-based ``(rows, cols, values)`` on an ``M x N`` grid."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    shape: tuple

    def __post_init__(self):
        M, N = self.shape
        if np.any(self.rows < 0) or np.any(self.rows >= M) or np.any(self.cols < 0) or np.any(self.cols >= N):
            raise ContractError("rating index out of bounds")
        if np.any(self.values < 0):
            raise DomainError("ratings must be nonnegative")
        if len(set(zip(self.rows.tolist(), self.cols.tolist()))) != len(self.rows):
            raise ContractError("duplicate (row, col) rating")

    def __len__(self):
        return len(self.rows)

    def to_data(self):
        Y = np.zeros(self.shape)
        mask = np.zeros(self.shape, dtype=np.int8)
        Y[self.rows, self.cols] = self.values
        mask[self.rows, self.cols] = 1
        return DataMatrix(Y, mask)


def read_triplets(path, M, N):
    """Parse a 1-based ``row col value`` file into :class:`RatingTriplets`."""
    path = Path(path)
    rows, cols, vals = [], [], []
    seen = {}
    with open(path, encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"expected 'row col value', got {len(parts)} fields", path, lineno)
            try:
                r, c = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError("row and column must be integers", path, lineno) from None
            v = _parse_number(parts[2], path, lineno, 3)
            if not 1 <= r <= M:
                raise ParseError(f"row index {r} outside 1..{M}", path, lineno, 1)
            if not 1 <= c <= N:
                raise ParseError(f"column index {c} outside 1..{N}", path, lineno, 2)
            if (r, c) in seen:
                raise ParseError(f"duplicate entry ({r}, {c}), first seen on line {seen[(r, c)]}", path, lineno)
            seen[(r, c)] = lineno
            rows.append(r - 1)
            cols.append(c - 1)
            vals.append(v)
    return RatingTriplets(np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                          np.array(vals, dtype=float), (M, N))


def load_triplets(path, M, N):
    """Dense ``M x N`` matrix with the observation mask set at the listed entries."""
    return read_triplets(path, M, N).to_data()


def write_matrix_csv(path, X, fmt=None):
    """Write a matrix as header-less CSV, atomically. Floats use ``repr`` so they round-trip exactly."""
    X = np.atleast_2d(np.asarray(X))
    lines = []
    for row in X:
        if fmt is not None:
            lines.append(",".join(fmt % v for v in row))
        elif X.dtype.kind == "f":
            lines.append(",".join(repr(float(v)) for v in row))
        else:
            lines.append(",".join(str(int(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Synthetic data


def synth_binary(M=20, N=30, density=0.5, seed=0):
    """Independent Bernoulli(density) entries."""
    if not 0.0 < density <= 1.0:
        raise DomainError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    return DataMatrix((rng.random((M, N)) < density).astype(float))


def synth_planted(M, N, K_true, sparsity=0.5, seed=0, epsilon=0.01):
    """Sparse gamma factors and exponential observations with mean ``A X^T + epsilon``.

    Returns ``(data, A, X)``.
    """
    if K_true < 1:
        raise ContractError("K_true must be >= 1")
    if not 0.0 < sparsity <= 1.0:
        raise DomainError("sparsity must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    A = rng.standard_gamma(1.0, (M, K_true)) * (rng.random((M, K_true)) < sparsity)
    X = rng.standard_gamma(1.0, (N, K_true)) * (rng.random((N, K_true)) < sparsity)
    mean = A @ X.T + epsilon
    Y = rng.standard_exponential((M, N)) * mean
    return DataMatrix(Y), A, X


# ---------------------------------------------------------------------------
# Snapshots


@dataclass
class StateSnapshot:
    factor: FactorState
    sticks: Union[PairedStickState, GpStickState]
    config: ModelConfig
    seed: int
    iteration: int
    rng_state: dict

    def __eq__(self, other):
        if not isinstance(other, StateSnapshot):
            return NotImplemented
        return _encode_snapshot(self) == _encode_snapshot(other)


def _enc_array(a):
    a = np.asarray(a)
    kind = "int8" if a.dtype.kind in "iub" else "float64"
    data = a.astype(kind).ravel().tolist()
    return {"dtype": kind, "shape": list(a.shape), "data": data}


def _dec_array(d):
    try:
        return np.array(d["data"], dtype=d["dtype"]).reshape(d["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise SnapshotError(f"malformed array record: {exc}") from None


def _enc_sticks(s):
    if isinstance(s, GpStickState):
        return {
            "kind": "gp",
            "mu": _enc_array(s.mu),
            "g": _enc_array(s.g),
            "h1": _enc_array(s.h1),
            "h2": _enc_array(s.h2),
            "kernel": {k: getattr(s.kernel, k) for k in ("sigma", "s", "eta", "t1", "t2")},
            "alpha": s.alpha,
            "hs": s.hs,
        }
    cp = s.coupling
    if isinstance(cp, BivariateBetaParams):
        coupling = {"type": "bb", "a": cp.a, "b": cp.b, "c": cp.c}
    else:
        coupling = {"type": "copula", "rho": cp.rho, "alpha1": cp.alpha1, "alpha2": cp.alpha2}
    return {"kind": "paired", "mu1": _enc_array(s.mu1), "mu2": _enc_array(s.mu2), "coupling": coupling}


def _dec_sticks(d):
    if d["kind"] == "gp":
        return GpStickState(
            _dec_array(d["mu"]), _dec_array(d["g"]), _dec_array(d["h1"]), _dec_array(d["h2"]),
            GaussKernelParams(**d["kernel"]), d["alpha"], d["hs"],
        )
    if d["kind"] == "paired":
        c = dict(d["coupling"])
        kind = c.pop("type")
        coupling = BivariateBetaParams(**c) if kind == "bb" else FgmParams(**c)
        return PairedStickState(_dec_array(d["mu1"]), _dec_array(d["mu2"]), coupling)
    raise SnapshotError(f"unknown stick kind {d['kind']!r}")


def _encode_snapshot(snap: StateSnapshot):
    f = snap.factor
    return {
        "config": snap.config.to_dict(),
        "seed": snap.seed,
        "iteration": snap.iteration,
        "rng_state": snap.rng_state,
        "factor": {"V1": _enc_array(f.V1), "V2": _enc_array(f.V2), "Z1": _enc_array(f.Z1), "Z2": _enc_array(f.Z2)},
        "sticks": _enc_sticks(snap.sticks),
    }


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def snapshot_to_text(snap: StateSnapshot):
    payload = _encode_snapshot(snap)
    doc = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "checksum": hashlib.sha256(_canonical(payload).encode()).hexdigest(),
        "payload": payload,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def snapshot_from_text(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"corrupt snapshot: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError("not a snapshot document")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {doc.get('version')!r} (expected {SNAPSHOT_VERSION})")
    payload = doc.get("payload")
    if payload is None or hashlib.sha256(_canonical(payload).encode()).hexdigest() != doc.get("checksum"):
        raise SnapshotError("corrupt snapshot: checksum mismatch")
    try:
        fac = payload["factor"]
        return StateSnapshot(
            FactorState(_dec_array(fac["V1"]), _dec_array(fac["V2"]), _dec_array(fac["Z1"]), _dec_array(fac["Z2"])),
            _dec_sticks(payload["sticks"]),
            ModelConfig.from_dict(payload["config"]),
            payload["seed"],
            payload["iteration"],
            payload["rng_state"],
        )
    except (KeyError, TypeError) as exc:
        raise SnapshotError(f"corrupt snapshot: missing field {exc}") from None


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_snapshot(snap: StateSnapshot, path):
    atomic_write_text(path, snapshot_to_text(snap))


def load_snapshot(path):
    return snapshot_from_text(Path(path).read_text(encoding="utf-8"))


def sampler_snapshot(sampler, best=False):
    """Snapshot of a :class:`~dibpnmf.factorization.GibbsSampler`, current or best state."""
    if best:
        factor, sticks, rng_state = sampler.best_state, sampler.best_sticks, sampler.best_rng_state
        iteration = None
    else:
        factor, sticks, rng_state = sampler.state, sampler.sticks, sampler.rng.bit_generator.state
        iteration = sampler.iteration
    return StateSnapshot(factor.copy(), sticks.copy(), sampler.config, sampler.config.seed,
                         iteration if iteration is not None else sampler.best_iteration + 1, rng_state)


def resume_sampler(Y, snap: StateSnapshot):
    """Rebuild a sampler that continues exactly where ``snap`` left off."""
    from .factorization.gibbs import GibbsSampler

    rng = np.random.default_rng()
    rng.bit_generator.state = snap.rng_state
    return GibbsSampler(Y, snap.config, rng=rng, state=snap.factor.copy(), sticks=snap.sticks.copy(),
                        iteration=snap.iteration)
