"""Data model, dataset I/O, seeding, the shared distance kernel and round counters."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

MAGIC = b"KMB1"
_HEADER = struct.Struct("<4sQQ")


class DatasetError(ValueError):
    """Raised when a dataset file cannot be ingested."""


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray
    sq_norms: np.ndarray

    @classmethod
    def from_array(cls, values) -> "DataMatrix":
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DatasetError(f"expected a non-empty 2-d array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DatasetError("dataset contains non-finite values")
        sq = np.einsum("ij,ij->i", values, values)
        values.flags.writeable = False
        sq.flags.writeable = False
        return cls(values, sq)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class CentroidState:
    centroids: np.ndarray
    sq_norms: np.ndarray
    p: np.ndarray
    s: np.ndarray | None = None
    cc: np.ndarray | None = None

    @classmethod
    def from_array(cls, centroids, p=None) -> "CentroidState":
        c = np.ascontiguousarray(centroids, dtype=np.float64).copy()
        sq = np.einsum("ij,ij->i", c, c)
        if p is None:
            p = np.zeros(c.shape[0])
        return cls(c, sq, np.asarray(p, dtype=np.float64))

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass
class RoundStats:
    round: int
    dist_calcs_assign: int = 0
    dist_calcs_centroid: int = 0
    dist_calcs_init: int = 0
    changes: int = 0
    bound_tightenings: int = 0
    # lock-step instrumentation of ns strategies (zero unless enabled)
    lockstep_sn_extra: int = 0
    lockstep_violations: int = 0

    @property
    def dist_calcs_total(self) -> int:
        return self.dist_calcs_assign + self.dist_calcs_centroid + self.dist_calcs_init

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "dist_calcs_assign": self.dist_calcs_assign,
            "dist_calcs_centroid": self.dist_calcs_centroid,
            "dist_calcs_init": self.dist_calcs_init,
            "changes": self.changes,
        }


# ---------------------------------------------------------------------------
# distance kernels


@njit(nogil=True, cache=True)
def kernel_dist(X, i, xsq, C, j, csq):
    # the one sample-centroid kernel every strategy and the reference share
    dot = 0.0
    for m in range(X.shape[1]):
        dot += X[i, m] * C[j, m]
    v = xsq[i] + csq[j] - 2.0 * dot
    if v > 0.0:
        return math.sqrt(v)
    return 0.0


@njit(nogil=True, cache=True)
def direct_dist(A, i, B, j):
    """Difference-based distance, used between centroids (no cancellation)."""
    acc = 0.0
    for m in range(A.shape[1]):
        t = A[i, m] - B[j, m]
        acc += t * t
    return math.sqrt(acc)


@njit(nogil=True, cache=True)
def distance_rows(X, xsq, C, csq, lo, hi, out):
    k = C.shape[0]
    for i in range(lo, hi):
        for j in range(k):
            out[i - lo, j] = kernel_dist(X, i, xsq, C, j, csq)


@njit(nogil=True, cache=True)
def pairwise_centroid_distances(C):
    k = C.shape[0]
    cc = np.zeros((k, k))
    for j in range(k):
        for jj in range(j + 1, k):
            v = direct_dist(C, j, C, jj)
            cc[j, jj] = v
            cc[jj, j] = v
    return cc


@njit(nogil=True, cache=True)
def paired_displacements(A, B):
    k = A.shape[0]
    out = np.empty(k)
    for j in range(k):
        out[j] = direct_dist(A, j, B, j)
    return out


def distance(a, b, a_sq_norm=None, b_sq_norm=None) -> float:
    """Distance between two vectors through the squared-norm expansion.

    ``sqrt(max(0, |a|^2 + |b|^2 - 2 a.b))``; cached squared norms may be passed in.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("vectors must share a dimension")
    A = a.reshape(1, -1)
    B = b.reshape(1, -1)
    asq = np.array([float(a @ a) if a_sq_norm is None else float(a_sq_norm)])
    bsq = np.array([float(b @ b) if b_sq_norm is None else float(b_sq_norm)])
    return kernel_dist(A, 0, asq, B, 0, bsq)


def centroid_separation(cc: np.ndarray) -> np.ndarray:
    """s(j): distance from each centroid to its nearest other centroid."""
    k = cc.shape[0]
    if k < 2:
        return np.full(k, np.inf)
    masked = cc + np.diag(np.full(k, np.inf))
    return masked.min(axis=1)


# ---------------------------------------------------------------------------
# dataset ingestion


def load_dataset(path, format: str = "csv") -> DataMatrix:
    path = Path(path)
    if format == "csv":
        return _load_csv(path)
    if format == "binary":
        return _load_binary(path)
    raise DatasetError(f"unknown dataset format {format!r}")


def _load_csv(path: Path) -> DataMatrix:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vals = [float(cell) for cell in row]
            except ValueError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DatasetError(
                    f"{path}: line {lineno}: expected {width} values, found {len(vals)}"
                )
            if not all(math.isfinite(v) for v in vals):
                raise DatasetError(f"{path}: line {lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: empty dataset")
    return DataMatrix.from_array(np.array(rows, dtype=np.float64))


def _load_binary(path: Path) -> DataMatrix:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetError(f"{path}: truncated header")
    magic, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetError(f"{path}: bad magic {magic!r}")
    if n == 0 or d == 0:
        raise DatasetError(f"{path}: empty dataset (N={n}, d={d})")
    expected = _HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise DatasetError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, d)
    return DataMatrix.from_array(values.astype(np.float64))


def save_dataset(path, data, format: str = "csv") -> None:
    values = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    path = Path(path)
    if format == "csv":
        np.savetxt(path, values, delimiter=",", fmt="%.17g")
    elif format == "binary":
        n, d = values.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, n, d))
            fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
    else:
        raise DatasetError(f"unknown dataset format {format!r}")


def gaussian_mixture(n: int, d: int, modes: int, seed: int, spread: float = 10.0) -> DataMatrix:
    """Isotropic unit-variance blobs around mode centres drawn uniformly in [-spread, spread]^d."""
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-spread, spread, size=(modes, d))
    labels = rng.integers(0, modes, size=n)
    return DataMatrix.from_array(centres[labels] + rng.standard_normal((n, d)))


def parse_gen_spec(spec: str) -> DataMatrix:
    """Build a dataset from ``gauss:N:d:modes:seed``."""
    parts = spec.split(":")
    if len(parts) != 5 or parts[0] != "gauss":
        raise DatasetError(f"generator spec must be gauss:N:d:modes:seed, got {spec!r}")
    try:
        n, d, modes, seed = (int(x) for x in parts[1:])
    except ValueError:
        raise DatasetError(f"non-integer field in generator spec {spec!r}") from None
    if min(n, d, modes) < 1:
        raise DatasetError(f"generator sizes must be positive: {spec!r}")
    return gaussian_mixture(n, d, modes, seed)


# ---------------------------------------------------------------------------
# seeding


def init_centroids(data: DataMatrix, k: int, seed: int) -> CentroidState:
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if k > data.n_samples:
        raise ValueError(f"k={k} exceeds the number of samples N={data.n_samples}")
    idx = init_indices(data.n_samples, k, seed)
    return CentroidState.from_array(data.values[idx])


def init_indices(n: int, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.choice(n, size=k, replace=False)
