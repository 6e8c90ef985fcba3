"""Single-codebook vector quantization.

Nearest-neighbour search uses squared L2 distance with ties going to the
lowest index.  Batched search ranks candidates with a BLAS-friendly expanded
distance and then settles every near tie with the same direct computation
:func:`nearest_code` uses, so the batched and scalar paths always agree.

Codebooks are immutable values; training operations return new ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CodeIndexError,
    ConfigurationError,
    DomainError,
    InsufficientDataError,
    ShapeError,
)
from .frontend import as_features

LAPLACE_EPS = 1e-5
DEFAULT_ENTRIES = 1024
DEFAULT_KMEANS_ITERATIONS = 25
DEFAULT_DECAY = 0.99
DEFAULT_DEAD_THRESHOLD = 1.0

_CHUNK_ELEMENTS = 1 << 22


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Codebook:
    entries: np.ndarray  # (E, d) float32
    ema_counts: np.ndarray = field(default=None)  # (E,) float64
    ema_sums: np.ndarray = field(default=None)  # (E, d) float64
    epoch: int = 0

    def __post_init__(self):
        entries = as_features(self.entries)
        if entries.shape[0] < 1:
            raise ShapeError("a codebook needs at least one entry")
        counts = self.ema_counts
        sums = self.ema_sums
        if counts is None:
            counts = np.ones(entries.shape[0])
        if sums is None:
            sums = entries.astype(np.float64) * np.asarray(counts, dtype=np.float64)[:, None]
        counts = np.array(counts, dtype=np.float64)
        sums = np.array(sums, dtype=np.float64)
        if counts.shape != (entries.shape[0],) or sums.shape != entries.shape:
            raise ShapeError("EMA statistics do not match the entry table")
        if np.any(counts < 0):
            raise DomainError("EMA counts must be non-negative")
        object.__setattr__(self, "entries", _frozen(entries))
        object.__setattr__(self, "ema_counts", _frozen(counts))
        object.__setattr__(self, "ema_sums", _frozen(sums))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]


def squared_distances(vector: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Direct float64 ``sum((vector - entry)**2)`` against every row of ``entries``."""
    diff = entries.astype(np.float64) - np.asarray(vector, dtype=np.float64)
    return np.sum(diff * diff, axis=-1)


def nearest_code(codebook: Codebook, vector) -> int:
    v = np.asarray(vector, dtype=np.float32)
    if v.shape != (codebook.dim,):
        raise ShapeError(f"expected a {codebook.dim}-dim vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError("vector contains non-finite values")
    return int(np.argmin(squared_distances(v, codebook.entries)))


def _nearest_rows(entries: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Batched nearest entry, identical to calling nearest_code row by row."""
    n_rows = rows.shape[0]
    out = np.empty(n_rows, dtype=np.int64)
    if n_rows == 0:
        return out
    e64 = entries.astype(np.float64)
    e_norm = np.sum(e64 * e64, axis=1)
    max_e_norm = float(e_norm.max())
    step = max(1, _CHUNK_ELEMENTS // entries.shape[0])
    for start in range(0, n_rows, step):
        x = rows[start:start + step].astype(np.float64)
        x_norm = np.einsum("ij,ij->i", x, x)
        # ||x||^2 is constant per row, so it is left out of the ranking.
        approx = x @ e64.T
        approx *= -2.0
        approx += e_norm
        best = np.argmin(approx, axis=1)
        best_val = approx[np.arange(x.shape[0]), best]
        tol = 1e-9 * (x_norm + max_e_norm) + 1e-12
        near = approx <= (best_val + tol)[:, None]
        ambiguous = np.flatnonzero(np.count_nonzero(near, axis=1) > 1)
        for i in ambiguous:
            cands = np.flatnonzero(near[i])
            best[i] = cands[int(np.argmin(squared_distances(rows[start + i], entries[cands])))]
        out[start:start + x.shape[0]] = best
    return out


def quantize_batch(codebook: Codebook, features) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(indices, quantized)`` for every row of ``features``."""
    feats = as_features(features, dims=codebook.dim)
    indices = _nearest_rows(codebook.entries, feats)
    return indices, codebook.entries[indices]


def segment_sums(data: np.ndarray, indices: np.ndarray, n_entries: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry float64 counts and vector sums, accumulated in frame order."""
    counts = np.bincount(indices, minlength=n_entries).astype(np.float64)
    sums = np.zeros((n_entries, data.shape[1]))
    if data.shape[0]:
        order = np.argsort(indices, kind="stable")
        sorted_idx = indices[order]
        starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
        sums[sorted_idx[starts]] = np.add.reduceat(data[order].astype(np.float64), starts, axis=0)
    return counts, sums


def _kmeanspp_seed(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # data is float64 here; squared_distances would re-cast it on every step
    n = data.shape[0]

    def dist_to(i):
        diff = data - data[i]
        return np.einsum("ij,ij->i", diff, diff)

    chosen = [int(rng.integers(n))]
    closest = dist_to(chosen[0])
    for _ in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            # Fewer distinct points than entries: fall back to unused rows in order.
            used = set(chosen)
            pick = next(i for i in range(n) if i not in used)
        else:
            pick = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            pick = min(pick, n - 1)
        chosen.append(pick)
        closest = np.minimum(closest, dist_to(pick))
    return data[chosen].copy()


def kmeans(data, n_entries: int, iterations: int = DEFAULT_KMEANS_ITERATIONS, seed: int = 0):
    """k-means++ seeding followed by Lloyd iterations.

    Returns ``(centroids, objective_history)`` where ``objective_history[i]``
    is the summed squared error of the centroids after iteration ``i`` (entry
    0 is the seeding).  Empty clusters keep their previous centroid, so the
    history never increases.
    """
    data = as_features(data)
    if n_entries < 1:
        raise ConfigurationError(f"n_entries must be >= 1, got {n_entries}")
    if iterations < 1:
        raise ConfigurationError(f"iterations must be >= 1, got {iterations}")
    if data.shape[0] < n_entries:
        raise InsufficientDataError(
            f"need at least {n_entries} rows to fit {n_entries} entries, got {data.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    data64 = data.astype(np.float64)
    centroids = _kmeanspp_seed(data64, n_entries, rng)

    def assign(c):
        idx = _nearest_rows(c, data)
        err = data64 - c[idx]
        return idx, float(np.sum(err * err))

    idx, objective = assign(centroids)
    history = [objective]
    for _ in range(iterations):
        counts, sums = segment_sums(data, idx, n_entries)
        filled = counts > 0
        centroids = centroids.copy()
        centroids[filled] = sums[filled] / counts[filled, None]
        idx, objective = assign(centroids)
        history.append(objective)
    return centroids, history


def kmeans_init(data, n_entries: int, iterations: int = DEFAULT_KMEANS_ITERATIONS, seed: int = 0) -> Codebook:
    centroids, _ = kmeans(data, n_entries, iterations, seed)
    return Codebook(centroids.astype(np.float32))


def ema_update(codebook: Codebook, batch, indices, decay: float = DEFAULT_DECAY) -> Codebook:
    if not 0.0 <= decay <= 1.0:
        raise ConfigurationError(f"decay must lie in [0, 1], got {decay}")
    batch = as_features(batch, dims=codebook.dim)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape != (batch.shape[0],):
        raise ShapeError(f"expected {batch.shape[0]} indices, got shape {indices.shape}")
    if indices.size and (indices.min() < 0 or indices.max() >= codebook.size):
        bad = int(indices[(indices < 0) | (indices >= codebook.size)][0])
        raise CodeIndexError(f"index {bad} out of range for {codebook.size} entries")
    counts, sums = segment_sums(batch, indices, codebook.size)
    new_counts = decay * codebook.ema_counts + (1.0 - decay) * counts
    new_sums = decay * codebook.ema_sums + (1.0 - decay) * sums
    entries = new_sums / np.maximum(new_counts, LAPLACE_EPS)[:, None]
    return Codebook(entries.astype(np.float32), new_counts, new_sums, codebook.epoch + 1)


def reinit_dead_entries(
    codebook: Codebook,
    batch,
    usage_threshold: float = DEFAULT_DEAD_THRESHOLD,
    seed: int = 0,
    protected=(),
) -> tuple[Codebook, int]:
    """Replace entries whose EMA count is below ``usage_threshold`` with batch rows.

    Rows are drawn without replacement.  Entries listed in ``protected`` are
    never replaced.  Returns the new codebook and how many entries changed.
    """
    batch = as_features(batch, dims=codebook.dim)
    if batch.shape[0] == 0:
        raise InsufficientDataError("cannot reinitialize from an empty batch")
    dead = codebook.ema_counts < usage_threshold
    if len(protected):
        dead[np.asarray(protected, dtype=np.int64)] = False
    dead_idx = np.flatnonzero(dead)
    if dead_idx.size == 0:
        return codebook, 0
    rng = np.random.default_rng(seed)
    n_replace = min(dead_idx.size, batch.shape[0])
    rows = rng.choice(batch.shape[0], size=n_replace, replace=False)
    targets = dead_idx[:n_replace]
    entries = codebook.entries.copy()
    counts = codebook.ema_counts.copy()
    sums = codebook.ema_sums.copy()
    entries[targets] = batch[rows]
    counts[targets] = 1.0
    sums[targets] = batch[rows].astype(np.float64)
    return replace(codebook, entries=entries, ema_counts=counts, ema_sums=sums), int(n_replace)


def usage_entropy(indices, n_entries: int) -> float:
    """Entropy in bits of the code usage histogram."""
    counts = np.bincount(np.asarray(indices, dtype=np.int64), minlength=n_entries)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())
