"""Residual and group-residual vector quantization.

A :class:`GrvqModel` splits each feature frame into ``G`` equal contiguous
slices and runs an independent residual stack of ``N_q`` codebooks on each
slice.  Quantized slices are concatenated back in group order.

Code tensors are ``(frames, G * N_q)`` integer arrays laid out group-major,
stage-minor: ``[g0s0, g0s1, ..., g1s0, g1s1, ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    CodeIndexError,
    ConfigurationError,
    DegenerateInputError,
    InsufficientDataError,
    ShapeError,
)
from .frontend import as_features
from .vq import (
    DEFAULT_DEAD_THRESHOLD,
    DEFAULT_DECAY,
    DEFAULT_ENTRIES,
    DEFAULT_KMEANS_ITERATIONS,
    Codebook,
    _nearest_rows,
    ema_update,
    kmeans,
    quantize_batch,
    reinit_dead_entries,
    usage_entropy,
)


@dataclass(frozen=True, eq=False)
class RvqStack:
    codebooks: tuple

    def __post_init__(self):
        books = tuple(self.codebooks)
        if not books:
            raise ConfigurationError("a residual stack needs at least one codebook")
        if len({cb.dim for cb in books}) != 1:
            raise ShapeError("all codebooks in a stack must share one dimension")
        if len({cb.size for cb in books}) != 1:
            raise ShapeError("all codebooks in a stack must share one entry count")
        object.__setattr__(self, "codebooks", books)

    @property
    def n_stages(self) -> int:
        return len(self.codebooks)

    @property
    def dim(self) -> int:
        return self.codebooks[0].dim

    @property
    def entries(self) -> int:
        return self.codebooks[0].size


@dataclass(frozen=True, eq=False)
class GrvqModel:
    groups: tuple
    sample_rate: int = 24000
    frame_size: int = 480

    def __post_init__(self):
        groups = tuple(self.groups)
        if not groups:
            raise ConfigurationError("a model needs at least one group")
        if len({g.dim for g in groups}) != 1:
            raise ShapeError("group dimensions must be equal")
        if len({g.n_stages for g in groups}) != 1:
            raise ShapeError("every group must have the same number of stages")
        object.__setattr__(self, "groups", groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_stages(self) -> int:
        return self.groups[0].n_stages

    @property
    def group_dim(self) -> int:
        return self.groups[0].dim

    @property
    def total_dim(self) -> int:
        return self.n_groups * self.group_dim

    @property
    def n_codebooks(self) -> int:
        return self.n_groups * self.n_stages

    def codebook(self, group: int, stage: int) -> Codebook:
        return self.groups[group].codebooks[stage]


def split_groups(features, g: int) -> list[np.ndarray]:
    feats = as_features(features)
    if g < 1 or feats.shape[1] % g:
        raise ConfigurationError(f"cannot split {feats.shape[1]} dims into {g} equal groups")
    width = feats.shape[1] // g
    return [np.ascontiguousarray(feats[:, k * width:(k + 1) * width]) for k in range(g)]


def _rvq_trace(stack: RvqStack, feats: np.ndarray):
    """Greedy residual pass; returns codes, quantized sum and per-stage inputs."""
    residual = feats
    quantized = np.zeros_like(feats)
    codes = np.empty((feats.shape[0], stack.n_stages), dtype=np.int64)
    inputs = []
    for s, cb in enumerate(stack.codebooks):
        inputs.append(residual)
        idx, q = quantize_batch(cb, residual)
        codes[:, s] = idx
        quantized = quantized + q
        residual = residual - q
    inputs.append(residual)
    return codes, quantized, inputs


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x.astype(np.float64) ** 2))) if x.size else 0.0


def rvq_apply(stack: RvqStack, features):
    """Quantize with a residual stack.

    Returns ``(codes, quantized, residual_norms)``; ``residual_norms[i]`` is
    the RMS of the residual left after stage ``i``.
    """
    feats = as_features(features, dims=stack.dim)
    codes, quantized, inputs = _rvq_trace(stack, feats)
    return codes, quantized, np.array([_rms(r) for r in inputs[1:]])


def rvq_residuals(stack: RvqStack, features) -> np.ndarray:
    """Per-frame residual RMS, shape ``(frames, N_q + 1)``; column 0 is the input."""
    feats = as_features(features, dims=stack.dim)
    _, _, inputs = _rvq_trace(stack, feats)
    return np.stack(
        [np.sqrt(np.mean(r.astype(np.float64) ** 2, axis=1)) for r in inputs], axis=1
    )


def grvq_apply(model: GrvqModel, features):
    feats = as_features(features, dims=model.total_dim)
    codes, parts = [], []
    for stack, part in zip(model.groups, split_groups(feats, model.n_groups)):
        c, q, _ = rvq_apply(stack, part)
        codes.append(c)
        parts.append(q)
    return np.concatenate(codes, axis=1), np.concatenate(parts, axis=1)


def check_codes(model: GrvqModel, codes) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != model.n_codebooks:
        raise ShapeError(
            f"expected codes of shape (frames, {model.n_codebooks}), got {codes.shape}"
        )
    if codes.size and not np.issubdtype(codes.dtype, np.integer):
        raise ShapeError(f"codes must be integers, got dtype {codes.dtype}")
    codes = codes.astype(np.int64)
    for col in range(model.n_codebooks):
        g, s = divmod(col, model.n_stages)
        size = model.codebook(g, s).size
        bad = np.flatnonzero((codes[:, col] < 0) | (codes[:, col] >= size))
        if bad.size:
            t = int(bad[0])
            raise CodeIndexError(
                f"code {int(codes[t, col])} out of range [0, {size}) at frame {t}, "
                f"group {g}, stage {s}"
            )
    return codes


def grvq_decode(model: GrvqModel, codes) -> np.ndarray:
    codes = check_codes(model, codes)
    parts = []
    for g, stack in enumerate(model.groups):
        out = np.zeros((codes.shape[0], stack.dim), dtype=np.float32)
        for s, cb in enumerate(stack.codebooks):
            out = out + cb.entries[codes[:, g * model.n_stages + s]]
        parts.append(out)
    return np.concatenate(parts, axis=1)


def commitment_loss(features, model: GrvqModel) -> float:
    """Sum over groups, stages and frames of ``||stage input - stage output||^2``."""
    feats = as_features(features, dims=model.total_dim)
    total = 0.0
    for stack, part in zip(model.groups, split_groups(feats, model.n_groups)):
        codes, _, inputs = _rvq_trace(stack, part)
        for s, cb in enumerate(stack.codebooks):
            diff = inputs[s].astype(np.float64) - cb.entries[codes[:, s]]
            total += float(np.sum(diff * diff))
    return total


def _stage_margins(entries: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Distance from each row to the nearest Voronoi boundary of its cell."""
    if entries.shape[0] == 1:
        return np.full(rows.shape[0], np.inf)
    e64 = entries.astype(np.float64)
    x = rows.astype(np.float64)
    d2 = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ e64.T + np.sum(e64 * e64, axis=1)[None, :]
    nearest = _nearest_rows(entries, rows)
    gap = d2 - d2[np.arange(x.shape[0]), nearest][:, None]
    gram = e64 @ e64.T
    sq = np.diag(gram)
    sep = np.sqrt(np.maximum(sq[nearest][:, None] + sq[None, :] - 2.0 * gram[nearest], 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.where(sep > 0, gap / (2.0 * sep), np.inf)
    return np.maximum(margin.min(axis=1), 0.0)


def boundary_margins(model: GrvqModel, features) -> np.ndarray:
    """``(frames, G * N_q)`` distances of each stage input to its cell boundary."""
    feats = as_features(features, dims=model.total_dim)
    cols = []
    for stack, part in zip(model.groups, split_groups(feats, model.n_groups)):
        _, _, inputs = _rvq_trace(stack, part)
        for s, cb in enumerate(stack.codebooks):
            cols.append(_stage_margins(cb.entries, inputs[s]))
    return np.stack(cols, axis=1)


def commitment_gradient(features, model: GrvqModel) -> np.ndarray:
    """Straight-through gradient ``2 (z - q(z))`` of the first-stage commitment term."""
    feats = as_features(features, dims=model.total_dim)
    codes, _ = grvq_apply(model, feats)
    first = [
        model.codebook(g, 0).entries[codes[:, g * model.n_stages]] for g in range(model.n_groups)
    ]
    return 2.0 * (feats.astype(np.float64) - np.concatenate(first, axis=1))


def commitment_grad_check(features, model: GrvqModel, h: float = 1e-4) -> float:
    """Max relative error between the analytic gradient and central differences.

    Differences re-run the first-stage search at ``z +/- h`` in float64 and
    require the assignment to stay fixed, which the boundary-margin
    precondition guarantees.
    """
    feats = as_features(features, dims=model.total_dim)
    margins = boundary_margins(model, feats)
    if margins.size and margins.min() <= 10.0 * h:
        t, c = np.unravel_index(int(np.argmin(margins)), margins.shape)
        raise DegenerateInputError(
            f"frame {t} lies within {margins[t, c]:.3g} of a cell boundary at codebook {c} "
            f"(need > {10.0 * h:.3g})"
        )
    analytic = commitment_gradient(feats, model)
    z = feats.astype(np.float64)
    width = model.group_dim
    frozen = [_nearest_rows(model.codebook(g, 0).entries, z[:, g * width:(g + 1) * width])
              for g in range(model.n_groups)]

    def term(zg: np.ndarray, g: int) -> np.ndarray:
        entries = model.codebook(g, 0).entries
        idx = _nearest_rows(entries, zg)
        if not np.array_equal(idx, frozen[g]):
            raise DegenerateInputError("perturbation moved a frame across a cell boundary")
        diff = zg - entries[idx].astype(np.float64)
        return np.sum(diff * diff, axis=1)

    numeric = np.empty_like(z)
    for j in range(z.shape[1]):
        g = j // width
        zg = z[:, g * width:(g + 1) * width]
        plus, minus = zg.copy(), zg.copy()
        plus[:, j - g * width] += h
        minus[:, j - g * width] -= h
        numeric[:, j] = (term(plus, g) - term(minus, g)) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom)) if z.size else 0.0


@dataclass
class FitConfig:
    groups: int = 2
    stages: int = 2
    entries: int = DEFAULT_ENTRIES
    epochs: int = 10
    decay: float = DEFAULT_DECAY
    seed: int = 42
    kmeans_iterations: int = DEFAULT_KMEANS_ITERATIONS
    dead_threshold: float = DEFAULT_DEAD_THRESHOLD
    reserve_zero_entry: bool = False

    def validate(self) -> "FitConfig":
        if self.groups < 1 or self.stages < 1:
            raise ConfigurationError("groups and stages must be >= 1")
        if not 1 <= self.entries <= 1 << 16:
            raise ConfigurationError(f"entries must be in [1, 65536], got {self.entries}")
        if self.reserve_zero_entry and self.stages > 1 and self.entries < 2:
            raise ConfigurationError("reserve_zero_entry needs at least 2 entries per codebook")
        if self.epochs < 0 or self.kmeans_iterations < 1:
            raise ConfigurationError("epochs must be >= 0 and kmeans_iterations >= 1")
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigurationError(f"decay must lie in [0, 1], got {self.decay}")
        return self


@dataclass
class StageReport:
    group: int
    stage: int
    epoch_mse: list = field(default_factory=list)
    reinit_counts: list = field(default_factory=list)
    usage_entropy_bits: float = 0.0


@dataclass
class FitReport:
    stages: list
    train_mse: float

    def as_dict(self) -> dict:
        return {
            "train_mse": self.train_mse,
            "stages": [vars(s) for s in self.stages],
        }


def _stage_seed(seed: int, group: int, stage: int, salt: int = 0) -> int:
    return int(np.random.SeedSequence([seed, group, stage, salt]).generate_state(1)[0])


def _pin_zero(cb: Codebook) -> Codebook:
    entries = cb.entries.copy()
    sums = cb.ema_sums.copy()
    entries[0] = 0.0
    sums[0] = 0.0
    return Codebook(entries, cb.ema_counts, sums, cb.epoch)


def _train_codebook(residual: np.ndarray, cfg: FitConfig, group: int, stage: int):
    reserve = cfg.reserve_zero_entry and stage > 0
    n_fit = cfg.entries - 1 if reserve else cfg.entries
    centroids, _ = kmeans(residual, n_fit, cfg.kmeans_iterations, _stage_seed(cfg.seed, group, stage))
    if reserve:
        centroids = np.vstack([np.zeros((1, residual.shape[1])), centroids])
    cb = Codebook(centroids.astype(np.float32))
    report = StageReport(group, stage)
    protected = (0,) if reserve else ()
    for epoch in range(cfg.epochs):
        idx, _ = quantize_batch(cb, residual)
        cb = ema_update(cb, residual, idx, cfg.decay)
        if reserve:
            cb = _pin_zero(cb)
        n_reinit = 0
        # The last epoch only refines, so no entry ships without an EMA step.
        if epoch + 1 < cfg.epochs:
            cb, n_reinit = reinit_dead_entries(
                cb, residual, cfg.dead_threshold, _stage_seed(cfg.seed, group, stage, epoch + 1), protected
            )
        _, q = quantize_batch(cb, residual)
        report.epoch_mse.append(float(np.mean((residual.astype(np.float64) - q) ** 2)))
        report.reinit_counts.append(n_reinit)
    idx, q = quantize_batch(cb, residual)
    if cfg.epochs == 0:
        report.epoch_mse.append(float(np.mean((residual.astype(np.float64) - q) ** 2)))
    report.usage_entropy_bits = usage_entropy(idx, cb.size)
    return cb, residual - q, report


def fit_grvq(
    data, config: FitConfig | None = None, sample_rate: int = 24000, frame_size: int | None = None
) -> tuple[GrvqModel, FitReport]:
    """Train a model stage by stage.

    Each stage is k-means initialised on the residual left by the frozen
    earlier stages of its group, then refined with EMA epochs and dead-entry
    reinitialisation.  Deterministic for a fixed ``config.seed``.
    """
    cfg = (config or FitConfig()).validate()
    feats = as_features(data)
    if feats.shape[1] % cfg.groups:
        raise ConfigurationError(f"cannot split {feats.shape[1]} dims into {cfg.groups} groups")
    if feats.shape[0] < cfg.entries:
        raise InsufficientDataError(
            f"need at least {cfg.entries} frames to train {cfg.entries} entries, got {feats.shape[0]}"
        )
    stacks, reports = [], []
    for g, residual in enumerate(split_groups(feats, cfg.groups)):
        books = []
        for s in range(cfg.stages):
            cb, residual, rep = _train_codebook(residual, cfg, g, s)
            books.append(cb)
            reports.append(rep)
        stacks.append(RvqStack(tuple(books)))
    model = GrvqModel(
        tuple(stacks),
        sample_rate=sample_rate,
        frame_size=frame_size if frame_size is not None else 2 * feats.shape[1],
    )
    _, quantized = grvq_apply(model, feats)
    train_mse = float(np.mean((feats.astype(np.float64) - quantized) ** 2))
    return model, FitReport(reports, train_mse)


def random_model(
    rng: np.random.Generator,
    groups: int,
    stages: int,
    entries: int,
    group_dim: int,
    scale: float = 1.0,
    reserve_zero_entry: bool = False,
    sample_rate: int = 24000,
    frame_size: int = 480,
) -> GrvqModel:
    """Model with Gaussian codebooks, for tests and benchmarks."""
    stacks = []
    for _ in range(groups):
        books = []
        for s in range(stages):
            e = (rng.standard_normal((entries, group_dim)) * scale / (s + 1)).astype(np.float32)
            if reserve_zero_entry and s > 0:
                e[0] = 0.0
            books.append(Codebook(e))
        stacks.append(RvqStack(tuple(books)))
    return GrvqModel(tuple(stacks), sample_rate, frame_size)
