"""Codec training losses as pure functions.

Discriminator networks are not part of this package; the adversarial and
feature-matching terms consume their outputs (per-discriminator logits and
per-layer feature maps) as plain arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DomainError, ShapeError
from .frontend import DEFAULT_MEL_SCALES, AudioSignal, check_pair, mel_distance


@dataclass(frozen=True, eq=False)
class DiscriminatorOutputs:
    """Outputs of ``K`` discriminators for one signal.

    ``logits[k]`` is an array of any shape; ``feature_maps[k][l]`` is the
    output of internal layer ``l`` of discriminator ``k``.
    """

    logits: Sequence
    feature_maps: Sequence = ()

    def __post_init__(self):
        logits = tuple(np.asarray(x, dtype=np.float64) for x in self.logits)
        maps = tuple(tuple(np.asarray(f, dtype=np.float64) for f in layers) for layers in self.feature_maps)
        if not logits:
            raise DegenerateInputError("at least one discriminator is required")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "feature_maps", maps)

    @property
    def k(self) -> int:
        return len(self.logits)


@dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 3.0
    lambda_feat: float = 3.0
    lambda_rec: float = 1.0
    lambda_c: float = 1.0

    def __post_init__(self):
        for name in ("lambda_adv", "lambda_feat", "lambda_rec", "lambda_c"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {value}")


def _checked_logits(x: np.ndarray, k: int) -> np.ndarray:
    if x.size == 0:
        raise DegenerateInputError(f"discriminator {k} produced no logits")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"discriminator {k} produced non-finite logits")
    return x


def disc_hinge_loss(real: DiscriminatorOutputs, fake: DiscriminatorOutputs) -> float:
    if real.k != fake.k:
        raise ShapeError(f"discriminator count mismatch: {real.k} vs {fake.k}")
    total = 0.0
    for k, (r, f) in enumerate(zip(real.logits, fake.logits)):
        r = _checked_logits(r, k)
        f = _checked_logits(f, k)
        total += np.mean(np.maximum(0.0, 1.0 - r)) + np.mean(np.maximum(0.0, 1.0 + f))
    return float(total / real.k)


def adv_hinge_loss(fake: DiscriminatorOutputs) -> float:
    total = 0.0
    for k, f in enumerate(fake.logits):
        total += np.mean(np.maximum(0.0, 1.0 - _checked_logits(f, k)))
    return float(total / fake.k)


def feature_match_loss(real: DiscriminatorOutputs, fake: DiscriminatorOutputs) -> float:
    """Per-layer L1 distance normalised by the mean magnitude of the real layer.

    The numerator is the mean absolute difference over the layer's elements,
    so the ratio does not depend on layer size.
    """
    if len(real.feature_maps) != len(fake.feature_maps) or not real.feature_maps:
        raise ShapeError(
            f"feature map discriminator count mismatch: {len(real.feature_maps)} vs {len(fake.feature_maps)}"
        )
    total = 0.0
    n_terms = 0
    n_layers = len(real.feature_maps[0])
    for k, (r_layers, f_layers) in enumerate(zip(real.feature_maps, fake.feature_maps)):
        if len(r_layers) != n_layers or len(f_layers) != n_layers:
            raise ShapeError(f"discriminator {k} has a different number of layers")
        for l, (r, f) in enumerate(zip(r_layers, f_layers)):
            if r.shape != f.shape:
                raise ShapeError(f"layer ({k}, {l}) shape mismatch: {r.shape} vs {f.shape}")
            scale = float(np.mean(np.abs(r))) if r.size else 0.0
            if scale == 0.0:
                raise DegenerateInputError(f"real feature map ({k}, {l}) is all zero")
            total += float(np.mean(np.abs(r - f))) / scale
            n_terms += 1
    return total / n_terms


def time_domain_l1(reference: AudioSignal, estimate: AudioSignal) -> float:
    check_pair(reference, estimate)
    if len(reference) == 0:
        return 0.0
    return float(np.mean(np.abs(reference.samples - estimate.samples)))


def reconstruction_loss(
    reference: AudioSignal, estimate: AudioSignal, mel_scales: Sequence[int] = DEFAULT_MEL_SCALES
) -> float:
    """Mean absolute waveform error plus multi-scale mel distance."""
    return time_domain_l1(reference, estimate) + mel_distance(reference, estimate, mel_scales)


def generator_total(adv: float, feat: float, rec: float, commit: float, w: LossWeights = LossWeights()) -> float:
    terms = (adv, feat, rec, commit)
    if not all(math.isfinite(t) for t in terms):
        raise DomainError(f"loss components must be finite, got {terms}")
    return w.lambda_adv * adv + w.lambda_feat * feat + w.lambda_rec * rec + w.lambda_c * commit
