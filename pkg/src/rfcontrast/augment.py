"""Weak and strong stochastic augmentations for IQ frames.

Weak = random scaling (one factor for both rails, as a hardware gain change
scales I and Q together). Strong = jitter followed by segment permutation,
with identical segment boundaries and permutation applied to both rails so
complex-sample alignment survives. Each call returns new frames; inputs are
never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import IQFrame


@dataclass(frozen=True)
class AugmentConfig:
    """Bounds follow the conventional time-series augmentation magnitudes."""

    scale_low: float = 0.7
    scale_high: float = 1.3
    jitter_sigma: float = 0.05
    max_segments: int = 5

    def __post_init__(self):
        if not 0 < self.scale_low <= self.scale_high:
            raise ValueError(f"need 0 < scale_low <= scale_high, got "
                             f"({self.scale_low}, {self.scale_high})")
        if self.jitter_sigma < 0:
            raise ValueError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if self.max_segments < 1:
            raise ValueError(f"max_segments must be >= 1, got {self.max_segments}")


@dataclass
class AugmentedPair:
    x_weak: IQFrame
    x_strong: IQFrame
    source_frame_index: int
    transmission_id: int


def weak_augment(frame: IQFrame, rng: np.random.Generator,
                 cfg: AugmentConfig = AugmentConfig()) -> IQFrame:
    """Scale the whole frame by s ~ U[scale_low, scale_high]."""
    s = rng.uniform(cfg.scale_low, cfg.scale_high)
    return IQFrame(data=(frame.data * np.float32(s)), frame_index=frame.frame_index)


def segment_boundaries(window: int, num_segments: int) -> list[int]:
    """Split points for near-equal contiguous segments.

    The first (window mod num_segments) segments are one sample longer.
    Returns num_segments+1 boundary indices starting at 0 and ending at window.
    """
    base, extra = divmod(window, num_segments)
    bounds = [0]
    for i in range(num_segments):
        bounds.append(bounds[-1] + base + (1 if i < extra else 0))
    return bounds


def permute_segments(data: np.ndarray, permutation: np.ndarray) -> np.ndarray:
    """Reorder time-axis segments of a 2xW array by the given permutation."""
    m = len(permutation)
    bounds = segment_boundaries(data.shape[1], m)
    segments = [data[:, bounds[i]:bounds[i + 1]] for i in range(m)]
    return np.concatenate([segments[j] for j in permutation], axis=1)


def strong_augment(frame: IQFrame, rng: np.random.Generator,
                   cfg: AugmentConfig = AugmentConfig()) -> IQFrame:
    """Jitter every entry, then permute M ~ U{1..max_segments} time segments."""
    if frame.window < cfg.max_segments:
        raise ValueError(f"window {frame.window} shorter than max_segments {cfg.max_segments}")
    data = frame.data.astype(np.float64)
    if cfg.jitter_sigma > 0:
        noise_std = cfg.jitter_sigma * data.std()
        data = data + rng.normal(0.0, 1.0, size=data.shape) * noise_std
    m = int(rng.integers(1, cfg.max_segments + 1))
    if m > 1:
        data = permute_segments(data, rng.permutation(m))
    return IQFrame(data=data.astype(np.float32), frame_index=frame.frame_index)


def make_pair(frame: IQFrame, transmission_id: int, rng: np.random.Generator,
              cfg: AugmentConfig = AugmentConfig()) -> AugmentedPair:
    """Produce the (weak, strong) view pair of one frame."""
    return AugmentedPair(
        x_weak=weak_augment(frame, rng, cfg),
        x_strong=strong_augment(frame, rng, cfg),
        source_frame_index=frame.frame_index,
        transmission_id=transmission_id,
    )
