import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.signal import savgol_filter

from artigen.error_handling import (
    BadFilterConfig,
    DimensionMismatch,
    EmptyMask,
    NoMotionDetected,
    ValidationError,
)
from artigen.models import FilterConfig, MotionScoreSeries

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

BASELINE_PERCENTILE = 20.0
NOISE_SIGMAS = 3.0


@dataclass(frozen=True, eq=False)
class MaskFrame:
    """Binary mask stored as a (height, width) boolean grid."""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits).astype(bool)
        if bits.ndim != 2:
            raise DimensionMismatch(f"Mask must be two-dimensional, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, width: int, height: int) -> "MaskFrame":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_flat(cls, width: int, height: int, bits: Sequence[bool]) -> "MaskFrame":
        flat = np.asarray(bits).astype(bool).reshape(-1)
        if flat.size != width * height:
            raise DimensionMismatch(f"Expected {width * height} mask bits, got {flat.size}")
        return cls(flat.reshape(height, width))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))


@dataclass(frozen=True, eq=False)
class MaskSequence:
    """Per-frame (movable, robot) mask pairs of uniform size."""
    frames: Tuple[Tuple[MaskFrame, MaskFrame], ...]

    def __post_init__(self):
        frames = tuple((m, r) for m, r in self.frames)
        if len(frames) < 2:
            raise ValidationError(f"A mask sequence needs at least 2 frames, got {len(frames)}")
        shape = frames[0][0].shape
        for i, (movable, robot) in enumerate(frames):
            if movable.shape != shape or robot.shape != shape:
                raise DimensionMismatch(f"Frame {i} masks differ from {shape}",
                                        details={"frame": i})
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


def _check_shapes(*masks: MaskFrame) -> None:
    shapes = {m.shape for m in masks}
    if len(shapes) > 1:
        raise DimensionMismatch(f"Mask dimensions differ: {sorted(shapes)}")


def subtract_masks(m_dyn_t: MaskFrame, m_robot_t1: MaskFrame,
                   m_dyn_t1: MaskFrame, m_robot_t: MaskFrame) -> Tuple[MaskFrame, MaskFrame]:
    """Remove the other frame's robot pixels from each movable mask."""
    _check_shapes(m_dyn_t, m_robot_t1, m_dyn_t1, m_robot_t)
    return (MaskFrame(m_dyn_t.bits & ~m_robot_t1.bits),
            MaskFrame(m_dyn_t1.bits & ~m_robot_t.bits))


def motion_score(m_t: MaskFrame, m_t1: MaskFrame) -> float:
    """Fraction of M^t pixels that are gone in M^{t+1}."""
    _check_shapes(m_t, m_t1)
    total = m_t.count()
    if total == 0:
        raise EmptyMask("Processed mask has no pixels")
    return float(np.count_nonzero(m_t.bits & ~m_t1.bits)) / total


def compute_motion_scores(sequence: MaskSequence) -> np.ndarray:
    """Raw scores for every consecutive frame pair; occluded frames reuse the previous score."""
    scores = np.zeros(len(sequence) - 1)
    previous = 0.0
    for t in range(len(sequence) - 1):
        dyn_t, robot_t = sequence.frames[t]
        dyn_t1, robot_t1 = sequence.frames[t + 1]
        m_t, m_t1 = subtract_masks(dyn_t, robot_t1, dyn_t1, robot_t)
        if m_t.count() == 0:
            logger.debug(f"Frame {t} fully occluded; reusing score {previous:.4f}")
            scores[t] = previous
            continue
        previous = motion_score(m_t, m_t1)
        scores[t] = previous
    return scores


def savgol_smooth(series, window: int = 11, order: int = 3) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if window < 1 or window % 2 == 0:
        raise BadFilterConfig(f"Window must be a positive odd integer, got {window}")
    if order < 0 or order >= window:
        raise BadFilterConfig(f"Order must satisfy 0 <= order < window, got order={order}, window={window}")
    if x.size < window:
        raise BadFilterConfig(f"Series of length {x.size} is shorter than the window {window}",
                              details={"length": int(x.size), "window": window})
    return savgol_filter(x, window, order, mode="mirror")


def dynamic_threshold(smoothed) -> Tuple[float, float, float]:
    """Baseline B (20th percentile), quiet-regime noise sigma and threshold B + 3 sigma."""
    x = np.asarray(smoothed, dtype=float)
    if x.size < 5:
        raise BadFilterConfig(f"Need at least 5 scores for a threshold, got {x.size}")
    baseline = float(np.percentile(x, BASELINE_PERCENTILE))
    quiet = x[x <= baseline]
    sigma = float(np.std(quiet, ddof=1)) if quiet.size >= 2 else 0.0
    return baseline, sigma, baseline + NOISE_SIGMAS * sigma


def extract_keyframes(smoothed, mu: float) -> Tuple[int, int]:
    above = np.flatnonzero(np.asarray(smoothed, dtype=float) > mu)
    if above.size == 0:
        raise NoMotionDetected(f"No motion score exceeds the threshold {mu:.4f}",
                               details={"threshold": mu})
    return int(above[0]), int(above[-1])


def _longest_run(labels: np.ndarray) -> Tuple[int, int]:
    best = (0, -1)
    start = None
    for i, flag in enumerate(np.append(labels, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - 1 - start > best[1] - best[0]:
                best = (start, i - 1)
            start = None
    return best


def analyze_sequence(sequence: MaskSequence, cfg: FilterConfig = FilterConfig()) -> MotionScoreSeries:
    """Score, smooth and threshold a mask sequence, then locate the motion window.

    Score t compares frames t and t+1, so a window whose last moving score is b
    ends at frame b + 1. Isolated spikes outside the longest labelled run are
    ignored; the run's edges are tightened to where the smoothed score reaches
    ``edge_fraction`` of the way from the baseline to the run median.
    """
    raw = compute_motion_scores(sequence)
    smoothed = savgol_smooth(raw, cfg.window, cfg.order)
    baseline, sigma, mu = dynamic_threshold(smoothed)
    labels = smoothed > mu
    extract_keyframes(smoothed, mu)

    first, last = _longest_run(labels)
    if cfg.edge_fraction > 0:
        level = baseline + cfg.edge_fraction * (float(np.median(smoothed[first:last + 1])) - baseline)
        strong = np.flatnonzero(smoothed[first:last + 1] >= level)
        if strong.size:
            first, last = first + int(strong[0]), first + int(strong[-1])

    logger.info(f"Motion window frames {first}..{last + 1} (B={baseline:.4f}, sigma={sigma:.4f}, mu={mu:.4f})")
    return MotionScoreSeries(
        raw=raw.tolist(),
        smoothed=smoothed.tolist(),
        baseline_B=baseline,
        sigma_noise=sigma,
        threshold_mu=mu,
        labels=labels.tolist(),
        start_frame=first,
        end_frame=last + 1,
    )


def scores_table(series: MotionScoreSeries) -> pd.DataFrame:
    """Per-score rows for CSV export."""
    return pd.DataFrame({
        "frame": np.arange(len(series.raw)),
        "raw": series.raw,
        "smoothed": series.smoothed,
        "label": series.labels,
        "threshold": series.threshold_mu,
    })
