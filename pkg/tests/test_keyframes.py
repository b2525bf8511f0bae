"""Tests for mask scoring, smoothing and keyframe extraction."""

from __future__ import annotations

import numpy as np
import pytest

from artigen.error_handling import BadFilterConfig, DimensionMismatch, EmptyMask, NoMotionDetected, ValidationError
from artigen.keyframes import (
    MaskFrame,
    MaskSequence,
    analyze_sequence,
    compute_motion_scores,
    dynamic_threshold,
    extract_keyframes,
    motion_score,
    savgol_smooth,
    scores_table,
    subtract_masks,
)
from artigen.models import FilterConfig


def columns(first: int, last: int, size: int = 10) -> MaskFrame:
    bits = np.zeros((size, size), dtype=bool)
    bits[:, first:last + 1] = True
    return MaskFrame(bits)


def sliding_square(frames: int = 60, start: int = 20, end: int = 40) -> MaskSequence:
    """A 10x10 square that shifts one column per frame between start and end."""
    seq = []
    for t in range(frames):
        offset = 5 + min(max(t - start, 0), end - start)
        bits = np.zeros((40, 40), dtype=bool)
        bits[15:25, offset:offset + 10] = True
        seq.append((MaskFrame(bits), MaskFrame.empty(40, 40)))
    return MaskSequence(tuple(seq))


class TestMasks:
    def test_from_flat(self) -> None:
        """Checks row-major flat bits fill a height x width grid."""
        mask = MaskFrame.from_flat(3, 2, [1, 0, 0, 0, 0, 1])
        assert mask.shape == (2, 3)
        assert mask.bits[0, 0] and mask.bits[1, 2]
        assert mask.count() == 2

    def test_from_flat_wrong_size(self) -> None:
        """Checks a bit count mismatch is rejected."""
        with pytest.raises(DimensionMismatch):
            MaskFrame.from_flat(3, 3, [1, 0])

    def test_sequence_shapes(self) -> None:
        """Checks mixed mask sizes are rejected."""
        with pytest.raises(DimensionMismatch):
            MaskSequence(((columns(0, 1), columns(0, 1)), (columns(0, 1, 8), columns(0, 1, 8))))

    def test_sequence_length(self) -> None:
        """Checks a single frame is not a sequence."""
        with pytest.raises(ValidationError):
            MaskSequence(((columns(0, 1), columns(0, 1)),))


class TestSubtraction:
    def test_empty_robot(self) -> None:
        """Checks empty robot masks leave movable masks unchanged."""
        empty = MaskFrame.empty(10, 10)
        m_t, m_t1 = subtract_masks(columns(0, 4), empty, columns(1, 5), empty)
        np.testing.assert_array_equal(m_t.bits, columns(0, 4).bits)
        np.testing.assert_array_equal(m_t1.bits, columns(1, 5).bits)

    def test_full_cover(self) -> None:
        """Checks a robot covering the movable mask empties it."""
        m_t, _ = subtract_masks(columns(0, 4), columns(0, 9), columns(1, 5), MaskFrame.empty(10, 10))
        assert m_t.count() == 0

    def test_one_column(self) -> None:
        """Checks removing one robot column leaves 40 pixels."""
        m_t, _ = subtract_masks(columns(0, 4), columns(4, 4), columns(1, 5), MaskFrame.empty(10, 10))
        assert m_t.count() == 40
        np.testing.assert_array_equal(m_t.bits, columns(0, 3).bits)

    def test_shape_mismatch(self) -> None:
        """Checks differently sized masks are rejected."""
        with pytest.raises(DimensionMismatch):
            subtract_masks(columns(0, 4), columns(0, 4, 8), columns(0, 4), columns(0, 4))


class TestMotionScore:
    def test_identical(self) -> None:
        """Checks unchanged masks score zero."""
        assert motion_score(columns(0, 4), columns(0, 4)) == 0.0

    def test_vanished(self) -> None:
        """Checks a mask that disappears scores one."""
        assert motion_score(columns(0, 4), MaskFrame.empty(10, 10)) == 1.0

    def test_shift(self) -> None:
        """Checks a one-column shift of five columns scores 0.2."""
        assert motion_score(columns(0, 4), columns(1, 5)) == pytest.approx(0.2)

    def test_empty(self) -> None:
        """Checks an empty reference mask raises."""
        with pytest.raises(EmptyMask):
            motion_score(MaskFrame.empty(10, 10), columns(0, 4))

    def test_occluded_frame_reuses_previous(self) -> None:
        """Checks a fully occluded frame repeats the previous score."""
        full = MaskFrame(np.ones((10, 10), dtype=bool))
        empty = MaskFrame.empty(10, 10)
        seq = MaskSequence(((columns(0, 4), empty), (columns(1, 5), empty), (empty, full), (columns(3, 7), empty)))
        scores = compute_motion_scores(seq)
        assert len(scores) == 3
        assert scores[0] == pytest.approx(0.2)
        assert scores[1] == pytest.approx(0.2)
        assert scores[2] == pytest.approx(0.2)


class TestSavgol:
    def test_constant(self) -> None:
        """Checks a constant series is unchanged."""
        np.testing.assert_allclose(savgol_smooth(np.full(20, 0.3)), 0.3, atol=1e-12)

    def test_polynomial_interior(self) -> None:
        """Checks t squared is reproduced away from the edges."""
        t = np.arange(30, dtype=float)
        smoothed = savgol_smooth(t ** 2, window=11, order=3)
        np.testing.assert_allclose(smoothed[5:-5], (t ** 2)[5:-5], atol=1e-9)

    def test_five_point_quadratic(self) -> None:
        """Checks the 5-point quadratic kernel center weight 17/35."""
        assert savgol_smooth([0, 0, 1, 0, 0], window=5, order=2)[2] == pytest.approx(17.0 / 35.0)

    @pytest.mark.parametrize("window,order,length", [(10, 3, 20), (11, 11, 20), (11, 3, 5), (0, 0, 5)])
    def test_bad_config(self, window: int, order: int, length: int) -> None:
        """Checks even windows, high orders and short series are rejected."""
        with pytest.raises(BadFilterConfig):
            savgol_smooth(np.zeros(length), window=window, order=order)


class TestThreshold:
    def test_constant(self) -> None:
        """Checks a constant series has zero noise."""
        assert dynamic_threshold(np.full(10, 0.25)) == pytest.approx((0.25, 0.0, 0.25))

    def test_quiet_regime(self) -> None:
        """Checks spikes above the baseline do not inflate sigma."""
        assert dynamic_threshold([0, 0, 0, 0, 0, 0, 0, 0, 1, 1]) == pytest.approx((0.0, 0.0, 0.0))

    def test_too_short(self) -> None:
        """Checks fewer than five values are rejected."""
        with pytest.raises(BadFilterConfig):
            dynamic_threshold([0.0, 0.1, 0.2])

    def test_extract(self) -> None:
        """Checks the first and last scores above the threshold."""
        assert extract_keyframes([0, 0, 0.5, 0.5, 0], 0.1) == (2, 3)

    def test_nothing_above(self) -> None:
        """Checks no score above the threshold raises."""
        with pytest.raises(NoMotionDetected):
            extract_keyframes([0.0, 0.05, 0.1], 0.1)


class TestAnalyze:
    def test_sliding_square(self) -> None:
        """Checks the window of a square sliding from frame 20 to 40."""
        series = analyze_sequence(sliding_square())
        assert abs(series.start_frame - 20) <= 1
        assert abs(series.end_frame - 40) <= 1
        assert len(series.raw) == 59
        assert series.raw[25] == pytest.approx(0.1)

    def test_static_sequence(self) -> None:
        """Checks a sequence without motion raises."""
        still = sliding_square(start=100, end=101)
        with pytest.raises(NoMotionDetected):
            analyze_sequence(still)

    def test_edge_refinement_off(self) -> None:
        """Checks the unrefined window still covers the motion."""
        series = analyze_sequence(sliding_square(), FilterConfig(edge_fraction=0.0))
        assert series.start_frame <= 20
        assert series.end_frame >= 40

    def test_revolute_oracle(self, revolute_bundle) -> None:
        """Checks keyframes on a noiseless lid scene."""
        series = analyze_sequence(revolute_bundle.masks)
        assert abs(series.start_frame - revolute_bundle.truth.start_true) <= 1
        assert abs(series.end_frame - revolute_bundle.truth.end_true) <= 1

    def test_prismatic_oracle(self, prismatic_bundle) -> None:
        """Checks keyframes on a noiseless drawer scene."""
        series = analyze_sequence(prismatic_bundle.masks)
        assert abs(series.start_frame - prismatic_bundle.truth.start_true) <= 2
        assert abs(series.end_frame - prismatic_bundle.truth.end_true) <= 2

    def test_scores_table(self) -> None:
        """Checks the CSV table has one row per score."""
        table = scores_table(analyze_sequence(sliding_square()))
        assert list(table.columns) == ["frame", "raw", "smoothed", "label", "threshold"]
        assert len(table) == 59
