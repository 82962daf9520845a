import numpy as np
import pytest
from conftest import ramp_sequence
from scipy.signal import savgol_coeffs, savgol_filter

from pianobench.errors import BadRange, BadWindow
from pianobench.pipeline import (
    classify_and_fill,
    clean_track,
    gap_json,
    hampel_filter,
    resample_fps,
    savgol_coefficients,
    savgol_smooth,
    segment_clips,
)
from pianobench.types import GapLabel, HandTrack, MotionSequence
from pianobench.utils import runs


def test_hampel_constant_and_ramp():
    assert not hampel_filter(np.full(100, 3.0)).any(), "Constant series has no outliers"

    ramp = np.arange(100, dtype=float)
    assert not hampel_filter(ramp).any(), "A clean ramp has no outliers"
    ramp[50] = 1000.0
    assert np.flatnonzero(hampel_filter(ramp)).tolist() == [50]


def test_hampel_mad_floor():
    series = np.zeros(41)
    series[20] = 1.0
    assert np.flatnonzero(hampel_filter(series)).tolist() == [20], "MAD of 0 is floored"


def test_hampel_seeded_spikes(rng: np.random.Generator):
    for _ in range(100):
        n = 200
        slope = rng.uniform(0.1, 1.0) * rng.choice([-1.0, 1.0])
        series = rng.uniform(-10, 10) + slope * np.arange(n)
        spikes = np.sort(rng.choice(np.arange(0, n, 16), size=4, replace=False))
        series[spikes] += rng.choice([-1.0, 1.0], size=4) * rng.uniform(100, 300, 4)
        assert np.flatnonzero(hampel_filter(series, 20)).tolist() == spikes.tolist()


def test_hampel_columns_and_nan():
    series = np.tile(np.arange(60, dtype=float)[:, None], (1, 3))
    series[10, 1] = 500.0
    series[30:35, 2] = np.nan
    flags = hampel_filter(series)
    assert flags.shape == series.shape
    assert np.argwhere(flags).tolist() == [[10, 1]], "NaN samples are never flagged"
    with pytest.raises(BadWindow):
        hampel_filter(series, window=2)


def hand_from_mask(visible: np.ndarray) -> HandTrack:
    n = len(visible)
    trans = np.outer(np.arange(n, dtype=float), [1.0, 2.0, 3.0])
    theta = np.tile(np.arange(n, dtype=float)[:, None, None], (1, 16, 3))
    return HandTrack("right", theta, trans, visible)


def reference_labels(visible: np.ndarray) -> tuple[np.ndarray, list[GapLabel]]:
    """Frame-by-frame reimplementation of the gap rules."""
    n = len(visible)
    state = visible.copy()
    fills = []
    i = 0
    while i < n:
        if visible[i]:
            i += 1
            continue
        j = i
        while j < n and not visible[j]:
            j += 1
        if i > 0 and j < n and j - i < 30:
            state[i:j] = True
            fills.append((i, j - i))
        i = j
    i = 0
    while i < n:
        if not state[i]:
            i += 1
            continue
        j = i
        while j < n and state[j]:
            j += 1
        if j - i < 15:
            state[i:j] = False
        i = j
    labels = [GapLabel(s, length, "fill") for s, length in fills if state[s]]
    i = 0
    while i < n:
        if state[i]:
            i += 1
            continue
        j = i
        while j < n and not state[j]:
            j += 1
        labels.append(GapLabel(i, j - i, "invisible"))
        i = j
    return state, sorted(labels, key=lambda label: label.start)


def random_mask(rng: np.random.Generator, n: int = 300) -> np.ndarray:
    mask = np.empty(n, dtype=bool)
    i, value = 0, bool(rng.integers(2))
    while i < n:
        length = int(rng.choice([rng.integers(1, 15), rng.integers(15, 60)]))
        mask[i : i + length] = value
        i += length
        value = not value
    return mask


def test_gap_rules_match_reference(rng: np.random.Generator):
    for _ in range(1000):
        visible = random_mask(rng)
        hand = hand_from_mask(visible)
        filled, labels = classify_and_fill(hand, np.zeros(len(visible), dtype=bool))
        state, expected = reference_labels(visible)
        assert labels == expected
        np.testing.assert_array_equal(filled.visible, state)
        assert all(stop - start >= 15 for start, stop in runs(filled.visible))
        assert all(g.length < 30 for g in labels if g.kind == "fill")
        assert np.isfinite(filled.trans[filled.visible]).all()
        assert np.isnan(filled.trans[~filled.visible]).all()


def test_fill_is_linear():
    visible = np.ones(60, dtype=bool)
    visible[21:30] = False
    filled, labels = classify_and_fill(hand_from_mask(visible), np.zeros(60, bool))
    assert labels == [GapLabel(21, 9, "fill")]
    assert filled.trans[25, 0] == pytest.approx(25.0), "Midpoint is the average"
    np.testing.assert_allclose(filled.trans[:, 0], np.arange(60.0))

    visible = np.ones(100, dtype=bool)
    visible[20:65] = False
    _, labels = classify_and_fill(hand_from_mask(visible), np.zeros(100, bool))
    assert labels == [GapLabel(20, 45, "invisible")], "45 frames is too long to fill"


def test_short_visible_run_becomes_invisible():
    visible = np.zeros(160, dtype=bool)
    visible[:40] = True
    visible[75:87] = True
    visible[120:] = True
    filled, labels = classify_and_fill(hand_from_mask(visible), np.zeros(160, bool))
    assert not filled.visible[75:87].any(), "A 12-frame island is invisible"
    assert labels == [GapLabel(40, 80, "invisible")]


def test_outliers_become_gaps():
    hand = hand_from_mask(np.ones(60, dtype=bool))
    outliers = np.zeros(60, dtype=bool)
    outliers[33] = True
    filled, labels = classify_and_fill(hand, outliers)
    assert labels == [GapLabel(33, 1, "fill")]
    np.testing.assert_allclose(filled.channels(), hand.channels())


def test_savgol_kernel():
    H = savgol_coefficients(3, 11)
    kernel = H[5]
    assert abs(kernel.sum() - 1.0) < 1e-12, "Kernel weights sum to one"
    np.testing.assert_allclose(kernel, savgol_coeffs(11, 3), atol=1e-12)
    for window, order in [(10, 3), (3, 3), (5, -1)]:
        with pytest.raises(BadWindow):
            savgol_coefficients(order, window)


def test_savgol_reproduces_cubics(rng: np.random.Generator):
    x = np.linspace(-2, 2, 50)
    cubic = 0.3 * x**3 - x**2 + 2 * x - 1
    np.testing.assert_allclose(savgol_smooth(cubic), cubic, atol=1e-9)
    np.testing.assert_allclose(savgol_smooth(np.full(30, 4.2)), 4.2, atol=1e-12)
    np.testing.assert_allclose(
        savgol_smooth(np.full(30, 4.2), edge_mode="mirror"), 4.2, atol=1e-12
    )

    noisy = np.sin(x) + rng.normal(scale=0.1, size=50)
    np.testing.assert_allclose(
        savgol_smooth(noisy), savgol_filter(noisy, 11, 3, mode="interp"), atol=1e-10
    )


def test_savgol_spans_and_contraction(rng: np.random.Generator):
    noisy = rng.normal(size=(80, 2))
    noisy[40:42] = np.nan
    noisy[50:55] = np.nan
    smoothed = savgol_smooth(noisy)
    assert np.isnan(smoothed[40:42]).all() and np.isnan(smoothed[50:55]).all()
    np.testing.assert_array_equal(smoothed[42:50], noisy[42:50])
    assert not np.allclose(smoothed[:40], noisy[:40]), "Long spans are smoothed"
    np.testing.assert_allclose(
        smoothed[55:], savgol_filter(noisy[55:], 11, 3, axis=0), atol=1e-10
    )

    finite = rng.normal(size=200)
    first = savgol_smooth(finite)
    second = savgol_smooth(first)
    assert np.linalg.norm(second - first) < np.linalg.norm(first - finite)


def test_resample():
    sequence = ramp_sequence(61, fps=60.0)
    half = resample_fps(sequence, 30.0)
    assert len(half) == 31 and half.fps == 30.0
    np.testing.assert_allclose(half.right.trans, sequence.right.trans[::2])
    ends = [0, -1]
    np.testing.assert_array_equal(half.right.trans[ends], sequence.right.trans[ends])

    same = resample_fps(sequence, 60.0)
    np.testing.assert_array_equal(same.left.theta, sequence.left.theta)

    double = resample_fps(ramp_sequence(30), 60.0)
    assert len(double) == 59
    np.testing.assert_allclose(
        double.left.trans[1], (double.left.trans[0] + double.left.trans[2]) / 2
    )

    sequence.right.visible[10] = False
    sequence.right.theta[10] = np.nan
    sequence.right.trans[10] = np.nan
    resampled = resample_fps(sequence, 40.0)
    invisible = np.flatnonzero(~resampled.right.visible).tolist()
    assert invisible == [7], "Only the frame interpolated across the gap"
    assert resampled.left.visible.all()
    assert np.isnan(resampled.right.trans[7]).all()

    with pytest.raises(BadRange):
        resample_fps(sequence, 0.0)


def sequence_of(seconds: int, fps: float = 10.0) -> MotionSequence:
    return ramp_sequence(int(seconds * fps), fps)


def test_segment_78_seconds():
    windows = segment_clips(sequence_of(78, 30.0))
    assert [w.offset_s for w in windows] == [0.0, 24.0, 48.0]
    assert all(w.frames == 900 for w in windows)
    assert segment_clips(sequence_of(29)) == []


def test_segment_matches_enumeration():
    for seconds in range(0, 201):
        windows = segment_clips(sequence_of(seconds))
        expected = [k * 24 for k in range(10) if k * 24 + 30 <= seconds]
        assert [w.offset_s for w in windows] == expected, f"{seconds} s"


def test_segment_drops_poorly_visible_clips():
    sequence = sequence_of(30)
    sequence.right.visible[::2] = False
    assert segment_clips(sequence) == [], "75% visibility is below 80%"
    sequence.right.visible[:180] = True
    assert len(segment_clips(sequence)) == 1
    with pytest.raises(BadRange):
        segment_clips(sequence, 30, 31)


def test_clean_track_removes_spike():
    raw = ramp_sequence(300)
    raw.right.trans[150, 0] += 5.0
    cleaned, labels = clean_track(raw)
    assert labels["right"] == [GapLabel(150, 1, "fill")]
    assert labels["left"] == []
    expected = ramp_sequence(300)
    np.testing.assert_allclose(cleaned.right.trans, expected.right.trans, atol=1e-9)
    np.testing.assert_allclose(cleaned.left.theta, expected.left.theta, atol=1e-9)

    payload = gap_json(labels, raw.fps)
    assert payload["right"] == [{"start": 150, "length": 1, "kind": "fill"}]


def test_clean_track_dropout():
    raw = ramp_sequence(300)
    raw.left.visible[100:145] = False
    raw.left.theta[100:145] = np.nan
    raw.left.trans[100:145] = np.nan
    cleaned, labels = clean_track(raw)
    assert labels["left"] == [GapLabel(100, 45, "invisible")]
    assert not cleaned.left.visible[100:145].any()
    visible = cleaned.left.visible
    expected = ramp_sequence(300).left
    np.testing.assert_allclose(
        cleaned.left.trans[visible], expected.trans[visible], atol=1e-12
    )
