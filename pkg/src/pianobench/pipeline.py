"""
Cleaning of per-frame hand annotations.

The chain is fixed: hampel outlier detection, gap classification and filling,
Savitzky-Golay smoothing, resampling to the benchmark frame rate, then segmentation
into clips.
"""

import logging
import typing as t
import warnings

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BadRange, BadWindow
from .types import SIDES, ClipWindow, GapLabel, HandTrack, MotionSequence, Side
from .utils import runs

logger = logging.getLogger(__name__)

MAD_SCALE = 1.4826
MAD_FLOOR = 1e-9
# a frame is an outlier when any translation channel or more than this share of
# angle channels is flagged
ANGLE_OUTLIER_FRACTION = 0.25


def hampel_filter(
    series: np.ndarray, window: int = 20, nsigma: float = 3.0
) -> np.ndarray:
    """
    Outlier mask of a series (N,) or of every column of (N, C).
    The window around sample n spans n - window//2 .. n + window//2, so the
    default `window=20` is a centred window of 21 samples. NaN samples are
    ignored and never flagged.
    """
    if window < 3:
        raise BadWindow(f"hampel window {window} is smaller than 3")
    x = np.asarray(series, dtype=float)
    half = window // 2
    pad = [(half, half)] + [(0, 0)] * (x.ndim - 1)
    windows = sliding_window_view(
        np.pad(x, pad, constant_values=np.nan), 2 * half + 1, axis=0
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        median = np.nanmedian(windows, axis=-1)
        mad = np.nanmedian(np.abs(windows - median[..., None]), axis=-1)
    threshold = nsigma * MAD_SCALE * np.maximum(mad, MAD_FLOOR)
    with np.errstate(invalid="ignore"):
        return np.isfinite(x) & (np.abs(x - median) > threshold)


def detect_frame_outliers(
    hand: HandTrack, window: int = 20, nsigma: float = 3.0
) -> np.ndarray:
    flags = hampel_filter(hand.channels(), window, nsigma)
    angles, trans = flags[:, :-3], flags[:, -3:]
    return trans.any(axis=1) | (angles.mean(axis=1) > ANGLE_OUTLIER_FRACTION)


def classify_and_fill(
    hand: HandTrack,
    outliers: np.ndarray,
    fill_max: int = 30,
    min_visible: int = 15,
) -> tuple[HandTrack, list[GapLabel]]:
    """
    Outliers and undetected frames become missing. Interior missing runs shorter
    than `fill_max` frames are linearly interpolated from their two neighbours;
    every other missing run is invisible. Visible runs shorter than `min_visible`
    frames are then relabeled invisible.
    """
    n = len(hand)
    outliers = np.asarray(outliers, dtype=bool)
    if outliers.shape != (n,):
        raise ValueError(f"outlier mask of shape {outliers.shape} for {n} frames")

    channels = hand.channels().copy()
    missing = ~hand.visible | outliers
    channels[missing] = np.nan
    visible = ~missing

    filled = []
    for start, stop in runs(missing):
        length = stop - start
        if start > 0 and stop < n and length < fill_max:
            alpha = (np.arange(1, length + 1) / (length + 1))[:, None]
            before, after = channels[start - 1], channels[stop]
            channels[start:stop] = (1 - alpha) * before + alpha * after
            visible[start:stop] = True
            filled.append((start, length))

    for start, stop in runs(visible):
        if stop - start < min_visible:
            visible[start:stop] = False
    channels[~visible] = np.nan

    labels = [GapLabel(s, length, "fill") for s, length in filled if visible[s]]
    labels += [GapLabel(a, b - a, "invisible") for a, b in runs(~visible)]
    labels.sort(key=lambda label: label.start)
    return hand.with_channels(channels, visible), labels


def savgol_coefficients(order: int = 3, window: int = 11) -> np.ndarray:
    """
    Least-squares projection matrix (window, window) of a local polynomial fit.
    Row i gives the fitted value at window position i; the centre row is the
    smoothing kernel.
    """
    if window % 2 == 0 or window <= order or order < 0:
        raise BadWindow(f"window {window} must be odd and larger than order {order}")
    half = window // 2
    A = np.vander(np.arange(-half, half + 1, dtype=float), order + 1, increasing=True)
    return A @ np.linalg.solve(A.T @ A, A.T)


def _convolve(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return sliding_window_view(x, len(kernel), axis=0) @ kernel


def _smooth_span(
    span: np.ndarray, H: np.ndarray, edge_mode: t.Literal["interp", "mirror"]
) -> np.ndarray:
    window = H.shape[0]
    half = window // 2
    if half == 0:
        return span.copy()
    kernel = H[half]
    if edge_mode == "mirror":
        pad = [(half, half)] + [(0, 0)] * (span.ndim - 1)
        return _convolve(np.pad(span, pad, mode="reflect"), kernel)
    out = np.empty_like(span)
    out[half:-half] = _convolve(span, kernel)
    out[:half] = H[:half] @ span[:window]
    out[-half:] = H[half + 1 :] @ span[-window:]
    return out


def savgol_smooth(
    series: np.ndarray,
    order: int = 3,
    window: int = 11,
    edge_mode: t.Literal["interp", "mirror"] = "interp",
) -> np.ndarray:
    """
    Savitzky-Golay smoothing of (N,) or (N, C) applied inside each run of finite
    frames. Runs shorter than `window` pass through unchanged.

    `edge_mode="interp"` fits the polynomial to the first and last window of a run
    and evaluates it at the edge samples, so cubics are reproduced exactly up to
    the run boundaries. `edge_mode="mirror"` pads each run by reflection instead;
    it does not reproduce cubics at the edges.
    """
    H = savgol_coefficients(order, window)
    x = np.asarray(series, dtype=float)
    out = x.copy()
    finite = np.isfinite(x.reshape(len(x), -1)).all(axis=1)
    for start, stop in runs(finite):
        if stop - start >= window:
            out[start:stop] = _smooth_span(x[start:stop], H, edge_mode)
    return out


def _resample_hand(
    hand: HandTrack, i0: np.ndarray, i1: np.ndarray, frac: np.ndarray
) -> HandTrack:
    channels = hand.channels()
    exact = frac == 0
    visible = np.where(exact, hand.visible[i0], hand.visible[i0] & hand.visible[i1])
    values = (1 - frac)[:, None] * channels[i0] + frac[:, None] * channels[i1]
    values[exact] = channels[i0[exact]]
    values[~visible] = np.nan
    return hand.with_channels(values, visible)


def resample_fps(sequence: MotionSequence, target_fps: float = 30.0) -> MotionSequence:
    """
    Linear interpolation onto the target frame grid. A target frame is visible
    only when the source frames bracketing it are visible.
    """
    if target_fps <= 0:
        raise BadRange(f"target fps {target_fps} must be positive")
    n = len(sequence)
    ratio = sequence.fps / target_fps
    count = int(np.floor((n - 1) / ratio + 1e-9)) + 1 if n else 0
    u = np.arange(count) * ratio
    i0 = np.floor(u + 1e-9).astype(int)
    frac = np.clip(u - i0, 0.0, 1.0)
    frac[frac < 1e-9] = 0.0
    i1 = np.minimum(i0 + 1, max(n - 1, 0))
    return MotionSequence(
        fps=target_fps,
        left=_resample_hand(sequence.left, i0, i1, frac),
        right=_resample_hand(sequence.right, i0, i1, frac),
        rho=sequence.rho,
    )


def segment_clips(
    sequence: MotionSequence,
    clip_len_s: float = 30.0,
    stride_s: float = 24.0,
    min_visibility: float = 0.80,
) -> list[ClipWindow]:
    """Fixed-length windows at a fixed stride, dropping poorly visible ones."""
    if clip_len_s <= 0 or not 0 < stride_s <= clip_len_s:
        raise BadRange(f"clip length {clip_len_s} s with stride {stride_s} s")
    clip = int(round(clip_len_s * sequence.fps))
    stride = int(round(stride_s * sequence.fps))
    visibility = (
        sequence.left.visible.astype(float) + sequence.right.visible.astype(float)
    ) / 2

    windows = []
    for start in range(0, len(sequence) - clip + 1, stride):
        share = float(visibility[start : start + clip].mean())
        if share < min_visibility:
            logger.debug("dropping clip at frame %d, visibility %.3f", start, share)
            continue
        windows.append(ClipWindow(start, clip, start / sequence.fps, share))
    return windows


def clean_track(
    raw: MotionSequence,
    hampel_window: int = 20,
    nsigma: float = 3.0,
    fill_max: int = 30,
    min_visible: int = 15,
    order: int = 3,
    window: int = 11,
    target_fps: float = 30.0,
) -> tuple[MotionSequence, dict[Side, list[GapLabel]]]:
    hands: dict[Side, HandTrack] = {}
    labels: dict[Side, list[GapLabel]] = {}
    for side in SIDES:
        hand = raw.hand(side)
        outliers = detect_frame_outliers(hand, hampel_window, nsigma)
        filled, labels[side] = classify_and_fill(hand, outliers, fill_max, min_visible)
        smoothed = savgol_smooth(filled.channels(), order, window)
        hands[side] = filled.with_channels(smoothed, filled.visible)
        logger.info(
            "%s hand: %d outlier frames, %d gaps filled, %d invisible spans",
            side,
            int(outliers.sum()),
            sum(label.kind == "fill" for label in labels[side]),
            sum(label.kind == "invisible" for label in labels[side]),
        )
    cleaned = MotionSequence(raw.fps, hands["left"], hands["right"], raw.rho)
    return resample_fps(cleaned, target_fps), labels


def gap_json(labels: dict[Side, list[GapLabel]], fps: float) -> dict[str, t.Any]:
    payload: dict[str, t.Any] = {"fps": fps}
    for side in SIDES:
        payload[side] = [
            {"start": g.start, "length": g.length, "kind": g.kind} for g in labels[side]
        ]
    return payload
