"""
Benchmark evaluation over paired prediction and ground-truth clip directories.

Clips are paired by file name and processed in sorted clip-id order, so a report
depends only on the inputs and the configuration.
"""

import logging
import os
import typing as t
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CliConfig
from .dataset import load_track
from .errors import (
    EmptyDataset,
    LatentDimClamped,
    LengthMismatch,
    TooFewSamples,
    TooShort,
    UnpairedClip,
)
from .gmm import wgd
from .hand import HandTemplate, load_template
from .metrics import (
    Embedder,
    HandMetrics,
    MetricReport,
    compute_fid,
    fgd,
    fit_embedder,
    position_distance,
    smoothness_per_hand,
)
from .pipeline import resample_fps
from .types import SIDES, HandShape, HandTrack, MotionSequence, Side
from .utils import amap_threads, syncify

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ClipPair:
    clip_id: str
    pred: MotionSequence
    gt: MotionSequence


def _clip_files(directory: t.Union[str, os.PathLike]) -> dict[str, Path]:
    return {
        p.stem: p
        for p in sorted(Path(directory).glob("*.json"))
        if not p.name.endswith(".gaps.json")
    }


def pair_clip_files(
    pred_dir: t.Union[str, os.PathLike], gt_dir: t.Union[str, os.PathLike]
) -> list[tuple[str, Path, Path]]:
    pred, gt = _clip_files(pred_dir), _clip_files(gt_dir)
    for clip_id in sorted(gt):
        if clip_id not in pred:
            raise UnpairedClip(clip_id, "predictions")
    for clip_id in sorted(pred):
        if clip_id not in gt:
            raise UnpairedClip(clip_id, "ground truth")
    if not gt:
        raise EmptyDataset(f"no clip files in {gt_dir}")
    return [(clip_id, pred[clip_id], gt[clip_id]) for clip_id in sorted(gt)]


def _windows(n: int, size: int, stride: int) -> list[int]:
    return list(range(0, n - size + 1, stride))


def _zeroed(track: HandTrack) -> np.ndarray:
    """Joint angles (N, J, 3) with invisible frames set to zero."""
    return np.where(track.visible[:, None, None], track.theta, 0.0)


def _fitted_embedder(gt_features: np.ndarray, config: CliConfig) -> Embedder:
    if config.embedder is not None:
        return Embedder.load(config.embedder)
    n, dim = gt_features.shape
    latent_dim = min(config.latent_dim, dim)
    if n <= latent_dim:
        if n < 3:
            raise TooFewSamples(f"{n} evaluation windows, need at least 3 for FID")
        warnings.warn(
            f"{n} evaluation windows for a {latent_dim}-dim embedding, using {n - 1}",
            LatentDimClamped,
            stacklevel=3,
        )
        latent_dim = n - 1
    return fit_embedder(gt_features, latent_dim)


def evaluate_pairs(
    pairs: t.Sequence[ClipPair],
    config: t.Optional[CliConfig] = None,
    template: t.Optional[HandTemplate] = None,
    smooth_values: t.Optional[dict[Side, list[float]]] = None,
) -> MetricReport:
    """
    Compute the selected metrics over aligned clip pairs.
    `smooth_values` lets a caller pass per-clip smoothness computed elsewhere.
    """
    config = config or CliConfig()
    if not pairs:
        raise EmptyDataset("no clip pairs to evaluate")
    size = int(round(config.window_s * config.fps))
    stride = int(round(config.stride_s * config.fps))

    fid_pred, fid_gt = [], []
    seq_pred: dict[Side, list[np.ndarray]] = {side: [] for side in SIDES}
    seq_gt: dict[Side, list[np.ndarray]] = {side: [] for side in SIDES}
    for pair in pairs:
        for start in _windows(len(pair.gt), size, stride):
            stop = start + size
            for side in SIDES:
                seq_pred[side].append(_zeroed(pair.pred.hand(side))[start:stop])
                seq_gt[side].append(_zeroed(pair.gt.hand(side))[start:stop])
            fid_pred.append(np.concatenate([seq_pred[s][-1].ravel() for s in SIDES]))
            fid_gt.append(np.concatenate([seq_gt[s][-1].ravel() for s in SIDES]))
    window_count = len(fid_gt)
    logger.info(
        "%d clips, %d evaluation windows of %d frames", len(pairs), window_count, size
    )

    report = MetricReport(
        seed=config.seed,
        gmm_components=config.gmm_components,
        latent_dim=config.latent_dim,
        clip_count=len(pairs),
        window_count=window_count,
        fps=config.fps,
    )
    if window_count == 0 and {"fid", "fgd"} & set(config.metrics):
        raise TooFewSamples(f"every clip is shorter than the {size}-frame window")
    if "fid" in config.metrics:
        embedder = _fitted_embedder(np.stack(fid_gt), config)
        report.latent_dim = embedder.latent_dim
        report.fid = compute_fid(np.stack(fid_pred), np.stack(fid_gt), embedder)

    for side in SIDES:
        hand = HandMetrics()
        if "fgd" in config.metrics:
            hand.fgd = fgd(seq_pred[side], seq_gt[side])
        if "wgd" in config.metrics:
            pred_frames = np.concatenate(
                [p.pred.hand(side).theta[p.pred.hand(side).visible] for p in pairs]
            )
            gt_frames = np.concatenate(
                [p.gt.hand(side).theta[p.gt.hand(side).visible] for p in pairs]
            )
            hand.wgd = wgd(
                pred_frames.reshape(len(pred_frames), -1),
                gt_frames.reshape(len(gt_frames), -1),
                config.gmm_components,
                config.seed,
            )
        if "pd" in config.metrics:
            pred_pos, gt_pos = [], []
            for p in pairs:
                both = p.pred.hand(side).visible & p.gt.hand(side).visible
                pred_pos.append(p.pred.hand(side).trans[both])
                gt_pos.append(p.gt.hand(side).trans[both])
            hand.pd = position_distance(
                np.concatenate(pred_pos), np.concatenate(gt_pos)
            )
        if "smooth" in config.metrics:
            values = (smooth_values or {}).get(side)
            if values is None:
                per_clip = [
                    _clip_smoothness(p, side, config.fps, template) for p in pairs
                ]
                values = _known(per_clip, side)
            hand.smoothness = float(np.mean(values))
        setattr(report, side, hand)
    return MetricReport.model_validate(report.model_dump())


def _known(values: list[t.Optional[float]], side: Side) -> list[float]:
    known = [v for v in values if v is not None]
    if not known:
        raise TooShort(f"no clip has three consecutive visible {side}-hand frames")
    return known


def _clip_smoothness(
    pair: ClipPair, side: Side, fps: float, template: t.Optional[HandTemplate]
) -> t.Optional[float]:
    try:
        return smoothness_per_hand(
            pair.pred.hand(side),
            pair.gt.hand(side),
            fps,
            HandShape(pair.gt.rho),
            template,
        )
    except TooShort:
        logger.debug("%s: %s hand too short for smoothness", pair.clip_id, side)
        return None


async def aevaluate_dirs(
    pred_dir: t.Union[str, os.PathLike],
    gt_dir: t.Union[str, os.PathLike],
    config: t.Optional[CliConfig] = None,
) -> MetricReport:
    """
    Evaluate a prediction directory against a ground-truth directory.
    Clip loading and per-clip smoothness run in up to `config.jobs` worker threads.
    """
    config = config or CliConfig()
    files = pair_clip_files(pred_dir, gt_dir)
    template = load_template(config.template)

    def load(entry: tuple[str, Path, Path]) -> ClipPair:
        clip_id, pred_path, gt_path = entry
        pred, gt = load_track(pred_path), load_track(gt_path)
        if pred.fps != config.fps:
            pred = resample_fps(pred, config.fps)
        if gt.fps != config.fps:
            gt = resample_fps(gt, config.fps)
        if len(pred) != len(gt):
            raise LengthMismatch(
                f"{clip_id}: {len(pred)} predicted frames, {len(gt)} reference"
            )
        return ClipPair(clip_id, pred, gt)

    pairs = await amap_threads(load, files, config.jobs)

    smooth_values: t.Optional[dict[Side, list[float]]] = None
    if "smooth" in config.metrics:
        smooth_values = {}
        for side in SIDES:
            per_clip = await amap_threads(
                lambda p, side=side: _clip_smoothness(p, side, config.fps, template),
                pairs,
                config.jobs,
            )
            smooth_values[side] = _known(per_clip, side)

    return evaluate_pairs(pairs, config, template, smooth_values)


evaluate_dirs = syncify(aevaluate_dirs)
