"""
Command line for the pianobench pipeline.

Usage::

    pianobench midi-stats recordings/*.mid --out midi_stats.json --csv
    pianobench midi-diff transcribed.mid reference.mid
    pianobench clean raw/BV1xx.json clean/BV1xx.json
    pianobench segment clean/BV1xx.json clips/
    pianobench manifest clips/ --split-spec splits.json --out manifest.json
    pianobench stats clips/ --out subjects.json --csv
    pianobench eval --pred predictions/ --gt clips/ --report report.json
    pianobench sample --clip clips/BV1xx_0.json --steps 50 --out pred.json
    pianobench fk --clip clips/BV1xx_0.json --out joints.json

Exit codes: 0 ok, 2 input pairing error, 3 schema error, 4 numeric failure.
"""

import argparse
import json
import logging
import sys
import typing as t
from pathlib import Path

import numpy as np
from dotenv import find_dotenv, load_dotenv
from pydantic import ValidationError

from . import midi
from .config import METRICS, CliConfig
from .dataset import (
    ClipAnnotation,
    SplitSpec,
    build_manifest,
    load_clip,
    save_clip,
    subject_stats,
    write_clips,
)
from .diffusion import (
    Denoiser,
    OracleDenoiser,
    ZeroDenoiser,
    build_schedule,
    ddpm_sample,
    load_conditioning,
)
from .errors import PianoBenchError, SchemaViolation
from .evaluate import evaluate_dirs
from .hand import forward_kinematics_batch, load_template
from .pipeline import clean_track, gap_json, segment_clips
from .types import SIDES, Conditioning, HandShape, HandTrack, MotionSequence, NoteEvent
from .utils import write_csv, write_json

logger = logging.getLogger(__name__)


def _config(args: argparse.Namespace) -> CliConfig:
    """Environment defaults overridden by the flags that were given."""
    flags = {
        key: value
        for key, value in vars(args).items()
        if key in CliConfig.model_fields and value is not None
    }
    try:
        return CliConfig(**flags)
    except ValidationError as e:
        raise SchemaViolation(f"invalid configuration: {e.errors()[0]['msg']}") from e


def cmd_midi_stats(args: argparse.Namespace, config: CliConfig) -> int:
    notes: list[NoteEvent] = []
    for path in args.files:
        file_notes, _ = midi.load_notes(path)
        notes.extend(file_notes)
    pitch_counts, velocity_bins = midi.histograms(notes, args.bin_width)
    payload = {
        "files": len(args.files),
        "summary": midi.corpus_summary(notes),
        "histograms": midi.histogram_json(pitch_counts, velocity_bins, args.bin_width),
    }
    write_json(args.out, payload)
    if args.csv:
        base = Path(args.out)
        write_csv(
            base.with_name(base.stem + ".pitch.csv"),
            ["pitch", "count"],
            enumerate(pitch_counts.tolist()),
        )
        write_csv(
            base.with_name(base.stem + ".velocity.csv"),
            ["velocity_from", "velocity_to", "count"],
            [
                (i * args.bin_width, (i + 1) * args.bin_width - 1, c)
                for i, c in enumerate(velocity_bins.tolist())
            ],
        )
    return 0


def cmd_midi_diff(args: argparse.Namespace, config: CliConfig) -> int:
    candidate, _ = midi.load_notes(args.candidate)
    reference, _ = midi.load_notes(args.reference)
    diff = midi.diff_transcription(
        candidate,
        reference,
        config.timing_tol_ms,
        config.dynamic_tol,
        args.match_window_ms,
    )
    summary = diff.summary()
    if args.out:
        write_json(args.out, summary)
    else:
        print(json.dumps(summary, indent=2))
    return 0


def cmd_clean(args: argparse.Namespace, config: CliConfig) -> int:
    raw = load_clip(args.raw, clip_seconds=None)
    cleaned, labels = clean_track(
        raw.to_sequence(),
        hampel_window=args.hampel_window,
        nsigma=args.nsigma,
        fill_max=args.fill_max,
        min_visible=args.min_visible,
        order=args.order,
        window=args.window,
        target_fps=config.fps,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    annotation = ClipAnnotation.from_sequence(
        cleaned, raw.clip_id, raw.video_id, raw.subject
    )
    save_clip(annotation, out)
    gaps = Path(args.gaps) if args.gaps else out.with_name(out.stem + ".gaps.json")
    write_json(gaps, gap_json(labels, raw.fps))
    return 0


def cmd_segment(args: argparse.Namespace, config: CliConfig) -> int:
    clip = load_clip(args.clean, clip_seconds=None)
    sequence = clip.to_sequence()
    windows = segment_clips(sequence, args.clip_len, args.stride, args.min_visibility)
    paths = write_clips(sequence, windows, args.out_dir, clip.video_id, clip.subject)
    logger.info("%s: %d clips written", clip.video_id, len(paths))
    return 0


def cmd_manifest(args: argparse.Namespace, config: CliConfig) -> int:
    spec = SplitSpec()
    if args.split_spec:
        try:
            spec = SplitSpec.model_validate_json(Path(args.split_spec).read_text())
        except ValidationError as e:
            raise SchemaViolation(f"{args.split_spec}: {e.errors()[0]['msg']}") from e
    manifest = build_manifest(args.root, spec)
    write_json(args.out, manifest.split_json())
    if args.entries:
        Path(args.entries).write_text(manifest.model_dump_json(indent=2) + "\n")
    return 0


def cmd_stats(args: argparse.Namespace, config: CliConfig) -> int:
    stats = subject_stats(build_manifest(args.root))
    Path(args.out).write_text(stats.model_dump_json(indent=2) + "\n")
    if args.csv:
        stats.to_csv(Path(args.out).with_suffix(".csv"))
    return 0


def cmd_eval(args: argparse.Namespace, config: CliConfig) -> int:
    report = evaluate_dirs(args.pred, args.gt, config)
    path = Path(config.report or "report.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json())
    if args.csv:
        write_csv(
            path.with_suffix(".csv"), ["metric", "hand", "value"], report.csv_rows()
        )
    return 0


def _both_hands(sequence: MotionSequence, field: str) -> np.ndarray:
    """Per-frame `theta` (N, 2, J, 3) or `trans` (N, 2, 3), invisible frames zeroed."""
    stacked = []
    for side in SIDES:
        track = sequence.hand(side)
        values = getattr(track, field)
        mask = track.visible.reshape((-1,) + (1,) * (values.ndim - 1))
        stacked.append(np.where(mask, values, 0.0))
    return np.stack(stacked, axis=1)


def cmd_sample(args: argparse.Namespace, config: CliConfig) -> int:
    clip = load_clip(args.clip, clip_seconds=None)
    sequence = clip.to_sequence()
    if args.features and args.positions:
        cond = load_conditioning(args.features, args.positions)
    else:
        cond = Conditioning(
            gesture_features=np.zeros((len(sequence), args.feature_dim)),
            positions=_both_hands(sequence, "trans"),
        )

    sched = build_schedule(args.schedule_steps, kind=args.schedule)
    denoiser: Denoiser
    if args.denoiser == "oracle":
        x0 = _both_hands(sequence, "theta")
        denoiser = OracleDenoiser(x0, sched, args.parameterization)
    else:
        denoiser = ZeroDenoiser()
    theta = ddpm_sample(
        denoiser,
        sched,
        cond,
        args.steps,
        config.seed,
        variance=args.variance,
        joints=clip.joints,
    )

    hands = {
        side: HandTrack(
            side=side,
            theta=theta[:, i],
            trans=cond.positions[:, i],
            visible=sequence.hand(side).visible,
        )
        for i, side in enumerate(SIDES)
    }
    sampled = MotionSequence(sequence.fps, hands["left"], hands["right"], sequence.rho)
    annotation = ClipAnnotation.from_sequence(
        sampled, clip.clip_id, clip.video_id, clip.subject
    )
    save_clip(annotation, args.out)
    return 0


def cmd_fk(args: argparse.Namespace, config: CliConfig) -> int:
    template = load_template(config.template)
    clip = load_clip(args.clip, clip_seconds=None)
    sequence = clip.to_sequence()
    shape = HandShape(sequence.rho)
    payload: dict[str, t.Any] = {"clip_id": clip.clip_id, "fps": clip.fps}
    for side in SIDES:
        track = sequence.hand(side)
        theta = np.where(track.visible[:, None, None], track.theta, 0.0)
        trans = np.where(track.visible[:, None], track.trans, 0.0)
        joints = forward_kinematics_batch(theta, trans, side, shape, template)
        payload[side] = [
            joints[i].tolist() if track.visible[i] else None for i in range(len(track))
        ]
    write_json(args.out, payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pianobench",
        description="Data pipeline and evaluation benchmark for piano hand motion.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log at INFO level"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("midi-stats", help="note histograms over MIDI files")
    p.add_argument("files", nargs="+")
    p.add_argument("--bin-width", type=int, default=8, help="velocity bin width")
    p.add_argument("--out", default="midi_stats.json")
    p.add_argument("--csv", action="store_true", help="also write CSV histograms")
    p.set_defaults(handler=cmd_midi_stats)

    p = sub.add_parser("midi-diff", help="validate a transcription against a reference")
    p.add_argument("candidate")
    p.add_argument("reference")
    p.add_argument("--timing-tol-ms", dest="timing_tol_ms", type=float)
    p.add_argument("--dynamic-tol", dest="dynamic_tol", type=float)
    p.add_argument("--match-window-ms", type=float, default=200.0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_midi_diff)

    p = sub.add_parser("clean", help="clean a raw annotation track")
    p.add_argument("raw")
    p.add_argument("out")
    p.add_argument("--gaps", help="gap sidecar path (default: <out>.gaps.json)")
    p.add_argument("--fps", type=float, help="target frame rate")
    p.add_argument("--hampel-window", type=int, default=20)
    p.add_argument("--nsigma", type=float, default=3.0)
    p.add_argument("--fill-max", type=int, default=30)
    p.add_argument("--min-visible", type=int, default=15)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--window", type=int, default=11)
    p.set_defaults(handler=cmd_clean)

    p = sub.add_parser("segment", help="cut a cleaned track into clips")
    p.add_argument("clean")
    p.add_argument("out_dir")
    p.add_argument("--clip-len", type=float, default=30.0)
    p.add_argument("--stride", type=float, default=24.0)
    p.add_argument("--min-visibility", type=float, default=0.80)
    p.set_defaults(handler=cmd_segment)

    p = sub.add_parser("manifest", help="assign clips to splits by source video")
    p.add_argument("root")
    p.add_argument("--split-spec")
    p.add_argument("--out", default="manifest.json")
    p.add_argument("--entries", help="also write the full manifest here")
    p.set_defaults(handler=cmd_manifest)

    p = sub.add_parser("stats", help="per-subject dataset statistics")
    p.add_argument("root")
    p.add_argument("--out", default="subjects.json")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metrics", help=f"comma separated subset of {','.join(METRICS)}")
    p.add_argument("--gmm-components", dest="gmm_components", type=int)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--fps", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--report")
    p.add_argument("--embedder", help="embedder JSON to use instead of fitting one")
    p.add_argument("--window-s", dest="window_s", type=float)
    p.add_argument("--stride-s", dest="stride_s", type=float)
    p.add_argument("--template")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sample", help="run the sampler with a reference denoiser")
    p.add_argument("--clip", required=True, help="clip providing positions and shape")
    p.add_argument("--out", required=True)
    p.add_argument("--denoiser", choices=["oracle", "zero"], default="oracle")
    p.add_argument("--parameterization", choices=["x0", "epsilon", "v"], default="v")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--schedule-steps", type=int, default=1000)
    p.add_argument("--schedule", choices=["linear", "cosine"], default="linear")
    p.add_argument("--variance", choices=["posterior", "beta"], default="posterior")
    p.add_argument("--features", help="gesture features .npy")
    p.add_argument("--positions", help="hand positions .npy")
    p.add_argument("--feature-dim", type=int, default=768)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("fk", help="joint positions of every annotated frame")
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--template")
    p.set_defaults(handler=cmd_fk)
    return parser


def main(argv: t.Optional[t.Sequence[str]] = None) -> int:
    load_dotenv(find_dotenv(usecwd=True))
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
        logging.basicConfig(
            level="INFO" if args.verbose else config.log_level,
            format="%(levelname)s %(name)s: %(message)s",
        )
        logging.captureWarnings(True)
        return args.handler(args, config)
    except PianoBenchError as e:
        print(f"pianobench: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
