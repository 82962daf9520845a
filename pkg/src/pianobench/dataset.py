"""
On-disk dataset layout: clip annotations, manifests, splits and subject statistics.

A clip file is JSON::

    {"clip_id": "BV1xx_24", "video_id": "BV1xx", "subject": "s01", "fps": 30,
     "rho": [10 floats],
     "frames": [{"left": {"theta": [[a, b, c], ...], "trans": [x, y, z]} | null,
                 "right": ...}, ...]}
"""

import logging
import os
import re
import typing as t
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import BadFrameCount, ConflictingSplit, EmptyDataset, SchemaViolation
from .hand import axis_angle_to_euler
from .types import ClipWindow, HandTrack, MotionSequence, Side
from .utils import write_csv

logger = logging.getLogger(__name__)

Split = t.Literal["train", "val", "test"]
SPLITS: tuple[Split, ...] = ("train", "val", "test")
CLIP_ID = re.compile(r"^(?P<video>.+)_(?P<start>\d+)$")

Vector3 = t.Annotated[list[float], Field(min_length=3, max_length=3)]


class HandFrame(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False)

    theta: list[Vector3] = Field(min_length=1)
    trans: Vector3


class FrameRecord(BaseModel):
    left: t.Optional[HandFrame] = None
    right: t.Optional[HandFrame] = None


class ClipAnnotation(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False)

    clip_id: str
    video_id: str
    subject: str
    fps: float = Field(gt=0)
    rho: list[float] = Field(min_length=10, max_length=10)
    frames: list[FrameRecord]

    @model_validator(mode="after")
    def _same_joint_count(self) -> "ClipAnnotation":
        counts = {
            len(hand.theta)
            for frame in self.frames
            for hand in (frame.left, frame.right)
            if hand is not None
        }
        if len(counts) > 1:
            raise ValueError(f"frames disagree on the joint count: {sorted(counts)}")
        return self

    @property
    def joints(self) -> int:
        for frame in self.frames:
            for hand in (frame.left, frame.right):
                if hand is not None:
                    return len(hand.theta)
        return 16

    @property
    def annotated_frames(self) -> int:
        """Frames with at least one hand present."""
        return sum(
            frame.left is not None or frame.right is not None for frame in self.frames
        )

    @property
    def seconds(self) -> float:
        return len(self.frames) / self.fps

    def _track(self, side: Side) -> HandTrack:
        n, joints = len(self.frames), self.joints
        track = HandTrack.invisible(side, n, joints)
        for i, frame in enumerate(self.frames):
            hand = getattr(frame, side)
            if hand is not None:
                track.theta[i] = hand.theta
                track.trans[i] = hand.trans
                track.visible[i] = True
        return track

    def to_sequence(self) -> MotionSequence:
        return MotionSequence(
            fps=self.fps,
            left=self._track("left"),
            right=self._track("right"),
            rho=np.asarray(self.rho, dtype=float),
        )

    @classmethod
    def from_sequence(
        cls, sequence: MotionSequence, clip_id: str, video_id: str, subject: str
    ) -> "ClipAnnotation":
        def hand_frame(track: HandTrack, i: int) -> t.Optional[HandFrame]:
            if not track.visible[i]:
                return None
            return HandFrame(
                theta=track.theta[i].tolist(), trans=track.trans[i].tolist()
            )

        return cls(
            clip_id=clip_id,
            video_id=video_id,
            subject=subject,
            fps=sequence.fps,
            rho=np.asarray(sequence.rho, dtype=float).tolist(),
            frames=[
                FrameRecord(
                    left=hand_frame(sequence.left, i),
                    right=hand_frame(sequence.right, i),
                )
                for i in range(len(sequence))
            ],
        )


def clip_id_for(video_id: str, offset_s: float) -> str:
    return f"{video_id}_{int(round(offset_s))}"


def cut_clip(
    sequence: MotionSequence, window: ClipWindow, video_id: str, subject: str
) -> ClipAnnotation:
    stop = window.start + window.frames
    part = MotionSequence(
        fps=sequence.fps,
        left=sequence.left.slice(window.start, stop),
        right=sequence.right.slice(window.start, stop),
        rho=sequence.rho,
    )
    return ClipAnnotation.from_sequence(
        part, clip_id_for(video_id, window.offset_s), video_id, subject
    )


def load_clip(
    path: t.Union[str, os.PathLike], clip_seconds: t.Optional[float] = 30.0
) -> ClipAnnotation:
    """
    Parse a clip file. With `clip_seconds` set the frame count must equal
    `clip_seconds * fps`.
    """
    try:
        with open(path) as f:
            clip = ClipAnnotation.model_validate_json(f.read())
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise SchemaViolation(f"{path}: {where}: {first['msg']}") from e

    if clip_seconds is not None:
        expected = int(round(clip_seconds * clip.fps))
        if len(clip.frames) != expected:
            raise BadFrameCount(
                f"{path}: {len(clip.frames)} frames, expected {expected} "
                f"({clip_seconds} s at {clip.fps} fps)"
            )
    return clip


def save_clip(clip: ClipAnnotation, path: t.Union[str, os.PathLike]) -> None:
    with open(path, "w") as f:
        f.write(clip.model_dump_json())
        f.write("\n")


def load_track(path: t.Union[str, os.PathLike]) -> MotionSequence:
    """A clip file of any length as a motion sequence."""
    return load_clip(path, clip_seconds=None).to_sequence()


def convert_axis_angle(clip: ClipAnnotation) -> ClipAnnotation:
    """Return a copy whose joint rotations are converted from axis-angle to Euler."""

    def convert(hand: t.Optional[HandFrame]) -> t.Optional[HandFrame]:
        if hand is None:
            return None
        theta = axis_angle_to_euler(np.asarray(hand.theta, dtype=float))
        return HandFrame(theta=theta.tolist(), trans=hand.trans)

    frames = [
        FrameRecord(left=convert(frame.left), right=convert(frame.right))
        for frame in clip.frames
    ]
    return clip.model_copy(update={"frames": frames})


# Manifest


class SplitSpec(BaseModel):
    """
    Videos listed under a split go there. Unlisted videos go to `default`, or, when
    `ratios` is given, are shuffled with `seed` and cut by the ratios.
    """

    train: list[str] = []
    val: list[str] = []
    test: list[str] = []
    default: Split = "train"
    ratios: t.Optional[dict[Split, float]] = None
    seed: int = 42

    def listed(self) -> dict[str, Split]:
        assigned: dict[str, Split] = {}
        for split in SPLITS:
            for video in getattr(self, split):
                if assigned.get(video, split) != split:
                    raise ConflictingSplit(
                        f"video '{video}' listed under {assigned[video]} and {split}"
                    )
                assigned[video] = split
        return assigned

    def assign(self, videos: t.Iterable[str]) -> dict[str, Split]:
        assigned = self.listed()
        rest = sorted(set(videos) - set(assigned))
        if self.ratios is None:
            assigned.update({video: self.default for video in rest})
            return assigned

        total = sum(self.ratios.values())
        if total <= 0 or any(r < 0 for r in self.ratios.values()):
            raise SchemaViolation(f"bad split ratios {self.ratios}")
        order = np.random.default_rng(self.seed).permutation(len(rest))
        shares = [self.ratios.get(s, 0.0) / total for s in SPLITS]
        bounds = np.cumsum(shares) * len(rest)
        for rank, index in enumerate(order):
            split = SPLITS[min(int(np.searchsorted(bounds, rank, side="right")), 2)]
            assigned[rest[index]] = split
        return assigned


class ClipEntry(BaseModel):
    clip_id: str
    video_id: str
    subject: str
    path: str
    split: Split
    frames: int
    annotated_frames: int
    fps: float

    @property
    def seconds(self) -> float:
        return self.frames / self.fps


class Manifest(BaseModel):
    root: str
    clips: list[ClipEntry]

    def split_json(self) -> dict[str, list[str]]:
        return {
            split: [c.clip_id for c in self.clips if c.split == split]
            for split in SPLITS
        }

    def subjects(self) -> dict[str, dict[str, list[ClipEntry]]]:
        """subject -> video -> clips, all keys sorted."""
        tree: dict[str, dict[str, list[ClipEntry]]] = {}
        order = sorted(self.clips, key=lambda c: (c.subject, c.video_id, c.clip_id))
        for clip in order:
            tree.setdefault(clip.subject, {}).setdefault(clip.video_id, []).append(clip)
        return tree

    def check_integrity(self) -> None:
        seen: dict[str, Split] = {}
        for clip in self.clips:
            if seen.setdefault(clip.video_id, clip.split) != clip.split:
                raise ConflictingSplit(
                    f"clips of video '{clip.video_id}' straddle splits"
                )


def build_manifest(
    root_dir: t.Union[str, os.PathLike], split_spec: t.Optional[SplitSpec] = None
) -> Manifest:
    split_spec = split_spec or SplitSpec()
    root = Path(root_dir)
    clips = []
    for path in sorted(root.rglob("*.json")):
        if not CLIP_ID.match(path.stem):
            logger.debug("skipping %s, not a clip file name", path)
            continue
        clip = load_clip(path, clip_seconds=None)
        match = CLIP_ID.match(clip.clip_id)
        if match is None or match["video"] != clip.video_id:
            raise SchemaViolation(
                f"{path}: clip id '{clip.clip_id}' does not belong to '{clip.video_id}'"
            )
        clips.append((path, clip))
    if not clips:
        raise EmptyDataset(f"no clip files under {root}")

    splits = split_spec.assign(clip.video_id for _, clip in clips)
    manifest = Manifest(
        root=root.as_posix(),
        clips=[
            ClipEntry(
                clip_id=clip.clip_id,
                video_id=clip.video_id,
                subject=clip.subject,
                path=path.relative_to(root).as_posix(),
                split=splits[clip.video_id],
                frames=len(clip.frames),
                annotated_frames=clip.annotated_frames,
                fps=clip.fps,
            )
            for path, clip in clips
        ],
    )
    manifest.check_integrity()
    logger.info("manifest: %s", {k: len(v) for k, v in manifest.split_json().items()})
    return manifest


class SubjectRow(BaseModel):
    subject: str
    videos: int
    clips: int
    seconds: float
    frames: int
    annotated_frames: int


class SubjectStats(BaseModel):
    rows: list[SubjectRow]
    total: SubjectRow

    def to_csv(self, path: t.Union[str, os.PathLike]) -> None:
        write_csv(
            path,
            list(SubjectRow.model_fields),
            [list(row.model_dump().values()) for row in [*self.rows, self.total]],
        )


def subject_stats(manifest: Manifest) -> SubjectStats:
    rows = [
        SubjectRow(
            subject=subject,
            videos=len(videos),
            clips=sum(len(clips) for clips in videos.values()),
            seconds=sum(c.seconds for clips in videos.values() for c in clips),
            frames=sum(c.frames for clips in videos.values() for c in clips),
            annotated_frames=sum(
                c.annotated_frames for clips in videos.values() for c in clips
            ),
        )
        for subject, videos in manifest.subjects().items()
    ]
    total = SubjectRow(
        subject="total",
        videos=sum(r.videos for r in rows),
        clips=sum(r.clips for r in rows),
        seconds=sum(r.seconds for r in rows),
        frames=sum(r.frames for r in rows),
        annotated_frames=sum(r.annotated_frames for r in rows),
    )
    return SubjectStats(rows=rows, total=total)


def write_clips(
    sequence: MotionSequence,
    windows: t.Sequence[ClipWindow],
    out_dir: t.Union[str, os.PathLike],
    video_id: str,
    subject: str,
) -> list[Path]:
    """Write every window as a clip file named after its id."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for window in windows:
        clip = cut_clip(sequence, window, video_id, subject)
        path = out / f"{clip.clip_id}.json"
        save_clip(clip, path)
        paths.append(path)
    return paths
