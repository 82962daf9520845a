import typing as t
from pathlib import Path

import numpy as np
import pytest

from pianobench.dataset import ClipAnnotation, save_clip
from pianobench.types import SIDES, HandTrack, MotionSequence


def synthetic_sequence(
    frames: int = 90, fps: float = 30.0, seed: int = 0, joints: int = 16
) -> MotionSequence:
    """Smooth sinusoidal motion of both hands, fully visible."""
    rng = np.random.default_rng(seed)
    time = np.arange(frames) / fps
    hands = {}
    for k, side in enumerate(SIDES):
        freq = rng.uniform(0.3, 1.5, size=(joints, 3))
        phase = rng.uniform(0.0, 2 * np.pi, size=(joints, 3))
        amp = rng.uniform(0.05, 0.3, size=(joints, 3))
        theta = amp * np.sin(2 * np.pi * freq * time[:, None, None] + phase)
        centre = np.array([0.3 if side == "right" else -0.3, 0.0, 0.1])
        trans = centre + 0.05 * np.sin(time[:, None] * (1 + k) + np.arange(3))
        hands[side] = HandTrack(side, theta, trans, np.ones(frames, dtype=bool))
    return MotionSequence(fps, hands["left"], hands["right"], rng.normal(0, 0.5, 10))


def ramp_sequence(frames: int, fps: float = 30.0, joints: int = 16) -> MotionSequence:
    """Every channel of both hands is a linear function of the frame index."""
    n = np.arange(frames, dtype=float)
    slopes = np.linspace(0.001, 0.004, joints * 3).reshape(joints, 3)
    hands = {}
    for side in SIDES:
        theta = 0.1 + slopes * n[:, None, None]
        trans = np.array([0.2, 0.0, 0.1]) + np.outer(n, [0.002, 0.001, -0.0005])
        hands[side] = HandTrack(side, theta, trans, np.ones(frames, dtype=bool))
    return MotionSequence(fps, hands["left"], hands["right"])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def write_clip(tmp_path: Path) -> t.Callable[..., Path]:
    def write(
        sequence: MotionSequence,
        clip_id: str,
        directory: t.Optional[Path] = None,
        subject: str = "s01",
    ) -> Path:
        directory = directory or tmp_path
        directory.mkdir(parents=True, exist_ok=True)
        video_id = clip_id.rsplit("_", 1)[0]
        path = directory / f"{clip_id}.json"
        save_clip(
            ClipAnnotation.from_sequence(sequence, clip_id, video_id, subject), path
        )
        return path

    return write


@pytest.fixture
def clip_dir(tmp_path: Path, write_clip: t.Callable[..., Path]) -> Path:
    """Three 3-second synthetic clips from three videos."""
    directory = tmp_path / "clips"
    for k, video in enumerate(["vidA", "vidB", "vidC"]):
        write_clip(synthetic_sequence(90, seed=k), f"{video}_0", directory)
    return directory
