import csv
import json
import typing as t
from pathlib import Path

import numpy as np
import pytest
from conftest import ramp_sequence, synthetic_sequence

from pianobench.dataset import (
    ClipAnnotation,
    ClipEntry,
    Manifest,
    SplitSpec,
    build_manifest,
    clip_id_for,
    convert_axis_angle,
    load_clip,
    load_track,
    save_clip,
    subject_stats,
    write_clips,
)
from pianobench.errors import (
    BadFrameCount,
    ConflictingSplit,
    EmptyDataset,
    PairingError,
    SchemaViolation,
)
from pianobench.pipeline import segment_clips


def test_clip_round_trip(tmp_path: Path):
    sequence = synthetic_sequence(90)
    sequence.left.visible[10:20] = False
    clip = ClipAnnotation.from_sequence(sequence, "vid_0", "vid", "s01")
    assert clip.frames[12].left is None and clip.frames[12].right is not None
    assert clip.joints == 16 and clip.seconds == pytest.approx(3.0)

    path = tmp_path / "vid_0.json"
    save_clip(clip, path)
    loaded = load_clip(path, clip_seconds=3).to_sequence()
    assert loaded.fps == 30.0
    np.testing.assert_array_equal(loaded.left.visible, sequence.left.visible)
    assert np.isnan(loaded.left.theta[10:20]).all(), "Missing hands load as NaN"
    visible = sequence.left.visible
    np.testing.assert_allclose(loaded.left.theta[visible], sequence.left.theta[visible])
    np.testing.assert_allclose(loaded.right.trans, sequence.right.trans)
    np.testing.assert_allclose(loaded.rho, sequence.rho)
    assert len(load_track(path)) == 90


def test_clip_length_is_checked(write_clip: t.Callable[..., Path]):
    path = write_clip(synthetic_sequence(90), "vid_0")
    with pytest.raises(BadFrameCount):
        load_clip(path)
    assert len(load_clip(path, clip_seconds=None).frames) == 90


def test_schema_violations(tmp_path: Path, write_clip: t.Callable[..., Path]):
    payload = json.loads(write_clip(synthetic_sequence(30), "vid_0").read_text())

    def broken(change: t.Callable[[dict], None]) -> Path:
        data = json.loads(json.dumps(payload))
        change(data)
        path = tmp_path / "broken_0.json"
        path.write_text(json.dumps(data))
        return path

    def drop_subject(data: dict) -> None:
        del data["subject"]

    def short_trans(data: dict) -> None:
        data["frames"][3]["right"]["trans"] = [0.0, 1.0]

    def fewer_joints(data: dict) -> None:
        data["frames"][5]["left"]["theta"] = data["frames"][5]["left"]["theta"][:15]

    def zero_fps(data: dict) -> None:
        data["fps"] = 0

    for change in (drop_subject, short_trans, fewer_joints, zero_fps):
        with pytest.raises(SchemaViolation):
            load_clip(broken(change), clip_seconds=None)

    garbage = tmp_path / "garbage_0.json"
    garbage.write_text("{not json")
    with pytest.raises(SchemaViolation):
        load_clip(garbage, clip_seconds=None)


def test_convert_axis_angle():
    sequence = ramp_sequence(3)
    sequence.left.theta[:] = [0.0, 0.0, 0.3]
    clip = ClipAnnotation.from_sequence(sequence, "vid_0", "vid", "s01")
    before = clip.frames[1].left
    after = convert_axis_angle(clip).frames[1].left
    assert before is not None and after is not None
    np.testing.assert_allclose(
        after.theta, np.tile([0.0, 0.0, 0.3], (16, 1)), atol=1e-12
    )
    assert after.trans == before.trans
    assert before.theta[0] == [0.0, 0.0, 0.3], "Source is not modified"


def test_write_clips(tmp_path: Path):
    sequence = ramp_sequence(78 * 30)
    windows = segment_clips(sequence)
    paths = write_clips(sequence, windows, tmp_path / "clips", "BV1xx", "s07")
    names = ["BV1xx_0.json", "BV1xx_24.json", "BV1xx_48.json"]
    assert [p.name for p in paths] == names
    second = load_clip(paths[1])
    assert second.clip_id == clip_id_for("BV1xx", 24.0) == "BV1xx_24"
    assert second.subject == "s07" and len(second.frames) == 900
    np.testing.assert_allclose(
        second.to_sequence().right.trans, sequence.right.trans[720:1620]
    )


def test_split_spec():
    spec = SplitSpec(val=["b"], test=["c"])
    assert spec.assign(["a", "b", "c", "d"]) == {
        "a": "train",
        "b": "val",
        "c": "test",
        "d": "train",
    }
    with pytest.raises(ConflictingSplit):
        SplitSpec(train=["a"], test=["a"]).assign(["a"])

    videos = [f"v{k}" for k in range(10)]
    ratios = SplitSpec(ratios={"train": 0.8, "val": 0.1, "test": 0.1}, seed=3)
    assigned = ratios.assign(videos)
    counts = {s: list(assigned.values()).count(s) for s in ("train", "val", "test")}
    assert counts == {"train": 8, "val": 1, "test": 1}
    assert assigned == ratios.assign(reversed(videos)), "Seeded and order independent"
    with pytest.raises(SchemaViolation):
        SplitSpec(ratios={"train": -1.0, "test": 2.0}).assign(videos)


def test_build_manifest(clip_dir: Path, write_clip: t.Callable[..., Path]):
    (clip_dir / "notes.json").write_text("{}")
    write_clip(synthetic_sequence(60), "vidA_24", clip_dir / "more", subject="s02")
    manifest = build_manifest(clip_dir, SplitSpec(test=["vidC"]))

    splits = {k: sorted(v) for k, v in manifest.split_json().items()}
    assert splits == {
        "train": ["vidA_0", "vidA_24", "vidB_0"],
        "val": [],
        "test": ["vidC_0"],
    }
    paths = {c.clip_id: c.path for c in manifest.clips}
    assert paths["vidA_24"] == "more/vidA_24.json"
    assert {c.video_id for c in manifest.clips} == {"vidA", "vidB", "vidC"}

    reloaded = Manifest.model_validate_json(manifest.model_dump_json())
    assert reloaded == manifest


def test_build_manifest_errors(tmp_path: Path):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(EmptyDataset):
        build_manifest(empty)
    with pytest.raises(PairingError):
        build_manifest(empty)

    sequence = synthetic_sequence(30)
    clip = ClipAnnotation.from_sequence(sequence, "vidZ_0", "other", "s01")
    save_clip(clip, tmp_path / "vidZ_0.json")
    with pytest.raises(SchemaViolation):
        build_manifest(tmp_path)

    def entry(clip_id: str, split: str) -> ClipEntry:
        return ClipEntry(
            clip_id=clip_id,
            video_id="vid",
            subject="s01",
            path=f"{clip_id}.json",
            split=split,  # type: ignore[arg-type]
            frames=900,
            annotated_frames=900,
            fps=30.0,
        )

    clips = [entry("vid_0", "train"), entry("vid_24", "test")]
    straddling = Manifest(root=".", clips=clips)
    with pytest.raises(ConflictingSplit):
        straddling.check_integrity()


def test_subject_stats(
    clip_dir: Path, write_clip: t.Callable[..., Path], tmp_path: Path
):
    write_clip(synthetic_sequence(60), "vidD_0", clip_dir, subject="s02")
    partial = synthetic_sequence(60)
    partial.left.visible[:15] = False
    partial.right.visible[:15] = False
    write_clip(partial, "vidD_24", clip_dir, subject="s02")
    stats = subject_stats(build_manifest(clip_dir))

    assert [row.subject for row in stats.rows] == ["s01", "s02"]
    s01, s02 = stats.rows
    assert (s01.videos, s01.clips, s01.frames) == (3, 3, 270)
    assert (s02.videos, s02.clips, s02.frames) == (1, 2, 120)
    assert s02.annotated_frames == 105 and stats.total.annotated_frames == 375
    assert s02.seconds == pytest.approx(4.0)
    assert stats.total.clips == 5 and stats.total.seconds == pytest.approx(13.0)

    path = tmp_path / "subjects.csv"
    stats.to_csv(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header = ["subject", "videos", "clips", "seconds", "frames", "annotated_frames"]
    assert rows[0] == header
    assert rows[-1][0] == "total" and len(rows) == 4


def test_subject_stats_ignore_clip_order(
    clip_dir: Path, write_clip: t.Callable[..., Path], rng: np.random.Generator
):
    write_clip(synthetic_sequence(60), "vidD_0", clip_dir, subject="s02")
    manifest = build_manifest(clip_dir)
    stats = subject_stats(manifest)
    for _ in range(10):
        order = rng.permutation(len(manifest.clips))
        shuffled = Manifest(
            root=manifest.root,
            clips=[manifest.clips[k] for k in order],
        )
        again = subject_stats(shuffled)
        assert again.total == stats.total
        assert again.rows == stats.rows
