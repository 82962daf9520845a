import typing as t
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

Side = t.Literal["left", "right"]
SIDES: tuple[Side, Side] = ("left", "right")


# MIDI


@dataclass(frozen=True)
class MidiEvent:
    """
    One decoded track event.
    The kind is one of:
    - channel: voice/mode message, `status` holds the status byte
    - meta: meta event, `meta_type` holds the type byte
    - sysex: 0xF0 / 0xF7 escape, kept opaquely
    """

    delta: int
    kind: t.Literal["channel", "meta", "sysex"]
    status: int
    data: bytes
    meta_type: t.Optional[int] = None

    @property
    def channel(self) -> int:
        return self.status & 0x0F

    @property
    def is_end_of_track(self) -> bool:
        return self.kind == "meta" and self.meta_type == 0x2F


@dataclass(frozen=True)
class MidiFile:
    format: int
    division: int
    tracks: tuple[tuple[MidiEvent, ...], ...]


@dataclass(frozen=True, order=True)
class NoteEvent:
    onset: float
    pitch: int
    channel: int = 0
    offset: float = field(default=0.0, compare=False)
    velocity: int = field(default=64, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0..127")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1..127")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel {self.channel} outside 0..15")
        if self.onset < 0 or not self.offset > self.onset:
            raise ValueError(f"bad note timing {self.onset}..{self.offset}")

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class TempoMap:
    """Piecewise-constant tempo as (tick, microseconds per quarter note) pairs."""

    division: int
    entries: tuple[tuple[int, int], ...] = ((0, 500_000),)
    _elapsed: tuple[float, ...] = field(default=(), init=False, repr=False)

    def __post_init__(self) -> None:
        ticks = [tick for tick, _ in self.entries]
        if not ticks or ticks[0] != 0:
            raise ValueError("tempo map must start at tick 0")
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ValueError("tempo map ticks must be strictly increasing")
        elapsed = [0.0]
        for (tick, tempo), (next_tick, _) in zip(self.entries, self.entries[1:]):
            span = (next_tick - tick) * tempo / (1e6 * self.division)
            elapsed.append(elapsed[-1] + span)
        object.__setattr__(self, "_elapsed", tuple(elapsed))

    def seconds(self, tick: int) -> float:
        i = bisect_right([e[0] for e in self.entries], tick) - 1
        start, tempo = self.entries[i]
        return self._elapsed[i] + (tick - start) * tempo / (1e6 * self.division)


@dataclass(frozen=True)
class MatchedNote:
    reference: NoteEvent
    candidate: NoteEvent

    @property
    def onset_delta_ms(self) -> float:
        return (self.candidate.onset - self.reference.onset) * 1000.0

    @property
    def velocity_ratio(self) -> float:
        return self.candidate.velocity / self.reference.velocity


@dataclass(frozen=True)
class TranscriptionDiff:
    matched: tuple[MatchedNote, ...]
    unmatched_reference: tuple[NoteEvent, ...]
    unmatched_candidate: tuple[NoteEvent, ...]
    timing_violations: int
    dynamic_violations: int
    pitch_mismatches: int

    @property
    def passes(self) -> bool:
        return (
            self.timing_violations == 0
            and self.dynamic_violations == 0
            and not self.unmatched_reference
            and not self.unmatched_candidate
        )

    def summary(self) -> dict[str, t.Any]:
        return {
            "matched": len(self.matched),
            "unmatched_reference": len(self.unmatched_reference),
            "unmatched_candidate": len(self.unmatched_candidate),
            "timing_violations": self.timing_violations,
            "dynamic_violations": self.dynamic_violations,
            "pitch_mismatches": self.pitch_mismatches,
            "passes": self.passes,
        }


# Hands and motion


@dataclass(frozen=True, eq=False)
class HandShape:
    rho: np.ndarray = field(default_factory=lambda: np.zeros(10))

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=float)
        if rho.shape != (10,) or not np.all(np.isfinite(rho)):
            raise ValueError("rho must be 10 finite coefficients")
        object.__setattr__(self, "rho", rho)


@dataclass(frozen=True, eq=False)
class HandPose:
    theta: np.ndarray
    trans: np.ndarray
    side: Side = "right"

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "trans", np.asarray(self.trans, dtype=float))


@dataclass(frozen=True, eq=False)
class JointSet:
    """21 world-frame points: 16 articulated joints then 5 fingertips."""

    positions: np.ndarray


@dataclass(eq=False)
class HandTrack:
    """Per-frame pose of one hand. Invisible frames hold NaN."""

    side: Side
    theta: np.ndarray
    trans: np.ndarray
    visible: np.ndarray

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=float)
        self.trans = np.asarray(self.trans, dtype=float)
        self.visible = np.asarray(self.visible, dtype=bool)
        n = len(self.visible)
        if self.theta.ndim != 3 or self.theta.shape[0] != n or self.theta.shape[2] != 3:
            raise ValueError(f"theta must be (N, J, 3), got {self.theta.shape}")
        if self.trans.shape != (n, 3):
            raise ValueError(f"trans must be ({n}, 3), got {self.trans.shape}")

    def __len__(self) -> int:
        return len(self.visible)

    @property
    def joints(self) -> int:
        return self.theta.shape[1]

    @classmethod
    def invisible(cls, side: Side, frames: int, joints: int = 16) -> "HandTrack":
        return cls(
            side=side,
            theta=np.full((frames, joints, 3), np.nan),
            trans=np.full((frames, 3), np.nan),
            visible=np.zeros(frames, dtype=bool),
        )

    def channels(self) -> np.ndarray:
        """(N, J*3 + 3) matrix of every scalar channel, angles first."""
        return np.concatenate([self.theta.reshape(len(self), -1), self.trans], axis=1)

    def with_channels(self, channels: np.ndarray, visible: np.ndarray) -> "HandTrack":
        n = channels.shape[0]
        return HandTrack(
            side=self.side,
            theta=channels[:, :-3].reshape(n, self.joints, 3),
            trans=channels[:, -3:],
            visible=visible,
        )

    def slice(self, start: int, stop: int) -> "HandTrack":
        return HandTrack(
            side=self.side,
            theta=self.theta[start:stop],
            trans=self.trans[start:stop],
            visible=self.visible[start:stop],
        )


@dataclass(eq=False)
class MotionSequence:
    fps: float
    left: HandTrack
    right: HandTrack
    rho: np.ndarray = field(default_factory=lambda: np.zeros(10))

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if len(self.left) != len(self.right):
            raise ValueError("both hands must have the same frame count")

    def __len__(self) -> int:
        return len(self.left)

    def hand(self, side: Side) -> HandTrack:
        return self.left if side == "left" else self.right

    @property
    def seconds(self) -> float:
        return len(self) / self.fps


# A raw track is a sequence whose visibility marks detections; a clean one is at 30 FPS
RawTrack = MotionSequence
CleanTrack = MotionSequence


@dataclass(frozen=True)
class GapLabel:
    start: int
    length: int
    kind: t.Literal["fill", "invisible"]


@dataclass(frozen=True)
class ClipWindow:
    start: int
    frames: int
    offset_s: float
    visibility: float


# Statistics


@dataclass(frozen=True, eq=False)
class GaussianStats:
    mu: np.ndarray
    C: np.ndarray

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def same_as(self, other: "GaussianStats") -> bool:
        return np.array_equal(self.mu, other.mu) and np.array_equal(self.C, other.C)


@dataclass(frozen=True, eq=False)
class GMMModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood_trace: tuple[float, ...] = ()
    n_iter: int = 0
    converged: bool = False

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianStats]:
        return [GaussianStats(m, c) for m, c in zip(self.means, self.covariances)]

    def log_likelihood(self, samples: np.ndarray) -> float:
        """Mean per-sample log-likelihood."""
        from .gmm import mean_log_likelihood

        return mean_log_likelihood(self, samples)


# Diffusion


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    betas[t-1] and alpha_bars[t-1] belong to diffusion step t (1-based).
    `build_schedule` guarantees 0 < beta < 1 and strictly decreasing alpha_bars.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return self.betas.shape[0]

    def alpha_bar(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])


@dataclass(frozen=True, eq=False)
class Conditioning:
    """Opaque denoiser inputs: gesture features and per-frame hand positions."""

    gesture_features: np.ndarray
    positions: np.ndarray

    @property
    def frames(self) -> int:
        return self.positions.shape[0]
