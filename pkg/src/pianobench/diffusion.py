"""
Diffusion mathematics for pose generation: noise schedules, the forward process,
parameterization conversions, ancestral sampling and the training losses.

Usage
-----

.. code-block:: python

    from pianobench.diffusion import build_schedule, ddpm_sample, OracleDenoiser

    sched = build_schedule(1000)
    sample = ddpm_sample(OracleDenoiser(x0, sched), sched, cond, steps=50, seed=42)
"""

import logging
import os
import typing as t

import numpy as np

from .errors import BadRange, LengthMismatch, ShapeMismatch, StepOutOfRange
from .types import Conditioning, NoiseSchedule

logger = logging.getLogger(__name__)

Parameterization = t.Literal["x0", "epsilon", "v"]
COSINE_OFFSET = 0.008
MAX_BETA = 0.999


def build_schedule(
    T: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    kind: t.Literal["linear", "cosine"] = "linear",
) -> NoiseSchedule:
    if T < 1:
        raise BadRange(f"T must be at least 1, got {T}")
    if kind == "linear":
        if not 0 < beta_start <= beta_end < 1:
            raise BadRange(f"need 0 < {beta_start} <= {beta_end} < 1")
        betas = np.linspace(beta_start, beta_end, T)
    elif kind == "cosine":
        steps = np.arange(T + 1) / T
        f = np.cos((steps + COSINE_OFFSET) / (1 + COSINE_OFFSET) * np.pi / 2) ** 2
        betas = np.clip(1 - f[1:] / f[:-1], 1e-12, MAX_BETA)
    else:
        raise BadRange(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(betas=betas, alpha_bars=np.cumprod(1.0 - betas))


def _check_step(t: int, sched: NoiseSchedule) -> float:
    if not 1 <= t <= sched.T:
        raise StepOutOfRange(f"step {t} outside 1..{sched.T}")
    return sched.alpha_bar(t)


def q_sample(
    x0: np.ndarray, t: int, noise: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    ab = _check_step(t, sched)
    if np.shape(x0) != np.shape(noise):
        raise ShapeMismatch(f"x0 {np.shape(x0)} and noise {np.shape(noise)}")
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def v_convert(
    x0: np.ndarray, noise: np.ndarray, t: int, sched: NoiseSchedule
) -> np.ndarray:
    ab = _check_step(t, sched)
    return np.sqrt(ab) * noise - np.sqrt(1.0 - ab) * x0


def x0_from_v(
    v: np.ndarray, x_t: np.ndarray, t: int, sched: NoiseSchedule
) -> np.ndarray:
    ab = _check_step(t, sched)
    return np.sqrt(ab) * x_t - np.sqrt(1.0 - ab) * v


def to_x0(
    pred: np.ndarray,
    parameterization: Parameterization,
    x_t: np.ndarray,
    t: int,
    sched: NoiseSchedule,
) -> np.ndarray:
    ab = _check_step(t, sched)
    if parameterization == "x0":
        return pred
    if parameterization == "epsilon":
        return (x_t - np.sqrt(1.0 - ab) * pred) / np.sqrt(ab)
    if parameterization == "v":
        return x0_from_v(pred, x_t, t, sched)
    raise ValueError(f"unknown parameterization {parameterization!r}")


def from_x0(
    x0: np.ndarray,
    parameterization: Parameterization,
    x_t: np.ndarray,
    t: int,
    sched: NoiseSchedule,
) -> np.ndarray:
    ab = _check_step(t, sched)
    if parameterization == "x0":
        return x0
    if parameterization == "epsilon":
        return (x_t - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)
    if parameterization == "v":
        return (np.sqrt(ab) * x_t - x0) / np.sqrt(1.0 - ab)
    raise ValueError(f"unknown parameterization {parameterization!r}")


def strided_schedule(sched: NoiseSchedule, steps: int) -> list[tuple[int, int, float]]:
    """
    Reverse steps as (t, previous t, transition beta), evenly spaced from T down.
    Adjacent steps keep the original beta, others use 1 - alpha_bar(t) / alpha_bar(s).
    """
    if not 1 <= steps <= sched.T:
        raise StepOutOfRange(f"{steps} sampling steps for a {sched.T}-step schedule")
    spacing = sched.T / steps
    timesteps = [int(np.floor(sched.T - i * spacing + 0.5)) for i in range(steps)]
    plan = []
    for t, s in zip(timesteps, timesteps[1:] + [0]):
        if s == t - 1:
            beta = float(sched.betas[t - 1])
        else:
            beta = 1.0 - sched.alpha_bar(t) / sched.alpha_bar(s)
        plan.append((t, s, beta))
    return plan


class Denoiser:
    """
    Maps a noisy sample, its step and the conditioning to a prediction of the same
    shape in the declared parameterization.
    """

    parameterization: Parameterization = "x0"

    def __call__(self, x_t: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        raise NotImplementedError


class FunctionDenoiser(Denoiser):
    def __init__(
        self,
        func: t.Callable[[np.ndarray, int, Conditioning], np.ndarray],
        parameterization: Parameterization = "x0",
    ) -> None:
        self.func = func
        self.parameterization = parameterization

    def __call__(self, x_t: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        return self.func(x_t, t, cond)


class OracleDenoiser(Denoiser):
    """Knows the clean sample and answers exactly in any parameterization."""

    def __init__(
        self,
        x0: np.ndarray,
        sched: NoiseSchedule,
        parameterization: Parameterization = "x0",
    ) -> None:
        self.x0 = np.asarray(x0, dtype=float)
        self.sched = sched
        self.parameterization = parameterization

    def __call__(self, x_t: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        return from_x0(self.x0, self.parameterization, x_t, t, self.sched)


class ZeroDenoiser(Denoiser):
    def __call__(self, x_t: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        return np.zeros_like(x_t)


def check_conditioning(cond: Conditioning) -> None:
    n = cond.frames
    if cond.positions.shape != (n, 2, 3):
        raise ShapeMismatch(f"positions must be (N, 2, 3), got {cond.positions.shape}")
    if cond.gesture_features.ndim != 2 or cond.gesture_features.shape[0] != n:
        raise ShapeMismatch(
            f"gesture features {cond.gesture_features.shape} do not cover {n} frames"
        )


def ddpm_sample(
    denoiser: Denoiser,
    sched: NoiseSchedule,
    cond: Conditioning,
    steps: t.Optional[int] = None,
    seed: int = 42,
    variance: t.Literal["posterior", "beta"] = "posterior",
    joints: int = 16,
) -> np.ndarray:
    """
    Ancestral sampling of a (N, 2, joints, 3) pose sample, both hands, from seeded
    Gaussian noise. Predictions are converted to x0 before each posterior step.
    """
    steps = sched.T if steps is None else steps
    plan = strided_schedule(sched, steps)
    check_conditioning(cond)

    rng = np.random.default_rng(seed)
    shape = (cond.frames, 2, joints, 3)
    x = rng.standard_normal(shape)
    logger.debug("sampling %s over %d of %d steps", shape, steps, sched.T)

    for t, s, beta in plan:
        pred = np.asarray(denoiser(x, t, cond), dtype=float)
        if pred.shape != shape:
            raise ShapeMismatch(f"denoiser returned {pred.shape}, expected {shape}")
        x0_hat = to_x0(pred, denoiser.parameterization, x, t, sched)
        if s == 0:
            return x0_hat
        ab_t, ab_s = sched.alpha_bar(t), sched.alpha_bar(s)
        mean = (np.sqrt(ab_s) * beta / (1 - ab_t)) * x0_hat + (
            np.sqrt(1 - beta) * (1 - ab_s) / (1 - ab_t)
        ) * x
        var = (1 - ab_s) / (1 - ab_t) * beta if variance == "posterior" else beta
        x = mean + np.sqrt(var) * rng.standard_normal(shape)
    return x


def loss_position(P_hat: np.ndarray, P: np.ndarray) -> float:
    P_hat, P = np.asarray(P_hat, dtype=float), np.asarray(P, dtype=float)
    if P_hat.shape != P.shape:
        raise LengthMismatch(f"{P_hat.shape} against {P.shape}")
    return float(np.abs(P_hat - P).mean())


def loss_velocity(P_hat: np.ndarray, P: np.ndarray) -> float:
    P_hat, P = np.asarray(P_hat, dtype=float), np.asarray(P, dtype=float)
    if P_hat.shape != P.shape:
        raise LengthMismatch(f"{P_hat.shape} against {P.shape}")
    if len(P) < 2:
        raise LengthMismatch("velocity loss needs at least 2 frames")
    residual = np.diff(P_hat, axis=0) - np.diff(P, axis=0)
    return float(np.linalg.norm(residual, axis=-1).mean())


def load_conditioning(
    features_path: t.Union[str, os.PathLike],
    positions_path: t.Union[str, os.PathLike],
) -> Conditioning:
    cond = Conditioning(
        gesture_features=np.load(features_path, allow_pickle=False),
        positions=np.load(positions_path, allow_pickle=False),
    )
    check_conditioning(cond)
    return cond


def save_conditioning(
    cond: Conditioning,
    features_path: t.Union[str, os.PathLike],
    positions_path: t.Union[str, os.PathLike],
) -> None:
    np.save(features_path, cond.gesture_features, allow_pickle=False)
    np.save(positions_path, cond.positions, allow_pickle=False)
