"""
Distribution and trajectory metrics for generated hand motion.

Usage
-----

.. code-block:: python

    from pianobench.metrics import fgd, fit_embedder, compute_fid

    embedder = fit_embedder(gt_features, latent_dim=32)
    compute_fid(pred_features, gt_features, embedder)
    fgd(pred_sequences, gt_sequences)
"""

import json
import os
import typing as t
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field

from .errors import (
    DimensionMismatch,
    LengthMismatch,
    NonFinite,
    NotPSD,
    TooFewSamples,
)
from .hand import HandTemplate, joint_accelerations
from .types import GaussianStats, HandShape, HandTrack, MotionSequence

COV_REG = 1e-6
EIG_TOL = 1e-8


def gaussian_stats(samples: np.ndarray, reg: float = 0.0) -> GaussianStats:
    """Mean and unbiased covariance of (n, d) samples, plus `reg` on the diagonal."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"samples must be (n, d), got {X.shape}")
    n, d = X.shape
    if n < 2:
        raise TooFewSamples(f"{n} samples, need at least 2 for a covariance")
    C = np.cov(X, rowvar=False).reshape(d, d) + reg * np.eye(d)
    return GaussianStats(mu=X.mean(axis=0), C=C)


def _psd_eigh(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh((C + C.T) / 2)
    if w.size and w.min() < -EIG_TOL:
        raise NotPSD(f"eigenvalue {w.min():.3e} below {-EIG_TOL}")
    return np.clip(w, 0.0, None), V


def psd_sqrt(C: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues in [-1e-8, 0) are clamped to 0."""
    w, V = _psd_eigh(np.asarray(C, dtype=float))
    return (V * np.sqrt(w)) @ V.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions {a.dim} and {b.dim} differ")
    if a.same_as(b):
        return 0.0
    _psd_eigh(a.C)
    root_b = psd_sqrt(b.C)
    # trace of sqrt(Ca Cb) through the symmetric form sqrt(Cb^1/2 Ca Cb^1/2);
    # inputs are already checked, negative eigenvalues here are rounding only
    M = root_b @ a.C @ root_b
    cross = np.sqrt(np.clip(np.linalg.eigvalsh((M + M.T) / 2), 0.0, None)).sum()
    diff = a.mu - b.mu
    value = diff @ diff + np.trace(a.C) + np.trace(b.C) - 2.0 * cross
    return max(float(value), 0.0)


def frechet_distance_from_samples(
    a: np.ndarray, b: np.ndarray, reg: float = COV_REG
) -> float:
    """
    Fréchet distance between the Gaussian fits of two sample sets.

    When the dimension exceeds the combined sample count the regularized covariances
    are `reg * I` outside the span of the centred samples, where both the covariance
    and the cross terms cancel. The distance is then evaluated exactly inside that span.
    """
    A = np.asarray(a, dtype=float)
    B = np.asarray(b, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"sample sets {A.shape} and {B.shape} do not align")
    if len(A) < 2 or len(B) < 2:
        raise TooFewSamples("each sample set needs at least 2 samples")
    dim = A.shape[1]
    if dim <= len(A) + len(B):
        return frechet_distance(gaussian_stats(A, reg), gaussian_stats(B, reg))

    Xa = A - A.mean(axis=0)
    Xb = B - B.mean(axis=0)
    Q, _ = np.linalg.qr(np.concatenate([Xa, Xb]).T)
    rank = Q.shape[1]
    Ya, Yb = Xa @ Q, Xb @ Q
    Ca = Ya.T @ Ya / (len(A) - 1) + reg * np.eye(rank)
    Cb = Yb.T @ Yb / (len(B) - 1) + reg * np.eye(rank)
    zero = np.zeros(rank)
    diff = A.mean(axis=0) - B.mean(axis=0)
    within = frechet_distance(GaussianStats(zero, Ca), GaussianStats(zero, Cb))
    return float(diff @ diff) + within


@dataclass(frozen=True, eq=False)
class Embedder:
    """Linear feature map `basis @ (x - mean)`; basis rows are orthonormal."""

    mean: np.ndarray
    basis: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Embedder":
        return cls(mean=np.zeros(dim), basis=np.eye(dim))

    def embed(self, samples: np.ndarray) -> np.ndarray:
        X = np.asarray(samples, dtype=float)
        if X.shape[-1] != self.input_dim:
            raise DimensionMismatch(
                f"embedder expects {self.input_dim} features, got {X.shape[-1]}"
            )
        return (X - self.mean) @ self.basis.T

    def reconstruct(self, latents: np.ndarray) -> np.ndarray:
        return np.asarray(latents, dtype=float) @ self.basis + self.mean

    def save(self, path: t.Union[str, os.PathLike]) -> None:
        with open(path, "w") as f:
            json.dump(
                {
                    "input_dim": self.input_dim,
                    "latent_dim": self.latent_dim,
                    "mean": self.mean.tolist(),
                    "basis": self.basis.tolist(),
                },
                f,
            )

    @classmethod
    def load(cls, path: t.Union[str, os.PathLike]) -> "Embedder":
        with open(path) as f:
            payload = json.load(f)
        basis = np.asarray(payload["basis"], dtype=float).reshape(
            payload["latent_dim"], payload["input_dim"]
        )
        return cls(mean=np.asarray(payload["mean"], dtype=float), basis=basis)


def fit_embedder(reference: np.ndarray, latent_dim: int = 32) -> Embedder:
    """
    PCA of the reference features. Each basis row is signed so that its entry of
    largest magnitude is positive.
    """
    X = np.asarray(reference, dtype=float)
    n, dim = X.shape
    if latent_dim < 1 or latent_dim > dim:
        raise DimensionMismatch(f"latent dim {latent_dim} outside 1..{dim}")
    if n <= latent_dim:
        raise TooFewSamples(f"{n} samples for a {latent_dim}-dim embedding")
    mean = X.mean(axis=0)
    # right singular vectors of the centred data are the covariance eigenvectors
    _, _, Vt = np.linalg.svd(X - mean, full_matrices=False)
    basis = Vt[:latent_dim].copy()
    pivots = basis[np.arange(latent_dim), np.abs(basis).argmax(axis=1)]
    basis *= np.where(pivots < 0, -1.0, 1.0)[:, None]
    return Embedder(mean=mean, basis=basis)


def compute_fid(pred: np.ndarray, gt: np.ndarray, embedder: Embedder) -> float:
    pred_stats = gaussian_stats(embedder.embed(pred), COV_REG)
    gt_stats = gaussian_stats(embedder.embed(gt), COV_REG)
    return frechet_distance(pred_stats, gt_stats)


def _flatten_all(sequences: t.Sequence[np.ndarray]) -> np.ndarray:
    flat = [np.asarray(s, dtype=float).reshape(-1) for s in sequences]
    if len({f.shape[0] for f in flat}) > 1:
        raise LengthMismatch("sequences differ in flattened length")
    if len(flat) < 2:
        raise TooFewSamples(f"{len(flat)} sequences, need more than 1")
    return np.stack(flat)


def fgd(
    pred_sequences: t.Sequence[np.ndarray],
    gt_sequences: t.Sequence[np.ndarray],
    reg: float = COV_REG,
) -> float:
    """Fréchet distance over whole flattened per-hand pose sequences."""
    pred = _flatten_all(pred_sequences)
    gt = _flatten_all(gt_sequences)
    if pred.shape[1] != gt.shape[1]:
        raise LengthMismatch(f"flattened lengths {pred.shape[1]} and {gt.shape[1]}")
    return frechet_distance_from_samples(pred, gt, reg)


def position_distance(pred_P: np.ndarray, gt_P: np.ndarray) -> float:
    """Mean over frames of the squared distance between root positions."""
    pred = np.asarray(pred_P, dtype=float)
    gt = np.asarray(gt_P, dtype=float)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"positions {pred.shape} and {gt.shape}")
    if not (np.isfinite(pred).all() and np.isfinite(gt).all()):
        raise NonFinite("positions contain NaN or infinite values")
    if len(pred) == 0:
        raise LengthMismatch("no frames to compare")
    return float(((pred - gt) ** 2).sum(axis=-1).mean())


def smoothness_per_hand(
    pred: HandTrack,
    gt: HandTrack,
    fps: float = 30.0,
    shape: t.Optional[HandShape] = None,
    template: t.Optional[HandTemplate] = None,
) -> float:
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predicted frames against {len(gt)}")
    tau_pred = joint_accelerations(pred, fps, shape, template).mean_magnitude()
    tau_gt = joint_accelerations(gt, fps, shape, template).mean_magnitude()
    return float(np.abs(tau_pred - tau_gt).sum())


def smoothness(
    pred: MotionSequence,
    gt: MotionSequence,
    fps: float = 30.0,
    template: t.Optional[HandTemplate] = None,
) -> float:
    """Sum over every joint of both hands of the mean-acceleration gap."""
    shape = HandShape(gt.rho)
    return smoothness_per_hand(
        pred.left, gt.left, fps, shape, template
    ) + smoothness_per_hand(pred.right, gt.right, fps, shape, template)


class HandMetrics(BaseModel):
    fgd: t.Optional[float] = Field(default=None, ge=0, allow_inf_nan=False)
    wgd: t.Optional[float] = Field(default=None, ge=0, allow_inf_nan=False)
    pd: t.Optional[float] = Field(default=None, ge=0, allow_inf_nan=False)
    smoothness: t.Optional[float] = Field(default=None, ge=0, allow_inf_nan=False)


class MetricReport(BaseModel):
    fid: t.Optional[float] = Field(default=None, ge=0, allow_inf_nan=False)
    left: HandMetrics = Field(default_factory=HandMetrics)
    right: HandMetrics = Field(default_factory=HandMetrics)
    seed: int
    gmm_components: int
    latent_dim: int
    clip_count: int
    window_count: int
    fps: float

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"

    def csv_rows(self) -> list[tuple[str, str, t.Optional[float]]]:
        rows: list[tuple[str, str, t.Optional[float]]] = [("fid", "both", self.fid)]
        for side in ("left", "right"):
            hand: HandMetrics = getattr(self, side)
            rows += [(name, side, value) for name, value in hand.model_dump().items()]
        return rows
