"""Sample-quality metrics between generated and reference batches.

All metrics are deterministic functions of their inputs.  The MMD is the
biased V-statistic (diagonal terms included) with an RBF kernel
exp(-|a-b|^2 / (2 h^2)); when no bandwidth is given, h is the median
pairwise distance among the reference points (subsampled to at most 2000
points with a fixed seed, so the bandwidth is comparable across generator
checkpoints).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .energy import EnergyTarget, batch_points
from .exceptions import InvalidInputError

__all__ = [
    "MetricsReport",
    "mean_error",
    "cov_error",
    "mmd_rbf",
    "mean_energy",
    "quadrant_counts",
    "evaluate",
]

_MMD_SUBSAMPLE = 2000
_MMD_SUBSAMPLE_SEED = 0
_BLOCK = 2048


@dataclass
class MetricsReport:
    mean_l2: float
    cov_fro: float
    mmd_rbf: float
    mmd_bandwidth: float
    gen_energy: float
    ref_energy: float
    quadrants: list[int] | None
    n_gen: int
    n_ref: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        fields = {k: d[k] for k in cls.__dataclass_fields__}
        return cls(**fields)


def mean_error(gen, ref) -> float:
    """l2 distance between the two sample means."""
    g, r = batch_points(gen), batch_points(ref)
    if len(g) == 0 or len(r) == 0:
        raise InvalidInputError("mean_error needs nonempty batches")
    if g.shape[1] != r.shape[1]:
        raise InvalidInputError("batches have different dimensions")
    return float(np.linalg.norm(g.mean(axis=0) - r.mean(axis=0)))


def cov_error(gen, ref) -> float:
    """Frobenius norm of the difference of the (n-1)-normalized covariances."""
    g, r = batch_points(gen), batch_points(ref)
    if len(g) < 2 or len(r) < 2:
        raise InvalidInputError("cov_error needs at least two points per batch")
    if g.shape[1] != r.shape[1]:
        raise InvalidInputError("batches have different dimensions")
    return float(np.linalg.norm(np.cov(g.T) - np.cov(r.T), ord="fro"))


def _kernel_sum(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """sum_ij exp(-|a_i - b_j|^2 / (2 h^2)), accumulated in fixed-size blocks."""
    inv = 1.0 / (2.0 * h * h)
    bb = np.einsum("nd,nd->n", b, b)
    total = 0.0
    for i0 in range(0, len(a), _BLOCK):
        rows = a[i0 : i0 + _BLOCK]
        d2 = np.einsum("nd,nd->n", rows, rows)[:, None] - 2.0 * rows @ b.T + bb[None, :]
        total += float(np.exp(-inv * d2).sum())
    return total


def _median_heuristic(ref: np.ndarray) -> float:
    pts = ref
    if len(pts) > _MMD_SUBSAMPLE:
        idx = np.random.default_rng(_MMD_SUBSAMPLE_SEED).choice(
            len(pts), size=_MMD_SUBSAMPLE, replace=False
        )
        pts = pts[np.sort(idx)]
    d2 = (
        np.einsum("nd,nd->n", pts, pts)[:, None]
        - 2.0 * pts @ pts.T
        + np.einsum("nd,nd->n", pts, pts)[None, :]
    )
    iu = np.triu_indices(len(pts), k=1)
    h = float(np.sqrt(np.median(np.maximum(d2[iu], 0.0))))
    if h == 0.0:
        raise InvalidInputError("degenerate reference batch: median pairwise distance is zero")
    return h


def mmd_rbf(gen, ref, bandwidth: float | None = None):
    """Squared MMD (V-statistic) and the bandwidth used, as (mmd2, h)."""
    g, r = batch_points(gen), batch_points(ref)
    if len(g) == 0 or len(r) == 0:
        raise InvalidInputError("mmd_rbf needs nonempty batches")
    if g.shape[1] != r.shape[1]:
        raise InvalidInputError("batches have different dimensions")
    h = float(bandwidth) if bandwidth is not None else _median_heuristic(r)
    if h <= 0:
        raise InvalidInputError(f"bandwidth must be positive, got {h}")
    m, n = len(g), len(r)
    mmd2 = (
        _kernel_sum(g, g, h) / (m * m)
        + _kernel_sum(r, r, h) / (n * n)
        - 2.0 * _kernel_sum(g, r, h) / (m * n)
    )
    return max(mmd2, 0.0), h


def mean_energy(target: EnergyTarget, batch) -> float:
    """Mean of E over the batch."""
    pts = batch_points(batch)
    if len(pts) == 0:
        raise InvalidInputError("mean_energy needs a nonempty batch")
    return float(target.energy(pts).mean())


def quadrant_counts(batch) -> list[int]:
    """Counts by sign quadrant (x1>=0,x2>=0), (<0,>=0), (<0,<0), (>=0,<0).

    Coordinates exactly on an axis count as non-negative.
    """
    pts = batch_points(batch)
    if pts.shape[1] != 2:
        raise InvalidInputError("quadrant_counts is defined for 2D batches")
    xpos = pts[:, 0] >= 0
    ypos = pts[:, 1] >= 0
    return [
        int(np.sum(xpos & ypos)),
        int(np.sum(~xpos & ypos)),
        int(np.sum(~xpos & ~ypos)),
        int(np.sum(xpos & ~ypos)),
    ]


def evaluate(target: EnergyTarget, gen, ref, bandwidth: float | None = None) -> MetricsReport:
    """Assemble the full metric report; quadrant counts only for gmm4."""
    g, r = batch_points(gen), batch_points(ref)
    mmd2, h = mmd_rbf(g, r, bandwidth)
    return MetricsReport(
        mean_l2=mean_error(g, r),
        cov_fro=cov_error(g, r),
        mmd_rbf=mmd2,
        mmd_bandwidth=h,
        gen_energy=mean_energy(target, g),
        ref_energy=mean_energy(target, r),
        quadrants=quadrant_counts(g) if target.name == "gmm4" else None,
        n_gen=len(g),
        n_ref=len(r),
    )
