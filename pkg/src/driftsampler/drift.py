"""Drift-field estimation: target-side smoothed score from the energy and
sampler-side smoothed score from the batch, combined as V = eta * (g - s).

Target side, two estimators:

* ``mc``            self-normalized importance sampling over local Gaussian
                    perturbations u_l = x + sigma * eps_l with weights
                    exp(-E(u_l)); a local mean shift toward low energy.
* ``second_order``  curvature-corrected gradient -(I + sigma^2 H)^-1 grad E,
                    exact whenever E is quadratic.

Sampler side: Gaussian mean shift over the current batch, the self term
included, so the denominator never vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyTarget, batch_points
from .exceptions import InvalidInputError, NumericError, SingularCurvatureError

__all__ = [
    "DriftConfig",
    "DriftField",
    "target_drift_mc",
    "target_drift_second_order",
    "sampler_score_meanshift",
    "drift_field",
]

ESTIMATORS = ("mc", "second_order")

# determinant threshold below which (I + sigma^2 H) counts as singular
SINGULAR_DET = 1e-10

# kernel-matrix tiles; fixed sizes keep floating-point reduction order stable
_ROW_BLOCK = 512
_COL_BLOCK = 8192


@dataclass(frozen=True)
class DriftConfig:
    """Bandwidth, step size, and estimator selection for the drift field."""

    sigma: float = 0.22
    eta: float = 0.22
    estimator: str = "mc"
    num_perturbations: int = 256
    clip_norm: float | None = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        if self.eta <= 0:
            raise InvalidInputError(f"eta must be positive, got {self.eta}")
        if self.estimator not in ESTIMATORS:
            raise InvalidInputError(
                f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}"
            )
        if self.estimator == "mc" and self.num_perturbations < 2:
            raise InvalidInputError("mc estimator needs num_perturbations >= 2")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise InvalidInputError("clip_norm must be positive when set")


@dataclass
class DriftField:
    """Per-point drift vectors plus batch diagnostics."""

    vectors: np.ndarray  # (n, dim)
    mean_norm: float
    max_norm: float
    ess: np.ndarray | None = None  # per-point IS effective sample size (mc only)
    ess_mean: float | None = None
    fallback_count: int = 0  # singular-curvature fallbacks (second_order only)


def _as_batch(x, dim: int):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise InvalidInputError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return pts, single


def target_drift_mc(
    target: EnergyTarget,
    x,
    sigma: float,
    num_perturbations: int,
    rng: np.random.Generator,
    return_ess: bool = False,
):
    """Local importance-weighted mean shift (sum_l wbar_l u_l - x) / sigma^2.

    Accepts one point or a batch; perturbations are drawn fresh from ``rng``.
    Weights are normalized in the log domain (row max subtracted) so they
    cannot all underflow unless the energies themselves are non-finite.
    """
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    if num_perturbations < 2:
        raise InvalidInputError("need at least 2 perturbations")
    pts, single = _as_batch(x, target.dim)
    n, d = pts.shape
    eps = rng.standard_normal((n, num_perturbations, d))
    u = pts[:, None, :] + sigma * eps
    with np.errstate(over="ignore"):  # inf energies become zero weights below
        logw = -target.energy(u.reshape(-1, d)).reshape(n, num_perturbations)
    top = logw.max(axis=1)
    bad = ~np.isfinite(top)
    if bad.any():
        raise NumericError(
            f"importance weights vanished at batch index {int(np.argmax(bad))} "
            "(all perturbation energies non-finite)"
        )
    logw -= top[:, None]
    wbar = np.exp(logw)
    wbar /= wbar.sum(axis=1, keepdims=True)
    mean_u = np.matmul(wbar[:, None, :], u)[:, 0, :]
    drift = (mean_u - pts) / (sigma * sigma)
    if not return_ess:
        return drift[0] if single else drift
    ess = 1.0 / np.einsum("nl,nl->n", wbar, wbar)
    return (drift[0], ess[0]) if single else (drift, ess)


def _second_order(target: EnergyTarget, pts: np.ndarray, sigma: float):
    g = target.grad_energy(pts)
    h = target.hess_energy(pts)
    mat = np.eye(target.dim)[None, :, :] + (sigma * sigma) * h
    det = np.linalg.det(mat)
    singular = np.abs(det) < SINGULAR_DET
    if singular.any():
        solvable = mat.copy()
        solvable[singular] = np.eye(target.dim)
        drift = -np.linalg.solve(solvable, g[:, :, None])[:, :, 0]
        drift[singular] = -g[singular]  # fall back to the raw negative gradient
    else:
        drift = -np.linalg.solve(mat, g[:, :, None])[:, :, 0]
    return drift, singular


def target_drift_second_order(target: EnergyTarget, x, sigma: float):
    """Curvature-corrected gradient -(I + sigma^2 H(x))^-1 grad E(x).

    Raises SingularCurvatureError when |det(I + sigma^2 H)| < 1e-10; callers
    that want the raw-gradient fallback use drift_field instead.
    """
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    pts, single = _as_batch(x, target.dim)
    drift, singular = _second_order(target, pts, sigma)
    if singular.any():
        raise SingularCurvatureError(
            f"(I + sigma^2 H) singular at batch index {int(np.argmax(singular))}"
        )
    return drift[0] if single else drift


def sampler_score_meanshift(batch, sigma: float, at=None) -> np.ndarray:
    """Gaussian mean-shift estimate of the batch's smoothed score.

    For each evaluation point x_i this returns
    (sum_j K(x_j, x_i) x_j / sum_j K(x_j, x_i) - x_i) / sigma^2 with
    K(a, b) = exp(-|a-b|^2 / (2 sigma^2)).  ``at=None`` evaluates at the
    batch points themselves (the j = i self term is part of the sums).
    Kernel rows are processed in fixed-size tiles with a running max, so
    arbitrarily distant points cannot underflow the denominator.
    """
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    pts = batch_points(batch)
    if len(pts) < 1:
        raise InvalidInputError("batch must contain at least one point")
    where, single = (pts, False) if at is None else _as_batch(at, pts.shape[1])

    n_eval, d = where.shape
    inv = 1.0 / (2.0 * (sigma * sigma))
    means = np.empty_like(where)
    for r0 in range(0, n_eval, _ROW_BLOCK):
        rows = where[r0 : r0 + _ROW_BLOCK]
        run_max = np.full(len(rows), -np.inf)
        den = np.zeros(len(rows))
        num = np.zeros((len(rows), d))
        for c0 in range(0, len(pts), _COL_BLOCK):
            cols = pts[c0 : c0 + _COL_BLOCK]
            d2 = (
                np.einsum("rd,rd->r", rows, rows)[:, None]
                - 2.0 * rows @ cols.T
                + np.einsum("cd,cd->c", cols, cols)[None, :]
            )
            logk = -inv * d2
            block_max = logk.max(axis=1)
            new_max = np.maximum(run_max, block_max)
            rescale = np.exp(run_max - new_max)  # 0 on the first block
            k = np.exp(logk - new_max[:, None])
            den = den * rescale + k.sum(axis=1)
            num = num * rescale[:, None] + k @ cols
            run_max = new_max
        means[r0 : r0 + _ROW_BLOCK] = num / den[:, None]

    score = (means - where) / (sigma * sigma)
    return score[0] if single else score


def drift_field(
    target: EnergyTarget,
    batch,
    cfg: DriftConfig,
    rng: np.random.Generator | None = None,
) -> DriftField:
    """Drift V_i = eta * (target drift - sampler score) over a batch."""
    pts = batch_points(batch)
    if len(pts) < 1:
        raise InvalidInputError("batch must contain at least one point")
    s = sampler_score_meanshift(pts, cfg.sigma)
    ess = None
    fallback = 0
    if cfg.estimator == "mc":
        if rng is None:
            raise InvalidInputError("mc estimator requires an rng")
        g, ess = target_drift_mc(
            target, pts, cfg.sigma, cfg.num_perturbations, rng, return_ess=True
        )
    else:
        g, singular = _second_order(target, pts, cfg.sigma)
        fallback = int(singular.sum())

    vectors = cfg.eta * (g - s)
    if not np.all(np.isfinite(vectors)):
        idx = int(np.argmax(~np.isfinite(vectors).all(axis=1)))
        raise NumericError(f"non-finite drift at batch index {idx}")
    norms = np.linalg.norm(vectors, axis=1)
    if cfg.clip_norm is not None:
        over = norms > cfg.clip_norm
        if over.any():
            vectors = vectors.copy()
            vectors[over] *= (cfg.clip_norm / norms[over])[:, None]
            norms = np.linalg.norm(vectors, axis=1)
    return DriftField(
        vectors=vectors,
        mean_norm=float(norms.mean()),
        max_norm=float(norms.max()),
        ess=ess,
        ess_mean=None if ess is None else float(ess.mean()),
        fallback_count=fallback,
    )
