"""Boltzmann energy targets and a quadrature oracle for their smoothed scores.

Each target defines an unnormalized density p(x) = exp(-E(x))/Z through its
energy E, together with the exact gradient and Hessian of E and a reference
sampler.  Built-in 2D targets:

* ``gmm4``        four equal-weight isotropic Gaussian modes at (+-1, +-1)
                  with common width 0.5, E(x) = -log sum_k exp(-|x-mu_k|^2/(2 s^2))
* ``double_well`` E(x) = 2 (x1^2 - 1)^2 + x2^2 / 2, wells at (+-1, 0)
* ``banana``      E(x) = x1^2/8 + (x2 + b (x1^2 - 4))^2 / 2 with b = 0.3
* ``gauss``       standard isotropic quadratic E(x) = |x|^2 / 2, mainly a
                  diagnostic target with a known smoothed score

Normalization constants are never computed; they cancel everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapabilityError, InvalidInputError

__all__ = [
    "SampleBatch",
    "EnergyTarget",
    "QuadraticEnergy",
    "GridSpec",
    "get_target",
    "target_names",
    "sample_reference",
    "smoothed_score_oracle",
]


@dataclass(frozen=True)
class SampleBatch:
    """A batch of sample points plus the seed that produced them."""

    points: np.ndarray  # (n, dim)
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]


def batch_points(batch) -> np.ndarray:
    """Coerce a SampleBatch or a plain (n, dim) array to an array of points."""
    pts = batch.points if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    if pts.ndim != 2:
        raise InvalidInputError(f"expected an (n, dim) array of points, got shape {pts.shape}")
    return pts


class EnergyTarget:
    """Base class: an energy function with derivatives and optional sampler.

    ``energy``, ``grad_energy`` and ``hess_energy`` accept a single point of
    shape (dim,) or a batch of shape (n, dim); outputs follow the input rank.
    Inputs are assumed finite (caller contract); dimensions are checked.
    """

    name: str = "energy"
    dim: int = 2
    params: dict = {}

    def energy(self, x) -> np.ndarray:
        pts, single = self._prepare(x)
        e = self._energy(pts)
        return e[0] if single else e

    def grad_energy(self, x) -> np.ndarray:
        pts, single = self._prepare(x)
        g = self._grad(pts)
        return g[0] if single else g

    def hess_energy(self, x) -> np.ndarray:
        pts, single = self._prepare(x)
        h = self._hess(pts)
        return h[0] if single else h

    def sample(self, n: int, seed: int) -> SampleBatch:
        raise CapabilityError(f"target {self.name!r} has no reference sampler")

    # subclasses implement the batched forms on (n, dim) arrays
    def _energy(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hess(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _prepare(self, x):
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise InvalidInputError(
                f"target {self.name!r} expects points of dimension {self.dim}, "
                f"got array of shape {np.shape(x)}"
            )
        return pts, single


class GaussianMixture(EnergyTarget):
    """Equal-weight isotropic mixture, E(x) = -log sum_k exp(-|x-mu_k|^2/(2 s^2))."""

    def __init__(self, modes, width: float, name: str = "gmm4"):
        self.modes = np.asarray(modes, dtype=float)
        self.width = float(width)
        self.name = name
        self.dim = self.modes.shape[1]
        self.params = {"modes": self.modes.tolist(), "width": self.width}

    def _log_kernels(self, pts):
        # -|x - mu_k|^2 / (2 s^2) expanded through a matmul; avoids (n, K, dim)
        # temporaries on the hot path
        x2 = np.einsum("nd,nd->n", pts, pts)
        m2 = np.einsum("kd,kd->k", self.modes, self.modes)
        return (2.0 * (pts @ self.modes.T) - x2[:, None] - m2[None, :]) / (
            2.0 * self.width**2
        )

    def _energy(self, pts):
        a = self._log_kernels(pts)
        m = a.max(axis=1)
        a -= m[:, None]
        np.exp(a, out=a)
        return -(m + np.log(a.sum(axis=1)))

    def _softmax(self, pts):
        a = self._log_kernels(pts)
        a -= a.max(axis=1, keepdims=True)
        np.exp(a, out=a)
        a /= a.sum(axis=1, keepdims=True)
        return a, pts[:, None, :] - self.modes[None, :, :]

    def _grad(self, pts):
        p, d = self._softmax(pts)
        return np.einsum("nk,nkd->nd", p, d) / self.width**2

    def _hess(self, pts):
        p, d = self._softmax(pts)
        s2 = self.width**2
        g = np.einsum("nk,nkd->nd", p, d) / s2
        outer = np.einsum("nk,nkd,nke->nde", p, d, d) / s2**2
        eye = np.eye(self.dim) / s2
        return eye[None, :, :] - outer + np.einsum("nd,ne->nde", g, g)

    def sample(self, n: int, seed: int) -> SampleBatch:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        comp = rng.integers(0, len(self.modes), size=n)
        pts = self.modes[comp] + self.width * rng.standard_normal((n, self.dim))
        return SampleBatch(points=pts, seed=seed)


class DoubleWell(EnergyTarget):
    """E(x) = 2 (x1^2 - 1)^2 + x2^2 / 2; x1 is sampled by 1D inverse CDF."""

    name = "double_well"

    # inverse-CDF grid for the x1 marginal; mass outside [-3, 3] is ~exp(-128)
    GRID_LO, GRID_HI, GRID_NODES = -3.0, 3.0, 4096

    def __init__(self):
        self.params = {"well_depth": 2.0, "grid": [self.GRID_LO, self.GRID_HI, self.GRID_NODES]}
        g = np.linspace(self.GRID_LO, self.GRID_HI, self.GRID_NODES)
        f = np.exp(-2.0 * (g**2 - 1.0) ** 2)
        cdf = np.concatenate([[0.0], np.cumsum((f[1:] + f[:-1]) * 0.5 * np.diff(g))])
        self._grid = g
        self._cdf = cdf / cdf[-1]

    def _energy(self, pts):
        return 2.0 * (pts[:, 0] ** 2 - 1.0) ** 2 + 0.5 * pts[:, 1] ** 2

    def _grad(self, pts):
        return np.stack([8.0 * pts[:, 0] * (pts[:, 0] ** 2 - 1.0), pts[:, 1]], axis=1)

    def _hess(self, pts):
        h = np.zeros((len(pts), 2, 2))
        h[:, 0, 0] = 24.0 * pts[:, 0] ** 2 - 8.0
        h[:, 1, 1] = 1.0
        return h

    def sample(self, n: int, seed: int) -> SampleBatch:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        x1 = np.interp(rng.random(n), self._cdf, self._grid)
        x2 = rng.standard_normal(n)
        return SampleBatch(points=np.stack([x1, x2], axis=1), seed=seed)


class Banana(EnergyTarget):
    """E(x) = x1^2/8 + (x2 + b (x1^2 - 4))^2 / 2; exact pushforward sampler."""

    name = "banana"

    def __init__(self, b: float = 0.3):
        self.b = float(b)
        self.params = {"b": self.b, "x1_var": 4.0}

    def _residual(self, pts):
        return pts[:, 1] + self.b * (pts[:, 0] ** 2 - 4.0)

    def _energy(self, pts):
        return pts[:, 0] ** 2 / 8.0 + 0.5 * self._residual(pts) ** 2

    def _grad(self, pts):
        r = self._residual(pts)
        return np.stack([pts[:, 0] / 4.0 + 2.0 * self.b * pts[:, 0] * r, r], axis=1)

    def _hess(self, pts):
        r = self._residual(pts)
        h = np.empty((len(pts), 2, 2))
        h[:, 0, 0] = 0.25 + 2.0 * self.b * r + 4.0 * self.b**2 * pts[:, 0] ** 2
        h[:, 0, 1] = h[:, 1, 0] = 2.0 * self.b * pts[:, 0]
        h[:, 1, 1] = 1.0
        return h

    def sample(self, n: int, seed: int) -> SampleBatch:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        x1 = 2.0 * rng.standard_normal(n)
        x2 = rng.standard_normal(n) - self.b * (x1**2 - 4.0)
        return SampleBatch(points=np.stack([x1, x2], axis=1), seed=seed)


class QuadraticEnergy(EnergyTarget):
    """E(x) = (x-m)^T A (x-m) / 2 with symmetric A; smoothed score is closed form."""

    def __init__(self, a, m=None, name: str = "quadratic"):
        self.a = np.asarray(a, dtype=float)
        self.dim = self.a.shape[0]
        self.m = np.zeros(self.dim) if m is None else np.asarray(m, dtype=float)
        self.name = name
        self.params = {"a": self.a.tolist(), "m": self.m.tolist()}

    def _energy(self, pts):
        d = pts - self.m
        return 0.5 * np.einsum("nd,de,ne->n", d, self.a, d)

    def _grad(self, pts):
        return (pts - self.m) @ self.a.T

    def _hess(self, pts):
        return np.broadcast_to(self.a, (len(pts), self.dim, self.dim)).copy()

    def smoothed_score(self, x, sigma: float) -> np.ndarray:
        """Exact score of p * phi_sigma: -(I + sigma^2 A)^-1 A (x - m)."""
        x = np.asarray(x, dtype=float)
        mat = np.eye(self.dim) + sigma**2 * self.a
        return -np.linalg.solve(mat, self.a @ (x - self.m))

    def sample(self, n: int, seed: int) -> SampleBatch:
        try:
            chol = np.linalg.cholesky(self.a)
        except np.linalg.LinAlgError:
            raise CapabilityError(f"quadratic target {self.name!r} is not positive definite")
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        eps = rng.standard_normal((n, self.dim))
        # cov = A^-1 = L^-T L^-1, so draw x = m + L^-T eps
        pts = self.m + np.linalg.solve(chol.T, eps.T).T
        return SampleBatch(points=pts, seed=seed)


_FACTORIES = {
    "gmm4": lambda: GaussianMixture(
        modes=[[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]], width=0.5
    ),
    "double_well": DoubleWell,
    "banana": Banana,
    "gauss": lambda: QuadraticEnergy(np.eye(2), name="gauss"),
}


def target_names() -> list[str]:
    return sorted(_FACTORIES)


def get_target(name: str) -> EnergyTarget:
    """Look up a built-in target by its registry name."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown target {name!r}; available: {', '.join(target_names())}"
        ) from None
    return factory()


def sample_reference(target: EnergyTarget, n: int, seed: int) -> SampleBatch:
    """Draw n reference samples from the target; deterministic given seed."""
    if n < 1:
        raise InvalidInputError(f"need at least one sample, got n={n}")
    return target.sample(n, int(seed))


@dataclass(frozen=True)
class GridSpec:
    """Tensor-product quadrature grid around the query point.

    ``span`` is the half-width in units of sigma (the grid covers
    [x - span*sigma, x + span*sigma] per axis), ``nodes`` the per-axis count.
    """

    span: float = 8.0
    nodes: int = 401


def smoothed_score_oracle(target: EnergyTarget, x, sigma: float, grid: GridSpec | None = None):
    """Quadrature evaluation of the smoothed score -grad log of (p * phi_sigma).

    Uses the local-posterior mean-shift identity: the score equals
    (E_pi[u] - x) / sigma^2 where pi(u|x) ~ exp(-E(u) - |u-x|^2/(2 sigma^2)).
    Trapezoid rule on a tensor grid; intended as a test oracle, not for
    training.  Accepts a single point (dim,) or a batch (n, dim).
    """
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    grid = grid or GridSpec()
    if grid.nodes < 50:
        raise InvalidInputError(f"grid too coarse: {grid.nodes} nodes per axis (need >= 50)")

    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.shape[1] != target.dim:
        raise InvalidInputError(f"points have dimension {pts.shape[1]}, target wants {target.dim}")

    axis = np.linspace(-grid.span * sigma, grid.span * sigma, grid.nodes)
    w1 = np.full(grid.nodes, axis[1] - axis[0])
    w1[0] = w1[-1] = 0.5 * (axis[1] - axis[0])
    mesh = np.meshgrid(*([axis] * target.dim), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)  # (nodes^dim, dim)
    logw_quad = np.zeros(len(offsets))
    for d in range(target.dim):
        logw_quad += np.log(w1)[
            tuple(np.meshgrid(*([np.arange(grid.nodes)] * target.dim), indexing="ij"))[d].ravel()
        ]
    sq = np.einsum("md,md->m", offsets, offsets)

    out = np.empty_like(pts)
    for i, xi in enumerate(pts):
        u = xi + offsets
        logf = -target.energy(u) - sq / (2.0 * sigma**2) + logw_quad
        logf -= logf.max()  # overflow guard; constant factors cancel in the ratio
        f = np.exp(logf)
        mean_u = (f[:, None] * u).sum(axis=0) / f.sum()
        out[i] = (mean_u - xi) / sigma**2
    return out[0] if single else out
