"""Residual-MLP generator: forward pass, exact backprop for the MSE regression
loss, an Adam optimizer, and checkpoint (de)serialization.

The network maps a latent z to a sample x:

    h = z W_in + b_in
    h = h + silu(h W1_k + b1_k) W2_k + b2_k      (per residual block)
    x = h W_out + b_out

Gradients are hand-derived for exactly this architecture; there is no general
autodiff here.  All tensors are float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InvalidInputError, NumericError

__all__ = [
    "Architecture",
    "GeneratorParams",
    "AdamState",
    "init_params",
    "forward",
    "mse_loss_and_grads",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"DRIFTGEN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    latent_dim: int = 32
    hidden_width: int = 256
    num_blocks: int = 3
    output_dim: int = 2
    activation: str = "silu"

    def __post_init__(self):
        for name in ("latent_dim", "hidden_width", "num_blocks", "output_dim"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"architecture field {name} must be positive")
        if self.activation != "silu":
            raise InvalidInputError(f"unsupported activation {self.activation!r}")


def param_names(arch: Architecture) -> list[str]:
    """Canonical parameter order; checkpoint layout and init draws follow it."""
    names = ["w_in", "b_in"]
    for k in range(arch.num_blocks):
        names += [f"w1_{k}", f"b1_{k}", f"w2_{k}", f"b2_{k}"]
    names += ["w_out", "b_out"]
    return names


def param_shapes(arch: Architecture) -> dict[str, tuple]:
    w = arch.hidden_width
    shapes = {"w_in": (arch.latent_dim, w), "b_in": (w,)}
    for k in range(arch.num_blocks):
        shapes[f"w1_{k}"] = (w, w)
        shapes[f"b1_{k}"] = (w,)
        shapes[f"w2_{k}"] = (w, w)
        shapes[f"b2_{k}"] = (w,)
    shapes["w_out"] = (w, arch.output_dim)
    shapes["b_out"] = (arch.output_dim,)
    return shapes


@dataclass
class GeneratorParams:
    arch: Architecture
    tensors: dict[str, np.ndarray]

    def copy(self) -> "GeneratorParams":
        return GeneratorParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})


def init_params(arch: Architecture, seed: int) -> GeneratorParams:
    """Fan-in Gaussian init (std 1/sqrt(fan_in)), zero biases; deterministic.

    Residual-branch output weights (w2_k) carry an extra 1/sqrt(num_blocks)
    so the initial output spread stays within [0.5, 2.0] per coordinate
    regardless of depth.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    tensors = {}
    for name, shape in param_shapes(arch).items():
        if name.startswith("w"):
            scale = 1.0 / np.sqrt(shape[0])
            if name.startswith("w2_"):
                scale /= np.sqrt(arch.num_blocks)
            tensors[name] = scale * rng.standard_normal(shape)
        else:
            tensors[name] = np.zeros(shape)
    return GeneratorParams(arch, tensors)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # exp overflow for very negative a saturates to 0, which is the right limit
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-a))


def _check_z(params: GeneratorParams, z_batch) -> np.ndarray:
    z = np.asarray(z_batch, dtype=float)
    if z.ndim != 2 or z.shape[1] != params.arch.latent_dim:
        raise InvalidInputError(
            f"latent batch must have shape (n, {params.arch.latent_dim}), got {z.shape}"
        )
    return z


def _forward_cached(params: GeneratorParams, z: np.ndarray):
    t = params.tensors
    h = z @ t["w_in"] + t["b_in"]
    cache = []
    for k in range(params.arch.num_blocks):
        a = h @ t[f"w1_{k}"] + t[f"b1_{k}"]
        sig = _sigmoid(a)
        s = a * sig
        cache.append((h, a, sig, s))
        h = h + s @ t[f"w2_{k}"] + t[f"b2_{k}"]
    y = h @ t["w_out"] + t["b_out"]
    return y, h, cache


def forward(params: GeneratorParams, z_batch) -> np.ndarray:
    """Map a latent batch (n, latent_dim) to samples (n, output_dim)."""
    z = _check_z(params, z_batch)
    y, _, _ = _forward_cached(params, z)
    return y


def mse_loss_and_grads(params: GeneratorParams, z_batch, targets):
    """Loss mean_i |f(z_i) - t_i|^2 and its exact parameter gradients.

    Returns (loss, grads) with grads keyed like ``params.tensors``.
    """
    z = _check_z(params, z_batch)
    return _mse_backward(params, z, targets, _forward_cached(params, z))


def _mse_backward(params: GeneratorParams, z: np.ndarray, targets, fwd):
    tgt = np.asarray(targets, dtype=float)
    if tgt.shape != (z.shape[0], params.arch.output_dim):
        raise InvalidInputError(
            f"targets must have shape ({z.shape[0]}, {params.arch.output_dim}), got {tgt.shape}"
        )
    t = params.tensors
    y, h_last, cache = fwd
    diff = y - tgt
    loss = float(np.einsum("nd,nd->", diff, diff) / z.shape[0])

    grads = {}
    dy = diff * (2.0 / z.shape[0])
    grads["w_out"] = h_last.T @ dy
    grads["b_out"] = dy.sum(axis=0)
    dh = dy @ t["w_out"].T
    for k in reversed(range(params.arch.num_blocks)):
        h_prev, a, sig, s = cache[k]
        grads[f"w2_{k}"] = s.T @ dh
        grads[f"b2_{k}"] = dh.sum(axis=0)
        # d silu(a)/da = sig * (1 + a * (1 - sig)), reusing the cached sigmoid
        da = (dh @ t[f"w2_{k}"].T) * (sig * (1.0 + a * (1.0 - sig)))
        grads[f"w1_{k}"] = h_prev.T @ da
        grads[f"b1_{k}"] = da.sum(axis=0)
        dh = dh + da @ t[f"w1_{k}"].T
    grads["w_in"] = z.T @ dh
    grads["b_in"] = dh.sum(axis=0)
    return loss, grads


@dataclass
class AdamState:
    """Adam moment accumulators plus hyperparameters; ``step`` counts updates."""

    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: GeneratorParams, lr: float = 1e-3, **kw) -> "AdamState":
        zeros = lambda: {k: np.zeros_like(v) for k, v in params.tensors.items()}
        return cls(m=zeros(), v=zeros(), step=0, lr=lr, **kw)


def adam_step(state: AdamState, params: GeneratorParams, grads: dict):
    """One Adam update with bias correction; returns (new_state, new_params)."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {k!r}")
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_m, new_v, new_p = {}, {}, {}
    for k, p in params.tensors.items():
        g = grads[k]
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        new_m[k] = m
        new_v[k] = v
        new_p[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return (
        replace(state, m=new_m, v=new_v, step=t),
        GeneratorParams(params.arch, new_p),
    )


def save_checkpoint(params: GeneratorParams, path: str, sidecar: dict | None = None) -> None:
    """Write the flat binary checkpoint plus a JSON sidecar at ``path``+'.json'.

    Layout: magic 'DRIFTGEN', u32 version, u32 latent_dim, u32 hidden_width,
    u32 num_blocks, u32 output_dim, u64 total float count, then every tensor
    in canonical order as little-endian row-major float64.
    """
    arch = params.arch
    names = param_names(arch)
    total = sum(params.tensors[n].size for n in names)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(
            struct.pack(
                "<IIIIIQ",
                CHECKPOINT_VERSION,
                arch.latent_dim,
                arch.hidden_width,
                arch.num_blocks,
                arch.output_dim,
                total,
            )
        )
        for n in names:
            f.write(np.ascontiguousarray(params.tensors[n], dtype="<f8").tobytes())
    meta = {
        "arch": {
            "latent_dim": arch.latent_dim,
            "hidden_width": arch.hidden_width,
            "num_blocks": arch.num_blocks,
            "output_dim": arch.output_dim,
            "activation": arch.activation,
        }
    }
    meta.update(sidecar or {})
    with open(path + ".json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(path: str, expect_arch: Architecture | None = None):
    """Read a checkpoint; returns (params, sidecar-dict or None).

    Rejects bad magic, truncated files, and arch headers that disagree with
    ``expect_arch`` or with the sidecar.
    """
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise InvalidInputError(f"{path}: not a generator checkpoint (bad magic)")
        version, latent, width, blocks, out_dim, total = struct.unpack("<IIIIIQ", f.read(28))
        if version != CHECKPOINT_VERSION:
            raise InvalidInputError(f"{path}: unsupported checkpoint version {version}")
        arch = Architecture(latent_dim=latent, hidden_width=width, num_blocks=blocks, output_dim=out_dim)
        if expect_arch is not None and arch != expect_arch:
            raise InvalidInputError(f"{path}: checkpoint arch {arch} does not match expected {expect_arch}")
        shapes = param_shapes(arch)
        if total != sum(int(np.prod(s)) for s in shapes.values()):
            raise InvalidInputError(f"{path}: parameter count {total} inconsistent with arch header")
        raw = f.read(total * 8)
        if len(raw) != total * 8:
            raise InvalidInputError(f"{path}: truncated checkpoint")
    flat = np.frombuffer(raw, dtype="<f8").astype(float)
    tensors, ofs = {}, 0
    for n in param_names(arch):
        size = int(np.prod(shapes[n]))
        tensors[n] = flat[ofs : ofs + size].reshape(shapes[n]).copy()
        ofs += size

    sidecar = None
    try:
        with open(path + ".json") as f:
            sidecar = json.load(f)
    except FileNotFoundError:
        pass
    if sidecar is not None and "arch" in sidecar:
        side = sidecar["arch"]
        for k in ("latent_dim", "hidden_width", "num_blocks", "output_dim"):
            if int(side[k]) != getattr(arch, k):
                raise InvalidInputError(f"{path}: sidecar arch disagrees with binary header on {k}")
    return GeneratorParams(arch, tensors), sidecar
