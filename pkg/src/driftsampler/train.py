"""Stop-gradient drifting loop: generate, estimate the drift field, freeze the
transported targets, regress the generator onto them, repeat.

Every step runs exactly:

1. draw latents z_i, push x_i = f(z_i)
2. sampler-side smoothed score over the batch (Gaussian mean shift)
3. target-side drift (mc or second_order estimator)
4. frozen targets x~_i = x_i + eta * (g_i - s_i)  (plain arrays, never recomputed)
5. one Adam step on mean |f(z_i) - x~_i|^2 reusing the same z_i

RNG layout (all PCG64): generator init uses SeedSequence(seed); the training
stream uses SeedSequence([seed, 1]); evaluation latents at step s use
SeedSequence([seed, 2, s]); periodic evaluation reference seeds derive from
SeedSequence([seed, 3, s]); the final evaluation references use
``eval_ref_seed`` directly, so final reports are comparable across runs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .drift import DriftConfig, drift_field
from .energy import get_target, sample_reference
from .exceptions import InvalidInputError, NumericError, TrainingAborted
from .metrics import MetricsReport, evaluate
from .net import (
    AdamState,
    Architecture,
    GeneratorParams,
    _forward_cached,
    _mse_backward,
    adam_step,
    forward,
    init_params,
    save_checkpoint,
)

__all__ = ["TrainConfig", "TrainState", "drift_step", "train", "eval_latent_rng"]

HISTORY_HEADER = "step,loss,mean_drift_norm,ess_mean"


@dataclass(frozen=True)
class TrainConfig:
    target: str = "gmm4"
    drift: DriftConfig = field(default_factory=DriftConfig)
    arch: Architecture = field(default_factory=Architecture)
    steps: int = 10000
    batch_size: int = 1024
    lr: float = 1e-3
    seed: int = 42
    eval_every: int = 500
    eval_n: int = 5000
    eval_ref_seed: int = 42
    out_dir: str | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise InvalidInputError("steps must be >= 1")
        if self.batch_size < 2:
            raise InvalidInputError("batch_size must be >= 2")
        if self.lr <= 0 or not np.isfinite(self.lr):
            raise InvalidInputError("lr must be positive and finite")
        if self.eval_every < 1:
            raise InvalidInputError("eval_every must be >= 1")
        if self.eval_n < 2:
            raise InvalidInputError("eval_n must be >= 2")

    def to_flat(self) -> dict:
        """Flat key/value view, the same schema the CLI config file uses."""
        return {
            "target": self.target,
            "sigma": self.drift.sigma,
            "eta": self.drift.eta,
            "estimator": self.drift.estimator,
            "num_perturbations": self.drift.num_perturbations,
            "clip_norm": self.drift.clip_norm,
            "latent_dim": self.arch.latent_dim,
            "hidden_width": self.arch.hidden_width,
            "num_blocks": self.arch.num_blocks,
            "steps": self.steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "seed": self.seed,
            "eval_every": self.eval_every,
            "eval_n": self.eval_n,
            "eval_ref_seed": self.eval_ref_seed,
        }


@dataclass
class TrainState:
    params: GeneratorParams
    adam: AdamState
    rng: np.random.Generator
    step: int = 0
    history: list = field(default_factory=list)
    last_checkpoint: str | None = None


def init_state(cfg: TrainConfig) -> TrainState:
    params = init_params(cfg.arch, cfg.seed)
    return TrainState(
        params=params,
        adam=AdamState.create(params, lr=cfg.lr),
        rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 1])),
    )


def eval_latent_rng(seed: int, step: int) -> np.random.Generator:
    """Fresh latent stream for evaluation; never touches the training stream."""
    return np.random.default_rng(np.random.SeedSequence([seed, 2, step]))


def _periodic_ref_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, 3, step]).generate_state(1)[0])


def drift_step(state: TrainState, target, cfg: TrainConfig) -> TrainState:
    """Advance the state by one drifting update (in place); returns the state."""
    z = state.rng.standard_normal((cfg.batch_size, cfg.arch.latent_dim))
    fwd = _forward_cached(state.params, z)
    x = fwd[0]
    field_ = drift_field(target, x, cfg.drift, rng=state.rng)
    frozen = x + field_.vectors
    loss, grads = _mse_backward(state.params, z, frozen, fwd)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss at step {state.step + 1}")
    state.adam, state.params = adam_step(state.adam, state.params, grads)
    state.step += 1
    state.history.append(
        {
            "step": state.step,
            "loss": loss,
            "mean_drift_norm": field_.mean_norm,
            "ess_mean": field_.ess_mean,
        }
    )
    return state


def _write_history(history: list, path: str) -> None:
    lines = [HISTORY_HEADER]
    for row in history:
        ess = "" if row["ess_mean"] is None else repr(float(row["ess_mean"]))
        lines.append(
            f"{row['step']},{repr(float(row['loss']))},"
            f"{repr(float(row['mean_drift_norm']))},{ess}"
        )
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def _evaluate_state(state: TrainState, target, cfg: TrainConfig, ref_seed: int) -> MetricsReport:
    z = eval_latent_rng(cfg.seed, state.step).standard_normal(
        (cfg.eval_n, cfg.arch.latent_dim)
    )
    gen = forward(state.params, z)
    ref = sample_reference(target, cfg.eval_n, ref_seed)
    return evaluate(target, gen, ref)


def train(cfg: TrainConfig, log=None):
    """Run the full drifting loop; returns (final_state, final_metrics).

    With ``cfg.out_dir`` set, writes checkpoint.bin/.json, history.csv,
    metrics_step*.json at every evaluation point and metrics.json at the end.
    On a numeric failure the partial history and a diagnostics file are
    persisted and TrainingAborted is raised.
    """
    target = get_target(cfg.target)
    state = init_state(cfg)
    out = cfg.out_dir
    echo = cfg.to_flat()
    if out:
        os.makedirs(out, exist_ok=True)

    def checkpoint(tag_step: int):
        if not out:
            return
        path = os.path.join(out, "checkpoint.bin")
        save_checkpoint(
            state.params,
            path,
            {"seed": cfg.seed, "step": tag_step, "target": cfg.target},
        )
        state.last_checkpoint = path

    try:
        for _ in range(cfg.steps):
            drift_step(state, target, cfg)
            if state.step % cfg.eval_every == 0 and state.step < cfg.steps:
                report = _evaluate_state(
                    state, target, cfg, _periodic_ref_seed(cfg.seed, state.step)
                )
                checkpoint(state.step)
                if out:
                    with open(os.path.join(out, f"metrics_step{state.step:06d}.json"), "w") as f:
                        f.write(report.to_json(config=echo, step=state.step))
                if log:
                    log(
                        f"step {state.step}: loss={state.history[-1]['loss']:.5f} "
                        f"mean_l2={report.mean_l2:.4f} mmd={report.mmd_rbf:.5f}"
                    )
    except NumericError as err:
        diag_path = None
        if out:
            _write_history(state.history, os.path.join(out, "history.csv"))
            last = state.history[-1] if state.history else None
            diag_path = os.path.join(out, "diagnostics.json")
            with open(diag_path, "w") as f:
                json.dump(
                    {
                        "error": str(err),
                        "step": state.step,
                        "last_checkpoint": state.last_checkpoint,
                        "last_loss": None if last is None else last["loss"],
                        "last_mean_drift_norm": None if last is None else last["mean_drift_norm"],
                        "last_ess_mean": None if last is None else last["ess_mean"],
                        "config": echo,
                    },
                    f,
                    indent=2,
                    sort_keys=True,
                )
                f.write("\n")
        raise TrainingAborted(
            f"training aborted at step {state.step}: {err}",
            diagnostics_path=diag_path,
            last_checkpoint=state.last_checkpoint,
        ) from err

    # final evaluation follows the reporting protocol: fixed reference seed
    report = _evaluate_state(state, target, cfg, cfg.eval_ref_seed)
    checkpoint(state.step)
    if out:
        _write_history(state.history, os.path.join(out, "history.csv"))
        with open(os.path.join(out, "metrics.json"), "w") as f:
            f.write(report.to_json(config=echo, step=state.step))
    if log:
        log(
            f"final: mean_l2={report.mean_l2:.4f} cov_fro={report.cov_fro:.4f} "
            f"mmd={report.mmd_rbf:.5f} energy gap={abs(report.gen_energy - report.ref_energy):.4f}"
        )
    return state, report
