"""Command-line interface: train | sample | eval | oracle | plot.

Configuration precedence is flags > config file (flat JSON keys) > defaults;
the effective configuration is echoed into every metrics JSON.  Exit codes:
0 success, 2 usage or configuration error, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from .drift import DriftConfig
from .energy import GridSpec, get_target, sample_reference, smoothed_score_oracle, target_names
from .exceptions import DriftSamplerError, InvalidInputError, TrainingAborted
from .figure import render_figure
from .metrics import evaluate
from .net import Architecture, forward, load_checkpoint
from .train import TrainConfig, train

__all__ = ["main", "entrypoint", "RunConfig", "read_samples_csv", "write_samples_csv"]


@dataclass
class RunConfig:
    """Flat view of every tunable; mirrors the JSON config file schema."""

    target: str = "gmm4"
    sigma: float = 0.22
    eta: float = 0.22
    estimator: str = "mc"
    num_perturbations: int = 256
    clip_norm: float | None = None
    latent_dim: int = 32
    hidden_width: int = 256
    num_blocks: int = 3
    steps: int = 10000
    batch_size: int = 1024
    lr: float = 1e-3
    seed: int = 42
    eval_every: int = 500
    eval_n: int = 5000
    eval_ref_seed: int = 42
    out_dir: str = "out"
    grid_n: int = 200
    subsample: int = 2000

    @classmethod
    def load(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        values = {}
        if config_path:
            with open(config_path) as f:
                data = json.load(f)
            if not isinstance(data, dict):
                raise InvalidInputError(f"{config_path}: config must be a JSON object")
            known = {f.name for f in fields(cls)}
            unknown = sorted(set(data) - known)
            if unknown:
                raise InvalidInputError(
                    f"{config_path}: unknown config keys: {', '.join(unknown)}"
                )
            values.update(data)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            target=self.target,
            drift=DriftConfig(
                sigma=self.sigma,
                eta=self.eta,
                estimator=self.estimator,
                num_perturbations=self.num_perturbations,
                clip_norm=self.clip_norm,
            ),
            arch=Architecture(
                latent_dim=self.latent_dim,
                hidden_width=self.hidden_width,
                num_blocks=self.num_blocks,
            ),
            steps=self.steps,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=self.seed,
            eval_every=self.eval_every,
            eval_n=self.eval_n,
            eval_ref_seed=self.eval_ref_seed,
            out_dir=self.out_dir,
        )


def write_samples_csv(path: str, points: np.ndarray) -> None:
    """CSV with header x1,x2 and shortest round-trip float formatting."""
    lines = ["x1,x2"]
    for row in np.asarray(points, dtype=float):
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def read_samples_csv(path: str) -> np.ndarray:
    """Parse a samples CSV; malformed rows report their line number."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "x1,x2":
        raise InvalidInputError(f"{path}:1: expected header 'x1,x2'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise InvalidInputError(f"{path}:{lineno}: expected two comma-separated values")
        try:
            rows.append([float(parts[0]), float(parts[1])])
        except ValueError:
            raise InvalidInputError(f"{path}:{lineno}: could not parse floats from {line!r}")
    return np.array(rows, dtype=float).reshape(len(rows), 2)


def _write_metrics(report, path: str | None, config_echo: dict) -> str:
    text = report.to_json(config=config_echo)
    if path:
        with open(path, "w") as f:
            f.write(text)
    return text


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config, _override_dict(args))
    tcfg = cfg.train_config()
    log = (lambda msg: print(msg, file=sys.stderr)) if not args.quiet else None
    try:
        _, report = train(tcfg, log=log)
    except TrainingAborted as err:
        print(f"error: {err}", file=sys.stderr)
        if err.diagnostics_path:
            print(f"diagnostics: {err.diagnostics_path}", file=sys.stderr)
        return 3
    print(report.to_json(config=cfg.train_config().to_flat()), end="")
    return 0


def cmd_sample(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    if args.n < 0:
        raise InvalidInputError("n must be >= 0")
    z = np.random.default_rng(np.random.SeedSequence(args.seed)).standard_normal(
        (args.n, params.arch.latent_dim)
    )
    pts = forward(params, z) if args.n else np.zeros((0, 2))
    write_samples_csv(args.out, pts)
    return 0


def cmd_eval(args) -> int:
    target = get_target(args.target)
    gen = read_samples_csv(args.gen)
    if args.ref in target_names():
        ref = sample_reference(get_target(args.ref), args.ref_n, args.ref_seed).points
        ref_desc = {"ref_target": args.ref, "ref_seed": args.ref_seed, "ref_n": args.ref_n}
    else:
        ref = read_samples_csv(args.ref)
        ref_desc = {"ref_csv": args.ref}
    echo = {"gen_csv": args.gen, "target": args.target, "bandwidth": args.bandwidth}
    echo.update(ref_desc)
    report = evaluate(target, gen, ref, bandwidth=args.bandwidth)
    print(_write_metrics(report, args.out, echo), end="")
    return 0


def cmd_oracle(args) -> int:
    target = get_target(args.target)
    pts = read_samples_csv(args.points)
    grid = GridSpec(span=args.grid_span, nodes=args.grid_nodes)
    scores = smoothed_score_oracle(target, pts, args.sigma, grid)
    lines = ["x1,x2,score1,score2"]
    for p, s in zip(pts, scores):
        lines.append(",".join(repr(float(v)) for v in (*p, *s)))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as f:
            f.write(text)
    else:
        print(text, end="")
    return 0


def cmd_plot(args) -> int:
    target = get_target(args.target)
    gen = read_samples_csv(args.gen)
    if len(gen) == 0:
        ref = None  # heatmap-only figure
    elif args.ref:
        ref = read_samples_csv(args.ref)
    else:
        ref = sample_reference(target, args.ref_n, args.ref_seed).points
    svg = render_figure(
        target,
        gen,
        ref,
        grid_n=args.grid_n,
        bounds=(args.lo, args.hi),
        subsample=args.subsample,
    )
    with open(args.out, "w", newline="") as f:
        f.write(svg)
    return 0


def _override_dict(args) -> dict:
    keys = (
        "target sigma eta estimator num_perturbations clip_norm steps batch_size "
        "lr seed eval_every eval_n eval_ref_seed out_dir"
    ).split()
    return {k: getattr(args, k, None) for k in keys}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftsampler",
        description="Train and evaluate one-step neural samplers for Boltzmann targets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="run the drifting training loop")
    tr.add_argument("--config", help="JSON config file with flat keys")
    tr.add_argument("--target", choices=target_names())
    tr.add_argument("--sigma", type=float)
    tr.add_argument("--eta", type=float)
    tr.add_argument("--estimator", choices=("mc", "second_order"))
    tr.add_argument("--num-perturbations", dest="num_perturbations", type=int)
    tr.add_argument("--clip-norm", dest="clip_norm", type=float)
    tr.add_argument("--steps", type=int)
    tr.add_argument("--batch-size", dest="batch_size", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--eval-every", dest="eval_every", type=int)
    tr.add_argument("--eval-n", dest="eval_n", type=int)
    tr.add_argument("--eval-ref-seed", dest="eval_ref_seed", type=int)
    tr.add_argument("--out-dir", dest="out_dir")
    tr.add_argument("--quiet", action="store_true", help="suppress progress lines")
    tr.set_defaults(func=cmd_train)

    sm = sub.add_parser("sample", help="draw samples from a trained checkpoint")
    sm.add_argument("--checkpoint", required=True)
    sm.add_argument("--n", type=int, required=True)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--out", required=True, help="output CSV path")
    sm.set_defaults(func=cmd_sample)

    ev = sub.add_parser("eval", help="compute metrics between two sample sets")
    ev.add_argument("--gen", required=True, help="generated samples CSV")
    ev.add_argument("--ref", required=True, help="reference samples CSV or a target name")
    ev.add_argument("--target", required=True, choices=target_names())
    ev.add_argument("--ref-seed", dest="ref_seed", type=int, default=42)
    ev.add_argument("--ref-n", dest="ref_n", type=int, default=5000)
    ev.add_argument("--bandwidth", type=float, help="fixed MMD bandwidth (default: median)")
    ev.add_argument("--out", help="write metrics JSON here as well")
    ev.set_defaults(func=cmd_eval)

    orc = sub.add_parser("oracle", help="quadrature oracle for the smoothed score")
    orc.add_argument("--target", required=True, choices=target_names())
    orc.add_argument("--points", required=True, help="points CSV")
    orc.add_argument("--sigma", type=float, required=True)
    orc.add_argument("--grid-nodes", dest="grid_nodes", type=int, default=401)
    orc.add_argument("--grid-span", dest="grid_span", type=float, default=8.0)
    orc.add_argument("--out", help="output CSV (default: stdout)")
    orc.set_defaults(func=cmd_oracle)

    pl = sub.add_parser("plot", help="emit an SVG figure (heatmap + samples)")
    pl.add_argument("--gen", required=True, help="generated samples CSV")
    pl.add_argument("--target", required=True, choices=target_names())
    pl.add_argument("--out", required=True, help="output SVG path")
    pl.add_argument("--ref", help="reference samples CSV (default: drawn internally)")
    pl.add_argument("--ref-seed", dest="ref_seed", type=int, default=42)
    pl.add_argument("--ref-n", dest="ref_n", type=int, default=2000)
    pl.add_argument("--grid-n", dest="grid_n", type=int, default=200)
    pl.add_argument("--subsample", type=int, default=2000)
    pl.add_argument("--lo", type=float, default=-4.0)
    pl.add_argument("--hi", type=float, default=4.0)
    pl.set_defaults(func=cmd_plot)

    for p in (tr, sm, ev, orc, pl):
        p.add_argument(
            "--sequential",
            action="store_true",
            help="bit-exact sequential mode (execution is always sequential; "
            "flag kept for interface stability)",
        )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except TrainingAborted as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except DriftSamplerError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as err:
        print(f"error: invalid JSON config: {err}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
