"""Command-line surface.

Subcommands: gen-data, train, eval, export, grad-check, run. Exit codes
are 0 on success, 1 for usage or configuration problems, 2 for numeric
failures, and 3 for file or format problems.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint
from .config import ArchConfig, HyperParams, micro_scale
from .errors import ConfigError, FormatError, NumericError, PlacementError, ShapeError
from .experiment import ExperimentConfig, build_dataset, evaluate_models, run_experiment
from .gradcheck import grad_check
from .losses import kl_divergence, reconstruction_loss
from .networks import GaussianLatent, build_models
from .ops import conv2d, conv3d, deconv3d, dense, leaky_relu, maxpool2d, relu, sigmoid
from .scenes import SceneConfig
from .tensor import Tensor, reduce_sum
from .trainer import run_training
from .transforms import one_hot
from .vsem import load_dataset, load_volume, save_dataset


def _tuple_of_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _read_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return ExperimentConfig.from_text(fh.read())
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc


def cmd_gen_data(args) -> int:
    extents = _tuple_of_ints(args.extents)
    if len(extents) != 3:
        raise ConfigError(f"--extents needs three values, got {args.extents!r}")
    image_shape = _tuple_of_ints(args.image_shape)
    if len(image_shape) != 2:
        raise ConfigError(f"--image-shape needs two values, got {args.image_shape!r}")
    scene = SceneConfig(extents=tuple(e * args.supersample for e in extents))
    dataset = build_dataset(
        scene,
        image_shape,
        args.count,
        seed=args.seed,
        volume_supersample=args.supersample,
        render_supersample=args.render_supersample,
        vertical_fov_deg=args.fov,
    )
    save_dataset(args.out, dataset)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _read_config(args.config)
    dataset = load_dataset(args.data)
    state, records = run_training(dataset, config.arch, config.hyper, args.out)
    last = records[-1]
    print(f"trained {state.step} steps; final reconstruction {last.reconstruction:.4f}")
    print(f"checkpoint and logs in {args.out}")
    return 0


def cmd_eval(args) -> int:
    models, _ = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    report = evaluate_models(models, dataset)
    print(report.describe())
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report.to_json() + "\n")
        print(f"report written to {args.report}")
    return 0


def cmd_export(args) -> int:
    from .export import export_geometry

    volume = load_volume(args.volume)
    cubes = export_geometry(volume, args.out)
    print(f"wrote {cubes} cubes to {args.out}")
    return 0


def cmd_grad_check(args) -> int:
    rng = np.random.default_rng(args.seed)

    def tt(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    checks: list[tuple[str, object, list[Tensor]]] = []

    def add(name, fn, tensors):
        checks.append((name, fn, tensors))

    if args.module in ("ops", "all"):
        x2, k2 = tt(6, 5, 2), tt(3, 3, 2, 3)
        add("conv2d", lambda: reduce_sum(conv2d(x2, k2)), [x2, k2])
        x3, k3 = tt(6, 5, 4, 2), tt(4, 4, 4, 2, 3)
        add("conv3d", lambda: reduce_sum(conv3d(x3, k3)), [x3, k3])
        g3, kd = tt(3, 3, 3, 2), tt(4, 4, 4, 3, 2)
        add("deconv3d", lambda: reduce_sum(deconv3d(g3, kd)), [g3, kd])
        xp = tt(6, 6, 2)
        add("maxpool2d", lambda: reduce_sum(maxpool2d(xp, 2)), [xp])
        xd, wd, bd = tt(5), tt(5, 4), tt(4)
        add("dense", lambda: reduce_sum(dense(xd, wd, bd)), [xd, wd, bd])
        xa = tt(4, 4)
        add("leaky_relu", lambda: reduce_sum(leaky_relu(xa, 0.2)), [xa])
        add("relu", lambda: reduce_sum(relu(xa)), [xa])
        add("sigmoid", lambda: reduce_sum(sigmoid(xa)), [xa])
    if args.module in ("losses", "all"):
        prob = Tensor(rng.uniform(0.2, 0.8, size=(3, 3, 3, 2)), requires_grad=True)
        target = (rng.uniform(size=(3, 3, 3, 2)) < 0.5).astype(float)
        add("reconstruction_loss", lambda: reconstruction_loss(prob, target), [prob])
        mean, lv = tt(2, 2, 2, 2), tt(2, 2, 2, 2)
        add("kl_divergence", lambda: kl_divergence(GaussianLatent(mean, lv)), [mean, lv])
    if args.module in ("networks", "all"):
        models = build_models(micro_scale(), seed=args.seed)
        depth = rng.uniform(0.5, 5.0, size=(8, 8))
        onehot = one_hot(rng.integers(0, 2, size=(8, 8, 8)).astype(np.uint8), 2)

        def recon():
            prob = models.generator.forward(models.depth_encoder.forward(depth))
            return reconstruction_loss(prob, onehot)

        params = models.depth_encoder.params.tensors() + models.generator.params.tensors()
        add("depth-to-volume", recon, params)
        add(
            "volume-discriminator",
            lambda: models.volume_disc.forward(onehot),
            models.volume_disc.params.tensors(),
        )
    if not checks:
        raise ConfigError(f"unknown grad-check module {args.module!r}")

    worst = 0.0
    sample_rng = np.random.default_rng(args.seed + 1)
    for name, fn, tensors in checks:
        err = grad_check(fn, tensors, max_coords=64, rng=sample_rng)
        worst = max(worst, err)
        print(f"{name:<22} max relative error {err:.3e}")
    if worst >= 1e-4:
        raise NumericError(f"gradient check failed: worst error {worst:.3e} >= 1e-4")
    print(f"all good: worst error {worst:.3e}")
    return 0


def cmd_run(args) -> int:
    config = _read_config(args.config)
    reports, summary = run_experiment(config, out_dir=args.out)
    for i, report in enumerate(reports):
        print(f"fold {i}: iou {report.mean_iou:.4f}, ap {report.mean_average_precision:.4f}")
    print()
    print(summary.describe())
    if args.out:
        print(f"artifacts in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxsem",
        description="Adversarial semantic scene completion from a single depth image.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--extents", default="20,12,20", help="output volume extents x,y,z")
    p.add_argument("--image-shape", default="80,60", help="depth image size w,h")
    p.add_argument("--supersample", type=int, default=1,
                   help="generate scenes this many times finer, then downsample")
    p.add_argument("--render-supersample", type=int, default=1,
                   help="render depth this many times finer, then resize")
    p.add_argument("--fov", type=float, default=60.0, help="vertical field of view, degrees")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on an existing dataset")
    p.add_argument("--config", required=True, help="experiment config text file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="run directory for logs and checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", default="", help="optional JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="convert a volume file to OBJ geometry")
    p.add_argument("--volume", required=True, help="a .vsem volume file")
    p.add_argument("--out", required=True, help="target .obj path")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("grad-check", help="finite-difference gradient diagnostics")
    p.add_argument("--module", default="all", choices=("ops", "losses", "networks", "all"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("run", help="full k-fold experiment from one config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="optional artifact directory")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    try:
        return args.func(args)
    except (ConfigError, ShapeError, PlacementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"file problem: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
