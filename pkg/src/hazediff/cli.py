"""Command-line entry point: ``hazediff <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .checkpoint import CheckpointError, decode_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .diffusion import PIXEL_SPACE
from .imageio import ImageDecodeError, read_image, write_image

log = logging.getLogger("hazediff")


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _out(args) -> Path:
    if not args.out:
        raise UsageError("--out DIR is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoints(args) -> dict:
    """Load every --checkpoint, keyed by the kind stored in its header."""
    found = {}
    for path in args.checkpoint or []:
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise CheckpointError(f"{path}: {e.strerror}") from None
        kind, params = decode_checkpoint(data, path)
        found[kind] = params
    return found


def _need(ckpts, *kinds):
    for k in kinds:
        if k in ckpts:
            return ckpts[k]
    raise UsageError(f"missing --checkpoint of kind {' or '.join(kinds)}")


def _load_scenes(args, need_clear=False):
    if not args.manifest:
        raise UsageError("--manifest PATH is required")
    scenes = pipeline.read_manifest(args.manifest)
    if need_clear and any(s.clear is None for s in scenes):
        raise pipeline.ManifestError(f"{args.manifest}: entries without clear images")
    return scenes


def cmd_synth(args):
    cfg = _config(args)
    out = _out(args)
    train, test = pipeline.make_scenes(cfg)
    pipeline.write_split(out, "train", train)
    pipeline.write_split(out, "test", test)
    (out / "config.json").write_text(cfg.dumps(), encoding="utf-8")


def cmd_train_stage1(args):
    cfg = _config(args)
    out = _out(args)
    scenes = _load_scenes(args, need_clear=True)
    with open(out / "stage1_log.tsv", "w", encoding="utf-8") as f:
        f.write("step\tloss\n")
        params, _ = pipeline.train_stage1(cfg, scenes, f)
    save_checkpoint(params, out / "stage1.ckpt", "stage1")


def cmd_train_diffusion(args):
    cfg = _config(args)
    out = _out(args)
    s1 = _need(_checkpoints(args), "stage1")
    scenes = _load_scenes(args, need_clear=True)
    with open(out / "diffusion_log.tsv", "w", encoding="utf-8") as f:
        f.write("step\tloss_simple\tloss_frequency\ttotal\n")
        params, ema, _ = pipeline.train_diffusion(cfg, s1, scenes, f)
    save_checkpoint(params, out / "denoiser.ckpt", "denoiser")
    save_checkpoint(ema, out / "denoiser_ema.ckpt", "denoiser-ema")


def _denoiser(cfg, ckpts):
    order = ("denoiser-ema", "denoiser") if cfg.use_ema else ("denoiser", "denoiser-ema")
    return _need(ckpts, *order)


def _models(args, cfg):
    ckpts = _checkpoints(args)
    return _need(ckpts, "stage1"), _denoiser(cfg, ckpts)


def _snapshot_writer(scenes, snap, k):
    snap.mkdir(exist_ok=True)

    def on_step(t, x, x0_hat):
        if t % k == 0 or t == 1:
            for s, xi, x0i in zip(scenes, x, x0_hat):
                write_image(np.clip(PIXEL_SPACE.from_model(xi), 0, 1), snap / f"{s.name}_t{t:04d}_xt.ppm")
                write_image(np.clip(PIXEL_SPACE.from_model(x0i), 0, 1), snap / f"{s.name}_t{t:04d}_x0.ppm")

    return on_step


def _run_dehaze(args, cfg, models, scenes, out=None):
    s1, den = models
    hazy = np.stack([s.hazy for s in scenes])
    k = getattr(args, "snapshot_every", None)
    on_step = _snapshot_writer(scenes, out / "snapshots", k) if k and out is not None else None
    return pipeline.dehaze(cfg, s1, den, hazy, force_trmap_one=args.force_trmap_one, on_step=on_step)


def cmd_dehaze(args):
    cfg = _config(args)
    models = _models(args, cfg)
    out = _out(args)
    if args.manifest:
        scenes = _load_scenes(args)
    elif args.inputs:
        scenes = [pipeline.Scene(Path(p).stem, read_image(p), None, None, None) for p in args.inputs]
    else:
        raise UsageError("give --manifest or input image paths")
    restored, J, trmap = _run_dehaze(args, cfg, models, scenes, out)
    for s, r, j, t in zip(scenes, restored, J, trmap):
        write_image(r, out / f"{s.name}_dehazed.ppm")
        write_image(j, out / f"{s.name}_stage1.ppm")
        write_image(t, out / f"{s.name}_trmap.pgm")


def _emit(table: str, args, name):
    sys.stdout.write(table)
    if args.out:
        (_out(args) / name).write_text(table, encoding="utf-8")


def cmd_eval(args):
    cfg = _config(args)
    models = _models(args, cfg)
    scenes = _load_scenes(args, need_clear=True)
    out = _out(args) if args.out else None
    restored, J, _ = _run_dehaze(args, cfg, models, scenes, out)
    rows = pipeline.eval_rows(scenes, J, restored, cfg.dense_threshold)
    _emit(pipeline.format_table(pipeline.EVAL_COLUMNS, rows), args, "eval.tsv")


def cmd_stats(args):
    scenes = _load_scenes(args)
    refs = [s.clear for s in scenes] if all(s.clear is not None for s in scenes) else None
    rows = pipeline.stats_rows([s.hazy for s in scenes], [s.name for s in scenes], refs)
    _emit(pipeline.format_table(pipeline.STATS_COLUMNS, rows), args, "stats.tsv")


def cmd_schedule_dump(args):
    sched = _config(args).schedule()
    lines = ["t\tbeta\talpha\talpha_bar"]
    for t in range(1, sched.T + 1):
        lines.append(f"{t}\t{sched.beta[t - 1]:.17g}\t{sched.alpha[t - 1]:.17g}\t{sched.alpha_bar[t - 1]:.17g}")
    sys.stdout.write("\n".join(lines) + "\n")


def cmd_experiment(args):
    cfg = _config(args)
    summary = pipeline.run_experiment(cfg, _out(args))
    for k, v in summary.items():
        sys.stdout.write(f"{k}\t{v}\n")


COMMANDS = {
    "synth": (cmd_synth, "write a synthetic paired dataset (train/test manifests)"),
    "train-stage1": (cmd_train_stage1, "train the decomposition network"),
    "train-diffusion": (cmd_train_diffusion, "train the conditional denoiser"),
    "dehaze": (cmd_dehaze, "restore images with stage 1 plus fused reverse diffusion"),
    "eval": (cmd_eval, "dehaze a paired manifest and print PSNR/SSIM"),
    "stats": (cmd_stats, "print information statistics of a manifest's hazy images"),
    "schedule-dump": (cmd_schedule_dump, "print the beta/alpha/alpha_bar arrays"),
    "experiment": (cmd_experiment, "run the whole toy experiment end to end"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="hazediff")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the root seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint", action="append", help="checkpoint file (repeatable)")
        p.add_argument("--manifest", help="dataset manifest (JSON)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("dehaze", "eval"):
            p.add_argument("--snapshot-every", type=int, default=0, metavar="K",
                           help="dump x_t and x0_hat every K reverse steps")
            p.add_argument("--force-trmap-one", action="store_true",
                           help="debug: replace the stage-1 trmap by ones")
        if name == "dehaze":
            p.add_argument("inputs", nargs="*", help="hazy image files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        COMMANDS[args.command][0](args)
    except (ConfigError, CheckpointError, pipeline.ManifestError, ImageDecodeError, UsageError,
            OSError, ValueError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"hazediff {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
