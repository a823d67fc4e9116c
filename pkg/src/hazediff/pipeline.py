"""Toy dataset handling, the two training loops, dehazing and evaluation.

All randomness derives from ``RunConfig.seed`` through named child streams
("data", "stage1-init", "stage1-batches", "denoiser-init", "t-sampling",
"diffusion-batches", "sampler").
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .checkpoint import save_checkpoint
from .config import RunConfig
from .denoiser import init_denoiser
from .diffusion import PIXEL_SPACE
from .haze import SynthesisParams, gen_toy_scene, synth_haze
from .imageio import ImageDecodeError, read_image, write_image
from .metrics import hist_w1, image_stats, psnr, ssim
from .numerics import SeededRng
from .sampler import sample
from .stage1 import init_stage1, stage1_forward, stage1_train_step
from .training import DiffusionTrainer, train_step

log = logging.getLogger(__name__)


class ManifestError(ValueError):
    pass


def streams(seed: int) -> dict:
    root = SeededRng(seed)
    names = ("data", "stage1-init", "stage1-batches", "denoiser-init", "t-sampling",
             "diffusion-batches", "sampler")
    return {n: root.spawn(n) for n in names}


def sampler_seed(seed: int) -> int:
    return streams(seed)["sampler"].seed


@dataclass
class Scene:
    name: str
    hazy: np.ndarray
    clear: np.ndarray
    trmap: np.ndarray
    A: np.ndarray


def make_scenes(cfg: RunConfig):
    """Synthesize the train and test splits described by ``cfg``."""
    data = streams(cfg.seed)["data"]
    scenes = []
    for i in range(cfg.n_train + cfg.n_test):
        rng = data.spawn(f"scene-{i}")
        clear, depth = gen_toy_scene(rng, cfg.size, cfg.depth_mode)
        level = 0.75 + 0.2 * rng.uniform(1)[0]
        A = np.clip(level + 0.1 * (rng.uniform(3) - 0.5), 0.0, 1.0)
        hazy, trmap = synth_haze(clear, depth, SynthesisParams(cfg.beta_haze, A, cfg.depth_mode))
        scenes.append(Scene(f"{i:04d}", hazy, clear, trmap, A))
    return scenes[:cfg.n_train], scenes[cfg.n_train:]


# ---------------------------------------------------------------- datasets

def write_split(root, split: str, scenes):
    """Write hazy/clear PPMs and trmap PGMs plus ``<split>.json`` under ``root``."""
    root = Path(root)
    d = root / split
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in scenes:
        e = {"hazy": f"{split}/{s.name}_hazy.ppm", "clear": f"{split}/{s.name}_clear.ppm",
             "trmap": f"{split}/{s.name}_trmap.pgm"}
        write_image(s.hazy, root / e["hazy"])
        write_image(s.clear, root / e["clear"])
        write_image(s.trmap, root / e["trmap"])
        entries.append(e)
    manifest = {"split": split, "entries": entries}
    (root / f"{split}.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return root / f"{split}.json"


def read_manifest(path):
    """Load a manifest; returns a list of Scene with images decoded and checked."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        entries = manifest["entries"]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ManifestError(f"{path}: malformed manifest ({e})") from None
    root = path.parent
    scenes = []
    for i, e in enumerate(entries):
        try:
            hazy = read_image(root / e["hazy"])
            clear = read_image(root / e["clear"]) if e.get("clear") else None
            trmap = read_image(root / e["trmap"])[..., :1] if e.get("trmap") else None
        except (KeyError, TypeError):
            raise ManifestError(f"{path}: entry {i} lacks a hazy path") from None
        except ImageDecodeError as err:
            raise ManifestError(str(err)) from None
        if clear is not None and clear.shape != hazy.shape:
            raise ManifestError(f"{path}: entry {i} hazy/clear shapes differ")
        scenes.append(Scene(Path(e["hazy"]).stem.removesuffix("_hazy"), hazy, clear, trmap, None))
    return scenes


# ---------------------------------------------------------------- training

def _batches(rng: SeededRng, n_items: int, batch: int, steps: int):
    for _ in range(steps):
        yield rng.integers(0, n_items - 1, batch)


def train_stage1(cfg: RunConfig, scenes, log_file=None):
    s = streams(cfg.seed)
    params = init_stage1(s["stage1-init"], dtype=np.float32)
    opt = nn.Adam(params)
    hazy = np.stack([sc.hazy for sc in scenes])
    clear = np.stack([sc.clear for sc in scenes])
    losses = []
    for step, idx in enumerate(_batches(s["stage1-batches"], len(scenes), cfg.stage1_batch,
                                        cfg.stage1_steps), 1):
        batch = list(zip(hazy[idx], clear[idx]))
        params, loss = stage1_train_step(params, batch, cfg.stage1_lr, opt)
        losses.append(loss)
        if log_file is not None:
            log_file.write(f"{step}\t{loss:.6f}\n")
    return params, losses


def stage1_conditions(stage1_params, images):
    """Frozen stage-1 pass: (J in model space, trmap) for N x H x W x 3 images."""
    out = stage1_forward(stage1_params, np.asarray(images))
    return PIXEL_SPACE.to_model(out.J.astype(np.float64)), out.trmap.astype(np.float64)


def train_diffusion(cfg: RunConfig, stage1_params, scenes, log_file=None):
    s = streams(cfg.seed)
    sched = cfg.schedule()
    tcfg = cfg.train_config()
    params = init_denoiser(s["denoiser-init"], dtype=np.float32)
    trainer = DiffusionTrainer(params, tcfg)
    x0 = PIXEL_SPACE.to_model(np.stack([sc.clear for sc in scenes]))
    J, trmap = stage1_conditions(stage1_params, np.stack([sc.hazy for sc in scenes]))
    history = []
    t_rng = s["t-sampling"]
    for step, idx in enumerate(_batches(s["diffusion-batches"], len(scenes), cfg.batch_size,
                                        cfg.diffusion_steps), 1):
        batch = list(zip(x0[idx], J[idx], trmap[idx]))
        trainer.params, trainer.ema, losses = train_step(
            trainer.params, trainer.ema, batch, t_rng, tcfg, sched, trainer.opt)
        history.append(losses)
        if log_file is not None:
            log_file.write(f"{step}\t{losses['simple']:.6f}\t{losses['frequency']:.6f}\t"
                           f"{losses['total']:.6f}\n")
    return trainer.params, trainer.ema.shadow, history


# ---------------------------------------------------------------- inference

def dehaze(cfg: RunConfig, stage1_params, denoiser_params, hazy, force_trmap_one=False,
           on_step=None, batch: int = 32):
    """Stage 1 followed by the fused reverse chain; returns (restored, J, trmap) in [0, 1]."""
    hazy = np.asarray(hazy)
    J, trmap = stage1_conditions(stage1_params, hazy)
    if force_trmap_one:
        trmap = np.ones_like(trmap)
    sched = cfg.schedule()
    scfg = cfg.sampler_config(seed=sampler_seed(cfg.seed))
    out = []
    for lo in range(0, len(hazy), batch):
        sl = slice(lo, lo + batch)
        out.append(sample(denoiser_params, J[sl], trmap[sl], scfg, sched,
                          on_step=on_step, item_offset=lo))
    restored = np.concatenate(out)
    return restored, np.clip(PIXEL_SPACE.from_model(J), 0, 1), trmap


EVAL_COLUMNS = ("name", "min_trmap", "dense", "psnr_hazy", "psnr_stage1", "psnr_dehaze",
                "ssim_hazy", "ssim_stage1", "ssim_dehaze")
STATS_COLUMNS = ("name", "entropy", "std", "mean_grad", "hist_w1_to_clear")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{v:.6f}"
    return str(v)


def format_table(columns, rows) -> str:
    lines = ["\t".join(columns)]
    lines += ["\t".join(_fmt(r[c]) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


def eval_rows(scenes, stage1_J, restored, dense_threshold=0.3):
    rows = []
    for sc, j, r in zip(scenes, stage1_J, restored):
        mt = float(sc.trmap.min()) if sc.trmap is not None else float("nan")
        rows.append({
            "name": sc.name, "min_trmap": mt, "dense": mt <= dense_threshold,
            "psnr_hazy": psnr(sc.hazy, sc.clear), "psnr_stage1": psnr(j, sc.clear),
            "psnr_dehaze": psnr(r, sc.clear), "ssim_hazy": ssim(sc.hazy, sc.clear),
            "ssim_stage1": ssim(j, sc.clear), "ssim_dehaze": ssim(r, sc.clear),
        })
    return rows


def stats_rows(images, names, references=None):
    rows = []
    for i, (img, name) in enumerate(zip(images, names)):
        st = image_stats(img)
        rows.append({"name": name, "entropy": st.entropy, "std": st.std, "mean_grad": st.mean_grad,
                     "hist_w1_to_clear": hist_w1(img, references[i]) if references is not None
                     else float("nan")})
    return rows


def summarize(rows, key, subset=None):
    vals = [r[key] for r in rows if subset is None or subset(r)]
    return float(np.mean(vals)) if vals else float("nan")


# ---------------------------------------------------------------- experiment

def run_experiment(cfg: RunConfig, out_dir):
    """Full toy run: data, stage 1, diffusion, dehazing and metric tables in ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps(), encoding="utf-8")
    train, test = make_scenes(cfg)
    log.info("training stage 1 for %d steps", cfg.stage1_steps)
    with open(out / "stage1_log.tsv", "w", encoding="utf-8") as f:
        f.write("step\tloss\n")
        s1, s1_losses = train_stage1(cfg, train, f)
    save_checkpoint(s1, out / "stage1.ckpt", "stage1")
    log.info("training denoiser for %d steps", cfg.diffusion_steps)
    with open(out / "diffusion_log.tsv", "w", encoding="utf-8") as f:
        f.write("step\tloss_simple\tloss_frequency\ttotal\n")
        den, ema, history = train_diffusion(cfg, s1, train, f)
    save_checkpoint(den, out / "denoiser.ckpt", "denoiser")
    save_checkpoint(ema, out / "denoiser_ema.ckpt", "denoiser-ema")

    log.info("dehazing %d test scenes", len(test))
    hazy = np.stack([sc.hazy for sc in test])
    restored, J, _ = dehaze(cfg, s1, ema if cfg.use_ema else den, hazy)
    rows = eval_rows(test, J, restored, cfg.dense_threshold)
    (out / "eval.tsv").write_text(format_table(EVAL_COLUMNS, rows), encoding="utf-8")

    clear = [sc.clear for sc in test]
    names = [sc.name for sc in test]
    hz_stats = stats_rows([sc.hazy for sc in test], names, clear)
    cl_stats = stats_rows(clear, names, clear[1:] + clear[:1])
    (out / "stats_hazy.tsv").write_text(format_table(STATS_COLUMNS, hz_stats), encoding="utf-8")
    (out / "stats_clear.tsv").write_text(format_table(STATS_COLUMNS, cl_stats), encoding="utf-8")

    dense = lambda r: r["dense"]  # noqa: E731
    simple = [h["simple"] for h in history]
    summary = {
        "stage1_loss_first": float(s1_losses[0]), "stage1_loss_last": float(s1_losses[-1]),
        "diffusion_simple_first100": float(np.mean(simple[:100])),
        "diffusion_simple_last100": float(np.mean(simple[-100:])),
        "psnr_hazy": summarize(rows, "psnr_hazy"),
        "psnr_stage1": summarize(rows, "psnr_stage1"),
        "psnr_dehaze": summarize(rows, "psnr_dehaze"),
        "n_dense": sum(r["dense"] for r in rows),
        "psnr_stage1_dense": summarize(rows, "psnr_stage1", dense),
        "psnr_dehaze_dense": summarize(rows, "psnr_dehaze", dense),
        "ssim_stage1": summarize(rows, "ssim_stage1"),
        "ssim_dehaze": summarize(rows, "ssim_dehaze"),
    }
    for k in ("entropy", "std", "mean_grad"):
        summary[f"{k}_hazy"] = summarize(hz_stats, k)
        summary[f"{k}_clear"] = summarize(cl_stats, k)
    summary["hist_w1_hazy_clear"] = summarize(hz_stats, "hist_w1_to_clear")
    summary["hist_w1_clear_other"] = summarize(cl_stats, "hist_w1_to_clear")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary
