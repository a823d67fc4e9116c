"""A shrunken end-to-end run: train both stages, dehaze, compare PSNR.

The full seed-pinned experiment is RunConfig() (about 10 minutes on one core);
this one trains far less and finishes in under a minute.

Run: python demos/03_toy_experiment.py [out_dir]
"""
import json
import sys
import tempfile

from hazediff.config import RunConfig
from hazediff.pipeline import run_experiment

cfg = RunConfig(n_train=40, n_test=6, size=16, stage1_steps=100, diffusion_steps=60, T=20,
                warmup_steps=10)
out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="hazediff-")
summary = run_experiment(cfg, out)

print("artifacts in", out)
for key in ("psnr_hazy", "psnr_stage1", "psnr_dehaze", "n_dense"):
    print(f"{key:14s}", summary[key])
print(json.dumps({k: round(v, 4) for k, v in summary.items() if k.endswith(("_hazy", "_clear")) and not k.startswith("psnr")}, indent=1))
