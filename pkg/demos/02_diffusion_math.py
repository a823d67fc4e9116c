"""The forward chain, its closed-form posterior, and trmap-weighted fusion.

Run: python demos/02_diffusion_math.py
"""
import numpy as np

from hazediff.diffusion import make_linear_schedule, posterior_mean_var, q_sample, x0_to_eps
from hazediff.numerics import SeededRng, gaussian_sample
from hazediff.sampler import fuse, p_sample_step

sched = make_linear_schedule(T=100)
print("alpha_bar at t=1, 50, 100:", [round(sched.alpha_bar_at(t), 4) for t in (1, 50, 100)])

# marginal q(x_t | x0): mean sqrt(abar) x0, variance 1 - abar
rng = SeededRng(0)
x0 = 0.7
xt = q_sample(np.full(100000, x0), 50, gaussian_sample(rng, 100000), sched)
print(f"t=50 sample mean {xt.mean():.4f} vs {np.sqrt(sched.alpha_bar_at(50)) * x0:.4f}")
print(f"t=50 sample var  {xt.var():.4f} vs {1 - sched.alpha_bar_at(50):.4f}")

# posterior q(x_{t-1} | x_t, x0) has a closed form
mu, var = posterior_mean_var(x0, 0.2, 50, sched)
print(f"posterior at t=50, x_t=0.2: mean {mu:.4f}, var {var:.6f}")

# a model that knows x0 exactly walks the chain back to x0 when noise is switched off
target = np.linspace(-1, 1, 12).reshape(2, 2, 3)
oracle = lambda x_t, J, trmap, t: x0_to_eps(x_t, target, t, sched)  # noqa: E731
x = gaussian_sample(rng, target.shape)
for t in range(sched.T, 0, -1):
    x, _, _ = p_sample_step(oracle, x, None, None, t, None, sched, z=np.zeros_like(x))
print("oracle chain max error:", float(np.abs(x - target).max()))

# fusion: trmap near 1 keeps the stage-1 branch, near 0 the diffusion branch
x_diff, J_t = np.full((1, 3, 3), 0.8), np.full((1, 3, 3), 0.4)
trmap = np.array([[1.0, 0.5, 0.0]])
print("fused per pixel:", fuse(x_diff, J_t, trmap)[0, :, 0])
