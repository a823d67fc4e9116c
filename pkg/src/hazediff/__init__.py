"""Two-stage single-image dehazing: a physics-guided decomposition network
followed by a transmission-fused conditional diffusion model, in numpy."""

__version__ = "0.1.0"
