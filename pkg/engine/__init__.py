"""Numerical core: autodiff, networks, toy data, losses, trainers, diffusion and metrics."""
