"""Constraint-satisfying autoregressive policies over polytope action spaces.

Core pieces: halfspace polytopes with sequential reduction (`polytope`),
per-step feasible intervals via linear programming (`lp`), four-parameter
beta distributions (`beta4`), the autoregressive sampler (`ar_sampler`),
de-biased initialization (`debias`), numpy MLPs (`neural`), a PPO trainer
(`ppo`), benchmark environments (`envs`), and a CLI (`cli`).
"""

from . import ar_sampler, beta4, debias, envs, errors, lp, neural, polytope, ppo

__all__ = [
    "ar_sampler",
    "beta4",
    "debias",
    "envs",
    "errors",
    "lp",
    "neural",
    "polytope",
    "ppo",
]

__version__ = "0.1.0"
