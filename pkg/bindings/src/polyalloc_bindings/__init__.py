"""Flat, handle-based bindings around the polyalloc sampler.

The surface mimics a C-compatible function set: opaque integer handles,
plain lists/floats across the boundary, explicit seeds on every stochastic
call, and no hidden state beyond the handle registry.  Intended for
embedding the constraint-satisfying sampler into external RL frameworks
without pulling in the trainer or environments.

    h = create_polytope(rows, limits, n)
    action, logp, intervals = sample(h, alphas, betas, seed=1)
    terms_a, terms_b = debias_fit(h, k=10_000, seed=1)
    free(h)

Every call is validated against the live-handle registry; using a freed
handle raises ``InvalidHandle`` instead of crashing.  Handles must not be
shared across caller threads.
"""

from __future__ import annotations

import itertools
import threading

import numpy as np

from polyalloc import ar_sampler, debias, polytope
from polyalloc.errors import DimensionMismatch

__all__ = [
    "InvalidHandle",
    "create_polytope",
    "sample",
    "log_prob",
    "debias_fit",
    "free",
]

__version__ = "0.1.0"


class InvalidHandle(Exception):
    """Raised for handles that were never created or already freed."""


_registry: dict[int, polytope.Polytope] = {}
_counter = itertools.count(1)
_lock = threading.Lock()


def _resolve(handle) -> polytope.Polytope:
    p = _registry.get(handle)
    if p is None:
        raise InvalidHandle(f"handle {handle!r} is not live")
    return p


def _shapes(p: polytope.Polytope, alphas, betas):
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    want = p.n_entities - 1
    if alphas.shape != (want,) or betas.shape != (want,):
        raise DimensionMismatch(
            f"need {want} (alpha, beta) pairs for n={p.n_entities}, "
            f"got {alphas.shape[0]} alphas / {betas.shape[0]} betas"
        )
    return alphas, betas


def create_polytope(rows, limits, n: int) -> int:
    """Build a feasible halfspace system and return its handle.

    `rows` is a list of n-length coefficient lists, `limits` the matching
    right-hand sides; nonnegativity and the sum-to-one pair are implicit.
    Raises InfeasibleSystem if the rows admit no allocation.
    """
    p = polytope.build(rows, limits, int(n))
    with _lock:
        h = next(_counter)
        _registry[h] = p
    return h


def free(handle) -> None:
    """Release a handle; subsequent calls with it raise InvalidHandle."""
    with _lock:
        if _registry.pop(handle, None) is None:
            raise InvalidHandle(f"handle {handle!r} is not live")


def sample(handle, alphas, betas, seed: int):
    """One autoregressive draw; returns (action, logp, intervals) as lists.

    Bit-identical to the native sampler under the same seed and
    parameters (the call delegates to it).
    """
    p = _resolve(handle)
    alphas, betas = _shapes(p, alphas, betas)
    rng = np.random.default_rng(seed)
    actions, intervals, step_logps, _ = ar_sampler.sample_batch(
        p, alphas, betas, 1, rng
    )
    return (
        actions[0].tolist(),
        float(step_logps[0].sum()),
        intervals[0].tolist(),
    )


def log_prob(handle, alphas, betas, action) -> float:
    """Joint log-density of `action` under constant per-step parameters."""
    p = _resolve(handle)
    alphas, betas = _shapes(p, alphas, betas)
    provider = ar_sampler.constant_provider(alphas, betas)
    return ar_sampler.log_prob(p, provider, None, action)


def debias_fit(handle, k: int, seed: int):
    """Fit de-bias terms; returns (alphas, betas) as lists.

    Equals the native fit under an identical seed; AcceptanceTooLow
    propagates when the polytope is too thin for the rejection stage.
    """
    p = _resolve(handle)
    terms = debias.fit(p, int(k), np.random.default_rng(seed))
    return terms.alphas.tolist(), terms.betas.tolist()
