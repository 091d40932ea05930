"""Autoregressive sampling over the polytope: bound, sample, reduce.

Every action is built coordinate by coordinate.  Each step solves two LPs
for the feasible interval, draws from a four-parameter beta on it, and
shrinks the remaining system.  The final coordinate is forced by the sum
constraint, so only n-1 steps carry a distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import beta4, lp, polytope
from .errors import AcceptanceTooLow, OutOfSupport

# (state_embedding, fixed_prefix, step_index) -> (alpha_i, beta_i)
ParamProvider = Callable[[object, np.ndarray, int], tuple[float, float]]


def constant_provider(alphas, betas) -> ParamProvider:
    """Provider ignoring state and prefix; used for de-bias/uniformity runs."""
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)

    def provider(_state_emb, _prefix, i):
        return float(alphas[i]), float(betas[i])

    return provider


def flat_provider() -> ParamProvider:
    return lambda _state_emb, _prefix, _i: (1.0, 1.0)


@dataclass
class AllocationSample:
    """One policy draw: action, per-step intervals/params, log-probabilities."""

    action: np.ndarray          # length n, sums to 1
    intervals: np.ndarray       # (n-1, 2) LP bounds per sampled step
    step_logps: np.ndarray      # length n-1; forced steps contribute 0
    joint_logp: float
    forced_mask: np.ndarray     # bool, length n-1
    alphas: np.ndarray          # length n-1 (1.0 placeholder on forced steps)
    betas: np.ndarray


def sample(
    p: polytope.Polytope,
    provider: ParamProvider,
    state_emb,
    rng: np.random.Generator,
) -> AllocationSample:
    n = p.n_entities
    rp = p.initial()
    action = np.empty(n)
    intervals = np.empty((n - 1, 2))
    step_logps = np.zeros(n - 1)
    forced = np.zeros(n - 1, dtype=bool)
    alphas = np.ones(n - 1)
    betas = np.ones(n - 1)

    for i in range(n - 1):
        b = lp.bounds(rp)
        intervals[i] = (b.lo, b.hi)
        if b.degenerate:
            a_i = b.mid
            forced[i] = True
        else:
            alpha, beta = provider(state_emb, rp.fixed_prefix, i)
            alphas[i], betas[i] = alpha, beta
            dist = beta4.FourParamBeta(alpha, beta, b.lo, b.hi)
            a_i = beta4.sample(dist, rng)
            step_logps[i] = beta4.log_pdf(dist, a_i)
        action[i] = a_i
        rp = polytope.reduce(rp, a_i)

    action[n - 1] = max(0.0, 1.0 - float(action[: n - 1].sum()))
    return AllocationSample(
        action=action,
        intervals=intervals,
        step_logps=step_logps,
        joint_logp=float(step_logps.sum()),
        forced_mask=forced,
        alphas=alphas,
        betas=betas,
    )


def sample_batch(
    p: polytope.Polytope,
    alphas,
    betas,
    count: int,
    rng: np.random.Generator,
):
    """Draw `count` actions under constant per-step (alpha, beta) parameters.

    Same bound/sample/reduce walk as `sample`, but the per-step LPs run
    batched inside numba and the beta draws are vectorized, which is what
    makes 1e5-action sweeps cheap.  Returns (actions, intervals, step_logps,
    forced_mask) with leading dimension `count`.
    """
    n = p.n_entities
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    actions = np.empty((count, n))
    intervals = np.empty((count, n - 1, 2))
    step_logps = np.zeros((count, n - 1))
    forced = np.zeros((count, n - 1), dtype=bool)
    live = np.broadcast_to(p.limits, (count, p.n_rows)).copy()

    for i in range(n - 1):
        A = np.ascontiguousarray(p.coeffs[:, i:])
        status, lo, hi = lp._bounds_batch(A, live, 0)
        if np.any(status != 0):
            raise lp.NumericalFailure(
                f"LP failure on {int(np.sum(status != 0))} samples at step {i}"
            )
        lo = np.clip(lo, 0.0, 1.0)
        hi = np.clip(hi, 0.0, 1.0)
        width = hi - lo
        degenerate = width < beta4.DEGENERATE_WIDTH
        ga = rng.gamma(alphas[i], size=count)
        gb = rng.gamma(betas[i], size=count)
        z = ga / (ga + gb)
        a = np.where(degenerate, 0.5 * (lo + hi), lo + width * z)
        a = np.clip(a, lo + 1e-12, hi - 1e-12)
        a = np.where(degenerate, 0.5 * (lo + hi), a)
        step_logps[:, i] = beta4.log_pdf_batch(
            alphas[i], betas[i], lo, hi, a, forced_mask=degenerate
        )
        forced[:, i] = degenerate
        intervals[:, i, 0] = lo
        intervals[:, i, 1] = hi
        actions[:, i] = a
        live -= np.outer(a, p.coeffs[:, i])

    actions[:, n - 1] = np.maximum(0.0, 1.0 - actions[:, : n - 1].sum(axis=1))
    return actions, intervals, step_logps, forced


def step_intervals(p: polytope.Polytope, action) -> np.ndarray:
    """LP bounds for each step along a fixed feasible action; (n-1, 2)."""
    action = np.asarray(action, dtype=np.float64)
    rp = p.initial()
    out = np.empty((p.n_entities - 1, 2))
    for i in range(p.n_entities - 1):
        b = lp.bounds(rp)
        out[i] = (b.lo, b.hi)
        rp = polytope.reduce(rp, float(action[i]))
    return out


def log_prob(
    p: polytope.Polytope,
    provider: ParamProvider,
    state_emb,
    action,
    cached_intervals: Optional[np.ndarray] = None,
) -> float:
    """Joint log-density of `action` under the autoregressive policy.

    Recomputes the LP intervals unless the caller supplies the ones cached
    at sampling time (they depend only on the polytope and the prefix).
    """
    action = np.asarray(action, dtype=np.float64)
    n = p.n_entities
    ivs = cached_intervals if cached_intervals is not None else step_intervals(p, action)
    total = 0.0
    prefix = np.empty(0)
    for i in range(n - 1):
        lo, hi = float(ivs[i, 0]), float(ivs[i, 1])
        a_i = float(action[i])
        if a_i < lo - 1e-6 or a_i > hi + 1e-6:
            raise OutOfSupport(
                f"coordinate {i}={a_i} outside its step interval [{lo}, {hi}]"
            )
        if hi - lo >= beta4.DEGENERATE_WIDTH:
            alpha, beta = provider(state_emb, prefix, i)
            total += beta4.log_pdf(beta4.FourParamBeta(alpha, beta, lo, hi), a_i)
        prefix = np.append(prefix, a_i)
    return float(total)


def empirical_entropy(batch: Sequence[AllocationSample]) -> float:
    """Batch mean of the summed per-step beta entropies (Eq.-style estimate)."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    total = 0.0
    for s in batch:
        h = beta4.entropy_batch(
            s.alphas, s.betas, s.intervals[:, 0], s.intervals[:, 1], s.forced_mask
        )
        total += float(h.sum())
    return total / len(batch)


def uniform_rejection_sample(
    p: polytope.Polytope,
    rng: np.random.Generator,
    max_tries: int = 10**6,
) -> np.ndarray:
    """One uniform draw from the polytope via flat-Dirichlet rejection."""
    pts, _ = uniform_rejection_batch(p, 1, rng, max_tries=max_tries)
    return pts[0]


def uniform_rejection_batch(
    p: polytope.Polytope,
    count: int,
    rng: np.random.Generator,
    max_tries: int = 10**6,
    tol: float = 1e-9,
) -> tuple[np.ndarray, float]:
    """`count` uniform draws and the observed acceptance rate.

    Proposals come from the flat Dirichlet on the simplex; a proposal is
    accepted iff its violation cost is <= tol on every row.
    """
    n = p.n_entities
    accepted = np.empty((count, n))
    got = 0
    tries = 0
    n_ok = 0
    chunk = max(256, min(65536, 4 * count))
    while got < count:
        if tries >= max_tries:
            raise AcceptanceTooLow(
                f"accepted {got}/{count} after {tries} proposals; "
                "polytope too thin for the rejection oracle"
            )
        m = min(chunk, max_tries - tries)
        props = rng.dirichlet(np.ones(n), size=m)
        tries += m
        viol = np.maximum(0.0, props @ p.coeffs.T - p.limits)
        ok = props[np.all(viol <= tol, axis=1)]
        n_ok += ok.shape[0]
        take = min(count - got, ok.shape[0])
        accepted[got: got + take] = ok[:take]
        got += take
    return accepted, n_ok / tries if tries else 1.0
