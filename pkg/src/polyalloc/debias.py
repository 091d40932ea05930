"""De-biased initialization: fit per-step beta parameters so the initial
autoregressive policy approximates uniform sampling over the polytope.

The procedure: draw k uniform points by rejection, walk each point through
the autoregressive steps, normalize every coordinate into its LP interval,
then run a per-step beta MLE over the normalized values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import ar_sampler, beta4, lp, polytope

MIN_SHAPE = 1e-3


@dataclass(frozen=True)
class DebiasTerms:
    alphas: np.ndarray       # length n-1
    betas: np.ndarray        # length n-1
    sample_count: int
    polytope_hash: str

    def __post_init__(self):
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=np.float64))
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=np.float64))


def _normalized_step_values(p: polytope.Polytope, points: np.ndarray):
    """Per-step normalized coordinates and validity masks for uniform points.

    Returns (norm, valid) of shape (n-1, k); valid is False where the step
    interval is degenerate for that sample.
    """
    k, n = points.shape
    norm = np.zeros((n - 1, k))
    valid = np.ones((n - 1, k), dtype=bool)
    live = np.broadcast_to(p.limits, (k, p.n_rows)).copy()
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
        valid[i] = ~degenerate
        w = np.where(degenerate, 1.0, width)
        norm[i] = np.clip((points[:, i] - lo) / w, 0.0, 1.0)
        live -= np.outer(points[:, i], p.coeffs[:, i])
    return norm, valid


def fit(p: polytope.Polytope, k: int, rng: np.random.Generator) -> DebiasTerms:
    """Algorithm: k rejection-sampled uniform points, per-step normalization,
    per-step beta MLE.  Degenerate-interval samples are dropped per step."""
    if k < 1000:
        raise ValueError(f"need k >= 1000 samples for a stable fit, got {k}")
    points, _rate = ar_sampler.uniform_rejection_batch(p, k, rng)
    norm, valid = _normalized_step_values(p, points)
    n = p.n_entities
    alphas = np.empty(n - 1)
    betas = np.empty(n - 1)
    for i in range(n - 1):
        vals = norm[i][valid[i]]
        if vals.size < 30:
            alphas[i], betas[i] = 1.0, 1.0
            continue
        a, b = beta4.mle_fit(vals)
        alphas[i] = max(a, MIN_SHAPE)
        betas[i] = max(b, MIN_SHAPE)
    return DebiasTerms(alphas, betas, k, p.digest())


@dataclass
class UniformityReport:
    means: np.ndarray            # per-coordinate means of de-biased sampling
    stds: np.ndarray
    oracle_means: np.ndarray     # rejection-sampled reference means
    max_mean_deviation: float
    chi_square: float            # summed over coordinates, 10 bins each

    def summary(self) -> str:
        rows = "\n".join(
            f"  a_{i + 1}: mean={m:.4f} (oracle {o:.4f}) std={s:.4f}"
            for i, (m, o, s) in enumerate(zip(self.means, self.oracle_means, self.stds))
        )
        return (
            f"{rows}\n  max |mean - oracle| = {self.max_mean_deviation:.4f}"
            f"\n  chi-square vs oracle bins = {self.chi_square:.1f}"
        )


def uniformity_report(
    p: polytope.Polytope,
    terms: DebiasTerms,
    samples: int,
    rng: np.random.Generator,
    n_bins: int = 10,
) -> UniformityReport:
    drawn, _, _, _ = ar_sampler.sample_batch(p, terms.alphas, terms.betas, samples, rng)
    oracle, _ = ar_sampler.uniform_rejection_batch(p, samples, rng)

    means = drawn.mean(axis=0)
    stds = drawn.std(axis=0)
    oracle_means = oracle.mean(axis=0)
    max_dev = float(np.max(np.abs(means - oracle_means)))

    edges = np.linspace(0.0, 1.0, n_bins + 1)
    chi2 = 0.0
    for j in range(p.n_entities):
        obs, _ = np.histogram(drawn[:, j], bins=edges)
        exp, _ = np.histogram(oracle[:, j], bins=edges)
        mask = exp > 0
        chi2 += float(np.sum((obs[mask] - exp[mask]) ** 2 / exp[mask]))
    return UniformityReport(means, stds, oracle_means, max_dev, chi2)


def to_json(terms: DebiasTerms) -> str:
    return json.dumps(
        {
            "polytope_hash": terms.polytope_hash,
            "k": terms.sample_count,
            "alphas": terms.alphas.tolist(),
            "betas": terms.betas.tolist(),
        },
        indent=2,
    )


def from_json(text: str) -> DebiasTerms:
    data = json.loads(text)
    return DebiasTerms(
        alphas=np.asarray(data["alphas"], dtype=np.float64),
        betas=np.asarray(data["betas"], dtype=np.float64),
        sample_count=int(data["k"]),
        polytope_hash=data["polytope_hash"],
    )


def save(terms: DebiasTerms, path) -> None:
    with open(path, "w") as f:
        f.write(to_json(terms))


def load(path) -> DebiasTerms:
    with open(path) as f:
        return from_json(f.read())
