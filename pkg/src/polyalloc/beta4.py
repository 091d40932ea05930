"""Four-parameter beta distribution: Beta(alpha, beta) on a support [lo, hi].

Provides the log-density, sampling through two gamma draws, differential
entropy, maximum-likelihood fitting, and the (alpha, beta) partial
derivatives needed by the policy-gradient update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, digamma, polygamma

from .errors import OutOfSupport

log = logging.getLogger(__name__)

DEGENERATE_WIDTH = 1e-9
_EDGE_CLAMP = 1e-12
_FIT_CLAMP = 1e-6


@dataclass(frozen=True)
class FourParamBeta:
    alpha: float
    beta: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.degenerate and (self.alpha <= 0.0 or self.beta <= 0.0):
            raise ValueError(f"shape parameters must be positive: {self}")

    @property
    def degenerate(self) -> bool:
        """Point mass on a collapsed support; log_pdf and entropy are 0."""
        return self.hi - self.lo < DEGENERATE_WIDTH

    @property
    def mean(self) -> float:
        if self.degenerate:
            return 0.5 * (self.lo + self.hi)
        return self.lo + (self.hi - self.lo) * self.alpha / (self.alpha + self.beta)


def log_pdf(d: FourParamBeta, x: float) -> float:
    if d.degenerate:
        return 0.0
    if x < d.lo - _EDGE_CLAMP or x > d.hi + _EDGE_CLAMP:
        raise OutOfSupport(f"x={x} outside [{d.lo}, {d.hi}]")
    width = d.hi - d.lo
    x = min(max(x, d.lo + _EDGE_CLAMP), d.hi - _EDGE_CLAMP)
    return (
        (d.alpha - 1.0) * np.log(x - d.lo)
        + (d.beta - 1.0) * np.log(d.hi - x)
        - (d.alpha + d.beta - 1.0) * np.log(width)
        - betaln(d.alpha, d.beta)
    )


def log_pdf_batch(alpha, beta, lo, hi, x, forced_mask=None):
    """Vectorized log_pdf; forced (degenerate) entries contribute 0."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    width = hi - lo
    if forced_mask is None:
        forced_mask = width < DEGENERATE_WIDTH
    w = np.where(forced_mask, 1.0, width)
    xc = np.clip(x, lo + _EDGE_CLAMP, hi - _EDGE_CLAMP)
    out = (
        (alpha - 1.0) * np.log(np.maximum(xc - lo, _EDGE_CLAMP))
        + (beta - 1.0) * np.log(np.maximum(hi - xc, _EDGE_CLAMP))
        - (alpha + beta - 1.0) * np.log(w)
        - betaln(alpha, beta)
    )
    return np.where(forced_mask, 0.0, out)


def sample(d: FourParamBeta, rng: np.random.Generator) -> float:
    if d.degenerate:
        return 0.5 * (d.lo + d.hi)
    ga = rng.gamma(d.alpha)
    gb = rng.gamma(d.beta)
    z = ga / (ga + gb)
    x = d.lo + (d.hi - d.lo) * z
    return float(min(max(x, d.lo + _EDGE_CLAMP), d.hi - _EDGE_CLAMP))


def entropy(d: FourParamBeta) -> float:
    if d.degenerate:
        return 0.0
    a, b = d.alpha, d.beta
    return float(
        betaln(a, b)
        - (a - 1.0) * digamma(a)
        - (b - 1.0) * digamma(b)
        + (a + b - 2.0) * digamma(a + b)
        + np.log(d.hi - d.lo)
    )


def entropy_batch(alpha, beta, lo, hi, forced_mask=None):
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    width = hi - lo
    if forced_mask is None:
        forced_mask = width < DEGENERATE_WIDTH
    w = np.where(forced_mask, 1.0, width)
    out = (
        betaln(alpha, beta)
        - (alpha - 1.0) * digamma(alpha)
        - (beta - 1.0) * digamma(beta)
        + (alpha + beta - 2.0) * digamma(alpha + beta)
        + np.log(w)
    )
    return np.where(forced_mask, 0.0, out)


def log_pdf_grad(alpha, beta, lo, hi, x, forced_mask=None):
    """d log_pdf / d(alpha, beta), vectorized.

    d/da = ln(x - lo) - ln(hi - lo) - psi(a) + psi(a + b)
    d/db = ln(hi - x) - ln(hi - lo) - psi(b) + psi(a + b)
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    width = hi - lo
    if forced_mask is None:
        forced_mask = width < DEGENERATE_WIDTH
    w = np.where(forced_mask, 1.0, width)
    xc = np.clip(x, lo + _EDGE_CLAMP, hi - _EDGE_CLAMP)
    psi_ab = digamma(alpha + beta)
    da = np.log(np.maximum(xc - lo, _EDGE_CLAMP) / w) - digamma(alpha) + psi_ab
    db = np.log(np.maximum(hi - xc, _EDGE_CLAMP) / w) - digamma(beta) + psi_ab
    zero = np.zeros_like(da)
    return np.where(forced_mask, zero, da), np.where(forced_mask, zero, db)


def entropy_grad(alpha, beta, forced_mask=None):
    """d entropy / d(alpha, beta):

    dH/da = -(a - 1) psi'(a) + (a + b - 2) psi'(a + b)   (and symmetrically).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    tri_ab = polygamma(1, alpha + beta)
    da = -(alpha - 1.0) * polygamma(1, alpha) + (alpha + beta - 2.0) * tri_ab
    db = -(beta - 1.0) * polygamma(1, beta) + (alpha + beta - 2.0) * tri_ab
    if forced_mask is not None:
        zero = np.zeros_like(da)
        da = np.where(forced_mask, zero, da)
        db = np.where(forced_mask, zero, db)
    return da, db


def _moments_estimate(x: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(x))
    v = float(np.var(x))
    if v < 1e-12:
        return 1.0, 1.0
    common = m * (1.0 - m) / v - 1.0
    if common <= 0.0:
        return 1.0, 1.0
    return max(m * common, 1e-3), max((1.0 - m) * common, 1e-3)


def mle_fit(samples, max_iter: int = 100, grad_tol: float = 1e-8) -> tuple[float, float]:
    """Beta MLE on [0, 1] data: method-of-moments start, Newton on the
    digamma score equations.  Falls back to the moments estimate (with a
    logged warning) if Newton fails to converge.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 30:
        raise ValueError(f"need >= 30 samples for a stable fit, got {x.size}")
    x = np.clip(x, _FIT_CLAMP, 1.0 - _FIT_CLAMP)
    mean_ln_x = float(np.mean(np.log(x)))
    mean_ln_1mx = float(np.mean(np.log1p(-x)))

    a0, b0 = _moments_estimate(x)
    a, b = a0, b0
    for _ in range(max_iter):
        psi_ab = digamma(a + b)
        g = np.array(
            [psi_ab - digamma(a) + mean_ln_x, psi_ab - digamma(b) + mean_ln_1mx]
        )
        if np.linalg.norm(g) < grad_tol:
            return float(a), float(b)
        tri_ab = polygamma(1, a + b)
        H = np.array(
            [[tri_ab - polygamma(1, a), tri_ab], [tri_ab, tri_ab - polygamma(1, b)]]
        )
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        # damp the step so shapes stay strictly positive
        scale = 1.0
        while scale > 1e-8 and (a + scale * step[0] <= 1e-6 or b + scale * step[1] <= 1e-6):
            scale *= 0.5
        a_new, b_new = a + scale * step[0], b + scale * step[1]
        if not (np.isfinite(a_new) and np.isfinite(b_new)):
            break
        a, b = a_new, b_new
    else:
        # loop exhausted; check whether the last iterate is good enough
        psi_ab = digamma(a + b)
        g = np.array(
            [psi_ab - digamma(a) + mean_ln_x, psi_ab - digamma(b) + mean_ln_1mx]
        )
        if np.linalg.norm(g) < 1e-5:
            return float(a), float(b)

    log.warning("beta MLE Newton did not converge; using moments estimate (%g, %g)", a0, b0)
    return a0, b0
