"""Halfspace representation of the constrained allocation action space.

A polytope is the system {a in R^n : C a <= b} where the rows of C always
include nonnegativity (-a_i <= 0) and the simplex-sum pair (sum a <= 1,
-sum a <= -1).  Fixing a prefix of coordinates produces a reduced system
whose limits absorb the fixed allocations (column update of the limits).
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .errors import (
    DegenerateHull,
    DimensionMismatch,
    GenerationFailed,
    InfeasibleSystem,
)

_RETRY_BUDGET = 1000


@dataclass(frozen=True)
class Polytope:
    """Immutable halfspace system C a <= b over n entities."""

    coeffs: np.ndarray  # m x n
    limits: np.ndarray  # m
    n_entities: int
    n_user_rows: int = 0  # rows preceding the injected simplex scaffolding

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.float64))
        object.__setattr__(self, "limits", np.asarray(self.limits, dtype=np.float64))
        self.coeffs.setflags(write=False)
        self.limits.setflags(write=False)

    @property
    def n_rows(self) -> int:
        return self.coeffs.shape[0]

    def initial(self) -> "ReducedPolytope":
        return ReducedPolytope(
            base=self,
            fixed_prefix=np.empty(0),
            live_limits=self.limits.copy(),
            start=0,
        )

    def digest(self) -> str:
        """Hex digest binding (C, b, n); used to key de-bias term files."""
        h = hashlib.sha256()
        h.update(np.int64(self.n_entities).tobytes())
        h.update(np.ascontiguousarray(self.coeffs).tobytes())
        h.update(np.ascontiguousarray(self.limits).tobytes())
        return h.hexdigest()


@dataclass
class ReducedPolytope:
    """The system over coordinates start..n-1 after fixing a prefix.

    live_limits = base.limits - sum_{j<start} prefix_j * column_j(base.coeffs);
    the coefficient matrix is a column slice of the base, never copied.
    """

    base: Polytope
    fixed_prefix: np.ndarray
    live_limits: np.ndarray
    start: int = 0

    def live_coeffs(self) -> np.ndarray:
        return self.base.coeffs[:, self.start:]

    @property
    def n_remaining(self) -> int:
        return self.base.n_entities - self.start


def reduce(rp: ReducedPolytope, a_i: float) -> ReducedPolytope:
    """Fix the next coordinate at a_i (Eq. 2 limit update)."""
    col = rp.base.coeffs[:, rp.start]
    return ReducedPolytope(
        base=rp.base,
        fixed_prefix=np.append(rp.fixed_prefix, a_i),
        live_limits=rp.live_limits - a_i * col,
        start=rp.start + 1,
    )


def _simplex_rows(n: int):
    coeffs = np.vstack([-np.eye(n), np.ones((1, n)), -np.ones((1, n))])
    limits = np.concatenate([np.zeros(n), [1.0], [-1.0]])
    return coeffs, limits


def build(coeffs, limits, n: int) -> Polytope:
    """Assemble a polytope, inject simplex scaffolding, certify nonemptiness."""
    if n < 2:
        raise DimensionMismatch(f"need n >= 2 entities, got {n}")
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1, n) if len(coeffs) else np.empty((0, n))
    limits = np.asarray(limits, dtype=np.float64).ravel()
    if coeffs.shape[0] != limits.shape[0]:
        raise DimensionMismatch(
            f"{coeffs.shape[0]} coefficient rows vs {limits.shape[0]} limits"
        )
    if coeffs.shape[0] and coeffs.shape[1] != n:
        raise DimensionMismatch(f"rows have {coeffs.shape[1]} columns, expected {n}")

    scaffold_c, scaffold_b = _simplex_rows(n)
    keep = []
    for i in range(scaffold_c.shape[0]):
        dup = False
        for j in range(coeffs.shape[0]):
            if limits[j] == scaffold_b[i] and np.array_equal(coeffs[j], scaffold_c[i]):
                dup = True
                break
        if not dup:
            keep.append(i)
    full_c = np.vstack([coeffs, scaffold_c[keep]])
    full_b = np.concatenate([limits, scaffold_b[keep]])

    p = Polytope(full_c, full_b, n, n_user_rows=coeffs.shape[0])
    if not lp.feasible(p.initial()):
        raise InfeasibleSystem("no point satisfies all constraint rows")
    return p


def violation_cost(p: Polytope, a) -> np.ndarray:
    """Componentwise max{0, (Ca)_k - b_k}."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != p.n_entities:
        raise DimensionMismatch(f"action has {a.shape[-1]} entries, expected {p.n_entities}")
    return np.maximum(0.0, a @ p.coeffs.T - p.limits)


def contains(p: Polytope, a, tol: float = 1e-3) -> bool:
    return bool(np.all(violation_cost(p, a) <= tol))


def permute(p: Polytope, perm) -> Polytope:
    """Relabel entities (used for the allocation-order ablation)."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(p.n_entities)):
        raise DimensionMismatch("perm must be a permutation of 0..n-1")
    user_c = p.coeffs[: p.n_user_rows][:, perm]
    user_b = p.limits[: p.n_user_rows]
    return build(user_c, user_b, p.n_entities)


def gen_random_halfspaces(n: int, k: int, seed: int) -> Polytope:
    """Random extra constraints: 2..n-1 affected entities, coefficients and
    limit uniform in [0, 1]; a constraint that empties the system is redrawn."""
    if n < 2 or k < 0:
        raise DimensionMismatch(f"invalid (n={n}, k={k})")
    rng = np.random.default_rng(seed)
    rows: list[np.ndarray] = []
    lims: list[float] = []
    for _ in range(k):
        for _attempt in range(_RETRY_BUDGET):
            n_affected = int(rng.integers(2, n))  # in [2, n-1]
            entities = rng.choice(n, size=n_affected, replace=False)
            row = np.zeros(n)
            row[entities] = rng.uniform(0.0, 1.0, size=n_affected)
            limit = float(rng.uniform(0.0, 1.0))
            try:
                build(rows + [row], lims + [limit], n)
            except InfeasibleSystem:
                continue
            rows.append(row)
            lims.append(limit)
            break
        else:
            raise GenerationFailed(
                f"could not place constraint {len(rows) + 1} in {_RETRY_BUDGET} tries"
            )
    return build(rows, lims, n)


def gen_hull_polytope(n: int, points: int, seed: int) -> Polytope:
    """Convex hull of flat-Dirichlet points as a halfspace system.

    Facets are enumerated brute force in the (n-1)-dim coordinates that
    parameterize the sum-one plane, so this is limited to n <= 4.
    """
    if n > 4:
        raise DimensionMismatch("hull generation is brute force; n <= 4 only")
    if points < n:
        raise DegenerateHull(f"{points} points cannot span an {n - 1}-dim hull")
    rng = np.random.default_rng(seed)
    pts = rng.dirichlet(np.ones(n), size=points)
    proj = pts[:, : n - 1]  # drop the last coordinate; bijective on the plane
    d = n - 1

    centered = proj - proj.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9) < d:
        raise DegenerateHull("points are affinely dependent within tolerance")

    tol = 1e-9
    rows, lims, seen = [], [], set()
    for subset in itertools.combinations(range(points), d):
        base = proj[subset[0]]
        if d == 1:
            w = np.array([1.0])
        else:
            diffs = proj[list(subset[1:])] - base
            _, s, vt = np.linalg.svd(diffs)
            if s[-1] < 1e-12:
                continue  # subset itself degenerate, no unique hyperplane
            w = vt[-1]
        proj_vals = proj @ w
        b0 = float(w @ base)
        hi_side = proj_vals.max() - b0
        lo_side = b0 - proj_vals.min()
        if hi_side > tol and lo_side > tol:
            continue  # not a supporting hyperplane
        if hi_side > tol:
            w, b0 = -w, -b0
        norm = np.linalg.norm(w)
        w, b0 = w / norm, b0 / norm
        key = tuple(np.round(np.append(w, b0), 9))
        if key in seen:
            continue
        seen.add(key)
        rows.append(np.append(w, 0.0))  # lifted: last entity coefficient 0
        lims.append(b0)

    p = build(rows, lims, n)
    if np.max(violation_cost(p, pts)) > 1e-9:
        raise DegenerateHull("generated system excludes an input point")
    return p


def to_json(p: Polytope) -> str:
    """Serialize user rows only; simplex/nonnegativity rows are implicit."""
    rows = [
        {"coeffs": p.coeffs[i].tolist(), "limit": float(p.limits[i])}
        for i in range(p.n_user_rows)
    ]
    return json.dumps({"n": p.n_entities, "rows": rows}, indent=2)


def from_json(text: str) -> Polytope:
    data = json.loads(text)
    n = int(data["n"])
    rows = data.get("rows", [])
    coeffs = [r["coeffs"] for r in rows]
    limits = [r["limit"] for r in rows]
    return build(coeffs, limits, n)


def save(p: Polytope, path) -> None:
    with open(path, "w") as f:
        f.write(to_json(p))


def load(path) -> Polytope:
    with open(path) as f:
        return from_json(f.read())
