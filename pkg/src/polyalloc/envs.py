"""Benchmark environments over polytope action spaces.

Two tasks: a deterministic synthetic benchmark whose reward surface is a
frozen random-weight MLP, and a compute-load-distribution simulator where
arriving jobs are split across nine servers with FIFO cycle queues.

Every `step` asserts that the action satisfies the constraint polytope
within 1e-3, so zero violations is a structural property of any trainer
using these environments.
"""

from __future__ import annotations

import numpy as np

from . import polytope
from .errors import DimensionMismatch, InfeasibleAction

VIOLATION_TOL = 1e-3

# server max cycles/second and per-user job attributes for the 9x9 setup
SERVER_SPEEDS = np.array(
    [
        2_836_258_583,
        855_913_878,
        652_109_364,
        789_819_414,
        3_187_852_760,
        974_311_629,
        2_005_143_973,
        1_481_875_307,
        2_216_715_088,
    ],
    dtype=np.float64,
)
USER_PAYLOAD_BITS = np.array(
    [587_168, 240_447, 257_396, 364_400, 387_953, 309_269, 44_420, 318_062, 490_880],
    dtype=np.float64,
)
USER_JOB_CYCLES = np.array(
    [
        1_690_694,
        1_092_255,
        867_139,
        819_594,
        3_463_247,
        2_300_810,
        1_129_119,
        1_092_402,
        1_044_736,
    ],
    dtype=np.float64,
)
JOBS_PER_INTERVAL = 10.0
INTERVAL_SECONDS = 0.01


class EnvBase:
    """reset(seed) -> state; step(action) -> (state, reward, done)."""

    state_dim: int

    def action_polytope(self) -> polytope.Polytope:
        raise NotImplementedError

    def reset(self, seed=None):
        raise NotImplementedError

    def step(self, action):
        raise NotImplementedError

    def _check_action(self, action) -> np.ndarray:
        action = np.asarray(action, dtype=np.float64)
        p = self.action_polytope()
        if action.shape != (p.n_entities,):
            raise DimensionMismatch(f"action shape {action.shape}, expected ({p.n_entities},)")
        viol = polytope.violation_cost(p, action)
        if viol.max() > VIOLATION_TOL:
            raise InfeasibleAction(f"max constraint violation {viol.max():.3e} > {VIOLATION_TOL}")
        return action


class SyntheticEnv(EnvBase):
    """Two-state deterministic task; reward is a frozen MLP of (state, action).

    The reward network is state+action -> 32 -> 16 -> 1 with ReLU between
    the linear maps, weights frozen at construction from the seed.
    """

    def __init__(self, p: polytope.Polytope, seed: int = 1):
        self._polytope = p
        n = p.n_entities
        rng = np.random.default_rng(seed)
        dims = [n + 1, 32, 16, 1]
        self._weights = []
        for i in range(3):
            w = rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i + 1], dims[i]))
            b = rng.normal(0.0, 0.1, size=dims[i + 1])
            self._weights.append((w, b))
        self._state = 0
        self.state_dim = 2
        self.episode_length = 2

    def action_polytope(self) -> polytope.Polytope:
        return self._polytope

    def reward(self, state: int, action) -> float:
        h = np.concatenate([[float(state)], np.asarray(action, dtype=np.float64)])
        for i, (w, b) in enumerate(self._weights):
            h = w @ h + b
            if i < 2:
                h = np.maximum(0.0, h)
        return float(h[0])

    def observe(self) -> np.ndarray:
        out = np.zeros(2)
        out[self._state] = 1.0
        return out

    def reset(self, seed=None) -> np.ndarray:
        self._state = 0
        return self.observe()

    def step(self, action):
        action = self._check_action(action)
        r = self.reward(self._state, action)
        done = self._state == 1
        self._state = min(self._state + 1, 1)
        return self.observe(), r, done


def grid_optimum(env: SyntheticEnv, resolution: float = 0.01) -> float:
    """Exhaustive-grid optimal two-step return; n = 3 only (test oracle)."""
    p = env.action_polytope()
    if p.n_entities != 3:
        raise DimensionMismatch("grid search oracle implemented for n = 3")
    grid = np.arange(0.0, 1.0 + 0.5 * resolution, resolution)
    best = [-np.inf, -np.inf]
    for a1 in grid:
        for a2 in grid:
            a3 = 1.0 - a1 - a2
            if a3 < -1e-12:
                continue
            a = np.array([a1, a2, max(a3, 0.0)])
            if polytope.violation_cost(p, a).max() > 1e-9:
                continue
            for s in (0, 1):
                r = env.reward(s, a)
                if r > best[s]:
                    best[s] = r
    return best[0] + best[1]


class ComputeEnv(EnvBase):
    """Job-splitting simulator over nine heterogeneous servers.

    One allocation decision per arriving job.  The job's required cycles are
    split across servers by the action; each sub-job finishes after the
    server's current backlog plus its own share, and the reward is the
    allocation mass finishing within the deadline.  Network transfer time is
    ignored; the payload appears only as an observation feature.
    """

    def __init__(
        self,
        p: polytope.Polytope,
        seed: int = 1,
        horizon: int = 512,
        deadline: float | None = None,
    ):
        if p.n_entities != SERVER_SPEEDS.shape[0]:
            raise DimensionMismatch(
                f"compute env needs n={SERVER_SPEEDS.shape[0]}, polytope has {p.n_entities}"
            )
        self._polytope = p
        self._seed = seed
        self.horizon = horizon
        # default deadline: twice the fastest server's time for the mean job
        mean_cycles = float(USER_JOB_CYCLES.mean())
        self.deadline = deadline if deadline is not None else 2.0 * mean_cycles / SERVER_SPEEDS.max()
        self.state_dim = SERVER_SPEEDS.shape[0] + 3
        self._obs_backlog_scale = 10.0 * self.deadline
        self.reset(seed)

    def action_polytope(self) -> polytope.Polytope:
        return self._polytope

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._seed = seed
        self._rng = np.random.default_rng(self._seed)
        n_users = USER_JOB_CYCLES.shape[0]
        rate = n_users * JOBS_PER_INTERVAL / INTERVAL_SECONDS  # superposed Poisson
        gaps = self._rng.exponential(1.0 / rate, size=self.horizon)
        self._arrivals = np.cumsum(gaps)
        self._users = self._rng.integers(0, n_users, size=self.horizon)
        self._backlog = np.zeros(SERVER_SPEEDS.shape[0])  # remaining cycles
        self._clock = 0.0
        self._step_idx = 0
        self.total_issued_cycles = 0.0
        self.total_drained_cycles = 0.0
        return self.observe()

    def _current_job(self):
        u = int(self._users[self._step_idx])
        return USER_JOB_CYCLES[u], USER_PAYLOAD_BITS[u]

    def observe(self) -> np.ndarray:
        backlog_sec = self._backlog / SERVER_SPEEDS
        obs_servers = np.clip(backlog_sec / self._obs_backlog_scale, 0.0, 1.0)
        if self._step_idx < self.horizon:
            cycles, payload = self._current_job()
        else:
            cycles, payload = 0.0, 0.0
        job = np.array(
            [
                cycles / USER_JOB_CYCLES.max(),
                payload / USER_PAYLOAD_BITS.max(),
                self.deadline / self._obs_backlog_scale,
            ]
        )
        return np.concatenate([obs_servers, job])

    def step(self, action):
        if self._step_idx >= self.horizon:
            raise RuntimeError("episode finished; call reset()")
        action = self._check_action(action)
        cycles, _payload = self._current_job()

        # advance the clock to this job's arrival, draining the queues
        dt = self._arrivals[self._step_idx] - self._clock
        drained = np.minimum(self._backlog, dt * SERVER_SPEEDS)
        self._backlog -= drained
        self.total_drained_cycles += float(drained.sum())
        self._clock = self._arrivals[self._step_idx]

        completion = self._backlog / SERVER_SPEEDS + action * cycles / SERVER_SPEEDS
        reward = float(np.sum(action * (completion <= self.deadline)))

        self._backlog += action * cycles
        self.total_issued_cycles += float(cycles * action.sum())
        self._step_idx += 1
        done = self._step_idx >= self.horizon
        return self.observe(), reward, done


def make_polytope(spec: dict) -> polytope.Polytope:
    """Resolve the `constraints` block of an env spec into a polytope."""
    n = int(spec.get("n", 3))
    cons = spec.get("constraints", {"kind": "none"})
    kind = cons.get("kind", "none")
    if kind == "none":
        return polytope.build([], [], n)
    if kind == "random":
        return polytope.gen_random_halfspaces(n, int(cons.get("k", 5)), int(cons.get("seed", 1)))
    if kind == "hull":
        return polytope.gen_hull_polytope(n, int(cons.get("points", 30)), int(cons.get("seed", 1)))
    if kind == "file":
        return polytope.load(cons["path"])
    raise ValueError(f"unknown constraint kind {kind!r}")


def make_env(spec: dict) -> EnvBase:
    """Env spec: {"env": "synthetic"|"compute", "n": int, "constraints": {...},
    "seed": int, and compute-only "horizon"/"deadline" knobs}."""
    name = spec.get("env", "synthetic")
    seed = int(spec.get("seed", 1))
    if name == "synthetic":
        return SyntheticEnv(make_polytope(spec), seed=seed)
    if name == "compute":
        spec = dict(spec)
        spec.setdefault("n", SERVER_SPEEDS.shape[0])
        p = make_polytope(spec)
        return ComputeEnv(
            p,
            seed=seed,
            horizon=int(spec.get("horizon", 512)),
            deadline=spec.get("deadline"),
        )
    raise ValueError(f"unknown env {name!r}")
