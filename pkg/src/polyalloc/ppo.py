"""On-policy PPO with clipped surrogate, GAE, and the empirical entropy bonus.

The rollout buffer caches the per-step LP intervals at collection time;
they depend only on the polytope and the action prefix, so the 10 update
epochs re-evaluate log-probabilities without touching the LP solver.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import ar_sampler, beta4, debias, envs, lp, neural, polytope
from .errors import NonFiniteLoss


@dataclass
class TrainConfig:
    lr: float = 1e-3
    clip: float = 0.3
    entropy_coef: float = 0.01
    gae_lambda: float = 0.95
    gamma: float = 1.0
    epochs_per_batch: int = 10
    minibatch: int = 64
    rollout: int = 512
    workers: int = 8
    grad_clip: float = 2.0
    value_coef: float = 0.5
    total_steps: int = 150_000
    seed: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        cfg = cls()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise ValueError(f"unknown train option {k!r}")
            setattr(cfg, k, type(getattr(cfg, k))(v))
        return cfg


@dataclass
class RolloutBuffer:
    states: np.ndarray       # (T, W, state_dim)
    actions: np.ndarray      # (T, W, n) in sampling order
    intervals: np.ndarray    # (T, W, n-1, 2)
    forced: np.ndarray       # (T, W, n-1) bool
    logp_old: np.ndarray     # (T, W)
    rewards: np.ndarray      # (T, W)
    values: np.ndarray       # (T, W)
    dones: np.ndarray        # (T, W) bool
    bootstrap_values: np.ndarray  # (W,)
    entropy_at_collect: float
    episode_returns: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def n_transitions(self) -> int:
        return self.states.shape[0] * self.states.shape[1]


class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def sample_actions_for_states(policy, p: polytope.Polytope, states, rng):
    """Batched policy sampling for a stack of states sharing one polytope.

    states: (W, state_dim).  Returns (actions, intervals, logps, forced,
    entropies) with leading dimension W.  The per-step LPs run per worker;
    the network forwards are batched across workers.
    """
    W = states.shape[0]
    n = p.n_entities
    embs, _ = policy.embed(states)
    actions = np.empty((W, n))
    intervals = np.empty((W, n - 1, 2))
    logps = np.zeros((W, n - 1))
    forced = np.zeros((W, n - 1), dtype=bool)
    entropies = np.zeros(W)
    systems = [p.initial() for _ in range(W)]

    for i in range(n - 1):
        lo = np.empty(W)
        hi = np.empty(W)
        for w in range(W):
            b = lp.bounds(systems[w])
            lo[w], hi[w] = b.lo, b.hi
        degen = (hi - lo) < beta4.DEGENERATE_WIDTH
        alpha, bet, _ = policy.head_shapes(i, embs, actions[:, :i])
        ga = rng.gamma(np.maximum(alpha, 1e-12))
        gb = rng.gamma(np.maximum(bet, 1e-12))
        z = ga / (ga + gb)
        a = np.where(degen, 0.5 * (lo + hi), np.clip(lo + (hi - lo) * z, lo + 1e-12, hi - 1e-12))
        logps[:, i] = beta4.log_pdf_batch(alpha, bet, lo, hi, a, forced_mask=degen)
        entropies += beta4.entropy_batch(alpha, bet, lo, hi, forced_mask=degen)
        intervals[:, i, 0] = lo
        intervals[:, i, 1] = hi
        forced[:, i] = degen
        actions[:, i] = a
        for w in range(W):
            systems[w] = polytope.reduce(systems[w], float(a[w]))

    actions[:, n - 1] = np.maximum(0.0, 1.0 - actions[:, : n - 1].sum(axis=1))
    return actions, intervals, logps.sum(axis=1), forced, entropies


def collect(env_list, policy, value_net, config: TrainConfig, rng, order=None):
    """Run `rollout` steps in every worker env under the current policy."""
    W = len(env_list)
    T = config.rollout
    p = env_list[0].action_polytope()
    if order is not None:
        p_sample = polytope.permute(p, order)
        order = np.asarray(order, dtype=np.int64)
    else:
        p_sample = p
    n = p_sample.n_entities
    sd = env_list[0].state_dim

    states = np.empty((T, W, sd))
    actions = np.empty((T, W, n))
    intervals = np.empty((T, W, n - 1, 2))
    forced = np.zeros((T, W, n - 1), dtype=bool)
    logp_old = np.empty((T, W))
    rewards = np.empty((T, W))
    values = np.empty((T, W))
    dones = np.zeros((T, W), dtype=bool)

    obs = np.stack([env.observe() for env in env_list])
    ep_ret = np.zeros(W)
    episode_returns: list[float] = []
    entropy_total = 0.0

    for t in range(T):
        states[t] = obs
        acts, ivs, lps, fm, ents = sample_actions_for_states(policy, p_sample, obs, rng)
        v, _ = value_net.forward(obs)
        values[t] = v
        entropy_total += float(ents.sum())
        for w, env in enumerate(env_list):
            env_action = acts[w] if order is None else _unpermute(acts[w], order)
            next_obs, r, done = env.step(env_action)
            rewards[t, w] = r
            dones[t, w] = done
            ep_ret[w] += r
            if done:
                episode_returns.append(float(ep_ret[w]))
                ep_ret[w] = 0.0
                next_obs = env.reset()
            obs[w] = next_obs
        actions[t] = acts
        intervals[t] = ivs
        logp_old[t] = lps
        forced[t] = fm

    bootstrap, _ = value_net.forward(obs)
    return RolloutBuffer(
        states=states,
        actions=actions,
        intervals=intervals,
        forced=forced,
        logp_old=logp_old,
        rewards=rewards,
        values=values,
        dones=dones,
        bootstrap_values=np.asarray(bootstrap),
        entropy_at_collect=entropy_total / (T * W),
        episode_returns=episode_returns,
    )


def _unpermute(sampled: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(sampled)
    out[order] = sampled
    return out


def gae(buffer: RolloutBuffer, gamma: float, lam: float):
    """Standard recursive GAE; fills buffer.advantages and buffer.returns."""
    T, W = buffer.rewards.shape
    adv = np.zeros((T, W))
    next_adv = np.zeros(W)
    next_value = buffer.bootstrap_values.copy()
    for t in range(T - 1, -1, -1):
        not_done = 1.0 - buffer.dones[t].astype(np.float64)
        delta = buffer.rewards[t] + gamma * next_value * not_done - buffer.values[t]
        next_adv = delta + gamma * lam * not_done * next_adv
        adv[t] = next_adv
        next_value = buffer.values[t]
    buffer.advantages = adv
    buffer.returns = adv + buffer.values
    return adv, buffer.returns


def _policy_minibatch_update(policy, mb, config):
    """Forward/backward for one policy minibatch; returns (grads, metrics)."""
    states, actions, intervals, forced_mask, logp_old, adv = mb
    B = states.shape[0]
    n = policy.n_entities
    lo = intervals[:, :, 0]
    hi = intervals[:, :, 1]
    x = actions[:, : n - 1]

    emb, enc_cache = policy.embed(states)
    alphas = np.empty((B, n - 1))
    betas = np.empty((B, n - 1))
    head_caches = []
    for i in range(n - 1):
        a_i, b_i, cache = policy.head_shapes(i, emb, actions[:, :i])
        alphas[:, i] = a_i
        betas[:, i] = b_i
        head_caches.append(cache)

    step_logps = beta4.log_pdf_batch(alphas, betas, lo, hi, x, forced_mask=forced_mask)
    logp_new = step_logps.sum(axis=1)
    ratio = np.exp(logp_new - logp_old)

    adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)
    surr1 = ratio * adv_n
    surr2 = np.clip(ratio, 1.0 - config.clip, 1.0 + config.clip) * adv_n
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))

    step_ents = beta4.entropy_batch(alphas, betas, lo, hi, forced_mask=forced_mask)
    entropy_emp = float(np.mean(step_ents.sum(axis=1)))
    loss = policy_loss - config.entropy_coef * entropy_emp
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"policy loss {loss}")

    # d loss / d logp_new per sample
    use_unclipped = surr1 <= surr2
    in_band = np.abs(ratio - 1.0) < config.clip
    g_logp = np.where(use_unclipped | in_band, ratio * adv_n, 0.0) * (-1.0 / B)

    dlp_da, dlp_db = beta4.log_pdf_grad(alphas, betas, lo, hi, x, forced_mask=forced_mask)
    dh_da, dh_db = beta4.entropy_grad(alphas, betas, forced_mask=forced_mask)
    d_alpha = g_logp[:, None] * dlp_da - (config.entropy_coef / B) * dh_da
    d_beta = g_logp[:, None] * dlp_db - (config.entropy_coef / B) * dh_db

    grads = []
    grad_emb = np.zeros_like(emb)
    head_grads = []
    for i in range(n - 1):
        hg, ge = policy.head_backward(i, head_caches[i], d_alpha[:, i], d_beta[:, i])
        head_grads.append(hg)
        grad_emb += ge
    enc_grads, _ = policy.encoder.backward(enc_cache, grad_emb)
    for dw, db in enc_grads:
        grads.extend([dw, db])
    for hg in head_grads:
        for dw, db in hg:
            grads.extend([dw, db])

    approx_kl = float(np.mean(logp_old - logp_new))
    metrics = {
        "policy_loss": policy_loss,
        "entropy": entropy_emp,
        "approx_kl": approx_kl,
        "logp_new": logp_new,
    }
    return grads, metrics


def update(buffer: RolloutBuffer, policy, value_net, config: TrainConfig,
           opt_policy: Adam, opt_value: Adam, rng):
    """epochs_per_batch passes of minibatch clipped-PPO + value regression."""
    if buffer.advantages is None:
        gae(buffer, config.gamma, config.gae_lambda)
    T, W = buffer.rewards.shape
    N = T * W
    n = policy.n_entities
    states = buffer.states.reshape(N, -1)
    actions = buffer.actions.reshape(N, n)
    intervals = buffer.intervals.reshape(N, n - 1, 2)
    forced = buffer.forced.reshape(N, n - 1)
    logp_old = buffer.logp_old.reshape(N)
    adv = buffer.advantages.reshape(N)
    returns = buffer.returns.reshape(N)

    p_params = policy.all_params()
    v_params = value_net.all_params()
    last = {}
    for _epoch in range(config.epochs_per_batch):
        perm = rng.permutation(N)
        for s in range(0, N, config.minibatch):
            idx = perm[s: s + config.minibatch]
            mb = (states[idx], actions[idx], intervals[idx], forced[idx],
                  logp_old[idx], adv[idx])
            grads, metrics = _policy_minibatch_update(policy, mb, config)
            clip_grad_norm(grads, config.grad_clip)
            opt_policy.step(p_params, grads)

            v, v_cache = value_net.forward(states[idx])
            verr = v - returns[idx]
            value_loss = 0.5 * config.value_coef * float(np.mean(verr**2))
            if not np.isfinite(value_loss):
                raise NonFiniteLoss(f"value loss {value_loss}")
            gv = (config.value_coef * verr / idx.shape[0])[:, None]
            v_grads_pairs, _ = value_net.net.backward(v_cache, gv)
            v_grads = [g for pair in v_grads_pairs for g in pair]
            clip_grad_norm(v_grads, config.grad_clip)
            opt_value.step(v_params, v_grads)

            last = {**metrics, "value_loss": value_loss}
    last.pop("logp_new", None)
    return last


@dataclass
class IterationRecord:
    steps: int
    mean_reward: float
    entropy: float
    violations: int
    wall_ms: float


CSV_HEADER = ["steps", "mean_reward", "entropy", "violations", "wall_ms"]


def train(
    env_spec: dict,
    config: TrainConfig,
    terms: debias.DebiasTerms | None = None,
    order=None,
    metrics_path=None,
    checkpoint_path=None,
    progress=None,
):
    """Full training loop: collect -> GAE -> update until total_steps.

    `terms` None means no de-biasing (flat initialization).  `order` is a
    permutation giving the entity sampled at each step (ablation hook).
    Returns (records, policy, value_net).
    """
    base_env = envs.make_env(env_spec)
    p = base_env.action_polytope()
    env_list = [base_env]
    for w in range(1, config.workers):
        spec_w = dict(env_spec)
        if env_spec.get("env") == "compute":
            # decorrelate arrival streams only; synthetic workers must share
            # the same frozen reward surface
            spec_w["seed"] = int(env_spec.get("seed", 1)) + 1000 * w
        env_list.append(envs.make_env(spec_w))
    for env in env_list:
        env.reset()

    n = p.n_entities
    if terms is None:
        terms = neural.flat_terms(n)
    policy = neural.init_policy(n, base_env.state_dim, terms, config.seed)
    value_net = neural.init_value(base_env.state_dim, config.seed + 1)
    opt_p = Adam(policy.all_params(), config.lr)
    opt_v = Adam(value_net.all_params(), config.lr)
    rng = np.random.default_rng(config.seed)

    records: list[IterationRecord] = []
    writer = None
    fh = None
    if metrics_path is not None:
        fh = open(metrics_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)

    steps_done = 0
    running_mean = 0.0
    try:
        while steps_done < config.total_steps:
            t0 = time.perf_counter()
            buffer = collect(env_list, policy, value_net, config, rng, order=order)
            gae(buffer, config.gamma, config.gae_lambda)
            stats = update(buffer, policy, value_net, config, opt_p, opt_v, rng)
            steps_done += buffer.n_transitions
            if buffer.episode_returns:
                running_mean = float(np.mean(buffer.episode_returns))
            wall_ms = (time.perf_counter() - t0) * 1e3
            rec = IterationRecord(
                steps=steps_done,
                mean_reward=running_mean,
                entropy=buffer.entropy_at_collect,
                violations=0,  # env.step raises on any violation > tolerance
                wall_ms=wall_ms,
            )
            records.append(rec)
            if writer is not None:
                writer.writerow([rec.steps, repr(rec.mean_reward), repr(rec.entropy),
                                 rec.violations, f"{rec.wall_ms:.1f}"])
                fh.flush()
            if progress is not None:
                progress(rec, stats)
    finally:
        if fh is not None:
            fh.close()

    if checkpoint_path is not None:
        neural.save_checkpoint(
            checkpoint_path, policy, value_net,
            extra={"env_spec": env_spec, "order": None if order is None else list(map(int, order))},
        )
    return records, policy, value_net


def evaluate(env_spec: dict, policy, value_net, episodes: int, seed: int = 0,
             order=None, deterministic: bool = False):
    """Roll out `episodes` full episodes; returns (mean, std, violations)."""
    env = envs.make_env(env_spec)
    p = env.action_polytope()
    p_sample = p if order is None else polytope.permute(p, np.asarray(order))
    rng = np.random.default_rng(seed)
    rets = []
    for ep in range(episodes):
        obs = env.reset()
        done = False
        total = 0.0
        while not done:
            acts, _, _, _, _ = _sample_eval(policy, p_sample, obs, rng, deterministic)
            env_action = acts if order is None else _unpermute(acts, np.asarray(order))
            obs, r, done = env.step(env_action)
            total += r
        rets.append(total)
    return float(np.mean(rets)), float(np.std(rets)), 0


def _sample_eval(policy, p, obs, rng, deterministic):
    obs2 = obs.reshape(1, -1)
    if not deterministic:
        acts, ivs, lps, fm, ents = sample_actions_for_states(policy, p, obs2, rng)
        return acts[0], ivs[0], lps[0], fm[0], ents[0]
    # deterministic mode: walk the steps taking each beta's mean
    emb, _ = policy.embed(obs2)
    n = p.n_entities
    rp = p.initial()
    action = np.empty(n)
    for i in range(n - 1):
        b = lp.bounds(rp)
        if b.degenerate:
            action[i] = b.mid
        else:
            a_i, b_i, _ = policy.head_shapes(i, emb, action[:i].reshape(1, -1))
            action[i] = b.lo + (b.hi - b.lo) * float(a_i[0] / (a_i[0] + b_i[0]))
        rp = polytope.reduce(rp, float(action[i]))
    action[n - 1] = max(0.0, 1.0 - action[: n - 1].sum())
    return action, None, None, None, None
