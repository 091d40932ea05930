"""Minimal differentiable function approximators in plain numpy.

A state-encoder MLP, one independent two-layer head per sampled entity
emitting beta shape pre-activations, and a value MLP.  Gradients are exact
reverse-mode, checked against central differences in the test suite.

De-biasing enters through per-head bias offsets: head outputs pass through
softplus(z + delta) + min_shape, with delta chosen so that a freshly
initialized head (small final-layer weights, zero biases) emits shapes
equal to the fitted de-bias terms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .debias import MIN_SHAPE, DebiasTerms
from .errors import DimensionMismatch

CHECKPOINT_VERSION = 1


def softplus(z):
    return np.logaddexp(0.0, z)


def softplus_inv(y):
    # inverse of log(1 + e^z); y must be > 0
    y = np.asarray(y, dtype=np.float64)
    return y + np.log1p(-np.exp(-np.minimum(y, 700.0)))


def _act(name, z):
    if name == "relu":
        return np.maximum(0.0, z)
    if name == "identity":
        return z
    if name == "softplus":
        return softplus(z)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, z):
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "identity":
        return np.ones_like(z)
    if name == "softplus":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weights: np.ndarray   # out x in
    bias: np.ndarray      # out
    activation: str = "identity"


@dataclass
class Mlp:
    layers: list

    @property
    def n_params(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def forward(self, x: np.ndarray):
        """x: (batch, in_dim) or (in_dim,).  Returns (output, cache)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.layers[0].weights.shape[1]:
            raise DimensionMismatch(
                f"input dim {x.shape[1]} != layer dim {self.layers[0].weights.shape[1]}"
            )
        cache = [x]
        h = x
        for l in self.layers:
            z = h @ l.weights.T + l.bias
            cache.append(z)
            h = _act(l.activation, z)
        return h, cache

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns (param_grads, grad_input); param_grads is a list of
        (dW, db) matching the layer order.
        """
        grad_out = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        grads = [None] * len(self.layers)
        g = grad_out
        for li in range(len(self.layers) - 1, -1, -1):
            l = self.layers[li]
            z = cache[li + 1]
            h_in = cache[li] if li == 0 else _act(self.layers[li - 1].activation, cache[li])
            gz = g * _act_grad(l.activation, z)
            grads[li] = (gz.T @ h_in, gz.sum(axis=0))
            g = gz @ l.weights
        return grads, g

    def params(self):
        for l in self.layers:
            yield l.weights
            yield l.bias


def _init_mlp(rng, dims, activations, final_gain=1.0) -> Mlp:
    layers = []
    for i in range(len(dims) - 1):
        fan_in = dims[i]
        scale = np.sqrt(2.0 / fan_in)
        if i == len(dims) - 2:
            scale *= final_gain
        w = rng.normal(0.0, scale, size=(dims[i + 1], dims[i]))
        layers.append(Layer(w, np.zeros(dims[i + 1]), activations[i]))
    return Mlp(layers)


@dataclass
class PolicyNet:
    """Encoder + n-1 per-entity heads with de-bias offsets on the outputs."""

    encoder: Mlp
    heads: list                 # n-1 Mlps; head i input = emb ++ prefix(i)
    debias_offsets: np.ndarray  # (n-1, 2) additive pre-activation offsets
    n_entities: int
    state_dim: int
    emb_dim: int
    min_shape: float = MIN_SHAPE

    def embed(self, state):
        emb, cache = self.encoder.forward(state)
        return emb, cache

    def head_shapes(self, i: int, emb: np.ndarray, prefix: np.ndarray):
        """(alpha, beta) batch for head i plus the forward cache.

        emb: (batch, emb_dim); prefix: (batch, i) already-sampled values.
        """
        emb = np.atleast_2d(emb)
        prefix = np.atleast_2d(prefix) if i > 0 else np.empty((emb.shape[0], 0))
        x = np.concatenate([emb, prefix], axis=1)
        z, cache = self.heads[i].forward(x)
        zd = z + self.debias_offsets[i]
        shapes = softplus(zd) + self.min_shape
        return shapes[:, 0], shapes[:, 1], (cache, zd)

    def head_backward(self, i: int, head_cache, d_alpha, d_beta):
        """Backprop through head i.

        d_alpha/d_beta: (batch,) gradients w.r.t. the emitted shapes.
        Returns (param_grads, grad_emb) where grad_emb is (batch, emb_dim);
        the prefix slice of the input gradient is discarded (sampled values
        are treated as constants).
        """
        cache, zd = head_cache
        gz = np.stack([d_alpha, d_beta], axis=1) * (1.0 / (1.0 + np.exp(-zd)))
        grads, gin = self.heads[i].backward(cache, gz)
        return grads, gin[:, : self.emb_dim]

    def provider(self, state):
        """Single-state ParamProvider closure for ar_sampler.sample."""
        emb, _ = self.embed(state)

        def _provider(_state_emb, prefix, i):
            a, b, _ = self.head_shapes(i, emb, prefix.reshape(1, -1))
            return float(a[0]), float(b[0])

        return _provider

    def all_params(self):
        ps = list(self.encoder.params())
        for h in self.heads:
            ps.extend(h.params())
        return ps


@dataclass
class ValueNet:
    net: Mlp

    def forward(self, state):
        v, cache = self.net.forward(state)
        return v[:, 0], cache

    def all_params(self):
        return list(self.net.params())


def init_policy(
    n: int,
    state_dim: int,
    terms: DebiasTerms,
    seed: int,
    emb_dim: int = 32,
    hidden: int = 32,
    head_gain: float = 0.01,
    min_shape: float = MIN_SHAPE,
) -> PolicyNet:
    """Seeded policy init; immediately after init the heads emit shapes
    within a small-gain perturbation of the de-bias terms."""
    if terms.alphas.shape[0] != n - 1:
        raise DimensionMismatch(
            f"terms fitted for n={terms.alphas.shape[0] + 1}, policy needs n={n}"
        )
    rng = np.random.default_rng(seed)
    encoder = _init_mlp(rng, [state_dim, hidden, emb_dim], ["relu", "relu"])
    heads = []
    offsets = np.empty((n - 1, 2))
    for i in range(n - 1):
        heads.append(
            _init_mlp(rng, [emb_dim + i, hidden, 2], ["relu", "identity"], final_gain=head_gain)
        )
        offsets[i, 0] = softplus_inv(max(terms.alphas[i] - min_shape, 1e-6))
        offsets[i, 1] = softplus_inv(max(terms.betas[i] - min_shape, 1e-6))
    return PolicyNet(encoder, heads, offsets, n, state_dim, emb_dim, min_shape)


def init_value(state_dim: int, seed: int, hidden: int = 32) -> ValueNet:
    rng = np.random.default_rng(seed)
    return ValueNet(_init_mlp(rng, [state_dim, hidden, hidden, 1], ["relu", "relu", "identity"]))


def flat_terms(n: int) -> DebiasTerms:
    """Uniform-(1,1) terms, i.e. no de-biasing."""
    return DebiasTerms(np.ones(n - 1), np.ones(n - 1), 0, "flat")


# ---------------------------------------------------------------- checkpoints

def _mlp_state(m: Mlp):
    return [
        {"w": l.weights.tolist(), "b": l.bias.tolist(), "act": l.activation}
        for l in m.layers
    ]


def _mlp_from_state(state) -> Mlp:
    return Mlp(
        [
            Layer(
                np.asarray(s["w"], dtype=np.float64),
                np.asarray(s["b"], dtype=np.float64),
                s["act"],
            )
            for s in state
        ]
    )


def save_checkpoint(path, policy: PolicyNet, value: ValueNet, extra=None, rng_state=None):
    payload = {
        "version": CHECKPOINT_VERSION,
        "n_entities": policy.n_entities,
        "state_dim": policy.state_dim,
        "emb_dim": policy.emb_dim,
        "min_shape": policy.min_shape,
        "debias_offsets": policy.debias_offsets.tolist(),
        "encoder": _mlp_state(policy.encoder),
        "heads": [_mlp_state(h) for h in policy.heads],
        "value": _mlp_state(value.net),
        "extra": extra or {},
        "rng_state": rng_state,
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path):
    with open(path) as f:
        data = json.load(f)
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    policy = PolicyNet(
        encoder=_mlp_from_state(data["encoder"]),
        heads=[_mlp_from_state(h) for h in data["heads"]],
        debias_offsets=np.asarray(data["debias_offsets"], dtype=np.float64),
        n_entities=int(data["n_entities"]),
        state_dim=int(data["state_dim"]),
        emb_dim=int(data["emb_dim"]),
        min_shape=float(data["min_shape"]),
    )
    value = ValueNet(_mlp_from_state(data["value"]))
    return policy, value, data.get("extra", {}), data.get("rng_state")
