"""Dense feed-forward classifier with analytic gradients and Adam.

One hidden layer over precomputed feature vectors, softmax cross-entropy
loss, 64-bit arithmetic throughout. Parameters travel as ``dict[str,
ndarray]`` so the same optimizer drives both the plain classifier and the
epistemic wrapper around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh")


@dataclass
class Batch:
    """A training minibatch: features (n, d) and integer labels (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {self.x.shape}")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"feature rows ({self.x.shape[0]}) != label count ({self.y.shape[0]})"
            )

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class DenseNet:
    """One-hidden-layer classifier: logits = act(x W1 + b1) W2 + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w2.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        self.w1, self.b1 = params["w1"], params["b1"]
        self.w2, self.b2 = params["w2"], params["b2"]


def glorot_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform Glorot matrix on [-sqrt(6/(fan_in+fan_out)), +sqrt(...)]."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def build_dense(
    input_dim: int,
    hidden_dim: int,
    num_classes: int,
    rng: np.random.Generator,
    activation: str = "relu",
) -> DenseNet:
    """Glorot-initialized weights, zero biases."""
    return DenseNet(
        w1=glorot_init(input_dim, hidden_dim, rng),
        b1=np.zeros(hidden_dim),
        w2=glorot_init(hidden_dim, num_classes, rng),
        b2=np.zeros(num_classes),
        activation=activation,
    )


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    # a is the already-computed activation of z
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


def forward_batch(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (logits (n, C), hidden features (n, H)) for a feature matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(
            f"expected feature matrix (n, {net.input_dim}), got shape {x.shape}"
        )
    features = _activate(x @ net.w1 + net.b1, net.activation)
    logits = features @ net.w2 + net.b2
    return logits, features


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-sample forward pass: (logits (C,), features (H,))."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a feature vector, got shape {x.shape}")
    logits, features = forward_batch(net, x[None, :])
    return logits[0], features[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under large logits."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=-1))
    picked = shifted[np.arange(len(y)), y]
    return float(np.mean(log_z - picked))


def loss_and_grad(net: DenseNet, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
    """Softmax cross-entropy over the batch and its exact gradients."""
    if len(batch) == 0:
        raise ValueError("batch is empty")
    if np.any(batch.y < 0) or np.any(batch.y >= net.num_classes):
        raise ValueError(
            f"labels must lie in [0, {net.num_classes}), got range "
            f"[{batch.y.min()}, {batch.y.max()}]"
        )
    x, y = batch.x, batch.y
    n = len(batch)

    z1 = x @ net.w1 + net.b1
    features = _activate(z1, net.activation)
    logits = features @ net.w2 + net.b2
    loss = cross_entropy(logits, y)

    dlogits = softmax(logits)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grads = {
        "w2": features.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dfeat = dlogits @ net.w2.T
    dz1 = dfeat * _activate_grad(z1, features, net.activation)
    grads["w1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads


@dataclass
class AdamState:
    """Adam moment accumulators, shaped like the parameter dict they track."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: dict[str, np.ndarray], lr: float, **kwargs) -> AdamState:
    state = AdamState(lr=lr, **kwargs)
    state.m = {k: np.zeros_like(p) for k, p in params.items()}
    state.v = {k: np.zeros_like(p) for k, p in params.items()}
    return state


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    if set(params) != set(grads):
        raise ValueError(f"param/grad keys differ: {sorted(params)} vs {sorted(grads)}")
    t = state.t + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {key!r}")
        m = state.beta1 * state.m[key] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[key] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params[key] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[key], new_v[key] = m, v
    next_state = AdamState(
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps,
        t=t, m=new_m, v=new_v,
    )
    return new_params, next_state


def grad_check(net: DenseNet, batch: Batch, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per entry is |analytic - numeric| divided by
    max(1e-8, |analytic| + |numeric|).
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    _, grads = loss_and_grad(net, batch)
    worst = 0.0
    params = net.params()
    for key, arr in params.items():
        flat = arr.ravel()
        analytic = grads[key].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lo_plus, _ = loss_and_grad(net, batch)
            flat[i] = orig - h
            lo_minus, _ = loss_and_grad(net, batch)
            flat[i] = orig
            numeric = (lo_plus - lo_minus) / (2.0 * h)
            denom = max(1e-8, abs(analytic[i]) + abs(numeric))
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
