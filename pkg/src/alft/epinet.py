"""Epistemic network: base classifier plus a z-conditioned epinet.

Combined logits for input x and epistemic index z are

    base(x) + prior_scale * prior(features(x), z) + learnable(features(x), z)

where prior and learnable are one-hidden-layer MLPs reading the base
network's final hidden features concatenated with z. Each MLP emits a
(C * index_dim) vector that is reshaped to (C, index_dim) and contracted
with z, so z = 0 always yields the bare base logits. The prior is drawn
once and never trained; gradients never flow from the epinet back into
the base features (the feature input is treated as a constant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Batch, DenseNet, cross_entropy, forward_batch, glorot_init, softmax


@dataclass
class EpistemicIndex:
    """A single epistemic index draw."""

    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.ndim != 1:
            raise ValueError(f"index must be a vector, got shape {self.z.shape}")

    def __len__(self) -> int:
        return self.z.shape[0]


@dataclass
class EpinetModel:
    """Base classifier with frozen-prior / learnable epinet heads."""

    base: DenseNet
    prior: dict[str, np.ndarray]
    learnable: dict[str, np.ndarray]
    index_dim: int
    prior_scale: float = 1.0

    @property
    def num_classes(self) -> int:
        return self.base.num_classes

    @property
    def epinet_input_dim(self) -> int:
        return self.learnable["w1"].shape[0]

    def trainable_params(self) -> dict[str, np.ndarray]:
        """Base and learnable parameters under namespaced keys; prior excluded."""
        out = {f"base.{k}": v for k, v in self.base.params().items()}
        out.update({f"epi.{k}": v for k, v in self.learnable.items()})
        return out

    def set_trainable_params(self, params: dict[str, np.ndarray]) -> None:
        self.base.set_params({k[5:]: v for k, v in params.items() if k.startswith("base.")})
        for k, v in params.items():
            if k.startswith("epi."):
                self.learnable[k[4:]] = v


def _mlp_params(
    in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    return {
        "w1": glorot_init(in_dim, hidden, rng),
        "b1": np.zeros(hidden),
        "w2": glorot_init(hidden, out_dim, rng),
        "b2": np.zeros(out_dim),
    }


def build_epinet(
    base: DenseNet,
    rng: np.random.Generator,
    index_dim: int = 8,
    hidden_dim: int = 15,
    prior_scale: float = 1.0,
) -> EpinetModel:
    """Attach Glorot-initialized epinet heads to a base classifier.

    The prior is drawn first from the same scheme as the learnable net,
    then frozen (its arrays are marked read-only).
    """
    if index_dim < 1 or hidden_dim < 1:
        raise ValueError(
            f"index_dim and hidden_dim must be >= 1, got {index_dim}, {hidden_dim}"
        )
    if prior_scale < 0:
        raise ValueError(f"prior_scale must be >= 0, got {prior_scale}")
    in_dim = base.hidden_dim + index_dim
    out_dim = base.num_classes * index_dim
    prior = _mlp_params(in_dim, hidden_dim, out_dim, rng)
    for arr in prior.values():
        arr.flags.writeable = False
    learnable = _mlp_params(in_dim, hidden_dim, out_dim, rng)
    return EpinetModel(
        base=base,
        prior=prior,
        learnable=learnable,
        index_dim=index_dim,
        prior_scale=prior_scale,
    )


def _head_contribution(
    mlp: dict[str, np.ndarray],
    inputs: np.ndarray,
    z_rows: np.ndarray,
    num_classes: int,
) -> np.ndarray:
    """MLP output reshaped to (rows, C, index_dim) and contracted with z.

    inputs and z_rows are row-aligned: inputs (m, H + dz), z_rows (m, dz).
    """
    hidden = np.maximum(inputs @ mlp["w1"] + mlp["b1"], 0.0)
    raw = hidden @ mlp["w2"] + mlp["b2"]
    raw = raw.reshape(len(inputs), num_classes, z_rows.shape[1])
    return np.einsum("mcd,md->mc", raw, z_rows)


def _stacked_inputs(feat: np.ndarray, z_rows: np.ndarray) -> np.ndarray:
    return np.concatenate([feat, z_rows], axis=1)


def enn_forward(
    enn: EpinetModel, x: np.ndarray, z: np.ndarray | EpistemicIndex
) -> np.ndarray:
    """Combined logits (C,) for one input and one epistemic index."""
    z_vec = z.z if isinstance(z, EpistemicIndex) else np.asarray(z, dtype=np.float64)
    if z_vec.shape != (enn.index_dim,):
        raise ValueError(f"index must have shape ({enn.index_dim},), got {z_vec.shape}")
    x = np.asarray(x, dtype=np.float64)
    base_logits, feat = forward_batch(enn.base, x[None, :])
    z_rows = z_vec[None, :]
    inputs = _stacked_inputs(feat, z_rows)
    out = base_logits.copy()
    if enn.prior_scale != 0.0:
        out += enn.prior_scale * _head_contribution(
            enn.prior, inputs, z_rows, enn.num_classes
        )
    out += _head_contribution(enn.learnable, inputs, z_rows, enn.num_classes)
    return out[0]


def enn_logits_matrix(enn: EpinetModel, x: np.ndarray, z_draws: np.ndarray) -> np.ndarray:
    """Logits (n, K, C) for every (sample, draw) pair.

    z_draws is either (K, dz), sharing the K draws across all samples, or
    (n, K, dz) with a private draw set per sample.
    """
    x = np.asarray(x, dtype=np.float64)
    z_draws = np.asarray(z_draws, dtype=np.float64)
    base_logits, feat = forward_batch(enn.base, x)
    n = x.shape[0]
    if z_draws.ndim == 2:
        z_draws = np.broadcast_to(z_draws[None, :, :], (n, *z_draws.shape))
    if z_draws.shape[0] != n or z_draws.shape[2] != enn.index_dim:
        raise ValueError(
            f"draws must be (K, {enn.index_dim}) or ({n}, K, {enn.index_dim}), "
            f"got {z_draws.shape}"
        )
    k = z_draws.shape[1]
    feat_rows = np.repeat(feat, k, axis=0)
    z_rows = z_draws.reshape(n * k, enn.index_dim)
    inputs = _stacked_inputs(feat_rows, z_rows)
    out = np.repeat(base_logits, k, axis=0)
    if enn.prior_scale != 0.0:
        out = out + enn.prior_scale * _head_contribution(
            enn.prior, inputs, z_rows, enn.num_classes
        )
    out = out + _head_contribution(enn.learnable, inputs, z_rows, enn.num_classes)
    return out.reshape(n, k, enn.num_classes)


def per_draw_probs(enn: EpinetModel, x: np.ndarray, z_draws: np.ndarray) -> np.ndarray:
    """Class probabilities (n, K, C) under each epistemic index draw."""
    return softmax(enn_logits_matrix(enn, x, z_draws))


def draw_indices(rng: np.random.Generator, k: int, index_dim: int) -> np.ndarray:
    """K standard-Gaussian index draws, shape (K, index_dim)."""
    return rng.standard_normal((k, index_dim))


def predictive_mean(
    enn: EpinetModel, x: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Monte Carlo marginal class distribution: mean softmax over K draws."""
    if k < 1:
        raise ValueError(f"draw count must be >= 1, got {k}")
    x = np.asarray(x, dtype=np.float64)
    z_draws = draw_indices(rng, k, enn.index_dim)
    probs = per_draw_probs(enn, x[None, :], z_draws)
    return probs[0].mean(axis=0)


def enn_loss_and_grad(
    enn: EpinetModel, batch: Batch, z_draws: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy averaged over index draws, with exact gradients.

    Gradients cover the base net and the learnable head only. The epinet
    reads base features as constants, so no gradient flows from either
    head back into the base parameters through the feature input.
    """
    if len(batch) == 0:
        raise ValueError("batch is empty")
    z_draws = np.asarray(z_draws, dtype=np.float64)
    if z_draws.ndim != 2 or z_draws.shape[1] != enn.index_dim:
        raise ValueError(f"draws must be (K, {enn.index_dim}), got {z_draws.shape}")
    x, y = batch.x, batch.y
    base = enn.base
    if np.any(y < 0) or np.any(y >= base.num_classes):
        raise ValueError(f"labels must lie in [0, {base.num_classes})")
    n, k = x.shape[0], z_draws.shape[0]
    c, dz = base.num_classes, enn.index_dim

    # Base forward, keeping pre-activations for backprop.
    z1 = x @ base.w1 + base.b1
    if base.activation == "relu":
        feat = np.maximum(z1, 0.0)
        act_grad = (z1 > 0.0).astype(np.float64)
    else:
        feat = np.tanh(z1)
        act_grad = 1.0 - feat * feat
    base_logits = feat @ base.w2 + base.b2

    # Epinet forward on (draw, sample) rows: draw k varies fastest.
    feat_rows = np.repeat(feat, k, axis=0)
    z_rows = np.tile(z_draws, (n, 1))
    inputs = _stacked_inputs(feat_rows, z_rows)

    hpre = inputs @ enn.learnable["w1"] + enn.learnable["b1"]
    hid = np.maximum(hpre, 0.0)
    raw = hid @ enn.learnable["w2"] + enn.learnable["b2"]
    contrib = np.einsum(
        "mcd,md->mc", raw.reshape(n * k, c, dz), z_rows
    )
    if enn.prior_scale != 0.0:
        contrib = contrib + enn.prior_scale * _head_contribution(
            enn.prior, inputs, z_rows, c
        )
    logits = np.repeat(base_logits, k, axis=0) + contrib

    y_rows = np.repeat(y, k)
    loss = cross_entropy(logits, y_rows)

    dlogits = softmax(logits)
    dlogits[np.arange(n * k), y_rows] -= 1.0
    dlogits /= n * k

    # Base branch: sum the per-draw upstream gradients for each sample.
    d_base_logits = dlogits.reshape(n, k, c).sum(axis=1)
    grads = {
        "base.w2": feat.T @ d_base_logits,
        "base.b2": d_base_logits.sum(axis=0),
    }
    dz1 = (d_base_logits @ base.w2.T) * act_grad
    grads["base.w1"] = x.T @ dz1
    grads["base.b1"] = dz1.sum(axis=0)

    # Learnable head: backprop through the contraction with z.
    d_raw = np.einsum("mc,md->mcd", dlogits, z_rows).reshape(n * k, c * dz)
    grads["epi.w2"] = hid.T @ d_raw
    grads["epi.b2"] = d_raw.sum(axis=0)
    dh = (d_raw @ enn.learnable["w2"].T) * (hpre > 0.0)
    grads["epi.w1"] = inputs.T @ dh
    grads["epi.b1"] = dh.sum(axis=0)
    return loss, grads
