"""Two-layer tanh MLP head with smoothed cross entropy, exact backprop,
and a from-scratch AdamW optimizer usable by any named-array parameter set.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .store import load_arrays, save_arrays


@dataclass(eq=False)
class MlpParams:
    W1: np.ndarray  # d x h
    b1: np.ndarray  # h
    W2: np.ndarray  # h x C
    b2: np.ndarray  # C

    @staticmethod
    def init(rng: np.random.Generator, d: int, h: int, n_classes: int, scale: float = 0.01) -> "MlpParams":
        return MlpParams(
            W1=rng.normal(0.0, scale, size=(d, h)),
            b1=np.zeros(h),
            W2=rng.normal(0.0, scale, size=(h, n_classes)),
            b2=np.zeros(n_classes),
        )

    def to_dict(self) -> dict[str, np.ndarray]:
        """Live views of the parameter arrays (not copies)."""
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self) -> "MlpParams":
        return MlpParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())


@dataclass(eq=False)
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    weight_decay: float = 0.01

    @staticmethod
    def init(
        params: dict[str, np.ndarray],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps_opt: float = 1e-8,
        weight_decay: float = 0.01,
    ) -> "AdamWState":
        return AdamWState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
            beta1=beta1,
            beta2=beta2,
            eps_opt=eps_opt,
            weight_decay=weight_decay,
        )

    def copy(self) -> "AdamWState":
        return AdamWState(
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            step=self.step,
            beta1=self.beta1,
            beta2=self.beta2,
            eps_opt=self.eps_opt,
            weight_decay=self.weight_decay,
        )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities softmax(W2' tanh(W1' x + b1) + b2)."""
    hidden = np.tanh(x @ params.W1 + params.b1)
    return softmax(hidden @ params.W2 + params.b2)


def smoothed_target(y: int, n_classes: int, smoothing: float) -> np.ndarray:
    """(1 - s) * onehot(y) + s / C."""
    if not (0.0 <= smoothing < 1.0):
        raise ValueError("smoothing must be in [0, 1)")
    q = np.full(n_classes, smoothing / n_classes)
    q[y] += 1.0 - smoothing
    return q


def ce_smoothed(p: np.ndarray, y: int, smoothing: float) -> float:
    """Cross entropy against the label-smoothed target distribution."""
    q = smoothed_target(y, p.shape[-1], smoothing)
    return float(-(q * np.log(p)).sum())


def cross_entropy(p: np.ndarray, q: np.ndarray) -> float:
    """-sum q log p for a target distribution q."""
    return float(-(q * np.log(p)).sum())


def backward(params: MlpParams, x: np.ndarray, q: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients of -sum(q log softmax(...)) for one example.

    Returns (parameter gradients, gradient w.r.t. the input x).
    """
    a = x @ params.W1 + params.b1
    hidden = np.tanh(a)
    p = softmax(hidden @ params.W2 + params.b2)
    dlogits = p - q
    grads = {
        "W2": np.outer(hidden, dlogits),
        "b2": dlogits,
    }
    dhidden = params.W2 @ dlogits
    da = dhidden * (1.0 - hidden**2)
    grads["W1"] = np.outer(x, da)
    grads["b1"] = da
    dx = params.W1 @ da
    return grads, dx


def batch_backward(
    params: MlpParams, xs: np.ndarray, qs: np.ndarray, weights: np.ndarray | None = None
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Weighted-mean loss and gradients over a batch.

    xs is B x d, qs is B x C target distributions. weights default to
    1/B each; an entry of 0 drops that example from loss and gradient.
    """
    n = xs.shape[0]
    if weights is None:
        weights = np.full(n, 1.0 / n)
    a = xs @ params.W1 + params.b1
    hidden = np.tanh(a)
    p = softmax(hidden @ params.W2 + params.b2)
    losses = -(qs * np.log(p)).sum(axis=1)
    loss = float((weights * losses).sum())
    dlogits = (p - qs) * weights[:, None]
    grads = {
        "W2": hidden.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dhidden = dlogits @ params.W2.T
    da = dhidden * (1.0 - hidden**2)
    grads["W1"] = xs.T @ da
    grads["b1"] = da.sum(axis=0)
    dxs = da @ params.W1.T
    return loss, grads, dxs


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One decoupled-weight-decay Adam update, in place.

    param <- param - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * param)
    with bias-corrected moment estimates.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps_opt)
        p -= lr * (update + state.weight_decay * p)
    return params, state


def save_checkpoint(dirpath: str | Path, params: MlpParams, state: AdamWState, config_hash: str = "") -> None:
    """Versioned head checkpoint: parameters plus optimizer moments."""
    arrays = {f"p_{k}": v for k, v in params.to_dict().items()}
    arrays.update({f"m_{k}": v for k, v in state.m.items()})
    arrays.update({f"v_{k}": v for k, v in state.v.items()})
    save_arrays(
        dirpath,
        meta={
            "version": 1,
            "kind": "mlp-checkpoint",
            "step": state.step,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps_opt": state.eps_opt,
            "weight_decay": state.weight_decay,
            "config_hash": config_hash,
        },
        arrays=arrays,
    )


def load_checkpoint(dirpath: str | Path) -> tuple[MlpParams, AdamWState, str]:
    meta, arrays = load_arrays(dirpath)
    if meta.get("kind") != "mlp-checkpoint" or meta.get("version") != 1:
        raise ValueError("not a supported head checkpoint")
    params = MlpParams(arrays["p_W1"], arrays["p_b1"], arrays["p_W2"], arrays["p_b2"])
    names = ("W1", "b1", "W2", "b2")
    state = AdamWState(
        m={k: arrays[f"m_{k}"] for k in names},
        v={k: arrays[f"v_{k}"] for k in names},
        step=meta["step"],
        beta1=meta["beta1"],
        beta2=meta["beta2"],
        eps_opt=meta["eps_opt"],
        weight_decay=meta["weight_decay"],
    )
    return params, state, meta["config_hash"]
