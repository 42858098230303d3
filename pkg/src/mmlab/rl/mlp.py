"""Plain-numpy multilayer perceptron with exact reverse-mode gradients.

Rectified-linear hidden layers, identity output.  The forward pass is a
deterministic function of parameters and input; ``backward`` consumes the
cache returned by ``forward_cached`` and the loss gradient at the output.
"""

from __future__ import annotations

import json
from typing import List, Optional, Sequence, Tuple

import numpy as np


class Mlp:
    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(int(s) for s in sizes)
        rng = rng or np.random.default_rng(0)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            if i == len(self.sizes) - 2:
                scale = 0.01  # small head keeps initial Q-values/logits near zero
            else:
                scale = np.sqrt(2.0 / n_in)
            self.weights.append(rng.normal(0.0, scale, (n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[1]}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        squeeze = np.asarray(x).ndim == 1
        h = self._check_input(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h[0] if squeeze else h

    def forward_cached(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Returns (output, cache); cache holds each layer's input activation."""
        h = self._check_input(x)
        cache = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                np.maximum(h, 0.0, out=h)
                cache.append(h)
        return h, cache

    def backward(
        self, cache: List[np.ndarray], grad_out: np.ndarray
    ) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Exact gradients of the cached forward pass.

        ``grad_out`` is dLoss/dOutput, shape (batch, output_dim).  Returns
        [(dW, db)] per layer, first layer first.
        """
        g = np.asarray(grad_out, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)  # type: ignore
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = cache[i]
            grads[i] = (h_in.T @ g, g.sum(axis=0))
            if i > 0:
                g = g @ self.weights[i].T
                g[cache[i] <= 0.0] = 0.0  # relu mask on the layer's input activation
        return grads

    # -- parameter plumbing --------------------------------------------------

    def param_arrays(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.param_arrays()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        i = 0
        for p in self.param_arrays():
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError(f"parameter vector size mismatch: {flat.size} vs {i}")

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def copy_from(self, other: "Mlp") -> None:
        if self.sizes != other.sizes:
            raise ValueError("architecture mismatch")
        for dst, src in zip(self.param_arrays(), other.param_arrays()):
            dst[...] = src


def flat_grads(grads: List[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([g.ravel() for pair in grads for g in pair])


class Adam:
    """Standard Adam over the MLP's parameter arrays."""

    def __init__(
        self,
        net: Mlp,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.param_arrays()]
        self.v = [np.zeros_like(p) for p in net.param_arrays()]

    def step(self, grads: List[Tuple[np.ndarray, np.ndarray]]) -> None:
        flat = [g for pair in grads for g in pair]
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.net.param_arrays(), flat, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# -- checkpointing -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: str,
    kind: str,
    net: Mlp,
    optimizer: Optional[Adam] = None,
    rng_state: Optional[dict] = None,
    extra: Optional[dict] = None,
) -> None:
    """Versioned flat binary: layer sizes, parameters, optimizer moments and
    RNG state."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "sizes": net.sizes,
        "rng_state": rng_state,
        "extra": extra or {},
        "has_optimizer": optimizer is not None,
    }
    arrays = {"params": net.get_flat()}
    if optimizer is not None:
        arrays["adam_m"] = np.concatenate([m.ravel() for m in optimizer.m])
        arrays["adam_v"] = np.concatenate([v.ravel() for v in optimizer.v])
        arrays["adam_t"] = np.array([optimizer.t], dtype=np.int64)
        arrays["adam_lr"] = np.array([optimizer.lr])
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str) -> dict:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        net = Mlp(meta["sizes"])
        net.set_flat(data["params"])
        out = {"kind": meta["kind"], "net": net, "extra": meta["extra"], "rng_state": meta["rng_state"]}
        if meta["has_optimizer"]:
            opt = Adam(net, lr=float(data["adam_lr"][0]))
            flat_m, flat_v = data["adam_m"], data["adam_v"]
            i = 0
            for m, v in zip(opt.m, opt.v):
                m[...] = flat_m[i : i + m.size].reshape(m.shape)
                v[...] = flat_v[i : i + v.size].reshape(v.shape)
                i += m.size
            opt.t = int(data["adam_t"][0])
            out["optimizer"] = opt
        return out
