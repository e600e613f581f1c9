"""Reconstruction models: graph auto-encoder, vector auto-encoder and PCA.

All three expose ``reconstruct_frames(frames) -> (X_hat, squared_error)`` on
frames shaped ``(n_frames, N, 4)`` so scoring and evaluation are shared.
The auto-encoders are plain numpy with hand-written backpropagation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch

N_FEATURES = 4


def normalize_adjacency(A: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization D^-1/2 A D^-1/2; isolated nodes get zero rows."""
    A = np.asarray(A, dtype=float)
    deg = A.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    return inv_sqrt[:, None] * A * inv_sqrt[None, :]


def _act(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    if activation == "none":
        return z
    raise ValueError(f"unknown activation {activation!r}")


def _act_grad(out: np.ndarray, grad: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return grad * (1.0 - out * out)
    return grad


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _node_matmul(P: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Apply the N x N matrix P to every frame of M (B, N, F) as one GEMM."""
    B, N, F = M.shape
    flat = M.transpose(1, 0, 2).reshape(N, B * F)
    return (P @ flat).reshape(N, B, F).transpose(1, 0, 2)


# -- graph convolution ------------------------------------------------------------

@dataclass
class GcnLayer:
    """One graph convolution ``act(U @ A_hat @ X @ W + B)``."""

    U: np.ndarray
    W: np.ndarray
    B: np.ndarray
    activation: str = "tanh"

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.U.shape[0], self.W.shape[0], self.W.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"U": self.U, "W": self.W, "B": self.B}


def gcn_forward(layer: GcnLayer, a_hat: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Forward pass for a single frame ``(N, F_in)`` or a batch ``(B, N, F_in)``."""
    n, f_in, f_out = layer.shape
    X = np.asarray(X, dtype=float)
    if (layer.U.shape != (n, n) or a_hat.shape != (n, n) or layer.B.shape != (n, f_out)
            or X.shape[-2:] != (n, f_in)):
        raise ShapeMismatch(
            f"layer expects ({n}, {f_in}) frames with {n}x{n} adjacency; "
            f"got X {X.shape}, A_hat {a_hat.shape}, B {layer.B.shape}"
        )
    batch = X[None] if X.ndim == 2 else X
    out = _act(_node_matmul(layer.U @ a_hat, batch @ layer.W) + layer.B, layer.activation)
    return out[0] if X.ndim == 2 else out


class GaeModel:
    """Three graph convolutions: 4 -> 3 (tanh), 3 -> 4 (tanh), 4 -> 4 (linear)."""

    kind = "gae"

    def __init__(self, layers: list[GcnLayer], a_hat: np.ndarray):
        if len(layers) != 3:
            raise ValueError("a GAE has exactly three layers")
        self.layers = layers
        self.a_hat = np.asarray(a_hat, dtype=float)

    @classmethod
    def init(cls, A: np.ndarray, seed: int = 0, hidden: int = 3, u_noise: float = 0.01,
             normalized: bool = False) -> "GaeModel":
        """Fresh model; ``A`` is the raw adjacency unless ``normalized`` is set."""
        rng = np.random.default_rng(seed)
        a_hat = np.asarray(A, dtype=float) if normalized else normalize_adjacency(A)
        n = a_hat.shape[0]
        dims = [(N_FEATURES, hidden, "tanh"), (hidden, N_FEATURES, "tanh"), (N_FEATURES, N_FEATURES, "none")]
        layers = [
            GcnLayer(
                U=np.eye(n) + u_noise * rng.standard_normal((n, n)),
                W=_glorot(rng, f_in, f_out),
                B=np.zeros((n, f_out)),
                activation=act,
            )
            for f_in, f_out, act in dims
        ]
        return cls(layers, a_hat)

    @property
    def n_nodes(self) -> int:
        return self.a_hat.shape[0]

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [(f"layers.{i}.{k}", v) for i, layer in enumerate(self.layers)
                for k, v in layer.params().items()]

    def _forward(self, frames: np.ndarray):
        caches = []
        h = frames
        for layer in self.layers:
            P = layer.U @ self.a_hat
            M = h @ layer.W
            out = _act(_node_matmul(P, M) + layer.B, layer.activation)
            caches.append((h, P, M, out))
            h = out
        return h, caches

    def forward(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        batch = X[None] if X.ndim == 2 else X
        if batch.shape[1:] != (self.n_nodes, N_FEATURES):
            raise ShapeMismatch(f"expected frames of shape ({self.n_nodes}, 4), got {X.shape[-2:]}")
        out, _ = self._forward(batch)
        return out[0] if X.ndim == 2 else out

    def loss_and_grads(self, frames: np.ndarray) -> tuple[float, list[np.ndarray]]:
        frames = np.asarray(frames, dtype=float)
        out, caches = self._forward(frames)
        diff = out - frames
        loss = float(np.mean(diff * diff))
        g = 2.0 * diff / diff.size
        grads = []
        for layer, (h, P, M, act_out) in zip(reversed(self.layers), reversed(caches)):
            dZ = _act_grad(act_out, g, layer.activation)
            B, N, F = dZ.shape
            dZ_flat = dZ.transpose(1, 0, 2).reshape(N, B * F)
            dP = dZ_flat @ M.transpose(1, 0, 2).reshape(N, B * F).T
            dU = dP @ self.a_hat.T
            dM = _node_matmul(P.T, dZ)
            dW = h.reshape(-1, h.shape[-1]).T @ dM.reshape(-1, F)
            dB = dZ.sum(axis=0)
            g = dM @ layer.W.T
            grads.append([dU, dW, dB])
        flat = [x for layer_grads in reversed(grads) for x in layer_grads]
        return loss, flat

    def reconstruct_frames(self, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X_hat = self.forward(frames)
        return X_hat, (X_hat - frames) ** 2

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_nodes": self.n_nodes,
            "a_hat": self.a_hat.tolist(),
            "layers": [
                {"activation": l.activation, "shape": list(l.shape),
                 "U": l.U.tolist(), "W": l.W.tolist(), "B": l.B.tolist()}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaeModel":
        layers = [GcnLayer(np.asarray(l["U"], float), np.asarray(l["W"], float),
                           np.asarray(l["B"], float), l["activation"]) for l in d["layers"]]
        return cls(layers, np.asarray(d["a_hat"], float))


def gae_reconstruct(model: GaeModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reconstruction of one frame and its entrywise squared error."""
    return model.reconstruct_frames(X)


# -- vector auto-encoder ----------------------------------------------------------

@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "tanh"


class VaeModel:
    """Dense auto-encoder on vec(X): 4N -> 3N (tanh) -> 4N (tanh) -> 4N (linear)."""

    kind = "vae"

    def __init__(self, layers: list[DenseLayer]):
        if len(layers) != 3:
            raise ValueError("a VAE has exactly three layers")
        self.layers = layers

    @classmethod
    def init(cls, n_nodes: int, seed: int = 0) -> "VaeModel":
        rng = np.random.default_rng(seed)
        d, h = N_FEATURES * n_nodes, 3 * n_nodes
        dims = [(d, h, "tanh"), (h, d, "tanh"), (d, d, "none")]
        return cls([DenseLayer(_glorot(rng, i, o), np.zeros(o), a) for i, o, a in dims])

    @property
    def n_nodes(self) -> int:
        return self.layers[0].W.shape[0] // N_FEATURES

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [(f"layers.{i}.{k}", v) for i, l in enumerate(self.layers)
                for k, v in (("W", l.W), ("b", l.b))]

    def _forward(self, x: np.ndarray):
        caches = []
        h = x
        for layer in self.layers:
            out = _act(h @ layer.W + layer.b, layer.activation)
            caches.append((h, out))
            h = out
        return h, caches

    def _flat(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=float)
        if frames.shape[-2:] != (self.n_nodes, N_FEATURES):
            raise ShapeMismatch(f"expected frames of shape ({self.n_nodes}, 4), got {frames.shape[-2:]}")
        return frames.reshape(*frames.shape[:-2], -1)

    def forward_vec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != N_FEATURES * self.n_nodes:
            raise ShapeMismatch(f"expected vectors of length {N_FEATURES * self.n_nodes}")
        out, _ = self._forward(np.atleast_2d(x))
        return out[0] if x.ndim == 1 else out

    def forward(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.forward_vec(self._flat(X)).reshape(X.shape)

    def loss_and_grads(self, frames: np.ndarray) -> tuple[float, list[np.ndarray]]:
        x = self._flat(frames).reshape(len(frames), -1)
        out, caches = self._forward(x)
        diff = out - x
        loss = float(np.mean(diff * diff))
        g = 2.0 * diff / diff.size
        grads = []
        for layer, (h, act_out) in zip(reversed(self.layers), reversed(caches)):
            dZ = _act_grad(act_out, g, layer.activation)
            grads.append([h.T @ dZ, dZ.sum(axis=0)])
            g = dZ @ layer.W.T
        return loss, [x for pair in reversed(grads) for x in pair]

    def reconstruct_frames(self, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X_hat = self.forward(frames)
        return X_hat, (X_hat - frames) ** 2

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_nodes": self.n_nodes,
            "layers": [{"activation": l.activation, "shape": list(l.W.shape),
                        "W": l.W.tolist(), "b": l.b.tolist()} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VaeModel":
        return cls([DenseLayer(np.asarray(l["W"], float), np.asarray(l["b"], float), l["activation"])
                    for l in d["layers"]])


def vae_reconstruct(model: VaeModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x_hat = model.forward_vec(x)
    return x_hat, (x_hat - x) ** 2


# -- PCA --------------------------------------------------------------------------

class RankDeficientWarning(UserWarning):
    pass


@dataclass
class PcaModel:
    """Mean vector and orthonormal principal directions (columns) of vec(X)."""

    mean: np.ndarray
    components: np.ndarray
    kind: str = field(default="pca", init=False)

    @property
    def n_nodes(self) -> int:
        return len(self.mean) // N_FEATURES

    def reconstruct_vec(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(x, dtype=float) - self.mean
        return self.mean + (c @ self.components) @ self.components.T

    def reconstruct_frames(self, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        frames = np.asarray(frames, dtype=float)
        if frames.shape[-2:] != (self.n_nodes, N_FEATURES):
            raise ShapeMismatch(f"expected frames of shape ({self.n_nodes}, 4), got {frames.shape[-2:]}")
        flat = frames.reshape(*frames.shape[:-2], -1)
        X_hat = self.reconstruct_vec(flat).reshape(frames.shape)
        return X_hat, (X_hat - frames) ** 2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_nodes": self.n_nodes, "mean": self.mean.tolist(),
                "components": self.components.tolist(),
                "shape": list(self.components.shape)}

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        comps = np.asarray(d["components"], float).reshape(d["shape"])
        return cls(np.asarray(d["mean"], float), comps)


def pca_fit(data: np.ndarray, n_components: Optional[int] = None, rank_tol: float = 1e-10) -> PcaModel:
    """Top principal directions of the rows of ``data`` (frames are flattened).

    ``n_components`` defaults to 3N. If the centred data has lower rank, only
    ``rank`` directions are kept (with a warning), so the component matrix
    may have fewer columns than requested.
    """
    data = np.asarray(data, dtype=float)
    x = data.reshape(len(data), -1)
    d = x.shape[1]
    k = 3 * (d // N_FEATURES) if n_components is None else int(n_components)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / max(len(x) - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    rank = int(np.sum(evals > rank_tol * max(evals[0], 0.0))) if evals.size and evals[0] > 0 else 0
    if rank < k:
        warnings.warn(f"data has rank {rank} < {k}; keeping {rank} components",
                      RankDeficientWarning, stacklevel=2)
        k = rank
    return PcaModel(mean=mean, components=evecs[:, :k].copy())


def pca_reconstruct(model: PcaModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    x_hat = model.reconstruct_vec(x)
    return x_hat, (x_hat - x) ** 2


# -- training ---------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 200
    patience: int = 20
    seed: int = 0


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def train(model, frames: np.ndarray, config: TrainConfig = TrainConfig(),
          val_frames: Optional[np.ndarray] = None) -> TrainHistory:
    """Full-batch Adam on the mean squared reconstruction error, in place.

    With validation frames, training stops after ``patience`` epochs without
    a validation improvement and the best parameters are restored.
    """
    frames = np.asarray(frames, dtype=float)
    params = [p for _, p in model.named_params()]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    hist = TrainHistory()
    best_val, best_params, since_best = np.inf, None, 0
    for epoch in range(config.epochs):
        loss, grads = model.loss_and_grads(frames)
        if not np.isfinite(loss):
            norms = {name: float(np.linalg.norm(p)) for name, p in model.named_params()}
            raise NonFiniteLoss(f"{model.kind}: loss {loss} at epoch {epoch}; parameter norms {norms}")
        hist.loss.append(loss)
        step = epoch + 1
        c1, c2 = 1 - config.beta1 ** step, 1 - config.beta2 ** step
        for p, g, mi, vi in zip(params, grads, m, v):
            mi *= config.beta1
            mi += (1 - config.beta1) * g
            vi *= config.beta2
            vi += (1 - config.beta2) * g * g
            p -= config.lr * (mi / c1) / (np.sqrt(vi / c2) + config.eps)
        if val_frames is not None:
            val = float(np.mean(model.reconstruct_frames(val_frames)[1]))
            hist.val_loss.append(val)
            if val < best_val:
                best_val, since_best, hist.best_epoch = val, 0, epoch
                best_params = [p.copy() for p in params]
            else:
                since_best += 1
                if since_best >= config.patience:
                    hist.stopped_early = True
                    break
    if best_params is not None:
        for p, best in zip(params, best_params):
            p[...] = best
    return hist


def gae_train(model: GaeModel, frames, config: TrainConfig = TrainConfig(), val_frames=None) -> TrainHistory:
    return train(model, frames, config, val_frames)


def vae_train(model: VaeModel, frames, config: TrainConfig = TrainConfig(), val_frames=None) -> TrainHistory:
    return train(model, frames, config, val_frames)


# -- checkpoints ------------------------------------------------------------------

_KINDS = {"gae": GaeModel, "vae": VaeModel, "pca": PcaModel}


def save_checkpoint(path, model, config: Optional[TrainConfig] = None, seed: Optional[int] = None,
                    **extra) -> None:
    payload = {"model": model.to_dict(), "train_config": asdict(config) if config else None,
               "seed": seed}
    payload.update(extra)
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text())
    d = payload["model"]
    return _KINDS[d["kind"]].from_dict(d), payload
