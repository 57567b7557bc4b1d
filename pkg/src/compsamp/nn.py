"""Minimal feed-forward network with exact reverse-mode gradients and Adam.

Everything is plain numpy in double precision.  The same machinery backs both
the noise-prediction network and the compensation module; the only structural
options are the layer widths, the hidden activation, and an optional
zero-initialized output layer (used so the compensation module starts as an
exact no-op).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("silu", "relu")

CKPT_MAGIC = b"CSDM"
CKPT_VERSION = 1
_ACT_TAGS = {"silu": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_TAGS.items()}


class CheckpointFormatError(ValueError):
    """Malformed checkpoint file; message carries the failing byte offset."""


@dataclass
class MlpParams:
    layer_dims: list[int]
    weights: list[np.ndarray]  # weights[i] has shape (dims[i+1], dims[i])
    biases: list[np.ndarray]
    activation: str = "silu"

    def copy(self) -> "MlpParams":
        return MlpParams(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )

    def digest(self) -> str:
        """Stable content hash; used for no-mutation checks."""
        h = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(w).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()


@dataclass
class AdamState:
    step_count: int = 0
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)


def adam_init(p: MlpParams, lr: float = 2e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps_hat: float = 1e-8) -> AdamState:
    return AdamState(
        step_count=0, lr=lr, beta1=beta1, beta2=beta2, eps_hat=eps_hat,
        m_w=[np.zeros_like(w) for w in p.weights],
        v_w=[np.zeros_like(w) for w in p.weights],
        m_b=[np.zeros_like(b) for b in p.biases],
        v_b=[np.zeros_like(b) for b in p.biases],
    )


def mlp_init(layer_dims: list[int], seed: int, activation: str = "silu",
             zero_last: bool = False) -> MlpParams:
    """Initialize weights ~ N(0, 1/fan_in), biases zero, deterministically.

    ``zero_last`` zeroes the output layer so the net is identically zero at
    initialization regardless of the earlier layers.
    """
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise ValueError("layer_dims needs >= 2 positive entries")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    if zero_last:
        weights[-1][:] = 0.0
    return MlpParams(layer_dims=list(layer_dims), weights=weights,
                     biases=biases, activation=activation)


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    sig = 1.0 / (1.0 + np.exp(-x))
    return x * sig


def _act_grad(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (x > 0.0).astype(np.float64)
    sig = 1.0 / (1.0 + np.exp(-x))
    return sig * (1.0 + x * (1.0 - sig))


def mlp_forward(p: MlpParams, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single vector or a (n, d_in) batch."""
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != p.layer_dims[0]:
        raise ValueError(
            f"input dim {x.shape[1]} does not match layer_dims[0]={p.layer_dims[0]}")
    n_layers = len(p.weights)
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        x = x @ w.T + b
        if i < n_layers - 1:
            x = _act(x, p.activation)
    return x[0] if single else x


def mlp_grad(
    p: MlpParams,
    batch_inputs: np.ndarray,
    batch_targets: np.ndarray,
    loss: str = "mean-squared",
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Loss (averaged over batch and coordinates) and its exact gradients.

    ``loss`` is ``"mean-squared"`` or ``"mean-absolute"``; for the latter the
    subgradient at a zero residual is 0.  Returns (loss, grad_weights,
    grad_biases) with grads shaped like the parameters.
    """
    x = np.asarray(batch_inputs, dtype=np.float64)
    y = np.asarray(batch_targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch_inputs must be a non-empty (n, d_in) array")
    if y.shape != (x.shape[0], p.layer_dims[-1]):
        raise ValueError(f"targets shape {y.shape} inconsistent with batch")
    if loss not in ("mean-squared", "mean-absolute"):
        raise ValueError(f"unknown loss {loss!r}")

    n_layers = len(p.weights)
    pre, post = [], [x]
    h = x
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = _act(z, p.activation) if i < n_layers - 1 else z
        post.append(h)

    resid = post[-1] - y
    denom = resid.size
    if loss == "mean-squared":
        loss_val = float(np.mean(resid**2))
        delta = 2.0 * resid / denom
    else:
        loss_val = float(np.mean(np.abs(resid)))
        delta = np.sign(resid) / denom

    grad_w = [np.empty(0)] * n_layers
    grad_b = [np.empty(0)] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = delta.T @ post[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ p.weights[i]) * _act_grad(pre[i - 1], p.activation)
    return loss_val, grad_w, grad_b


def adam_step(p: MlpParams, grad_w: list[np.ndarray], grad_b: list[np.ndarray],
              st: AdamState) -> None:
    """Standard bias-corrected Adam update, in place on params and state."""
    if len(grad_w) != len(p.weights) or len(grad_b) != len(p.biases):
        raise ValueError("gradient structure does not match parameters")
    st.step_count += 1
    c1 = 1.0 - st.beta1**st.step_count
    c2 = 1.0 - st.beta2**st.step_count
    for i in range(len(p.weights)):
        if grad_w[i].shape != p.weights[i].shape or grad_b[i].shape != p.biases[i].shape:
            raise ValueError(f"gradient shape mismatch at layer {i}")
        for param, grad, m, v in (
            (p.weights[i], grad_w[i], st.m_w[i], st.v_w[i]),
            (p.biases[i], grad_b[i], st.m_b[i], st.v_b[i]),
        ):
            m *= st.beta1
            m += (1.0 - st.beta1) * grad
            v *= st.beta2
            v += (1.0 - st.beta2) * grad**2
            param -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps_hat)


def time_embedding(t, dim: int, t_max: int) -> np.ndarray:
    """Sinusoidal features of the normalized time t/t_max.

    Frequencies are geometrically spaced as 10000^(-2k/dim).  ``t`` may be a
    scalar (returns a ``dim`` vector) or an array of shape (n,) (returns
    (n, dim)).
    """
    if dim < 2 or dim % 2 != 0:
        raise ValueError("embedding dim must be a positive even integer")
    t_arr = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = 10000.0 ** (-2.0 * np.arange(half) / dim)
    phase = (t_arr[..., None] / t_max) * freqs
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


# -- checkpoint persistence ---------------------------------------------------
#
# Layout (little-endian): magic "CSDM", version u16, layer count u32, layer
# dims u32 each, activation tag u8, per layer W then b as f64, then Adam state
# (step_count u64, lr/beta1/beta2/eps_hat f64, first moments in the same
# per-layer layout, then second moments), then an 8-byte checksum of all
# preceding bytes.


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def save_checkpoint(p: MlpParams, st: AdamState, path) -> None:
    parts = [CKPT_MAGIC, struct.pack("<H", CKPT_VERSION)]
    parts.append(struct.pack("<I", len(p.layer_dims)))
    parts.append(struct.pack(f"<{len(p.layer_dims)}I", *p.layer_dims))
    parts.append(struct.pack("<B", _ACT_TAGS[p.activation]))
    for w, b in zip(p.weights, p.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    parts.append(struct.pack("<Q", st.step_count))
    parts.append(struct.pack("<4d", st.lr, st.beta1, st.beta2, st.eps_hat))
    for moments in (st.m_w, st.m_b), (st.v_w, st.v_b):
        mw, mb = moments
        for w, b in zip(mw, mb):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(_checksum(payload))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointFormatError(
                f"truncated checkpoint: needed {n} bytes for {what} "
                f"at byte offset {self.offset}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def array(self, shape: tuple[int, ...], what: str) -> np.ndarray:
        n = int(np.prod(shape)) * 8
        raw = self.take(n, what)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def load_checkpoint(path, expect_dims: list[int] | None = None
                    ) -> tuple[MlpParams, AdamState]:
    """Read a checkpoint; ``expect_dims`` enforces a layer-dim match."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise CheckpointFormatError("truncated checkpoint: shorter than the "
                                    "8-byte checksum at byte offset 0")
    payload, stored = data[:-8], data[-8:]
    if _checksum(payload) != stored:
        raise CheckpointFormatError(
            f"checksum mismatch at byte offset {len(payload)}")
    r = _Reader(payload)
    if r.take(4, "magic") != CKPT_MAGIC:
        raise CheckpointFormatError("bad magic at byte offset 0")
    (version,) = struct.unpack("<H", r.take(2, "version"))
    if version != CKPT_VERSION:
        raise CheckpointFormatError(
            f"unsupported format version {version} at byte offset 4")
    (n_dims,) = struct.unpack("<I", r.take(4, "layer count"))
    if n_dims < 2:
        raise CheckpointFormatError(
            f"layer count {n_dims} < 2 at byte offset 6")
    dims = list(struct.unpack(f"<{n_dims}I", r.take(4 * n_dims, "layer dims")))
    if expect_dims is not None and dims != list(expect_dims):
        raise ValueError(
            f"checkpoint layer dims {dims} do not match expected {list(expect_dims)}")
    (act_tag,) = struct.unpack("<B", r.take(1, "activation tag"))
    if act_tag not in _ACT_NAMES:
        raise CheckpointFormatError(
            f"unknown activation tag {act_tag} at byte offset {r.offset - 1}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(r.array((fan_out, fan_in), "weights"))
        biases.append(r.array((fan_out,), "biases"))
    p = MlpParams(layer_dims=dims, weights=weights, biases=biases,
                  activation=_ACT_NAMES[act_tag])
    (step_count,) = struct.unpack("<Q", r.take(8, "adam step count"))
    lr, beta1, beta2, eps_hat = struct.unpack("<4d", r.take(32, "adam hyperparams"))
    st = AdamState(step_count=step_count, lr=lr, beta1=beta1, beta2=beta2,
                   eps_hat=eps_hat)
    for mw, mb in (st.m_w, st.m_b), (st.v_w, st.v_b):
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            mw.append(r.array((fan_out, fan_in), "adam moments"))
            mb.append(r.array((fan_out,), "adam moments"))
    if r.offset != len(payload):
        raise CheckpointFormatError(
            f"{len(payload) - r.offset} trailing bytes at byte offset {r.offset}")
    return p, st
