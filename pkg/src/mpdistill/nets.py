"""Small feed-forward approximators with explicit reverse-mode gradients.

Weights live in one flat float64 vector (the checkpoint format is a spec
header plus that array); per-layer matrices are views into it. Forward and
backward go through the kernel backend so the same code path serves the
compiled extension and the numpy fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class ApproximatorSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    activation: str = "gelu"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1 or not self.hidden_dims:
            raise ValueError("all dims must be >= 1 and hidden_dims nonempty")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden dims must be >= 1")
        if self.activation not in _kernels.ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def param_count(self) -> int:
        dims = self.layer_dims
        return sum(dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ApproximatorSpec":
        d = dict(d)
        d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)


class ApproximatorWeights:
    """Flat parameter vector plus cached per-layer (W, b) views."""

    def __init__(self, spec: ApproximatorSpec, flat: np.ndarray):
        flat = np.ascontiguousarray(np.asarray(flat, dtype=np.float64))
        if flat.shape != (spec.param_count,):
            raise ValueError(f"expected {spec.param_count} parameters, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise ValueError("weights must be finite")
        self.spec = spec
        self.flat = flat
        self.layers = []
        dims = spec.layer_dims
        off = 0
        for i in range(len(dims) - 1):
            n_out, n_in = dims[i + 1], dims[i]
            W = flat[off : off + n_out * n_in].reshape(n_out, n_in)
            off += n_out * n_in
            b = flat[off : off + n_out]
            off += n_out
            self.layers.append((W, b))

    def with_flat(self, flat: np.ndarray) -> "ApproximatorWeights":
        return ApproximatorWeights(self.spec, flat)

    def copy(self) -> "ApproximatorWeights":
        return ApproximatorWeights(self.spec, self.flat.copy())


def init(spec: ApproximatorSpec) -> ApproximatorWeights:
    """Deterministic fan-in-scaled Gaussian init, zero biases."""
    rng = np.random.default_rng(spec.init_seed)
    dims = spec.layer_dims
    chunks = []
    for i in range(len(dims) - 1):
        n_out, n_in = dims[i + 1], dims[i]
        chunks.append(rng.standard_normal(n_out * n_in) / np.sqrt(n_in))
        chunks.append(np.zeros(n_out))
    return ApproximatorWeights(spec, np.concatenate(chunks))


@dataclass
class Tape:
    """Activation record from one forward pass (single sample or batch)."""

    weights: ApproximatorWeights
    inputs: list      # layer inputs a_0 .. a_{L-1}
    preacts: list     # pre-activations z_1 .. z_{L-1} (hidden layers only)
    batched: bool


def forward(w: ApproximatorWeights, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    """Evaluate the network on a single input vector."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.shape != (w.spec.input_dim,):
        raise ValueError(f"expected input shape ({w.spec.input_dim},), got {x.shape}")
    kind = _kernels.ACTIVATION_KINDS[w.spec.activation]
    inputs, preacts = [x], []
    a = x
    n_layers = len(w.layers)
    for i, (W, b) in enumerate(w.layers):
        z = _kernels.dense_fwd(W, b, a)
        if i < n_layers - 1:
            preacts.append(z)
            a = _kernels.act_fwd(kind, z)
            inputs.append(a)
        else:
            a = z
    return a, Tape(weights=w, inputs=inputs, preacts=preacts, batched=False)


def forward_batch(w: ApproximatorWeights, X: np.ndarray) -> tuple[np.ndarray, Tape]:
    """Evaluate the network row-wise on a (B, input_dim) batch."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != w.spec.input_dim:
        raise ValueError(f"expected (B, {w.spec.input_dim}) batch, got {X.shape}")
    kind = _kernels.ACTIVATION_KINDS[w.spec.activation]
    inputs, preacts = [X], []
    A = X
    n_layers = len(w.layers)
    for i, (W, b) in enumerate(w.layers):
        Z = _kernels.dense_fwd_batch(W, b, A)
        if i < n_layers - 1:
            preacts.append(Z)
            A = np.ascontiguousarray(
                _kernels.act_fwd(kind, Z.reshape(-1)).reshape(Z.shape)
            )
            inputs.append(A)
        else:
            A = Z
    return A, Tape(weights=w, inputs=inputs, preacts=preacts, batched=True)


def backward(
    w: ApproximatorWeights, tape: Tape, grad_output: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exact reverse-mode gradients of grad_output . output.

    Returns (flat weight gradients, input gradient). The tape must come
    from a forward pass of the same weights object.
    """
    if tape.weights is not w:
        raise ValueError("stale tape: weights do not match the forward pass")
    kind = _kernels.ACTIVATION_KINDS[w.spec.activation]
    g = np.ascontiguousarray(np.asarray(grad_output, dtype=np.float64))
    grads = np.zeros_like(w.flat)
    gw = ApproximatorWeights(w.spec, grads)  # reuse view bookkeeping
    n_layers = len(w.layers)
    for i in range(n_layers - 1, -1, -1):
        W, _ = w.layers[i]
        dW_view, db_view = gw.layers[i]
        a_in = tape.inputs[i]
        if tape.batched:
            dA, dW, db = _kernels.dense_bwd_batch(W, a_in, g)
        else:
            dA, dW, db = _kernels.dense_bwd(W, a_in, g)
        dW_view[...] = dW
        db_view[...] = db
        if i > 0:
            z = tape.preacts[i - 1]
            if tape.batched:
                g = np.ascontiguousarray(
                    _kernels.act_bwd(kind, z.reshape(-1), dA.reshape(-1)).reshape(z.shape)
                )
            else:
                g = _kernels.act_bwd(kind, z, dA)
        else:
            g = dA
    return grads, g


@dataclass(frozen=True)
class OptimizerState:
    """Adam accumulators; step counts applied updates."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int
    m: np.ndarray
    v: np.ndarray


def init_optimizer(
    w: ApproximatorWeights, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> OptimizerState:
    return OptimizerState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
        m=np.zeros_like(w.flat), v=np.zeros_like(w.flat),
    )


def optimizer_step(
    state: OptimizerState, w: ApproximatorWeights, grads: np.ndarray
) -> tuple[OptimizerState, ApproximatorWeights]:
    """One bias-corrected adaptive-moment update; returns new state/weights."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != w.flat.shape:
        raise ValueError("gradient shape mismatch")
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradient; aborting update")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_flat = w.flat - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, step=t, m=m, v=v), w.with_flat(new_flat)


def noise_embedding(t: float, width: int = 16) -> np.ndarray:
    """Log-scaled sinusoidal features of a noise level.

    The lowest frequency completes less than one period over the usable
    log-level range, so the embedding is injective on any finite schedule.
    """
    if width % 2 != 0 or width < 2:
        raise ValueError("embedding width must be a positive even number")
    if not t > 0:
        raise ValueError(f"noise level must be positive, got {t}")
    u = np.log(float(t))
    half = width // 2
    freqs = np.exp(np.linspace(np.log(0.25), np.log(8.0), half))
    return np.concatenate([np.sin(u * freqs), np.cos(u * freqs)])


def noise_embedding_batch(ts: np.ndarray, width: int = 16) -> np.ndarray:
    ts = np.asarray(ts, dtype=np.float64)
    if np.any(ts <= 0):
        raise ValueError("noise levels must be positive")
    half = width // 2
    freqs = np.exp(np.linspace(np.log(0.25), np.log(8.0), half))
    u = np.log(ts)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(u), np.cos(u)], axis=1)
