"""Shared-backbone MLP with policy and value heads, hand-written backprop and Adam.

Shapes: hidden weights are ``(fan_in, fan_out)`` and activations are row
vectors, so a batch of inputs is a 2-D array with one state per row.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import NumericError, UsageError

DEFAULT_ARCHITECTURES: tuple[tuple[int, ...], ...] = (
    (64,), (64, 64), (128, 128), (64, 64, 64), (128, 128, 128),
)


@dataclass(frozen=True)
class Architecture:
    hidden_widths: tuple[int, ...]
    input_dim: int = 16
    action_dim: int = 4

    def __post_init__(self):
        widths = tuple(int(w) for w in self.hidden_widths)
        if not widths or any(w < 1 for w in widths):
            raise UsageError(f"hidden widths must be non-empty and positive: {self.hidden_widths!r}")
        if self.input_dim < 1 or self.action_dim < 1:
            raise UsageError("input_dim and action_dim must be positive")
        object.__setattr__(self, "hidden_widths", widths)

    @property
    def label(self) -> str:
        return "-".join(str(w) for w in self.hidden_widths)

    def tensor_shapes(self) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        fan_in = self.input_dim
        for w in self.hidden_widths:
            shapes += [(fan_in, w), (w,)]
            fan_in = w
        shapes += [(fan_in, self.action_dim), (self.action_dim,), (fan_in,), ()]
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.tensor_shapes())


@dataclass
class NetworkParams:
    """Backbone layers plus policy head ``(Wp, bp)`` and value head ``(wv, bv)``."""

    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    policy_w: np.ndarray
    policy_b: np.ndarray
    value_w: np.ndarray
    value_b: np.ndarray  # 0-d

    def tensors(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out + [self.policy_w, self.policy_b, self.value_w, self.value_b]

    def tensor_names(self) -> list[str]:
        names: list[str] = []
        for i in range(len(self.weights)):
            names += [f"hidden{i}.weight", f"hidden{i}.bias"]
        return names + ["policy.weight", "policy.bias", "value.weight", "value.bias"]

    @classmethod
    def from_tensors(cls, arch: Architecture, tensors: list[np.ndarray]) -> "NetworkParams":
        shapes = arch.tensor_shapes()
        if len(tensors) != len(shapes) or any(t.shape != s for t, s in zip(tensors, shapes)):
            raise UsageError("tensor list does not match architecture")
        n = len(arch.hidden_widths)
        return cls(arch, list(tensors[0:2 * n:2]), list(tensors[1:2 * n:2]), *tensors[2 * n:])

    def copy(self) -> "NetworkParams":
        return NetworkParams.from_tensors(self.arch, [t.copy() for t in self.tensors()])

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def is_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors())


# Gradients share the exact layout of the parameters they differentiate.
Gradients = NetworkParams


def zeros_like(params: NetworkParams) -> NetworkParams:
    return NetworkParams.from_tensors(params.arch, [np.zeros_like(t) for t in params.tensors()])


def init_params(arch: Architecture, rng: np.random.Generator) -> NetworkParams:
    """He-uniform backbone, zero biases, and exactly-zero heads (uniform initial policy)."""
    tensors: list[np.ndarray] = []
    fan_in = arch.input_dim
    for w in arch.hidden_widths:
        bound = np.sqrt(6.0 / fan_in)
        tensors += [rng.uniform(-bound, bound, size=(fan_in, w)), np.zeros(w)]
        fan_in = w
    tensors += [np.zeros((fan_in, arch.action_dim)), np.zeros(arch.action_dim),
                np.zeros(fan_in), np.zeros(())]
    return NetworkParams.from_tensors(arch, tensors)


@dataclass
class ForwardPass:
    inputs: np.ndarray             # (batch, input_dim)
    pre: list[np.ndarray]          # hidden pre-activations
    post: list[np.ndarray]         # hidden activations
    policy_logits: np.ndarray      # (batch, action_dim)
    value: np.ndarray              # (batch,)
    batched: bool = True

    @property
    def logits(self) -> np.ndarray:
        return self.policy_logits if self.batched else self.policy_logits[0]

    @property
    def v(self):
        return self.value if self.batched else float(self.value[0])


def forward(params: NetworkParams, x: np.ndarray) -> ForwardPass:
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = x if batched else x[None, :]
    if h.shape[1] != params.arch.input_dim:
        raise UsageError(f"input has {h.shape[1]} features, expected {params.arch.input_dim}")
    if not np.isfinite(h).all():
        raise NumericError("non-finite network input")
    inputs = h
    pre, post = [], []
    for w, b in zip(params.weights, params.biases):
        z = h @ w + b
        h = np.maximum(z, 0.0)
        pre.append(z)
        post.append(h)
    logits = h @ params.policy_w + params.policy_b
    value = h @ params.value_w + params.value_b
    return ForwardPass(inputs, pre, post, logits, value, batched)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def backward(fp: ForwardPass, params: NetworkParams, d_logits: np.ndarray, d_value) -> Gradients:
    """Gradient of ``sum(d_logits * logits) + sum(d_value * value)`` w.r.t. every parameter."""
    d_logits = np.asarray(d_logits, dtype=np.float64)
    d_value = np.asarray(d_value, dtype=np.float64)
    if not fp.batched and d_logits.ndim == 1 and d_value.ndim == 0:
        d_logits, d_value = d_logits[None, :], d_value[None]
    if d_logits.shape != fp.policy_logits.shape or d_value.shape != fp.value.shape:
        raise UsageError("upstream gradient shape does not match forward pass")

    last = fp.post[-1]
    g_pw = last.T @ d_logits
    g_pb = d_logits.sum(axis=0)
    g_vw = last.T @ d_value
    g_vb = np.asarray(d_value.sum())
    dh = d_logits @ params.policy_w.T + np.outer(d_value, params.value_w)

    g_w: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    g_b: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    for i in range(len(params.weights) - 1, -1, -1):
        dz = dh * (fp.pre[i] > 0.0)
        below = fp.post[i - 1] if i > 0 else fp.inputs
        g_w[i] = below.T @ dz
        g_b[i] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ params.weights[i].T
    return NetworkParams(params.arch, g_w, g_b, g_pw, g_pb, g_vw, g_vb)


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def create(cls, params: NetworkParams, learning_rate: float = 1e-3, beta1: float = 0.9,
               beta2: float = 0.999, epsilon: float = 1e-8) -> "OptimizerState":
        zeros = [np.zeros_like(t) for t in params.tensors()]
        return cls([z.copy() for z in zeros], zeros, 0, learning_rate, beta1, beta2, epsilon)


def optimizer_step(params: NetworkParams, grads: Gradients,
                   opt: OptimizerState) -> tuple[NetworkParams, OptimizerState]:
    """One Adam update; returns new params and state, inputs are left untouched."""
    g_list = grads.tensors()
    p_list = params.tensors()
    if len(g_list) != len(p_list) or any(g.shape != p.shape for g, p in zip(g_list, p_list)):
        raise UsageError("gradient shapes do not match parameters")
    if not all(np.isfinite(g).all() for g in g_list):
        raise NumericError("non-finite gradient passed to optimizer")
    t = opt.step + 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_list, g_list, opt.m, opt.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - opt.learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.epsilon))
        new_m.append(m)
        new_v.append(v)
    state = OptimizerState(new_m, new_v, t, opt.learning_rate, b1, b2, opt.epsilon)
    return NetworkParams.from_tensors(params.arch, new_p), state


# ---------------------------------------------------------------------------
# gradient checking

@dataclass
class GradcheckReport:
    arch: Architecture
    trials: int
    checked: int
    max_rel_error: float
    worst: str = ""

    def line(self) -> str:
        return (f"arch [{', '.join(map(str, self.arch.hidden_widths))}]: {self.trials} trials, "
                f"{self.checked} components, max rel err {self.max_rel_error:.3e} at {self.worst}")


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _random_params(arch: Architecture, rng: np.random.Generator) -> NetworkParams:
    tensors = [rng.normal(0.0, 1.0 / np.sqrt(s[0]) if len(s) == 2 else 0.5, size=s)
               for s in arch.tensor_shapes()]
    return NetworkParams.from_tensors(arch, tensors)


def _probe_indices(size: int, per_tensor: int, rng: np.random.Generator) -> Iterator[int]:
    if size <= per_tensor:
        yield from range(size)
    else:
        yield from rng.choice(size, per_tensor, replace=False)


def gradcheck(arch: Architecture, trials: int, rng: np.random.Generator, h: float = 1e-5,
              per_tensor: int = 12, batch: int = 3) -> GradcheckReport:
    """Compare ``backward`` against central differences on random nets.

    Each trial draws fresh parameters, a batch of inputs and upstream signals,
    then probes up to ``per_tensor`` components of every tensor.
    """
    if trials < 1:
        raise UsageError("gradcheck needs at least one trial")
    worst, where, checked = 0.0, "", 0
    for trial in range(trials):
        params = _random_params(arch, rng)
        x = rng.normal(size=(batch, arch.input_dim))
        d_logits = rng.normal(size=(batch, arch.action_dim))
        d_value = rng.normal(size=batch)

        def objective(p: NetworkParams) -> float:
            fp = forward(p, x)
            return float(np.sum(d_logits * fp.policy_logits) + np.dot(d_value, fp.value))

        grads = backward(forward(params, x), params, d_logits, d_value)
        for name, p, g in zip(params.tensor_names(), params.tensors(), grads.tensors()):
            pf, gf = p.reshape(-1), g.reshape(-1)
            for k in _probe_indices(pf.size, per_tensor, rng):
                old = pf[k]
                pf[k] = old + h
                up = objective(params)
                pf[k] = old - h
                down = objective(params)
                pf[k] = old
                err = relative_error(float(gf[k]), (up - down) / (2 * h))
                checked += 1
                if err > worst:
                    worst, where = err, f"trial {trial} {name}[{k}]"
    return GradcheckReport(arch, trials, checked, worst, where)


# ---------------------------------------------------------------------------
# checkpoints: one ASCII descriptor line, then float64 little-endian values

def save_params(params: NetworkParams, path: str | Path) -> None:
    a = params.arch
    header = (f"ddlab-params input={a.input_dim} hidden={','.join(map(str, a.hidden_widths))} "
              f"actions={a.action_dim}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(params.flat().astype("<f8").tobytes())


def load_params(path: str | Path) -> NetworkParams:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        payload = fh.read()
    if not header or header[0] != "ddlab-params":
        raise UsageError(f"{path}: not a parameter checkpoint")
    fields = dict(item.split("=", 1) for item in header[1:])
    arch = Architecture(tuple(int(w) for w in fields["hidden"].split(",")),
                        int(fields["input"]), int(fields["actions"]))
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if values.size != arch.n_params():
        raise UsageError(f"{path}: expected {arch.n_params()} values, found {values.size}")
    tensors, offset = [], 0
    for shape in arch.tensor_shapes():
        n = int(np.prod(shape))
        tensors.append(values[offset:offset + n].reshape(shape).copy())
        offset += n
    return NetworkParams.from_tensors(arch, tensors)
