"""Small dense-network engine: forward, exact backprop, Adam, soft updates.

Everything is float64 numpy. Inputs are batched row-wise: ``x`` has shape
``(N, in)`` (a 1-D vector is treated as a batch of one) and layer ``i``
computes ``x @ W_i + b_i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument

CHECKPOINT_VERSION = 1
OUTPUT_ACTIVATIONS = ("identity", "tanh")


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]
    output_activation: str = "identity"  # "tanh" bounds outputs to (-1, 1)

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise InvalidArgument(f"need >= 2 positive layer sizes, got {self.layer_sizes}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise InvalidArgument(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]


@dataclass(eq=False)
class ParameterSet:
    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved, in a fixed order shared by gradients and moments."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def equals(self, other: "ParameterSet") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_params(spec: NetworkSpec, seed: int) -> ParameterSet:
    """Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights and zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ParameterSet(spec, weights, biases)


def _as_batch(params, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.spec.n_in:
        raise InvalidArgument(f"input has shape {x.shape}, network expects (*, {params.spec.n_in})")
    return x


def forward_cached(params: ParameterSet, x):
    """Forward pass that also returns the per-layer inputs and pre-activations."""
    h = _as_batch(params, x)
    inputs, pre = [], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
        elif params.spec.output_activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
    return h, (inputs, pre, h)


def forward(params: ParameterSet, x) -> np.ndarray:
    out, _ = forward_cached(params, x)
    return out[0] if np.ndim(x) == 1 else out


def backward(params: ParameterSet, x, output_gradient, cache=None):
    """Reverse-mode gradients of ``sum(output * output_gradient)``.

    Returns ``(grads, input_gradient)`` where ``grads`` is aligned with
    :meth:`ParameterSet.arrays`. Gradients are summed over the batch.
    """
    if cache is None:
        _, cache = forward_cached(params, x)
    inputs, pre, out = cache
    g = np.asarray(output_gradient, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != out.shape:
        raise InvalidArgument(f"output gradient shape {g.shape} does not match output {out.shape}")
    if params.spec.output_activation == "tanh":
        g = g * (1.0 - out * out)
    n_layers = len(params.weights)
    grads = [None] * (2 * n_layers)
    for i in range(n_layers - 1, -1, -1):
        if i < n_layers - 1:
            g = g * (pre[i] > 0)
        grads[2 * i] = inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ params.weights[i].T
    input_grad = g[0] if np.ndim(x) == 1 else g
    return grads, input_grad


@dataclass
class OptimizerState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: ParameterSet, lr: float, **kw) -> "OptimizerState":
        arrays = params.arrays()
        return cls(lr, m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays], **kw)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads, clip_norm: float):
    norm = global_norm(grads)
    if np.isfinite(clip_norm) and norm > clip_norm:
        scale = clip_norm / norm
        return [g * scale for g in grads], norm
    return list(grads), norm


def adam_step(params: ParameterSet, grads, opt: OptimizerState, clip_norm: float = np.inf):
    """One bias-corrected Adam descent step, in place. Returns ``(params, opt)``."""
    if not clip_norm > 0:
        raise InvalidArgument(f"clip_norm must be positive, got {clip_norm}")
    arrays = params.arrays()
    if len(grads) != len(arrays) or any(g.shape != a.shape for g, a in zip(grads, arrays)):
        raise InvalidArgument("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise FloatingPointError("non-finite gradient")
    grads, _ = clip_by_global_norm(grads, clip_norm)
    opt.step += 1
    c1 = 1.0 - opt.beta1**opt.step
    c2 = 1.0 - opt.beta2**opt.step
    for a, g, m, v in zip(arrays, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        a -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return params, opt


def soft_update(target: ParameterSet, online: ParameterSet, omega: float) -> ParameterSet:
    """Polyak update ``target <- omega * online + (1 - omega) * target``, in place."""
    if not 0.0 <= omega <= 1.0:
        raise InvalidArgument(f"omega must lie in [0, 1], got {omega}")
    ta, oa = target.arrays(), online.arrays()
    if len(ta) != len(oa) or any(a.shape != b.shape for a, b in zip(ta, oa)):
        raise InvalidArgument("target and online parameter shapes differ")
    for t, o in zip(ta, oa):
        t *= 1.0 - omega
        t += omega * o
    return target


def save_checkpoint(path, params: ParameterSet, seed: int, extra: dict | None = None) -> Path:
    """Write an ``.npz`` checkpoint; layout is documented in the README."""
    path = Path(path)
    meta = {
        "format": "edgemig-params",
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(params.spec.layer_sizes),
        "output_activation": params.spec.output_activation,
        "seed": int(seed),
        "extra": extra or {},
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[ParameterSet, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "edgemig-params" or meta.get("version") != CHECKPOINT_VERSION:
            raise InvalidArgument(f"unsupported checkpoint {path}: {meta.get('format')} v{meta.get('version')}")
        spec = NetworkSpec(tuple(meta["layer_sizes"]), meta["output_activation"])
        n = len(spec.layer_sizes) - 1
        params = ParameterSet(spec, [data[f"W{i}"].copy() for i in range(n)],
                              [data[f"b{i}"].copy() for i in range(n)])
    return params, meta
