"""Small numpy networks with hand-written backward passes.

A :class:`NetworkSpec` lists layers in order; a :class:`Network` owns a flat
parameter vector laid out layer by layer (weights row-major, then bias).
Every forward call returns a cache tagged with the parameter version it
was computed from, so a backward pass against parameters that have since
changed raises :class:`StaleCache` instead of silently mixing them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = "flexmarl-params"
CHECKPOINT_VERSION = 1


class StaleCache(RuntimeError):
    pass


@dataclass(frozen=True)
class Dense:
    n_in: int
    n_out: int
    kind: str = field(default="dense", init=False)

    def param_count(self) -> int:
        return self.n_in * self.n_out + self.n_out

    def out_size(self, n_in: int) -> int:
        if n_in != self.n_in:
            raise ValueError(f"dense layer expects {self.n_in} inputs, got {n_in}")
        return self.n_out


@dataclass(frozen=True)
class Conv1D:
    """Kernel-3, stride-1, zero same-padded convolution.

    The first ``in_channels * length`` inputs are read channel-major as a
    signal; any further ``passthrough`` inputs are appended to the flattened
    output untouched.
    """

    in_channels: int
    out_channels: int
    length: int
    passthrough: int = 0
    kind: str = field(default="conv1d", init=False)
    kernel: int = field(default=3, init=False)

    def param_count(self) -> int:
        return self.out_channels * self.in_channels * self.kernel + self.out_channels

    def out_size(self, n_in: int) -> int:
        if n_in != self.in_channels * self.length + self.passthrough:
            raise ValueError(f"conv layer expects {self.in_channels * self.length + self.passthrough} "
                             f"inputs, got {n_in}")
        return self.out_channels * self.length + self.passthrough


@dataclass(frozen=True)
class Activation:
    """Elementwise activation; a tuple applies one kind per output column."""

    fn: str | tuple[str, ...]
    kind: str = field(default="activation", init=False)

    def param_count(self) -> int:
        return 0

    def out_size(self, n_in: int) -> int:
        if isinstance(self.fn, tuple) and len(self.fn) != n_in:
            raise ValueError(f"activation lists {len(self.fn)} kinds for {n_in} columns")
        return n_in


LAYER_TYPES = {"dense": Dense, "conv1d": Conv1D, "activation": Activation}


@dataclass(frozen=True)
class NetworkSpec:
    input_size: int
    layers: tuple
    init: str = "fan_in_uniform"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self.output_size  # validates composition

    @property
    def output_size(self) -> int:
        n = self.input_size
        for layer in self.layers:
            n = layer.out_size(n)
        return n

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def to_json(self) -> str:
        layers = []
        for layer in self.layers:
            d = {k: v for k, v in asdict(layer).items() if k != "kernel"}
            if isinstance(d.get("fn"), tuple):
                d["fn"] = list(d["fn"])
            layers.append(d)
        return json.dumps({"input_size": self.input_size, "init": self.init, "layers": layers},
                          sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        d = json.loads(text)
        layers = []
        for ld in d["layers"]:
            ld = dict(ld)
            kind = ld.pop("kind")
            if kind == "activation" and isinstance(ld["fn"], list):
                ld["fn"] = tuple(ld["fn"])
            layers.append(LAYER_TYPES[kind](**ld))
        return cls(d["input_size"], tuple(layers), d["init"])


def mlp_spec(sizes, hidden="relu", out="linear") -> NetworkSpec:
    """Dense stack through ``sizes`` with ``hidden`` activations between layers."""
    layers = []
    for k in range(len(sizes) - 1):
        layers.append(Dense(sizes[k], sizes[k + 1]))
        act = hidden if k < len(sizes) - 2 else out
        if act != "linear":
            layers.append(Activation(act))
    return NetworkSpec(sizes[0], tuple(layers))


# ---------------------------------------------------------------------------
# activations


def _act_forward(fn, z):
    if fn == "relu":
        return np.maximum(z, 0.0)
    if fn == "tanh":
        return np.tanh(z)
    if fn == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free logistic
    if fn == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    if fn == "linear":
        return z.copy()
    raise ValueError(f"unknown activation {fn!r}")


def _act_grad(fn, z, y):
    if fn == "relu":
        return (z > 0).astype(float)
    if fn == "tanh":
        return 1.0 - y * y
    if fn == "sigmoid":
        return y * (1.0 - y)
    if fn == "elu":
        return np.where(z > 0, 1.0, y + 1.0)
    if fn == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {fn!r}")


def activate(fn, z):
    if isinstance(fn, tuple):
        return np.stack([_act_forward(f, z[:, j]) for j, f in enumerate(fn)], axis=1)
    return _act_forward(fn, z)


def activation_grad(fn, z, y):
    if isinstance(fn, tuple):
        return np.stack([_act_grad(f, z[:, j], y[:, j]) for j, f in enumerate(fn)], axis=1)
    return _act_grad(fn, z, y)


# ---------------------------------------------------------------------------
# network


class Network:
    def __init__(self, spec: NetworkSpec, params=None, seed: int | None = 0):
        self.spec = spec
        self._offsets = []
        o = 0
        for layer in spec.layers:
            self._offsets.append(o)
            o += layer.param_count()
        if params is None:
            params = init_params(spec, np.random.default_rng(seed))
        self.params = params
        self.version = 0

    @property
    def params(self) -> np.ndarray:
        return self._params

    @params.setter
    def params(self, value):
        value = np.array(value, dtype=float)
        if value.shape != (self.spec.param_count(),):
            raise ValueError(f"expected {self.spec.param_count()} parameters, got {value.shape}")
        self._params = value
        self.version = getattr(self, "version", -1) + 1

    def copy(self) -> "Network":
        return Network(self.spec, self._params.copy())

    def layer_params(self, k: int):
        """Views ``(weights, bias)`` of layer ``k`` into the flat vector."""
        layer = self.spec.layers[k]
        o = self._offsets[k]
        p = self._params
        if layer.kind == "dense":
            w = p[o:o + layer.n_in * layer.n_out].reshape(layer.n_in, layer.n_out)
            return w, p[o + w.size:o + w.size + layer.n_out]
        if layer.kind == "conv1d":
            nw = layer.out_channels * layer.in_channels * layer.kernel
            w = p[o:o + nw].reshape(layer.out_channels, layer.in_channels, layer.kernel)
            return w, p[o + nw:o + nw + layer.out_channels]
        return None, None

    def forward(self, x):
        """Batch forward pass; ``x`` is ``(batch, input_size)`` or a single vector."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.spec.input_size:
            raise ValueError(f"input shape {x.shape} does not match input size {self.spec.input_size}")
        caches = []
        for k, layer in enumerate(self.spec.layers):
            w, b = self.layer_params(k)
            if layer.kind == "dense":
                caches.append(x)
                x = x @ w + b
            elif layer.kind == "conv1d":
                B, L, ci = x.shape[0], layer.length, layer.in_channels
                pad = np.zeros((B, ci, L + 2))
                pad[:, :, 1:-1] = x[:, :ci * L].reshape(B, ci, L)
                # taps[b, l, c * 3 + j] = pad[b, c, l + j]
                taps = np.stack([pad[:, :, j:j + L] for j in range(3)], axis=-1)
                taps = taps.transpose(0, 2, 1, 3).reshape(B, L, ci * 3)
                caches.append(taps)
                y = taps @ w.reshape(w.shape[0], -1).T + b  # (B, L, co)
                x = np.concatenate([y.transpose(0, 2, 1).reshape(B, -1), x[:, ci * L:]], axis=1)
            else:
                z = x
                x = activate(layer.fn, z)
                caches.append((z, x))
        return (x[0] if single else x), (self.version, single, caches)

    def backward(self, cache, grad_out):
        """Return ``(param_grad, input_grad)`` for the loss with output gradient ``grad_out``."""
        version, single, caches = cache
        if version != self.version:
            raise StaleCache("parameters changed since the forward pass")
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None, :]
        grad = np.zeros_like(self._params)
        for k in reversed(range(len(self.spec.layers))):
            layer = self.spec.layers[k]
            w, _ = self.layer_params(k)
            o = self._offsets[k]
            c = caches[k]
            if layer.kind == "dense":
                gw = c.T @ g
                grad[o:o + gw.size] = gw.ravel()
                grad[o + gw.size:o + gw.size + layer.n_out] = g.sum(axis=0)
                g = g @ w.T
            elif layer.kind == "conv1d":
                B, L, ci, co = g.shape[0], layer.length, layer.in_channels, layer.out_channels
                gy = g[:, :co * L].reshape(B, co, L).transpose(0, 2, 1)  # (B, L, co)
                wm = w.reshape(co, -1)
                gw = gy.reshape(-1, co).T @ c.reshape(-1, ci * 3)
                grad[o:o + gw.size] = gw.ravel()
                grad[o + gw.size:o + gw.size + co] = gy.sum(axis=(0, 1))
                gtaps = (gy @ wm).reshape(B, L, ci, 3)
                gpad = np.zeros((B, ci, L + 2))
                for j in range(3):
                    gpad[:, :, j:j + L] += gtaps[:, :, :, j].transpose(0, 2, 1)
                g = np.concatenate([gpad[:, :, 1:-1].reshape(B, -1), g[:, co * L:]], axis=1)
            else:
                z, y = c
                g = g * activation_grad(layer.fn, z, y)
        return grad, (g[0] if single else g)

    def __call__(self, x):
        return self.forward(x)[0]


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> np.ndarray:
    """Fan-in scaled uniform initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if spec.init != "fan_in_uniform":
        raise ValueError(f"unknown initialisation {spec.init!r}")
    parts = []
    for layer in spec.layers:
        if layer.kind == "dense":
            fan_in = layer.n_in
        elif layer.kind == "conv1d":
            fan_in = layer.in_channels * layer.kernel
        else:
            continue
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, layer.param_count()))
    return np.concatenate(parts) if parts else np.zeros(0)


# ---------------------------------------------------------------------------
# optimisers and target updates


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step_count: int = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return parameters after one descent step along ``grad``."""
        grad = np.asarray(grad, dtype=float)
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        if grad.shape != self.m.shape:
            raise ValueError("gradient shape does not match optimiser state")
        self.step_count += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.step_count)
        v_hat = self.v / (1 - self.beta2 ** self.step_count)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class SGD:
    lr: float = 1e-2

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.lr * np.asarray(grad, dtype=float)


def optimiser_step(net: Network, grad: np.ndarray, opt) -> None:
    net.params = opt.step(net.params, grad)


def soft_update(target: Network, online: Network, tau: float) -> None:
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    if target.spec != online.spec:
        raise ValueError("target and online networks differ in shape")
    target.params = (1.0 - tau) * target.params + tau * online.params


# ---------------------------------------------------------------------------
# gradient checking


def numerical_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for j in range(flat.size):
        old = flat[j]
        flat[j] = old + eps
        up = f(x)
        flat[j] = old - eps
        down = f(x)
        flat[j] = old
        gf[j] = (up - down) / (2 * eps)
    return g


def relative_error(analytic, numeric, floor: float = 1e-5) -> float:
    """Largest elementwise ``|a - n| / max(|a| + |n|, floor)``."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))


def gradcheck(net: Network, x, grad_out=None, eps: float = 1e-5) -> tuple[float, float]:
    """Relative errors of the parameter and input gradients of ``sum(w * net(x))``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y, cache = net.forward(x)
    w = np.ones_like(y) if grad_out is None else np.asarray(grad_out, dtype=float)
    gp, gx = net.backward(cache, w)
    base = net.params.copy()

    def loss_p(p):
        net.params = p
        return float(np.sum(w * net(x)))

    num_p = numerical_gradient(loss_p, base, eps)
    net.params = base
    num_x = numerical_gradient(lambda xx: float(np.sum(w * net(xx))), x, eps)
    return relative_error(gp, num_p), relative_error(gx, num_x)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(net: Network, path) -> Path:
    """Plain-text checkpoint: magic and version, spec JSON, count, one value per line."""
    path = Path(path)
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", net.spec.to_json(), str(net.params.size)]
    lines.extend(repr(float(v)) for v in net.params)
    path.write_text("\n".join(lines) + "\n")
    return path


def load_checkpoint(path) -> Network:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if len(head) != 2 or head[0] != CHECKPOINT_MAGIC or int(head[1]) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    spec = NetworkSpec.from_json(lines[1])
    count = int(lines[2])
    values = np.array([float(v) for v in lines[3:3 + count]])
    if values.size != count or count != spec.param_count():
        raise ValueError(f"{path}: parameter count mismatch")
    return Network(spec, values)
