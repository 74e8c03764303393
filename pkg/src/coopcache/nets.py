"""
Dense networks with hand-written backprop, Adam, and target tracking.

Parameters live in one flat float64 vector per network; forward caches the
activations needed for a single analytic backward pass that returns both
parameter gradients and the gradient with respect to the network input (the
input gradient is what chains a critic into an actor update).
"""

from dataclasses import dataclass

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
HEADS = ("linear", "softmax_scaled")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetSpec:
    """Topology: sizes include input and output layers.

    ``softmax_scaled`` heads split the output into ``head_groups`` contiguous
    blocks; each block is mapped to scale * softmax(block), so it sums to the
    scale exactly.  ``linear`` heads must be scalar.
    """

    layer_sizes: tuple
    hidden_activation: str = "relu"
    head: str = "linear"
    head_scale: float = 1.0
    head_groups: int = 1

    def __post_init__(self):
        if len(self.layer_sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == "linear" and self.layer_sizes[-1] != 1:
            raise ValueError("linear head requires a scalar output")
        if self.head == "softmax_scaled":
            if self.layer_sizes[-1] % self.head_groups != 0:
                raise ValueError("output size must divide into head_groups")
            if self.head_scale <= 0.0:
                raise ValueError("head_scale must be positive")


class DenseNet:
    """Stateless math for one NetSpec; parameters are passed in explicitly."""

    def __init__(self, spec):
        self.spec = spec
        sizes = spec.layer_sizes
        self._shapes = []
        self._offsets = []
        off = 0
        for i in range(len(sizes) - 1):
            w_shape = (sizes[i], sizes[i + 1])
            self._shapes.append(w_shape)
            self._offsets.append(off)
            off += w_shape[0] * w_shape[1] + w_shape[1]
        self.num_params = off
        self.input_dim = sizes[0]
        self.output_dim = sizes[-1]

    def layer_views(self, params):
        """(W, b) numpy views per layer into the flat vector."""
        views = []
        for (rows, cols), off in zip(self._shapes, self._offsets):
            w = params[off:off + rows * cols].reshape(rows, cols)
            b = params[off + rows * cols:off + rows * cols + cols]
            views.append((w, b))
        return views

    def init_params(self, rng):
        """Uniform +-1/sqrt(fan_in) per layer, weights and biases alike."""
        params = np.empty(self.num_params)
        for (w, b), (rows, _) in zip(self.layer_views(params), self._shapes):
            bound = 1.0 / np.sqrt(rows)
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return params

    def forward(self, params, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.input_dim:
            raise ValueError(f"input dim {x.shape[1]} != {self.input_dim}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite network input")
        layers = self.layer_views(params)
        acts = [x]
        a = x
        for w, b in layers[:-1]:
            z = a @ w + b
            a = np.maximum(z, 0.0) if self.spec.hidden_activation == "relu" \
                else np.tanh(z)
            acts.append(a)
        w, b = layers[-1]
        z_out = a @ w + b
        if self.spec.head == "softmax_scaled":
            y, probs = _softmax_scaled(z_out, self.spec.head_scale,
                                       self.spec.head_groups)
        else:
            y, probs = z_out, None
        cache = (acts, z_out, probs)
        return (y[0] if squeeze else y), cache

    def backward(self, params, cache, upstream):
        """Gradients of sum_i upstream_i . y_i w.r.t. params and inputs."""
        acts, z_out, probs = cache
        u = np.atleast_2d(np.asarray(upstream, dtype=float))
        if u.shape != (acts[0].shape[0], self.output_dim):
            raise ValueError(f"upstream shape {u.shape} incompatible with "
                             f"batch {acts[0].shape[0]} x {self.output_dim}")
        if probs is not None:
            dz = _softmax_scaled_backward(u, probs, self.spec.head_scale,
                                          self.spec.head_groups)
        else:
            dz = u
        layers = self.layer_views(params)
        grads = np.zeros(self.num_params)
        gviews = self.layer_views(grads)
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            gw, gb = gviews[i]
            gw += acts[i].T @ dz
            gb += dz.sum(axis=0)
            da = dz @ w.T
            if i > 0:
                a = acts[i]
                if self.spec.hidden_activation == "relu":
                    dz = da * (a > 0.0)
                else:
                    dz = da * (1.0 - a * a)
        return grads, da


def _softmax_scaled(z, scale, groups):
    n, out = z.shape
    block = out // groups
    zg = z.reshape(n, groups, block)
    shifted = zg - zg.max(axis=2, keepdims=True)  # numerical stabilization
    e = np.exp(shifted)
    probs = e / e.sum(axis=2, keepdims=True)
    return (scale * probs).reshape(n, out), probs


def _softmax_scaled_backward(u, probs, scale, groups):
    n = u.shape[0]
    block = probs.shape[2]
    ug = u.reshape(n, groups, block)
    inner = (ug * probs).sum(axis=2, keepdims=True)
    dz = scale * probs * (ug - inner)
    return dz.reshape(n, groups * block)


def softmax_scaled_head(z, scale, groups):
    """Blockwise scale * softmax; every block sums to the scale."""
    z = np.asarray(z, dtype=float)
    squeeze = z.ndim == 1
    y, _ = _softmax_scaled(np.atleast_2d(z), scale, groups)
    return y[0] if squeeze else y


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped: int = 0

    @staticmethod
    def zeros(num_params, beta1=0.9, beta2=0.999, eps=1e-8):
        return AdamState(m=np.zeros(num_params), v=np.zeros(num_params),
                         beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state, lr):
    """One in-place Adam update with bias correction.

    A non-finite gradient skips the step (and counts it) rather than
    poisoning the parameters mid-run.
    """
    grads = np.asarray(grads, dtype=float)
    if grads.shape != params.shape:
        raise ValueError("gradient/parameter length mismatch")
    if not np.all(np.isfinite(grads)):
        state.skipped += 1
        return params
    state.step += 1
    t = state.step
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


@dataclass(frozen=True)
class LrSchedule:
    """Polynomial decay: rate(t) = initial * (1 - min(t, T)/T)^power."""

    initial: float
    power: float = 0.9
    horizon: int = 100_000

    def rate(self, t):
        frac = min(int(t), self.horizon) / self.horizon
        return self.initial * (1.0 - frac) ** self.power


def soft_update(target, online, tau):
    """target <- tau * online + (1 - tau) * target, in place."""
    if target.shape != online.shape:
        raise ValueError("target/online length mismatch")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    target *= (1.0 - tau)
    target += tau * online
    return target


def save_net_checkpoint(path, spec, params, adam):
    if not np.all(np.isfinite(params)):
        raise ValueError("refusing to checkpoint non-finite parameters")
    np.savez(path,
             version=CHECKPOINT_VERSION,
             layer_sizes=np.asarray(spec.layer_sizes, dtype=np.int64),
             hidden_activation=spec.hidden_activation,
             head=spec.head,
             head_scale=spec.head_scale,
             head_groups=spec.head_groups,
             params=params,
             adam_m=adam.m, adam_v=adam.v, adam_step=adam.step,
             adam_beta1=adam.beta1, adam_beta2=adam.beta2,
             adam_eps=adam.eps, adam_skipped=adam.skipped)


def load_net_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data['version']}")
        spec = NetSpec(layer_sizes=tuple(int(s) for s in data["layer_sizes"]),
                       hidden_activation=str(data["hidden_activation"]),
                       head=str(data["head"]),
                       head_scale=float(data["head_scale"]),
                       head_groups=int(data["head_groups"]))
        params = data["params"].copy()
        if not np.all(np.isfinite(params)):
            raise ValueError("checkpoint contains non-finite parameters")
        adam = AdamState(m=data["adam_m"].copy(), v=data["adam_v"].copy(),
                         step=int(data["adam_step"]),
                         beta1=float(data["adam_beta1"]),
                         beta2=float(data["adam_beta2"]),
                         eps=float(data["adam_eps"]),
                         skipped=int(data["adam_skipped"]))
    return spec, params, adam
