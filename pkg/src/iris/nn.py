"""Fully convolutional actor-critic in plain numpy, with hand-written backprop.

Shared trunk of three dilated conv+ReLU blocks, then a policy branch and a
value branch of three blocks each; the per-branch multi-scale features are
concatenated before a 1x1x1 head. The policy head emits one softmax over the
K probability-adjustment actions per voxel, the value head one scalar.

The probability channel of the state bypasses the conv trunk and is appended
to the head inputs instead. Convolved features therefore depend only on the
image and the hint maps, which are constant across refinement iterations away
from new clicks; each head reads the voxel's own current probability. Without
the bypass, features shift as neighboring probabilities saturate, and the
policy re-judges voxels it already settled, which churns the prediction in
late iterations.

Depth-1 volumes automatically use 1x3x3 kernels so 2D training stays cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 4
    channels: int = 16
    actions: int = 6
    dilations: tuple[int, int, int] = (1, 2, 4)
    kernel_depth: int = 3  # 1 for depth-1 (2D) volumes

    @classmethod
    def for_dims(cls, dims, channels=16, actions=6, dilations=(1, 2, 4)) -> "NetConfig":
        return cls(
            channels=channels,
            actions=actions,
            dilations=dilations,
            kernel_depth=1 if dims[0] == 1 else 3,
        )


@dataclass
class NetworkParams:
    cfg: NetConfig
    tensors: list[tuple[np.ndarray, np.ndarray]]  # (W, b) per conv, fixed order

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.cfg, [(w.copy(), b.copy()) for w, b in self.tensors])

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in self.tensors)


def _layer_shapes(cfg: NetConfig):
    """(Cin, Cout, kernel, dilation) per conv in declaration order."""
    kd = cfg.kernel_depth
    k3 = (kd, 3, 3)
    k1 = (1, 1, 1)
    c = cfg.channels
    d1, d2, d3 = cfg.dilations
    shapes = [
        (cfg.in_channels - 1, c, k3, d1),  # trunk (probability channel bypasses)
        (c, c, k3, d2),
        (c, c, k3, d3),
        (c, c, k3, d1),  # policy branch
        (c, c, k3, d2),
        (c, c, k3, d3),
        (3 * c + 1, cfg.actions, k1, 1),  # policy head (+ own probability)
        (c, c, k3, d1),  # value branch
        (c, c, k3, d2),
        (c, c, k3, d3),
        (3 * c + 1, 1, k1, 1),  # value head (+ own probability)
    ]
    return shapes


def init_params(seed: int, cfg: NetConfig) -> NetworkParams:
    """He fan-in scaled weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    tensors = []
    for cin, cout, kernel, _dil in _layer_shapes(cfg):
        fan_in = cin * int(np.prod(kernel))
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, *kernel))
        b = np.zeros(cout)
        tensors.append((w, b))
    return NetworkParams(cfg, tensors)


def _dilation3(kernel, dil):
    return tuple(1 if k == 1 else dil for k in kernel)


def _im2col(x: np.ndarray, kernel, dil3):
    """x: (Cin, D, H, W) -> (Cin * prod(kernel), D*H*W) with same padding."""
    cin, d, h, w = x.shape
    pads = tuple(dil3[i] * (kernel[i] - 1) // 2 for i in range(3))
    xp = np.pad(x, ((0, 0), (pads[0], pads[0]), (pads[1], pads[1]), (pads[2], pads[2])))
    cols = np.empty((cin, kernel[0] * kernel[1] * kernel[2], d * h * w))
    n = 0
    for i in range(kernel[0]):
        for j in range(kernel[1]):
            for l in range(kernel[2]):
                patch = xp[
                    :,
                    i * dil3[0] : i * dil3[0] + d,
                    j * dil3[1] : j * dil3[1] + h,
                    l * dil3[2] : l * dil3[2] + w,
                ]
                cols[:, n, :] = patch.reshape(cin, -1)
                n += 1
    return cols.reshape(cin * kernel[0] * kernel[1] * kernel[2], -1)


def _col2im(dcol: np.ndarray, x_shape, kernel, dil3):
    """Transpose of _im2col: scatter-add column gradients back into x."""
    cin, d, h, w = x_shape
    pads = tuple(dil3[i] * (kernel[i] - 1) // 2 for i in range(3))
    dxp = np.zeros((cin, d + 2 * pads[0], h + 2 * pads[1], w + 2 * pads[2]))
    dcol = dcol.reshape(cin, kernel[0] * kernel[1] * kernel[2], d * h * w)
    n = 0
    for i in range(kernel[0]):
        for j in range(kernel[1]):
            for l in range(kernel[2]):
                dxp[
                    :,
                    i * dil3[0] : i * dil3[0] + d,
                    j * dil3[1] : j * dil3[1] + h,
                    l * dil3[2] : l * dil3[2] + w,
                ] += dcol[:, n, :].reshape(cin, d, h, w)
                n += 1
    return dxp[:, pads[0] : pads[0] + d, pads[1] : pads[1] + h, pads[2] : pads[2] + w]


def _conv_forward(x, w, b, dil):
    cout = w.shape[0]
    kernel = w.shape[2:]
    dil3 = _dilation3(kernel, dil)
    col = _im2col(x, kernel, dil3)
    y = (w.reshape(cout, -1) @ col + b[:, None]).reshape(cout, *x.shape[1:])
    return y


def _conv_backward(x, w, dil, dy):
    cout = w.shape[0]
    kernel = w.shape[2:]
    dil3 = _dilation3(kernel, dil)
    col = _im2col(x, kernel, dil3)
    dy2 = dy.reshape(cout, -1)
    dw = (dy2 @ col.T).reshape(w.shape)
    db = dy2.sum(axis=1)
    dcol = w.reshape(cout, -1).T @ dy2
    dx = _col2im(dcol, x.shape, kernel, dil3)
    return dw, db, dx


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@dataclass
class ForwardCache:
    state: np.ndarray
    inputs: list[np.ndarray] = field(default_factory=list)  # conv inputs
    pre_relu: dict = field(default_factory=dict)  # conv index -> pre-activation
    policy: np.ndarray | None = None
    value: np.ndarray | None = None


def forward(params: NetworkParams, state: np.ndarray) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """state: (4, D, H, W) -> (policy (K, D, H, W), value (D, H, W), cache)."""
    cfg = params.cfg
    if state.shape[0] != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels} input channels, got {state.shape[0]}")
    shapes = _layer_shapes(cfg)
    cache = ForwardCache(state)

    def conv_relu(idx, x):
        w, b = params.tensors[idx]
        pre = _conv_forward(x, w, b, shapes[idx][3])
        cache.inputs.append(x)
        cache.pre_relu[idx] = pre
        return np.maximum(pre, 0.0)

    def conv_lin(idx, x):
        w, b = params.tensors[idx]
        cache.inputs.append(x)
        return _conv_forward(x, w, b, shapes[idx][3])

    prob = state[1:2]
    t = np.concatenate([state[:1], state[2:]], axis=0)
    for idx in (0, 1, 2):
        t = conv_relu(idx, t)
    p1 = conv_relu(3, t)
    p2 = conv_relu(4, p1)
    p3 = conv_relu(5, p2)
    logits = conv_lin(6, np.concatenate([p1, p2, p3, prob], axis=0))
    v1 = conv_relu(7, t)
    v2 = conv_relu(8, v1)
    v3 = conv_relu(9, v2)
    value = conv_lin(10, np.concatenate([v1, v2, v3, prob], axis=0))[0]

    cache.policy = _softmax(logits)
    cache.value = value
    return cache.policy, value, cache


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    actions: np.ndarray,
    advantage: np.ndarray,
    returns: np.ndarray,
    entropy_coef: float = 0.0,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of the combined A3C losses for one state.

    Policy loss: -(1/N) sum_i log pi(a_i | s_i) * A_i, advantage constant,
    minus an optional entropy bonus scaled by `entropy_coef`.
    Value loss: (1/N) sum_i (R_i - V(s_i))^2.
    Returns (dW, db) pairs aligned with the parameter declaration order.
    """
    cfg = params.cfg
    shapes = _layer_shapes(cfg)
    if cache.policy is None:
        raise RuntimeError("backward requires a forward cache")
    k = cfg.actions
    spatial = cache.policy.shape[1:]
    n = int(np.prod(spatial))

    pol = cache.policy.reshape(k, n)
    act = actions.reshape(n)
    adv = advantage.reshape(n)
    dlogits = pol * adv[None, :]
    dlogits[act, np.arange(n)] -= adv
    if entropy_coef > 0.0:
        logp = np.log(np.clip(pol, 1e-300, None))
        # gradient of -coef * mean entropy w.r.t. the logits
        dlogits += entropy_coef * pol * (logp - (pol * logp).sum(axis=0, keepdims=True))
    dlogits = (dlogits / n).reshape(k, *spatial)

    dvalue = (-2.0 / n) * (returns - cache.value)

    grads: list = [None] * len(params.tensors)
    inputs = cache.inputs

    def back_conv(idx, dy):
        w, _ = params.tensors[idx]
        dw, db, dx = _conv_backward(inputs[idx], w, shapes[idx][3], dy)
        grads[idx] = (dw, db)
        return dx

    def back_relu(idx, dy):
        return dy * (cache.pre_relu[idx] > 0)

    c = cfg.channels
    # policy head and branch; the trailing probability channel is an input,
    # not an activation, so its gradient slice is dropped
    dcat = back_conv(6, dlogits)
    dp1, dp2, dp3 = dcat[:c], dcat[c : 2 * c], dcat[2 * c : 3 * c]
    dp2 = dp2 + back_conv(5, back_relu(5, dp3))
    dp1 = dp1 + back_conv(4, back_relu(4, dp2))
    dt_policy = back_conv(3, back_relu(3, dp1))
    # value head and branch
    dcat = back_conv(10, dvalue[None])
    dv1, dv2, dv3 = dcat[:c], dcat[c : 2 * c], dcat[2 * c : 3 * c]
    dv2 = dv2 + back_conv(9, back_relu(9, dv3))
    dv1 = dv1 + back_conv(8, back_relu(8, dv2))
    dt_value = back_conv(7, back_relu(7, dv1))
    # shared trunk
    dt = dt_policy + dt_value
    for idx in (2, 1, 0):
        dt = back_conv(idx, back_relu(idx, dt))
    return grads


def policy_value_losses(cache: ForwardCache, actions, advantage, returns) -> tuple[float, float]:
    """Scalar losses matching the gradients computed by `backward`."""
    k = cache.policy.shape[0]
    n = cache.policy.size // k
    pol = cache.policy.reshape(k, n)
    act = actions.reshape(n)
    logp = np.log(np.clip(pol[act, np.arange(n)], 1e-300, None))
    policy_loss = -float((logp * advantage.reshape(n)).mean())
    value_loss = float(((returns - cache.value) ** 2).mean())
    return policy_loss, value_loss


def save_checkpoint(params: NetworkParams, path, step: int = 0, seed: int = 0, extra: dict | None = None):
    """Header JSON line plus raw little-endian float64 payloads in order."""
    cfg = params.cfg
    header = {
        "arch": {
            "in_channels": cfg.in_channels,
            "channels": cfg.channels,
            "actions": cfg.actions,
            "dilations": list(cfg.dilations),
            "kernel_depth": cfg.kernel_depth,
        },
        "dtype": "<f8",
        "seed": seed,
        "step": step,
        "tensors": [[list(w.shape), list(b.shape)] for w, b in params.tensors],
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for w, b in params.tensors:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        arch = header["arch"]
        cfg = NetConfig(
            in_channels=arch["in_channels"],
            channels=arch["channels"],
            actions=arch["actions"],
            dilations=tuple(arch["dilations"]),
            kernel_depth=arch["kernel_depth"],
        )
        tensors = []
        for wshape, bshape in header["tensors"]:
            w = np.frombuffer(
                fh.read(int(np.prod(wshape)) * 8), dtype="<f8"
            ).reshape(wshape).copy()
            b = np.frombuffer(fh.read(int(np.prod(bshape)) * 8), dtype="<f8").reshape(bshape).copy()
            tensors.append((w, b))
    return NetworkParams(cfg, tensors), header
