"""Parameter initialization, forward and reverse passes for a NetworkSpec.

Tensors are float64 in NHWC layout. Convolution weights are stored as
``(kh, kw, in_channels, filters)``; transposed-convolution weights as
``(kh, kw, filters, in_channels)`` so that a transposed convolution is the exact
adjoint of the convolution sharing its kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .spec import LayerSpec, NetworkSpec, ShapeError, same_padding, shape_of

Params = list[dict[str, np.ndarray]]


def weight_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    if layer.kind == "fully_connected":
        return (in_shape[0], layer.units)
    kh, kw = layer.kernel
    if layer.kind == "conv2d":
        return (kh, kw, in_shape[2], layer.units)
    return (kh, kw, layer.units, in_shape[2])


def init_parameters(spec: NetworkSpec, seed: int) -> Params:
    """Glorot-uniform weights, zero biases, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    params: Params = []
    in_shape = spec.input_shape
    for layer, out_shape in zip(spec.layers, shape_of(spec)):
        if layer.has_params:
            wshape = weight_shape(layer, in_shape)
            receptive = math.prod(wshape[:-2])
            fan_in, fan_out = receptive * wshape[-2], receptive * wshape[-1]
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params.append({
                "W": rng.uniform(-limit, limit, size=wshape),
                "b": np.zeros(layer.units),
            })
        else:
            params.append({})
        in_shape = out_shape
    return params


def count_parameters(params: Params) -> int:
    return sum(v.size for p in params for v in p.values())


# ---------------------------------------------------------------- convolution


def _conv_geometry(in_hw, out_hw, layer: LayerSpec):
    pads = []
    for size, out, k, s in zip(in_hw, out_hw, layer.kernel, layer.strides):
        pads.append(same_padding(size, out, k, s) if layer.padding == "same" else (0, 0))
    return pads


def _im2col(xp: np.ndarray, out_hw, kernel, strides) -> np.ndarray:
    n, _, _, c = xp.shape
    (ho, wo), (kh, kw), (sh, sw) = out_hw, kernel, strides
    cols = np.empty((n, ho, wo, kh, kw, c))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw, :]
    return cols.reshape(n * ho * wo, kh * kw * c)


def _col2im(cols: np.ndarray, padded_shape, out_hw, kernel, strides) -> np.ndarray:
    n, hp, wp, c = padded_shape
    (ho, wo), (kh, kw), (sh, sw) = out_hw, kernel, strides
    cols = cols.reshape(n, ho, wo, kh, kw, c)
    xp = np.zeros(padded_shape)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw, :] += cols[:, :, :, i, j, :]
    return xp


def _pad(x, pads):
    (t, b), (l, r) = pads
    return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0))) if t or b or l or r else x


def _unpad(xp, pads):
    (t, b), (l, r) = pads
    return xp[:, t:xp.shape[1] - b, l:xp.shape[2] - r, :]


def _use_narrow_side(W, layer) -> bool:
    # stride-1 convs gather on the output side when it has fewer channels
    return layer.strides == (1, 1) and W.shape[3] < W.shape[2]


def _flipped_cols(dy, in_hw, layer, pads):
    """im2col of ``dy`` against the flipped kernel (stride 1), one row per input pixel."""
    (kh, kw), (h, w) = layer.kernel, in_hw
    (pt, _), (pl, _) = pads
    ho, wo = dy.shape[1:3]
    dy_pad = _pad(dy, ((kh - 1 - pt, h - ho + pt), (kw - 1 - pl, w - wo + pl)))
    return _im2col(dy_pad, (h, w), layer.kernel, (1, 1))


def conv_forward(x, W, layer, out_hw):
    """Plain convolution (no bias); returns the output and a cache for the weight grad."""
    kh, kw, cin, cout = W.shape
    pads = _conv_geometry(x.shape[1:3], out_hw, layer)
    if _use_narrow_side(W, layer):
        n, h, w, _ = x.shape
        prod = x.reshape(-1, cin) @ W.transpose(2, 0, 1, 3).reshape(cin, -1)
        prod = _pad(prod.reshape(n, h, w, kh * kw * cout), pads).reshape(
            n, h + sum(pads[0]), w + sum(pads[1]), kh, kw, cout)
        ho, wo = out_hw
        y = np.zeros((n, ho, wo, cout))
        for i in range(kh):
            for j in range(kw):
                y += prod[:, i:i + ho, j:j + wo, i, j, :]
        return y, None
    cols = _im2col(_pad(x, pads), out_hw, layer.kernel, layer.strides)
    y = cols @ W.reshape(-1, cout)
    return y.reshape(x.shape[0], *out_hw, cout), cols


def conv_input_grad(dy, W, layer, in_shape):
    """Adjoint of :func:`conv_forward` with respect to its input."""
    kh, kw, cin, cout = W.shape
    out_hw = dy.shape[1:3]
    pads = _conv_geometry(in_shape[1:3], out_hw, layer)
    if _use_narrow_side(W, layer):
        cols = _flipped_cols(dy, in_shape[1:3], layer, pads)
        wflip = W[::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, cin)
        return (cols @ wflip).reshape(in_shape)
    dcols = dy.reshape(-1, cout) @ W.reshape(-1, cout).T
    padded = (in_shape[0], in_shape[1] + sum(pads[0]), in_shape[2] + sum(pads[1]), in_shape[3])
    return _unpad(_col2im(dcols, padded, out_hw, layer.kernel, layer.strides), pads)


def conv_weight_grad(x, dy, W, layer, cache):
    """Gradient of the convolution output pairing ``dy`` with respect to ``W``."""
    kh, kw, cin, cout = W.shape
    if _use_narrow_side(W, layer):
        pads = _conv_geometry(x.shape[1:3], dy.shape[1:3], layer)
        cols = _flipped_cols(dy, x.shape[1:3], layer, pads)
        m = (x.reshape(-1, cin).T @ cols).reshape(cin, kh, kw, cout)
        return m.transpose(1, 2, 0, 3)[::-1, ::-1].copy()
    if cache is None:
        pads = _conv_geometry(x.shape[1:3], dy.shape[1:3], layer)
        cache = _im2col(_pad(x, pads), dy.shape[1:3], layer.kernel, layer.strides)
    return (cache.T @ dy.reshape(-1, cout)).reshape(W.shape)


# -------------------------------------------------------------- activations


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return expit(z)
    return z


def _activation_grad(dy, y, kind):
    if kind == "relu":
        return dy * (y > 0)
    if kind == "sigmoid":
        return dy * y * (1.0 - y)
    return dy


# ------------------------------------------------------------ forward/backward


@dataclass
class Trace:
    """Everything a backward pass needs: per-layer inputs, outputs and caches."""

    inputs: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)
    caches: list = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.outputs[-1]


def forward(spec: NetworkSpec, params: Params, x: np.ndarray, mode: str = "eval",
            seed: int | np.random.Generator | None = None) -> Trace:
    """Run ``x`` (batch-first) through the network.

    Dropout is active only when ``mode == "train"``; its masks come from ``seed``,
    which may be an int or a shared ``numpy.random.Generator``.
    """
    x = np.asarray(x, dtype=float)
    if tuple(x.shape[1:]) != spec.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} does not match {spec.input_shape}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    trace = Trace()
    for layer, p, out_shape in zip(spec.layers, params, shape_of(spec)):
        trace.inputs.append(x)
        cache = None
        kind = layer.kind
        if kind == "fully_connected":
            y = _activate(x @ p["W"] + p["b"], layer.activation)
        elif kind == "conv2d":
            z, cache = conv_forward(x, p["W"], layer, out_shape[:2])
            y = _activate(z + p["b"], layer.activation)
        elif kind == "conv2d_transpose":
            full = (x.shape[0],) + out_shape
            z = conv_input_grad(x, p["W"], layer, full)
            y = _activate(z + p["b"], layer.activation)
        elif kind == "max_pool":
            y, cache = _pool_forward(x, layer.pool)
        elif kind == "dropout":
            if mode == "train" and layer.rate > 0:
                cache = (rng.random(x.shape) >= layer.rate) / (1.0 - layer.rate)
                y = x * cache
            else:
                y = x
        else:  # flatten / reshape
            y = x.reshape((x.shape[0],) + out_shape)
        trace.outputs.append(y)
        trace.caches.append(cache)
        x = y
    return trace


def backward(spec: NetworkSpec, params: Params, trace: Trace,
             output_grad: np.ndarray, input_grad: bool = True) -> tuple[Params, np.ndarray]:
    """Reverse pass; returns per-layer parameter gradients and the input gradient.

    ``input_grad=False`` lets a leading convolution skip its input gradient (the
    returned input gradient is then ``None``).
    """
    grads: Params = [{} for _ in spec.layers]
    dy = np.asarray(output_grad, dtype=float)
    for idx in range(len(spec.layers) - 1, -1, -1):
        layer, p = spec.layers[idx], params[idx]
        x, y, cache = trace.inputs[idx], trace.outputs[idx], trace.caches[idx]
        kind = layer.kind
        if kind == "fully_connected":
            dz = _activation_grad(dy, y, layer.activation)
            grads[idx] = {"W": x.T @ dz, "b": dz.sum(axis=0)}
            dy = dz @ p["W"].T
        elif kind == "conv2d":
            dz = _activation_grad(dy, y, layer.activation)
            W = p["W"]
            grads[idx] = {"W": conv_weight_grad(x, dz, W, layer, cache),
                          "b": dz.sum(axis=(0, 1, 2))}
            dy = conv_input_grad(dz, W, layer, x.shape) if idx > 0 or input_grad else None
        elif kind == "conv2d_transpose":
            dz = _activation_grad(dy, y, layer.activation)
            W = p["W"]
            # the transposed conv is the adjoint of conv(dz -> x-shaped) with kernel W
            dx, cols = conv_forward(dz, W, layer, x.shape[1:3])
            grads[idx] = {"W": conv_weight_grad(dz, x, W, layer, cols),
                          "b": dz.sum(axis=(0, 1, 2))}
            dy = dx
        elif kind == "max_pool":
            dy = _pool_backward(dy, cache, x.shape, layer.pool)
        elif kind == "dropout":
            dy = dy * cache if cache is not None else dy
        else:
            dy = dy.reshape(x.shape)
    return grads, dy


def _pool_forward(x, pool):
    n, h, w, c = x.shape
    ph, pw = pool
    ho, wo = h // ph, w // pw
    win = (x[:, :ho * ph, :wo * pw, :]
           .reshape(n, ho, ph, wo, pw, c)
           .transpose(0, 1, 3, 5, 2, 4)
           .reshape(n, ho, wo, c, ph * pw))
    arg = win.argmax(axis=-1)
    return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0], arg


def _pool_backward(dy, arg, in_shape, pool):
    n, h, w, c = in_shape
    ph, pw = pool
    ho, wo = h // ph, w // pw
    win = np.zeros((n, ho, wo, c, ph * pw))
    np.put_along_axis(win, arg[..., None], dy[..., None], axis=-1)
    dx = np.zeros(in_shape)
    dx[:, :ho * ph, :wo * pw, :] = (win.reshape(n, ho, wo, c, ph, pw)
                                    .transpose(0, 1, 4, 2, 5, 3)
                                    .reshape(n, ho * ph, wo * pw, c))
    return dx


def predict(spec: NetworkSpec, params: Params, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode output, computed in chunks."""
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return np.zeros((0,) + spec.output_shape)
    return np.concatenate([forward(spec, params, x[i:i + batch_size]).output
                           for i in range(0, len(x), batch_size)])
