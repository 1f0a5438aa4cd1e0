"""Layer and network descriptions plus the shape algebra that connects them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

KINDS = ("fully_connected", "conv2d", "conv2d_transpose", "max_pool", "dropout", "flatten", "reshape")
ACTIVATIONS = ("relu", "sigmoid", "none")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int | None = None  # units for fully_connected, filters for conv kinds
    kernel: tuple[int, int] = (1, 1)
    strides: tuple[int, int] = (1, 1)
    padding: str = "same"
    activation: str = "none"
    rate: float = 0.0
    pool: tuple[int, int] = (2, 2)
    target_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if min(self.strides) < 1 or min(self.kernel) < 1 or min(self.pool) < 1:
            raise ValueError("kernel, stride and pool sizes must be >= 1")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.kind in ("fully_connected", "conv2d", "conv2d_transpose") and not self.units:
            raise ValueError(f"{self.kind} needs a positive unit/filter count")
        if self.kind == "reshape" and not self.target_shape:
            raise ValueError("reshape needs a target shape")

    @property
    def has_params(self) -> bool:
        return self.kind in ("fully_connected", "conv2d", "conv2d_transpose")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        for key in ("kernel", "strides", "pool", "target_shape"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def dense(units: int, activation: str = "none") -> LayerSpec:
    return LayerSpec("fully_connected", units=units, activation=activation)


def conv2d(filters, kernel, strides=(1, 1), padding="same", activation="none") -> LayerSpec:
    return LayerSpec("conv2d", units=filters, kernel=tuple(kernel), strides=_pair(strides),
                     padding=padding, activation=activation)


def conv2d_transpose(filters, kernel, strides=(1, 1), padding="same", activation="none") -> LayerSpec:
    return LayerSpec("conv2d_transpose", units=filters, kernel=tuple(kernel),
                     strides=_pair(strides), padding=padding, activation=activation)


def max_pool(pool) -> LayerSpec:
    return LayerSpec("max_pool", pool=_pair(pool))


def dropout(rate: float) -> LayerSpec:
    return LayerSpec("dropout", rate=rate)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def reshape(*shape: int) -> LayerSpec:
    return LayerSpec("reshape", target_shape=tuple(shape))


def _pair(v) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else tuple(v)


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        shape_of(self)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return shape_of(self)[-1]

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape),
                "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["input_shape"]), tuple(LayerSpec.from_dict(x) for x in d["layers"]))


def conv_output_size(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return math.ceil(size / stride)
    return (size - kernel) // stride + 1


def same_padding(size: int, out: int, kernel: int, stride: int) -> tuple[int, int]:
    """Zero padding (before, after) so a conv maps ``size`` to ``out`` positions."""
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def layer_output_shape(layer: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    kind = layer.kind
    if kind == "fully_connected":
        if len(shape) != 1:
            raise ShapeError(f"fully_connected expects a flat input, got {shape}")
        out = (layer.units,)
    elif kind in ("conv2d", "conv2d_transpose", "max_pool"):
        if len(shape) != 3:
            raise ShapeError(f"{kind} expects (height, width, channels), got {shape}")
        h, w, c = shape
        if kind == "conv2d":
            out = tuple(conv_output_size(s, k, st, layer.padding)
                        for s, k, st in zip((h, w), layer.kernel, layer.strides)) + (layer.units,)
        elif kind == "conv2d_transpose":
            if layer.padding == "same":
                out = (h * layer.strides[0], w * layer.strides[1], layer.units)
            else:
                out = tuple((s - 1) * st + k for s, k, st in
                            zip((h, w), layer.kernel, layer.strides)) + (layer.units,)
        else:
            out = (h // layer.pool[0], w // layer.pool[1], c)
    elif kind == "dropout":
        out = shape
    elif kind == "flatten":
        out = (math.prod(shape),)
    else:
        if math.prod(layer.target_shape) != math.prod(shape):
            raise ShapeError(f"cannot reshape {shape} to {layer.target_shape}")
        out = layer.target_shape
    if any(d <= 0 for d in out):
        raise ShapeError(f"{kind} maps {shape} to non-positive shape {out}")
    return tuple(out)


def shape_of(spec: NetworkSpec) -> list[tuple[int, ...]]:
    """Output shape of every layer, in order."""
    shapes = []
    shape = tuple(spec.input_shape)
    for layer in spec.layers:
        shape = layer_output_shape(layer, shape)
        shapes.append(shape)
    return shapes
