"""Adam, RMSprop and Adadelta operating on a ParameterStore."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

DEFAULTS = {
    "adam": {"lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "rmsprop": {"lr": 0.001, "rho": 0.9, "eps": 1e-8},
    "adadelta": {"lr": 1.0, "rho": 0.95, "eps": 1e-6},
}


@dataclass(frozen=True)
class OptimizerSpec:
    algorithm: str = "adam"
    lr: float | None = None
    beta1: float | None = None
    beta2: float | None = None
    rho: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.algorithm not in DEFAULTS:
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        for key, value in DEFAULTS[self.algorithm].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("learning rate and epsilon must be positive")
        for key in ("beta1", "beta2", "rho"):
            value = getattr(self, key)
            if value is not None and not 0.0 < value < 1.0:
                raise ValueError(f"{key} must be in (0, 1), got {value}")

    def to_dict(self) -> dict:
        return asdict(self)


def init_state(params) -> dict:
    zeros = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
    return {"t": 0, "m": zeros, "v": [{k: np.zeros_like(v) for k, v in p.items()} for p in params]}


def optimizer_step(opt: OptimizerSpec, state: dict, params, grads):
    """Update ``params`` in place from ``grads``; returns (params, state).

    State slots: ``m``/``v`` are the first and second moment for Adam; RMSprop uses
    ``v``; Adadelta keeps the squared-gradient average in ``v`` and the squared-update
    average in ``m``.
    """
    state["t"] += 1
    t = state["t"]
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        for key in p:
            grad = g[key]
            if opt.algorithm == "adam":
                m[key] = opt.beta1 * m[key] + (1.0 - opt.beta1) * grad
                v[key] = opt.beta2 * v[key] + (1.0 - opt.beta2) * grad * grad
                mhat = m[key] / (1.0 - opt.beta1 ** t)
                vhat = v[key] / (1.0 - opt.beta2 ** t)
                p[key] -= opt.lr * mhat / (np.sqrt(vhat) + opt.eps)
            elif opt.algorithm == "rmsprop":
                v[key] = opt.rho * v[key] + (1.0 - opt.rho) * grad * grad
                p[key] -= opt.lr * grad / (np.sqrt(v[key]) + opt.eps)
            else:
                v[key] = opt.rho * v[key] + (1.0 - opt.rho) * grad * grad
                update = -np.sqrt(m[key] + opt.eps) / np.sqrt(v[key] + opt.eps) * grad
                m[key] = opt.rho * m[key] + (1.0 - opt.rho) * update * update
                p[key] += opt.lr * update
    return params, state
