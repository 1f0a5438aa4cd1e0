"""Central finite-difference gradient verification."""

from __future__ import annotations

import numpy as np

from .network import backward, forward


def numerical_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        out[i] = (up - down) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all elements."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_network(spec, params, x, seed: int = 0, eps: float = 1e-5) -> dict[str, float]:
    """Max relative error per parameter (and the input) for ``sum(out * R)``.

    ``R`` is a fixed random projection; dropout masks are frozen by reseeding.
    """
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((x.shape[0],) + spec.output_shape)

    def objective():
        return float(np.sum(forward(spec, params, x, mode="train", seed=seed).output * proj))

    trace = forward(spec, params, x, mode="train", seed=seed)
    grads, dx = backward(spec, params, trace, proj)
    errors = {"input": relative_error(dx, numerical_gradient(objective, x, eps))}
    for i, layer_params in enumerate(params):
        for key, value in layer_params.items():
            errors[f"{i}.{key}"] = relative_error(
                grads[i][key], numerical_gradient(objective, value, eps))
    return errors
