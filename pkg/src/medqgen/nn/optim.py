"""Adam with global-norm gradient clipping, plus finite-difference checks."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericError
from .autograd import Tensor
from .layers import ParamSet


class Adam:
    """Bias-corrected Adam over a ParamSet.

    The clip is applied to the global norm across all gradients (one
    scale factor for the whole step), before the moment updates.
    """

    def __init__(self, params: ParamSet, lr=0.001, beta1=0.9, beta2=0.999,
                 eps=1e-8, clip_norm=5.0):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self):
        grads = {}
        sq_sum = 0.0
        for name, t in self.params.items():
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            grads[name] = g
            sq_sum += float((g * g).sum())
        norm = math.sqrt(sq_sum)
        scale = self.clip_norm / norm if norm > self.clip_norm else 1.0

        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, t in self.params.items():
            g = grads[name] * scale
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            t.data = t.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.params.zero_grad()


def finite_difference_gradients(loss_fn, tensors: list[Tensor], eps=1e-5):
    """Central-difference gradients of a scalar-valued loss_fn().

    loss_fn is re-evaluated with perturbed tensor entries; it must be a
    pure function of the given tensors. Returns one array per tensor.
    Forward evaluations only, independent of the reverse-mode path.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn())
            flat[i] = orig - eps
            down = float(loss_fn())
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads.append(g)
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor=1e-6) -> float:
    """Elementwise |a-n| / max(|a|, |n|, floor), maximized."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
