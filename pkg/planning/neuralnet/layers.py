# planning/neuralnet/layers.py
"""
Forward / backward pairs for the layer kinds the planner network uses.

All functions take and return float64 arrays. Convolution inputs are
(B, C, H, W); fully connected inputs are (B, features).
"""
from __future__ import annotations

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


# ---- convolution (stride 1, no padding) ----
def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    k = w.shape[-1]
    windows = sliding_window_view(x, (k, k), axis=(2, 3))
    out = np.einsum("bchwij,fcij->bfhw", windows, w, optimize=True)
    out += b[None, :, None, None]
    return out, windows


def conv2d_backward(
    grad: np.ndarray, windows: np.ndarray, w: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = w.shape[-1]
    dw = np.einsum("bfhw,bchwij->fcij", grad, windows, optimize=True)
    db = grad.sum(axis=(0, 2, 3))
    gp = np.pad(grad, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    gwin = sliding_window_view(gp, (k, k), axis=(2, 3))
    dx = np.einsum("bfhwij,fcij->bchw", gwin, w[:, :, ::-1, ::-1], optimize=True)
    return dx, dw, db


# ---- max pooling 2x2, stride 2 ----
def maxpool2_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    B, C, H, W = x.shape
    ho, wo = H // 2, W // 2
    blocks = (
        x[:, :, :2 * ho, :2 * wo]
        .reshape(B, C, ho, 2, wo, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(B, C, ho, wo, 4)
    )
    # argmax returns the first maximal index, which fixes the routing on ties
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(grad: np.ndarray, arg: np.ndarray, in_shape: Tuple[int, ...]) -> np.ndarray:
    B, C, H, W = in_shape
    ho, wo = grad.shape[2], grad.shape[3]
    blocks = np.zeros((B, C, ho, wo, 4))
    np.put_along_axis(blocks, arg[..., None], grad[..., None], axis=-1)
    dx = np.zeros(in_shape)
    dx[:, :, :2 * ho, :2 * wo] = (
        blocks.reshape(B, C, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * ho, 2 * wo)
    )
    return dx


# ---- PReLU, one slope per channel (axis 1) ----
def _slope_view(a: np.ndarray, ndim: int) -> np.ndarray:
    return a.reshape((1, -1) + (1,) * (ndim - 2))


def prelu_forward(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, _slope_view(a, x.ndim) * x)


def prelu_backward(grad: np.ndarray, x: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pos = x > 0
    dx = np.where(pos, grad, _slope_view(a, x.ndim) * grad)
    axes = (0,) + tuple(range(2, x.ndim))
    da = np.where(pos, 0.0, x * grad).sum(axis=axes)
    return dx, da


# ---- inverted dropout ----
def dropout_mask(shape: Tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_forward(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return x * mask


def dropout_backward(grad: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad * mask


# ---- fully connected ----
def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w.T + b


def linear_backward(
    grad: np.ndarray, x: np.ndarray, w: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return grad @ w, grad.T @ x, grad.sum(axis=0)


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(grad: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad * (1.0 - y * y)
