"""
Dubins word solvers.

Each solver works in the normalized frame where the start sits at the origin,
the goal lies on the +x axis at distance d (in units of the turning radius),
and alpha / beta are the start / goal headings relative to that axis.
Solvers return (t, p, q) or None when the word has no solution; arc params are
radians, the straight param of CSC words is normalized by rho.
"""
from __future__ import annotations

import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi
# mod-2π results this close to 2π are folded to 0 so aligned poses never
# pick up a spurious full loop from float rounding
_LOOP_EPS = 1e-9

Params = Optional[Tuple[float, float, float]]


def mod2pi(x: float) -> float:
    v = x % TWO_PI
    if v > TWO_PI - _LOOP_EPS:
        return 0.0
    return v


def _trig(alpha: float, beta: float):
    return math.sin(alpha), math.sin(beta), math.cos(alpha), math.cos(beta), math.cos(alpha - beta)


def lsl(alpha: float, beta: float, d: float) -> Params:
    sa, sb, ca, cb, cab = _trig(alpha, beta)
    p_sq = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
    if p_sq < 0:
        return None
    tmp = math.atan2(cb - ca, d + sa - sb)
    return mod2pi(-alpha + tmp), math.sqrt(p_sq), mod2pi(beta - tmp)


def rsr(alpha: float, beta: float, d: float) -> Params:
    sa, sb, ca, cb, cab = _trig(alpha, beta)
    p_sq = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
    if p_sq < 0:
        return None
    tmp = math.atan2(ca - cb, d - sa + sb)
    return mod2pi(alpha - tmp), math.sqrt(p_sq), mod2pi(-beta + tmp)


def lsr(alpha: float, beta: float, d: float) -> Params:
    sa, sb, ca, cb, cab = _trig(alpha, beta)
    p_sq = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
    if p_sq < 0:
        return None
    p = math.sqrt(p_sq)
    tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
    return mod2pi(-alpha + tmp), p, mod2pi(-mod2pi(beta) + tmp)


def rsl(alpha: float, beta: float, d: float) -> Params:
    sa, sb, ca, cb, cab = _trig(alpha, beta)
    p_sq = d * d - 2 + 2 * cab - 2 * d * (sa + sb)
    if p_sq < 0:
        return None
    p = math.sqrt(p_sq)
    tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
    return mod2pi(alpha - tmp), p, mod2pi(beta - tmp)


def rlr(alpha: float, beta: float, d: float) -> Params:
    sa, sb, ca, cb, cab = _trig(alpha, beta)
    tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0
    if abs(tmp) > 1.0:
        return None
    p = mod2pi(TWO_PI - math.acos(tmp))
    t = mod2pi(alpha - math.atan2(ca - cb, d - sa + sb) + p / 2.0)
    q = mod2pi(alpha - beta - t + p)
    return t, p, q


def lrl(alpha: float, beta: float, d: float) -> Params:
    sa, sb, ca, cb, cab = _trig(alpha, beta)
    tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0
    if abs(tmp) > 1.0:
        return None
    p = mod2pi(TWO_PI - math.acos(tmp))
    t = mod2pi(-alpha - math.atan2(ca - cb, d + sa - sb) + p / 2.0)
    q = mod2pi(mod2pi(beta) - alpha - t + p)
    return t, p, q


# enumeration order doubles as the tie-break order
WORD_SOLVERS: Dict[str, Callable[[float, float, float], Params]] = {
    "LSL": lsl,
    "RSR": rsr,
    "LSR": lsr,
    "RSL": rsl,
    "RLR": rlr,
    "LRL": lrl,
}


# ---- vectorized lengths (nearest-neighbour queries) ----

def _vmod2pi(x: np.ndarray) -> np.ndarray:
    v = np.mod(x, TWO_PI)
    return np.where(v > TWO_PI - _LOOP_EPS, 0.0, v)


def dubins_lengths(from_xyt: np.ndarray, to_xyt: np.ndarray, rho: float) -> np.ndarray:
    """
    Shortest Dubins length for every row pair; inputs broadcast to (n, 3).
    """
    a = np.atleast_2d(np.asarray(from_xyt, dtype=np.float64))
    b = np.atleast_2d(np.asarray(to_xyt, dtype=np.float64))
    a, b = np.broadcast_arrays(a, b)
    dx = b[:, 0] - a[:, 0]
    dy = b[:, 1] - a[:, 1]
    dist = np.hypot(dx, dy)
    d = dist / rho
    phi = np.arctan2(dy, dx)
    alpha = _vmod2pi(a[:, 2] - phi)
    beta = _vmod2pi(b[:, 2] - phi)
    sa, sb, ca, cb = np.sin(alpha), np.sin(beta), np.cos(alpha), np.cos(beta)
    cab = np.cos(alpha - beta)
    inf = np.inf
    best = np.full(d.shape, inf)

    with np.errstate(invalid="ignore"):
        # LSL
        p_sq = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
        tmp = np.arctan2(cb - ca, d + sa - sb)
        total = _vmod2pi(-alpha + tmp) + np.sqrt(p_sq) + _vmod2pi(beta - tmp)
        best = np.minimum(best, np.where(p_sq >= 0, total, inf))
        # RSR
        p_sq = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
        tmp = np.arctan2(ca - cb, d - sa + sb)
        total = _vmod2pi(alpha - tmp) + np.sqrt(p_sq) + _vmod2pi(-beta + tmp)
        best = np.minimum(best, np.where(p_sq >= 0, total, inf))
        # LSR
        p_sq = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
        p = np.sqrt(p_sq)
        tmp = np.arctan2(-ca - cb, d + sa + sb) - np.arctan2(-2.0, p)
        total = _vmod2pi(-alpha + tmp) + p + _vmod2pi(-beta + tmp)
        best = np.minimum(best, np.where(p_sq >= 0, total, inf))
        # RSL
        p_sq = d * d - 2 + 2 * cab - 2 * d * (sa + sb)
        p = np.sqrt(p_sq)
        tmp = np.arctan2(ca + cb, d - sa - sb) - np.arctan2(2.0, p)
        total = _vmod2pi(alpha - tmp) + p + _vmod2pi(beta - tmp)
        best = np.minimum(best, np.where(p_sq >= 0, total, inf))
        # RLR
        c = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0
        p = _vmod2pi(TWO_PI - np.arccos(np.clip(c, -1.0, 1.0)))
        t = _vmod2pi(alpha - np.arctan2(ca - cb, d - sa + sb) + p / 2.0)
        q = _vmod2pi(alpha - beta - t + p)
        best = np.minimum(best, np.where(np.abs(c) <= 1.0, t + p + q, inf))
        # LRL
        c = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0
        p = _vmod2pi(TWO_PI - np.arccos(np.clip(c, -1.0, 1.0)))
        t = _vmod2pi(-alpha - np.arctan2(ca - cb, d + sa - sb) + p / 2.0)
        q = _vmod2pi(beta - alpha - t + p)
        best = np.minimum(best, np.where(np.abs(c) <= 1.0, t + p + q, inf))

    heading_gap = np.abs(np.mod(b[:, 2] - a[:, 2] + math.pi, TWO_PI) - math.pi)
    same = (dist < 1e-12) & (heading_gap < 1e-12)
    return np.where(same, 0.0, best * rho)
