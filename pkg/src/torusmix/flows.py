"""Primitive velocity fields on the 2-torus and their exact flow maps.

Three primitives are provided:

* straight shears ``u^(i;L)``: ``+-e_i`` in alternating strips of width
  ``1/(2L)`` across direction ``i``;
* rectangle rotations, the perpendicular gradient of the stream function
  ``psi = min(W,H) max((x1/W)^2, (x2/H)^2)``;
* binary swaps ``(i,k,n;L)``, two phases of stacked rectangle rotations that
  exchange the k-th and (k+1)-th binary digits of ``x_i`` inside the strip
  ``J_{k,n}``.

Every map accepts points in one of two representations:

* a numpy float array of shape ``(..., 2)`` (vectorized, binary64);
* a pair of scalars, typically :class:`fractions.Fraction` for exact
  arithmetic (plain floats also work).

Conventions. Coordinates are indexed 1 and 2 as in the maths; ``i_hat`` is
the other index. Strips are half-open ``[m/2L, (m+1)/2L)``. Inside a
rectangle the diagonals belong to the horizontal (top/bottom) segments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "ShearSpec", "Rect", "SwapSpec", "SwapPhase", "wrap",
    "shear_velocity", "shear_map", "cancellation_compose", "CancellationError",
    "rect_rotation_velocity", "rect_rotation_map", "swap_velocity", "swap_map",
    "swap_endpoint", "digit_shift", "Still", "Reversed",
]


def _is_array(x) -> bool:
    return isinstance(x, np.ndarray)


def wrap(x):
    """Reduce coordinates mod 1 (array or scalar pair)."""
    if _is_array(x):
        y = np.mod(x, 1.0)
        # tiny negatives round up to exactly 1.0
        y[y >= 1.0] = 0.0
        return y
    return tuple(v - math.floor(v) for v in x)


def _as_points(x):
    if _is_array(x):
        return np.asarray(x, dtype=float)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return tuple(x)
    raise TypeError("point must be an (..., 2) array or a coordinate pair")


# ------------------------------------------------------------------- shears

@dataclass(frozen=True)
class ShearSpec:
    """The ``(i;L)`` shear: velocity ``+-e_i`` by parity of ``floor(2L x_ihat)``."""

    i: int
    L: int

    def __post_init__(self):
        if self.i not in (1, 2):
            raise ValueError("shear direction must be 1 or 2")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("shear frequency L must be a positive integer")

    def velocity(self, x):
        return shear_velocity(self, x)

    def flow(self, x, t):
        return shear_map(self, t, x)


def _shear_sign(s: ShearSpec, xh):
    if _is_array(xh):
        return 1.0 - 2.0 * np.mod(np.floor(2 * s.L * xh), 2)
    return 1 - 2 * (math.floor(2 * s.L * xh) % 2)


def shear_velocity(s: ShearSpec, x):
    x = _as_points(x)
    a, h = s.i - 1, 2 - s.i
    if _is_array(x):
        out = np.zeros_like(x)
        out[..., a] = _shear_sign(s, x[..., h])
        return out
    out = [0, 0]
    out[a] = _shear_sign(s, x[h])
    return tuple(out)


def shear_map(s: ShearSpec, t, x):
    """Flow of the shear for time ``t`` (any sign); the inverse is ``-t``."""
    x = _as_points(x)
    a, h = s.i - 1, 2 - s.i
    if _is_array(x):
        y = x.copy()
        y[..., a] = y[..., a] + _shear_sign(s, x[..., h]) * t
        return wrap(y)
    y = list(x)
    y[a] = y[a] + _shear_sign(s, x[h]) * t
    return wrap(y)


class CancellationError(ValueError):
    """A hypothesis of the four-fold cancellation identity fails."""


def _cancellation_hypotheses(s1: ShearSpec, tau1, s2: ShearSpec, tau2) -> list[str]:
    tau1, tau2 = Fraction(tau1), Fraction(tau2)
    failed = []
    if s1.i == s2.i:
        failed.append("directions must differ (i1 != i2)")
    if 2 * tau2 != Fraction(1, 2 * s1.L):
        failed.append("2*tau2 must equal 1/(2*L1)")
    p = 2 * s2.L * tau1
    if p.denominator != 1 or p.numerator % 2 == 0:
        failed.append("2*L2*tau1 must be an odd integer")
    return failed


def cancellation_compose(s1: ShearSpec, tau1, s2: ShearSpec, tau2, x, strict: bool = True):
    """Evaluate ``y2^2 o y1 o y2^2 o y1`` at ``x`` (``y_j`` the flow for ``tau_j``).

    With ``strict`` the hypotheses under which this composite is the identity
    are checked first and a :class:`CancellationError` names the first
    failure. Pass ``strict=False`` to evaluate the composite regardless.
    """
    if strict:
        failed = _cancellation_hypotheses(s1, tau1, s2, tau2)
        if failed:
            raise CancellationError(failed[0])
    y = x
    for _ in range(2):
        y = shear_map(s1, tau1, y)
        y = shear_map(s2, tau2, y)
        y = shear_map(s2, tau2, y)
    return y


# -------------------------------------------------------- rectangle rotation

@dataclass(frozen=True)
class Rect:
    """Open rectangle of width ``W`` and height ``H`` centred at ``center``."""

    center: tuple = (0, 0)
    W: object = 1
    H: object = 1

    def __post_init__(self):
        if not (self.W > 0 and self.H > 0):
            raise ValueError("rectangle sides must be positive")

    @property
    def period(self):
        """Traversal time of one side of any level set, ``max(W, H)``."""
        return max(self.W, self.H)


def _rect_relative(r: Rect, x):
    cx, cy = r.center
    if _is_array(x):
        a = (x[..., 0] - cx) / r.W
        b = (x[..., 1] - cy) / r.H
        if np.any((np.abs(a) >= 0.5) | (np.abs(b) >= 0.5)):
            raise ValueError("point outside the open rectangle")
        return a, b
    a = (x[0] - cx) / r.W
    b = (x[1] - cy) / r.H
    if abs(a) >= Fraction(1, 2) or abs(b) >= Fraction(1, 2):
        raise ValueError("point outside the open rectangle")
    return a, b


def rect_rotation_velocity(r: Rect, x):
    """Counterclockwise velocity ``grad-perp psi`` at absolute position ``x``."""
    x = _as_points(x)
    a, b = _rect_relative(r, x)
    mn = min(r.W, r.H)
    if _is_array(x):
        horiz = np.abs(b) >= np.abs(a)
        out = np.zeros_like(x)
        out[..., 0] = np.where(horiz, -2 * mn * b / r.H, 0.0)
        out[..., 1] = np.where(horiz, 0.0, 2 * mn * a / r.W)
        return out
    if abs(b) >= abs(a):
        return (-2 * mn * b / r.H, 0 * a)
    return (0 * a, 2 * mn * a / r.W)


def _rot_norm_scalar(a, b, q):
    """Advance normalized ``(a, b)`` by ``q`` side-lengths counterclockwise."""
    rho = max(abs(a), abs(b))
    if rho == 0:
        return a, b
    if abs(b) >= abs(a):
        phi = 1 + (rho - a) / (2 * rho) if b > 0 else 3 + (a + rho) / (2 * rho)
    else:
        phi = (b + rho) / (2 * rho) if a > 0 else 2 + (rho - b) / (2 * rho)
    phi = phi + q
    phi = phi - 4 * math.floor(phi / 4)
    side = math.floor(phi)
    s = phi - side
    if side == 0:
        return rho, -rho + 2 * rho * s
    if side == 1:
        return rho - 2 * rho * s, rho
    if side == 2:
        return -rho, rho - 2 * rho * s
    return -rho + 2 * rho * s, -rho


def _rot_norm_array(a, b, q):
    q = np.broadcast_to(np.asarray(q, dtype=float), a.shape)
    # whole multiples of a half turn are point reflections; keep them exact
    half = q / 2.0
    exact = half == np.round(half)
    flip = np.mod(np.round(half), 2) == 1
    rho = np.maximum(np.abs(a), np.abs(b))
    safe = np.where(rho > 0, rho, 1.0)
    horiz = np.abs(b) >= np.abs(a)
    phi = np.where(
        horiz,
        np.where(b > 0, 1 + (rho - a) / (2 * safe), 3 + (a + rho) / (2 * safe)),
        np.where(a > 0, (b + rho) / (2 * safe), 2 + (rho - b) / (2 * safe)),
    )
    phi = np.mod(phi + q, 4.0)
    phi = np.where(phi >= 4.0, 0.0, phi)
    side = np.floor(phi)
    s = phi - side
    na = np.select([side == 0, side == 1, side == 2], [rho, rho - 2 * rho * s, -rho], -rho + 2 * rho * s)
    nb = np.select([side == 0, side == 1, side == 2], [-rho + 2 * rho * s, rho, rho - 2 * rho * s], -rho)
    na = np.where(exact, np.where(flip, -a, a), na)
    nb = np.where(exact, np.where(flip, -b, b), nb)
    na = np.where(rho > 0, na, a)
    nb = np.where(rho > 0, nb, b)
    return na, nb


def rect_rotation_map(r: Rect, t, x):
    """Exact counterclockwise rotation flow for time ``t`` (negative reverses).

    The level ``rho = max(|x1|/W, |x2|/H)`` is conserved and the perimeter
    phase advances uniformly, one side per ``max(W, H)``: a half rotation
    (point reflection through the centre) takes ``2 max(W, H)``.
    """
    x = _as_points(x)
    a, b = _rect_relative(r, x)
    if _is_array(x) or isinstance(t, float):
        q = t / r.period
    else:
        q = Fraction(t) / Fraction(r.period)
    cx, cy = r.center
    if _is_array(x):
        na, nb = _rot_norm_array(a, b, q)
        out = np.empty_like(x)
        out[..., 0] = cx + na * r.W
        out[..., 1] = cy + nb * r.H
        return out
    na, nb = _rot_norm_scalar(a, b, q)
    return (cx + na * r.W, cy + nb * r.H)


# ------------------------------------------------------------- binary swaps

def _pow2(e: int, exact: bool):
    return Fraction(2) ** e if exact else 2.0 ** e


@dataclass(frozen=True)
class SwapSpec:
    """The ``(i,k,n;L)`` binary swap, active for ``t`` in ``[0, 3 2^-k]``."""

    i: int
    k: int
    n: int
    L: int

    def __post_init__(self):
        if self.i not in (1, 2):
            raise ValueError("swap direction must be 1 or 2")
        if self.k < 1:
            raise ValueError("k must be positive")
        if not 1 <= self.n <= (1 << (self.k // 2)):
            raise ValueError(f"n must lie in 1..2^floor(k/2) = {1 << (self.k // 2)}")
        if self.L < self.k + 1:
            raise ValueError("L must be at least k+1")

    @property
    def duration(self) -> Fraction:
        return Fraction(3, 1 << self.k)

    @property
    def phase_split(self) -> Fraction:
        """Time ``2W = 2^(1-k)`` separating the two rotation phases."""
        return Fraction(2, 1 << self.k)

    def strip(self) -> tuple[Fraction, Fraction]:
        """``J_{k,n}`` as ``(left, right)``."""
        w = Fraction(1, 1 << (self.k // 2))
        return (self.n - 1) * w, self.n * w

    def phases(self):
        return SwapPhase(self, 1), SwapPhase(self, 2)

    def velocity(self, x, t):
        return swap_velocity(self, t, x)

    def flow(self, x, t):
        return swap_map(self, t, x)

    def endpoint(self, x):
        return swap_endpoint(self, x)


@dataclass(frozen=True)
class SwapPhase:
    """One stationary phase (1 or 2) of a binary swap field."""

    swap: SwapSpec
    phase: int

    def velocity(self, x):
        return _phase_velocity(self.swap, self.phase, _as_points(x))

    def flow(self, x, t):
        return _phase_flow(self.swap, self.phase, _as_points(x), t)


def _sigma(x):
    if _is_array(x):
        return x[..., ::-1].copy()
    return (x[1], x[0])


def _locate(s: SwapSpec, phase: int, x):
    """Rectangle containing ``x`` for the i=1 geometry.

    Returns ``(inside, cx, cy, width, height, orient)``; ``orient`` is +1 for
    counterclockwise and -1 for clockwise.
    """
    arr = _is_array(x)
    k, L = s.k, s.L
    w = _pow2(-(k // 2), not arr)
    cell = _pow2(1 - k, not arr)
    q = _pow2(-k - 1, not arr)  # quarter cell
    h = _pow2(-L, not arr)
    x1, x2 = (x[..., 0], x[..., 1]) if arr else x
    left = (s.n - 1) * w
    u = x1 - left
    if arr:
        r = np.floor(u / cell)
        p = u - r * cell
        j = np.floor(x2 / h)
        in_j = (u >= 0) & (u < w)
        in_stack = x2 > j * h
        if phase == 1:
            in_rect = (p > q) & (p < 3 * q)
            cx = left + r * cell + 2 * q
            width = 2 * q
        else:
            lefth = (p > q) & (p < 2 * q)
            righth = (p > 2 * q) & (p < 3 * q)
            in_rect = lefth | righth
            cx = left + r * cell + np.where(lefth, 1.5 * q, 2.5 * q)
            width = q
        inside = in_j & in_stack & in_rect
        cy = (j + 0.5) * h
        orient = np.where(np.mod(j, 2) == 0, -1.0, 1.0)
        return inside, cx, cy, width, h, orient
    r = math.floor(u / cell)
    p = u - r * cell
    j = math.floor(x2 / h)
    inside = 0 <= u < w and x2 > j * h
    if phase == 1:
        inside = inside and q < p < 3 * q
        cx = left + r * cell + 2 * q
        width = 2 * q
    else:
        inside = inside and (q < p < 2 * q or 2 * q < p < 3 * q)
        cx = left + r * cell + (Fraction(3, 2) * q if p < 2 * q else Fraction(5, 2) * q)
        width = q
    cy = (j + Fraction(1, 2)) * h
    orient = -1 if j % 2 == 0 else 1
    return inside, cx, cy, width, h, orient


def _phase_velocity(s: SwapSpec, phase: int, x):
    if s.i == 2:
        return _sigma(_phase_velocity(SwapSpec(1, s.k, s.n, s.L), phase, _sigma(x)))
    inside, cx, cy, W, H, orient = _locate(s, phase, x)
    mn = min(W, H)
    if _is_array(x):
        a = np.where(inside, (x[..., 0] - cx) / W, 0.0)
        b = np.where(inside, (x[..., 1] - cy) / H, 0.0)
        horiz = np.abs(b) >= np.abs(a)
        out = np.zeros_like(x)
        out[..., 0] = np.where(inside & horiz, -2 * mn * b / H * orient, 0.0)
        out[..., 1] = np.where(inside & ~horiz, 2 * mn * a / W * orient, 0.0)
        return out
    if not inside:
        return (0, 0)
    v = rect_rotation_velocity(Rect((cx, cy), W, H), x)
    return (orient * v[0], orient * v[1])


def _phase_flow(s: SwapSpec, phase: int, x, t):
    if s.i == 2:
        return _sigma(_phase_flow(SwapSpec(1, s.k, s.n, s.L), phase, _sigma(x), t))
    inside, cx, cy, W, H, orient = _locate(s, phase, x)
    T = max(W, H)
    if _is_array(x):
        a = np.where(inside, (x[..., 0] - cx) / W, 0.0)
        b = np.where(inside, (x[..., 1] - cy) / H, 0.0)
        na, nb = _rot_norm_array(a, b, orient * (t / T))
        out = x.copy()
        out[..., 0] = np.where(inside, cx + na * W, x[..., 0])
        out[..., 1] = np.where(inside, cy + nb * H, x[..., 1])
        return out
    if not inside:
        return tuple(x)
    return rect_rotation_map(Rect((cx, cy), W, H), orient * t, x)


def _check_swap_time(s: SwapSpec, t):
    if not 0 <= t <= s.duration:
        raise ValueError(f"swap time {t} outside [0, {s.duration}]")


def swap_velocity(s: SwapSpec, t, x):
    """Velocity of the binary swap field at local time ``t``."""
    _check_swap_time(s, t)
    phase = 1 if t < s.phase_split else 2
    return _phase_velocity(s, phase, _as_points(x))


def swap_map(s: SwapSpec, t, x):
    """Flow of the binary swap from local time 0 to ``t``."""
    _check_swap_time(s, t)
    x = _as_points(x)
    split = s.phase_split if not _is_array(x) else float(s.phase_split)
    if t <= split:
        return _phase_flow(s, 1, x, t)
    y = _phase_flow(s, 1, x, split)
    return _phase_flow(s, 2, y, t - split)


def swap_endpoint(s: SwapSpec, x):
    """Exchange binary digits ``k`` and ``k+1`` of ``x_i`` when ``x_i`` is in ``J_{k,n}``."""
    x = _as_points(x)
    a = s.i - 1
    k = s.k
    lo, hi = s.strip()
    if _is_array(x):
        xi = x[..., a]
        dk = np.mod(np.floor(xi * 2.0 ** k), 2)
        dk1 = np.mod(np.floor(xi * 2.0 ** (k + 1)), 2)
        inside = (xi >= float(lo)) & (xi < float(hi))
        y = x.copy()
        y[..., a] = np.where(inside, xi + (dk1 - dk) * 2.0 ** (-k - 1), xi)
        return y
    xi = x[a]
    if not lo <= xi < hi:
        return tuple(x)
    dk = math.floor(xi * 2 ** k) % 2
    dk1 = math.floor(xi * 2 ** (k + 1)) % 2
    y = list(x)
    y[a] = xi + (dk1 - dk) * Fraction(1, 2 ** (k + 1))
    return tuple(y)


def digit_shift(m: int, x):
    """``z_m``: shift both binary expansions left by ``m`` digits (``2^m x mod 1``)."""
    if m < 0:
        raise ValueError("m must be non-negative")
    x = _as_points(x)
    if _is_array(x):
        return wrap(x * 2.0 ** m)
    return wrap((v * 2 ** m for v in x))


# ------------------------------------------------------ program primitives

@dataclass(frozen=True)
class Still:
    """The zero field; its flow is the identity."""

    def velocity(self, x):
        x = _as_points(x)
        if _is_array(x):
            return np.zeros_like(x)
        return (0 * x[0], 0 * x[1])

    def flow(self, x, t):
        x = _as_points(x)
        return x.copy() if _is_array(x) else tuple(x)


@dataclass(frozen=True)
class Reversed:
    """Stationary field ``-u`` for a stationary primitive ``u``: flow runs backwards."""

    base: object

    def velocity(self, x):
        v = self.base.velocity(x)
        if _is_array(v):
            return -v
        return (-v[0], -v[1])

    def flow(self, x, t):
        return self.base.flow(x, -t)
