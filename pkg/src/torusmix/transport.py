"""Exact inviscid transport by composing flow maps.

A :class:`FlowProgram` tiles ``[0, horizon]`` with stationary segments
(identity filling unscheduled time). The Lagrangian solution is the
pullback ``f(x, t) = f0(Y_t^{-1} x)``: starting from ``x``, each segment
before ``t`` is undone in reverse time order.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .composite import (
    FractalSpec, Segment, field_horizon, field_segments,
    validate_fractal,
)
from .flows import ShearSpec, Still, digit_shift, shear_map
from .grid import GridField, cell_centers, exact_cell_centers

__all__ = [
    "FlowProgram", "ScalarSampler", "compile_flow", "inverse_flow_point",
    "forward_flow_point", "lagrangian_value", "pullback", "even_odd_endpoints",
    "mixing_snapshot", "finite_depth_snapshot", "sin_x1", "cos_x1",
    "smooth_sign", "sign_x1", "checkerboard", "constant", "held_out", "BATTERY",
    "battery", "datum", "odd_target",
]


@dataclass(frozen=True)
class FlowProgram:
    segments: tuple
    horizon: Fraction

    def breakpoints(self) -> list[Fraction]:
        return sorted({s.start for s in self.segments} | {self.horizon})

    def active(self) -> list[Segment]:
        return [s for s in self.segments if not isinstance(s.primitive, Still)]

    def segment_at(self, t) -> Segment:
        """Segment containing ``t`` (left-continuous: ``start < t <= end``; t=0 gives the first)."""
        for s in self.segments:
            if t <= s.end:
                return s
        raise ValueError(f"time {t} beyond horizon {self.horizon}")


def compile_flow(spec, horizon=None) -> FlowProgram:
    """Piecewise-stationary program of a field spec, identity in the gaps."""
    full = field_horizon(spec)
    horizon = full if horizon is None else Fraction(horizon)
    if horizon > full or horizon < 0:
        raise ValueError(f"horizon {horizon} outside the field's domain [0, {full}]")
    segs = []
    t = Fraction(0)
    for s in field_segments(spec):
        if s.start >= horizon:
            break
        if s.start > t:
            segs.append(Segment(t, s.start, Still()))
        end = min(s.end, horizon)
        segs.append(Segment(s.start, end, s.primitive))
        t = end
    if t < horizon or not segs:
        segs.append(Segment(t, horizon, Still()))
    return FlowProgram(tuple(segs), horizon)


def _time(t, exact: bool):
    return Fraction(t) if exact else float(t)


def inverse_flow_point(prog: FlowProgram, t, x):
    """``Y_t^{-1}(x)``; exact when ``x`` is a pair of fractions and ``t`` is exact."""
    exact = not isinstance(x, np.ndarray) and not isinstance(t, float)
    if t > prog.horizon:
        raise ValueError(f"time {t} beyond horizon {prog.horizon}")
    y = x
    for s in reversed(prog.segments):
        if s.start >= t or isinstance(s.primitive, Still):
            continue
        dur = min(Fraction(t) if exact else t, s.end) - s.start
        y = s.primitive.flow(y, -_time(dur, exact))
    return y


def forward_flow_point(prog: FlowProgram, t, x):
    """``Y_t(x)``, the forward composition of segment flows up to ``t``."""
    exact = not isinstance(x, np.ndarray) and not isinstance(t, float)
    y = x
    for s in prog.segments:
        if s.start >= t:
            break
        if isinstance(s.primitive, Still):
            continue
        dur = min(Fraction(t) if exact else t, s.end) - s.start
        y = s.primitive.flow(y, _time(dur, exact))
    return y


# ------------------------------------------------------------------- data

@dataclass(frozen=True)
class ScalarSampler:
    """Pointwise initial datum with a declared sup bound."""

    func: Callable
    bound: float
    name: str = "datum"

    def __call__(self, x):
        if isinstance(x, np.ndarray):
            return self.func(np.asarray(x, dtype=float))
        v = self.func(np.array([float(x[0]), float(x[1])]))
        return float(v)

    def grid(self, N: int) -> GridField:
        return GridField(self(cell_centers(N)))


def sin_x1() -> ScalarSampler:
    return ScalarSampler(lambda x: np.sin(2 * np.pi * x[..., 0]), 1.0, "sin")


def cos_x1() -> ScalarSampler:
    return ScalarSampler(lambda x: np.cos(2 * np.pi * x[..., 0]), 1.0, "cos")


def smooth_sign(delta: float = 1 / 64) -> ScalarSampler:
    """``sign(x1 - 1/2)`` on the torus with both jumps smoothed over ``delta``."""
    def f(x):
        s = x[..., 0]
        return np.tanh((s - 0.5) / delta) * np.tanh(s / delta) * np.tanh((1 - s) / delta)
    return ScalarSampler(f, 1.0, "smooth_sign")


def sign_x1() -> ScalarSampler:
    """``sign(x1 - 1/2)`` itself, constant on the dyadic halves."""
    return ScalarSampler(lambda x: np.where(x[..., 0] < 0.5, -1.0, 1.0), 1.0, "sign")


def checkerboard(n: int = 4) -> ScalarSampler:
    def f(x):
        a = np.floor(n * x[..., 0]) + np.floor(n * x[..., 1])
        return 1.0 - 2.0 * np.mod(a, 2)
    return ScalarSampler(f, 1.0, f"checker{n}")


def constant(c: float = 1.0) -> ScalarSampler:
    return ScalarSampler(lambda x: np.full(x.shape[:-1], float(c)), abs(float(c)), f"const{c:g}")


def held_out() -> ScalarSampler:
    """Datum kept out of calibration: a tilted two-mode wave."""
    def f(x):
        return 0.6 * np.cos(2 * np.pi * (x[..., 0] + x[..., 1])) + 0.4 * np.sin(4 * np.pi * x[..., 0])
    return ScalarSampler(f, 1.0, "held_out")


BATTERY = ("sin", "smooth_sign", "checker4")

_DATA = {
    "sin": sin_x1, "cos": cos_x1, "smooth_sign": smooth_sign, "sign": sign_x1,
    "checker4": lambda: checkerboard(4), "held_out": held_out,
    "constant": lambda: constant(1.0),
}


def datum(name: str) -> ScalarSampler:
    try:
        return _DATA[name]()
    except KeyError:
        raise ValueError(f"unknown datum {name!r}; choose from {sorted(_DATA)}") from None


def battery() -> list[ScalarSampler]:
    return [datum(n) for n in BATTERY]


# -------------------------------------------------------------- snapshots

def lagrangian_value(f0: ScalarSampler, prog: FlowProgram, x, t):
    return f0(inverse_flow_point(prog, t, x))


def pullback(f0: ScalarSampler, prog: FlowProgram, t, N: int, exact: bool = False) -> GridField:
    """Sample ``f0 o Y_t^{-1}`` at the cell centres.

    ``exact=True`` runs the composition in rational arithmetic point by
    point (slow; meant for small grids and identity checks).
    """
    if exact:
        pts = [inverse_flow_point(prog, Fraction(t), p) for p in exact_cell_centers(N)]
        arr = np.array([[float(u), float(v)] for u, v in pts]).reshape(N, N, 2)
        return GridField(f0(arr))
    return GridField(f0(inverse_flow_point(prog, float(t), cell_centers(N))))


def even_odd_endpoints(f0: ScalarSampler, spec: FractalSpec, K_even: int, K_odd: int, N: int,
                       exact: bool = False) -> tuple[GridField, GridField]:
    """Time-1 snapshots of the depth ``K_even`` and ``K_odd`` truncations."""
    if K_even % 2 or not K_odd % 2:
        raise ValueError("K_even must be even and K_odd odd")
    if max(K_even, K_odd) > spec.K:
        raise ValueError("spec too shallow for the requested depths")
    rep = validate_fractal(spec.truncate(max(K_even, K_odd)))
    if not rep.ok:
        raise ValueError(f"spec violates the finiteness or cancellation conditions: {rep}")
    out = []
    for K in (K_even, K_odd):
        prog = compile_flow(spec.truncate(K))
        out.append(pullback(f0, prog, 1, N, exact=exact))
    return out[0], out[1]


def odd_target(f0: ScalarSampler, spec: FractalSpec, N: int) -> GridField:
    """``f0 o y_{-2 tau_1}`` sampled at cell centres (closed form of the odd trace)."""
    i, L, tau = spec.levels[0]
    return GridField(f0(shear_map(ShearSpec(i, L), -2 * float(tau), cell_centers(N))))


def mixing_snapshot(f0: ScalarSampler, m: int, N: int) -> GridField:
    """``f0 o z_m``: the perfectly mixed profile at epoch ``T_m``."""
    return GridField(f0(digit_shift(m, cell_centers(N))))


def finite_depth_snapshot(f0: ScalarSampler, spec, t, N: int, exact: bool = False) -> GridField:
    prog = compile_flow(spec)
    return pullback(f0, prog, t, N, exact=exact)
