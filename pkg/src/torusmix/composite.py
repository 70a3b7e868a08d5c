"""Composite space-time velocity fields built from the primitives.

* :class:`FractalSpec`: shears ``(i_k; L_k)`` switched on during the dyadic
  slots ``[t_{k,m}, t_{k,m} + tau_k]`` of ``[0, 1]``.
* :class:`MixSpec`: binary swaps ``(i,k,n; L_P)`` for every quad ``P`` of a
  lexicographic prefix, each run over ``[T_P, T_P + 3 2^-k)`` inside
  ``[0, 50]`` (zero from 42 on).
* :class:`MirroredSpec`: the mixing field on ``[0, 50]`` followed by its
  time-reversed negative on ``[50, 100]``.

Every spec reduces to a list of :class:`Segment` objects: stationary
primitives on exact time intervals. The weak-* distance and the transport
programs both work from these segments.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence, Union

import numpy as np

from .flows import Reversed, ShearSpec, SwapPhase, SwapSpec
from .schedule import (
    QuadIndex, check_quad, generate_schedule, lex_prefix, parse_quad, swap_start_time,
)

__all__ = [
    "FractalSpec", "MixSpec", "MirroredSpec", "Segment", "FractalReport",
    "validate_fractal", "fractal_velocity", "mixing_velocity",
    "mirrored_velocity", "field_segments", "field_horizon", "build_vv_params",
    "TestFamily", "WeakStarDistance", "weak_star_distance", "dumps_spec",
    "loads_spec", "BASE_LEVEL", "ProximityError",
]

#: First level of the non-uniqueness construction.
BASE_LEVEL = (1, 4, Fraction(1, 4))


@dataclass(frozen=True)
class Segment:
    """Stationary primitive active on ``[start, end)``."""

    start: Fraction
    end: Fraction
    primitive: object

    @property
    def duration(self) -> Fraction:
        return self.end - self.start


# ------------------------------------------------------------------ fractal

@dataclass(frozen=True)
class FractalSpec:
    """Levels ``(i_k, L_k, tau_k)`` for ``k = 1..K``."""

    levels: tuple = ()

    def __post_init__(self):
        lv = tuple((int(i), int(L), Fraction(tau)) for i, L, tau in self.levels)
        object.__setattr__(self, "levels", lv)
        for i, L, tau in lv:
            ShearSpec(i, L)
            if tau <= 0:
                raise ValueError("tau must be positive")

    @property
    def K(self) -> int:
        return len(self.levels)

    @property
    def horizon(self) -> Fraction:
        return Fraction(1)

    def truncate(self, K: int) -> "FractalSpec":
        return FractalSpec(self.levels[:K])

    def shear(self, k: int) -> ShearSpec:
        i, L, _ = self.levels[k - 1]
        return ShearSpec(i, L)

    def schedule(self):
        return generate_schedule(self.K, "dyadic", [tau for _, _, tau in self.levels])


@dataclass
class FractalReport:
    """Per-level status of the finiteness and cancellation conditions."""

    finiteness_strict: list = field(default_factory=list)
    finiteness_nonstrict: list = field(default_factory=list)
    cancellation: list = field(default_factory=list)

    @property
    def boundary_levels(self) -> list[int]:
        """Levels where ``tau_k = 4^-k`` exactly (accepted, flagged)."""
        return [k for k, (s, ns) in enumerate(zip(self.finiteness_strict, self.finiteness_nonstrict), 1) if ns and not s]

    @property
    def finite(self) -> bool:
        return all(self.finiteness_nonstrict)

    @property
    def cancels(self) -> bool:
        return all(all(c.values()) for c in self.cancellation)

    @property
    def ok(self) -> bool:
        return self.finite and self.cancels


def validate_fractal(spec: FractalSpec) -> FractalReport:
    rep = FractalReport()
    for k, (_, _, tau) in enumerate(spec.levels, 1):
        cap = Fraction(1, 4 ** k)
        rep.finiteness_strict.append(tau < cap)
        rep.finiteness_nonstrict.append(tau <= cap)
    for k in range(1, spec.K):
        i0, L0, t0 = spec.levels[k - 1]
        i1, L1, t1 = spec.levels[k]
        p = 2 * L1 * t0
        rep.cancellation.append({
            "directions_alternate": i0 != i1,
            "tau_matches_strip": 2 * t1 == Fraction(1, 2 * L0),
            "odd_crossing": p.denominator == 1 and p.numerator % 2 == 1,
        })
    return rep


def _check_time(t, lo, hi, what):
    if not lo <= t <= hi:
        raise ValueError(f"{what} time {t} outside [{lo}, {hi}]")


def fractal_velocity(spec: FractalSpec, x, t):
    """Velocity of the truncated fractal field at ``(x, t)``."""
    _check_time(t, 0, 1, "fractal")
    for seg in _fractal_segments(spec):
        if seg.start <= t <= seg.end:
            return seg.primitive.velocity(x)
        if seg.start > t:
            break
    return _zero(x)


def _zero(x):
    if isinstance(x, np.ndarray):
        return np.zeros_like(np.asarray(x, dtype=float))
    return (0, 0)


def _fractal_segments(spec: FractalSpec) -> list[Segment]:
    return [Segment(e.start, e.end, spec.shear(e.payload.k)) for e in spec.schedule()]


class ProximityError(RuntimeError):
    """No admissible ``M`` met the weak-* budget below the search cap."""

    def __init__(self, level, eps, best):
        super().__init__(f"level {level}: best weak-* distance {best:.3e} exceeds budget {eps:.3e}")
        self.level, self.eps, self.best = level, eps, best


def build_vv_params(K: int, proximity_budget: Sequence[float] | None = None, family: "TestFamily | None" = None,
                    M_cap: int = 2 ** 20, extra_M: Sequence[int] | None = None) -> FractalSpec:
    """Inductive level construction of the non-uniqueness field.

    Level 1 is ``(1, 4, 1/4)``. Level ``n+1`` alternates the direction, takes
    ``tau_{n+1} = 1/(4 L_n)`` and ``L_{n+1} = 2 L_{n-1} (2M+1)`` (``L_0 = 1``)
    with ``M`` the smallest integer for which ``L_{n+1} >= 2^(2n+2)`` and the
    weak-* distance between consecutive truncations is at most ``eps_n``
    (``proximity_budget[n-1]``; ``None`` disables that constraint).

    ``extra_M`` optionally raises the lower bound on ``M`` per level, which
    the calibration driver uses to walk probe candidates.
    """
    if K < 1:
        return FractalSpec(())
    family = family or TestFamily()
    levels = [BASE_LEVEL]
    L_prev = 1
    for n in range(1, K):
        i_n, L_n, _ = levels[-1]
        tau = Fraction(1, 4 * L_n)
        need = 2 ** (2 * n + 2)
        M = 0
        while 2 * L_prev * (2 * M + 1) < need:
            M += 1
        if extra_M is not None and n - 1 < len(extra_M):
            M = max(M, extra_M[n - 1])
        eps = None if proximity_budget is None else proximity_budget[n - 1]
        base = FractalSpec(tuple(levels))
        best = math.inf
        while True:
            L_next = 2 * L_prev * (2 * M + 1)
            cand = FractalSpec(tuple(levels) + ((3 - i_n, L_next, tau),))
            if eps is None:
                break
            d = float(weak_star_distance(cand, base, family))
            best = min(best, d)
            if d <= eps:
                break
            M += 1
            if M > M_cap:
                raise ProximityError(n + 1, eps, best)
        levels.append((3 - i_n, L_next, tau))
        L_prev = L_n
    return FractalSpec(tuple(levels))


# -------------------------------------------------------------------- mixing

@dataclass(frozen=True)
class MixSpec:
    """Binary swaps over the lexicographic prefix ending at ``prefix``.

    ``Ls`` lists ``(quad, L)`` pairs in lexicographic order; use
    :meth:`with_rule` to build one from a per-level rule.
    """

    prefix: QuadIndex | None
    Ls: tuple = ()

    def __post_init__(self):
        pre = None if self.prefix is None else check_quad(self.prefix)
        object.__setattr__(self, "prefix", pre)
        quads = lex_prefix(pre)
        pairs = tuple((check_quad(q), int(L)) for q, L in self.Ls)
        if [q for q, _ in pairs] != quads:
            raise ValueError("L table must cover exactly the lexicographic prefix, in order")
        for q, L in pairs:
            if L < q.k + 1:
                raise ValueError(f"L={L} < k+1 for {tuple(q)}")
        object.__setattr__(self, "Ls", pairs)

    @classmethod
    def with_rule(cls, prefix, rule: Union[int, Callable[[QuadIndex], int]] = 2) -> "MixSpec":
        """``rule`` is either an offset (``L = k + 1 + rule``) or a callable."""
        pre = None if prefix in (None, 0) else check_quad(prefix)
        f = (lambda q: q.k + 1 + rule) if isinstance(rule, int) else rule
        return cls(pre, tuple((q, f(q)) for q in lex_prefix(pre)))

    @property
    def horizon(self) -> Fraction:
        return Fraction(50)

    @property
    def max_k(self) -> int:
        return max((q.k for q, _ in self.Ls), default=0)

    @property
    def max_L(self) -> int:
        return max((L for _, L in self.Ls), default=0)

    def swaps(self):
        """``(start, SwapSpec)`` pairs sorted by start time."""
        out = [(swap_start_time(q), SwapSpec(q.i, q.k, q.n, L)) for q, L in self.Ls]
        out.sort(key=lambda p: p[0])
        return out


@dataclass(frozen=True)
class MirroredSpec:
    """Mix on ``[0, 50]`` then unmix: ``u(x, t) = -u_mix(x, 100 - t)`` on ``[50, 100]``."""

    mix: MixSpec

    @property
    def horizon(self) -> Fraction:
        return Fraction(100)


def _mix_segments(spec: MixSpec) -> list[Segment]:
    segs = []
    for start, sw in spec.swaps():
        p1, p2 = sw.phases()
        segs.append(Segment(start, start + sw.phase_split, p1))
        segs.append(Segment(start + sw.phase_split, start + sw.duration, p2))
    return segs


def _mirrored_segments(spec: MirroredSpec) -> list[Segment]:
    fwd = _mix_segments(spec.mix)
    back = [Segment(100 - s.end, 100 - s.start, Reversed(s.primitive)) for s in reversed(fwd)]
    return fwd + back


def field_segments(spec) -> list[Segment]:
    """Active stationary pieces of a field spec, sorted by start time."""
    if isinstance(spec, FractalSpec):
        return _fractal_segments(spec)
    if isinstance(spec, MixSpec):
        return _mix_segments(spec)
    if isinstance(spec, MirroredSpec):
        return _mirrored_segments(spec)
    raise TypeError(f"unsupported field spec {type(spec).__name__}")


def field_horizon(spec) -> Fraction:
    return spec.horizon


def _segment_velocity(segs, x, t):
    for seg in segs:
        if seg.start <= t < seg.end:
            return seg.primitive.velocity(x)
        if seg.start > t:
            break
    return _zero(x)


def mixing_velocity(spec: MixSpec, x, t):
    _check_time(t, 0, 50, "mixing")
    return _segment_velocity(_mix_segments(spec), x, t)


def mirrored_velocity(spec, x, t):
    """Mirrored field; accepts a :class:`MixSpec` or :class:`MirroredSpec`."""
    mix = spec.mix if isinstance(spec, MirroredSpec) else spec
    _check_time(t, 0, 100, "mirrored")
    if t <= 50:
        return mixing_velocity(mix, x, t)
    v = mixing_velocity(mix, x, 100 - t)
    return -v if isinstance(v, np.ndarray) else (-v[0], -v[1])


# ------------------------------------------------------------ weak-* metric

@dataclass(frozen=True)
class TestFamily:
    """Test functions ``e^{2 pi i j.x} h_{q,r}(t)`` paired with each component.

    ``h_{q,r}`` is the unit hat on the r-th of ``2^q`` equal subintervals of
    the time horizon. The pair ``(j, (q,r))`` carries weight
    ``2^-(|j|_1 + q) / radius``; modes are cut at ``|j|_inf <= j_max``.
    ``grid`` is the quadrature resolution for primitives without a closed
    form Fourier series (swap phases).
    """

    __test__ = False  # not a pytest class

    j_max: int = 1024
    q_max: int = 4
    radius: float = 1.0
    grid: int = 128

    def windows(self, horizon):
        out = []
        for q in range(self.q_max + 1):
            w = Fraction(horizon) / 2 ** q
            out += [(q, r * w, (r + 1) * w) for r in range(2 ** q)]
        return out


@dataclass(frozen=True)
class WeakStarDistance:
    value: float
    under_resolved: bool = False

    def __float__(self):
        return self.value


def _hat_integral(a: float, b: float, lo: float, hi: float) -> float:
    """Integral over ``[a, b]`` of the unit hat supported on ``[lo, hi]``."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)

    def F(t):  # antiderivative, F(lo) = 0
        t = min(max(t, lo), hi)
        if t <= mid:
            return 0.5 * (t - lo) ** 2 / half
        return 0.5 * half + (t - mid) - 0.5 * (t - mid) ** 2 / half

    return F(b) - F(a)


def _shear_modes(s: ShearSpec, j_max: int):
    """Closed-form Fourier coefficients of the shear's nonzero component.

    The profile is a square wave of period ``1/L``: only ``j = L p`` with odd
    ``p`` survives, with coefficient ``2 / (i pi p)``.
    """
    out = []
    pmax = j_max // s.L
    for p in range(-pmax, pmax + 1):
        if p % 2 == 0:
            continue
        c = 2.0 / (1j * math.pi * p)
        j = (0, s.L * p) if s.i == 1 else (s.L * p, 0)
        out.append((s.i - 1, j, c))
    return out


def _grid_modes(prim, M: int, j_cut: int):
    g = (np.arange(M) + 0.5) / M
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    v = prim.velocity(X)
    out = []
    freqs = np.fft.fftfreq(M, 1.0 / M).astype(int)
    for c in range(2):
        F = np.fft.fft2(v[..., c]) / M ** 2
        # shift phase to the cell-centred sample points
        ph = np.exp(-1j * np.pi * freqs / M)
        F = F * ph[:, None] * ph[None, :]
        sel = np.abs(freqs) <= j_cut
        idx = np.nonzero(sel)[0]
        for a in idx:
            for b in idx:
                if F[a, b] != 0:
                    out.append((c, (int(freqs[a]), int(freqs[b])), complex(F[a, b])))
    return out


def _prim_modes(prim, family: TestFamily, cache: dict):
    key = prim
    if key in cache:
        return cache[key]
    flag = False
    if isinstance(prim, Reversed):
        base, flag = _prim_modes(prim.base, family, cache)
        res = ([(c, j, -v) for c, j, v in base], flag)
    elif isinstance(prim, ShearSpec):
        res = (_shear_modes(prim, family.j_max), False)
    elif isinstance(prim, SwapPhase):
        M = family.grid
        j_cut = min(family.j_max, M // 2 - 1)
        flag = M < 2 ** (prim.swap.L + 2) or j_cut < family.j_max
        res = (_grid_modes(prim, M, j_cut), flag)
    else:
        raise TypeError(f"no Fourier model for {type(prim).__name__}")
    cache[key] = res
    return res


def weak_star_distance(uA, uB, family: TestFamily | None = None) -> WeakStarDistance:
    """Weighted sum of test-function pairings of ``uA - uB``.

    Time integrals are exact (fields are piecewise stationary); spatial
    coefficients are closed form for shears and FFT quadrature otherwise.
    """
    family = family or TestFamily()
    horizon = max(field_horizon(uA), field_horizon(uB))
    wins = family.windows(horizon)
    wq = np.array([2.0 ** -q for q, _, _ in wins])
    acc: dict = {}
    cache: dict = {}
    flag = False
    for sign, spec in ((1.0, uA), (-1.0, uB)):
        for seg in field_segments(spec):
            a, b = float(seg.start), float(seg.end)
            h = np.array([_hat_integral(a, b, float(lo), float(hi)) for _, lo, hi in wins])
            if not h.any():
                continue
            modes, f = _prim_modes(seg.primitive, family, cache)
            flag |= f
            for c, j, coef in modes:
                key = (c, j)
                if key not in acc:
                    acc[key] = np.zeros(len(wins), dtype=complex)
                acc[key] += sign * coef * h
    total = 0.0
    # deterministic reduction order
    for (c, j) in sorted(acc):
        total += 2.0 ** -(abs(j[0]) + abs(j[1])) * float(np.sum(wq * np.abs(acc[(c, j)])))
    return WeakStarDistance(total / family.radius, flag)


# ------------------------------------------------------------- serialization

def _frac(s: str) -> Fraction:
    return Fraction(s.strip())


def dumps_spec(spec) -> str:
    """Human-readable ``key = value`` text with exact integers and fractions."""
    if isinstance(spec, FractalSpec):
        lines = ["kind = fractal", f"K = {spec.K}"]
        lines += [f"level.{k} = {i} {L} {tau}" for k, (i, L, tau) in enumerate(spec.levels, 1)]
    elif isinstance(spec, (MixSpec, MirroredSpec)):
        mix = spec.mix if isinstance(spec, MirroredSpec) else spec
        kind = "mirrored" if isinstance(spec, MirroredSpec) else "mix"
        pre = "0" if mix.prefix is None else "(" + ",".join(map(str, mix.prefix)) + ")"
        lines = [f"kind = {kind}", f"prefix = {pre}"]
        lines += [f"L.({q.k},{q.m},{q.i},{q.n}) = {L}" for q, L in mix.Ls]
    else:
        raise TypeError(f"cannot serialize {type(spec).__name__}")
    return "\n".join(lines) + "\n"


def _parse_kv(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"malformed line {raw!r}")
        out[key.strip()] = val.strip()
    return out


def loads_spec(text: str):
    kv = _parse_kv(text)
    kind = kv.get("kind")
    if kind == "fractal":
        K = int(kv["K"])
        levels = []
        for k in range(1, K + 1):
            i, L, tau = kv[f"level.{k}"].split()
            levels.append((int(i), int(L), _frac(tau)))
        return FractalSpec(tuple(levels))
    if kind in ("mix", "mirrored"):
        pre = parse_quad(kv["prefix"])
        table = {}
        for key, val in kv.items():
            m = re.fullmatch(r"L\.\((\d+),(\d+),(\d+),(\d+)\)", key)
            if m:
                table[QuadIndex(*map(int, m.groups()))] = int(val)
        Ls = tuple((q, table[q]) for q in lex_prefix(pre))
        mix = MixSpec(pre, Ls)
        return MirroredSpec(mix) if kind == "mirrored" else mix
    raise ValueError(f"unknown spec kind {kind!r}")
