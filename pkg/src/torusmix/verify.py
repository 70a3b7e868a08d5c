"""Quick invariant checks behind ``torusmix verify``.

Each check returns ``(name, passed, detail)``. All randomness comes from
one seeded generator, so a given seed reproduces the same sample points.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .flows import ShearSpec, SwapSpec, cancellation_compose, swap_endpoint, swap_map
from .grid import lp_norm
from .limits import LEAK_C, leak_constant_quadrature, mixing_spec
from .schedule import generate_schedule, lex_iter
from .transport import compile_flow, datum, pullback

__all__ = ["quad_total_closed_form", "run_all"]


def quad_total_closed_form(K: int) -> tuple[Fraction, Fraction]:
    """``(sum over levels <= K, tail over levels > K)`` of the quad active time.

    Level ``k`` carries ``2 k 2^floor(k/2)`` swaps of length ``3 2^-k``.
    The tail uses ``sum_{j>J} j 2^-j = (J+2) 2^-J`` and ``sum_{j>J} 2^-j = 2^-J``
    separately on even and odd levels.
    """
    head = sum((Fraction(6 * k * 2 ** (k // 2), 2 ** k) for k in range(1, K + 1)), Fraction(0))
    # even levels k = 2j > K: 12 j 2^-j ; odd levels k = 2j+1 > K: 3 (2j+1) 2^-j
    Je = K // 2            # even tail starts at j = Je + 1
    Jo = (K - 1) // 2      # odd tail starts at j = Jo + 1 (k = 2j+1 > K)
    h = Fraction(1, 2)
    even = 12 * (Je + 2) * h ** Je
    odd = 3 * (2 * (Jo + 2) + 1) * h ** Jo
    return head, even + odd


def _schedule_checks():
    out = []
    ok = True
    for K in range(1, 9):
        taus = [Fraction(1, 4 ** k) for k in range(1, K + 1)]
        total = sum((e.duration for e in generate_schedule(K, "dyadic", taus)), Fraction(0))
        ok &= total == 1 - Fraction(1, 2 ** K)
    out.append(("dyadic budget 1 - 2^-K", ok, "K = 1..8, exact"))
    ok = True
    for K in range(0, 9):
        head, tail = quad_total_closed_form(K)
        last = list(lex_iter(K))[-1] if K else None
        sched = sum((e.duration for e in generate_schedule(last, "quad")), Fraction(0))
        ok &= sched == head and head + tail == 42
    out.append(("quad total time 42", ok, "partial sums + exact tail, K = 0..8"))
    return out


def _cancellation_check(rng, points):
    bad = 0
    tried = 0
    for _ in range(12):
        i1 = int(rng.integers(1, 3))
        L1, L2 = int(rng.integers(1, 65)), int(rng.integers(1, 65))
        tau2 = Fraction(1, 4 * L1)
        odd = 2 * int(rng.integers(0, 4)) + 1
        tau1 = Fraction(odd, 2 * L2)
        s1, s2 = ShearSpec(i1, L1), ShearSpec(3 - i1, L2)
        for _ in range(max(1, points // 12)):
            x = (Fraction(int(rng.integers(0, 2 ** 20)), 2 ** 20), Fraction(int(rng.integers(0, 2 ** 20)), 2 ** 20))
            tried += 1
            bad += cancellation_compose(s1, tau1, s2, tau2, x) != x
    return ("cancellation identity (exact)", bad == 0, f"{tried} dyadic points, {bad} mismatches")


def _swap_check(rng, points):
    worst = 0.0
    for k in range(1, 5):
        for L in range(k + 1, 9):
            for i in (1, 2):
                for n in range(1, 2 ** (k // 2) + 1):
                    s = SwapSpec(i, k, n, L)
                    x = rng.random((max(1, points // 40), 2))
                    # stay clear of the dyadic grid lines where both maps jump
                    g = x * 2.0 ** (L + 1)
                    keep = np.all(np.abs(g - np.round(g)) > 1e-6, axis=-1)
                    x = x[keep]
                    d = np.abs(swap_map(s, s.duration, x) - swap_endpoint(s, x))
                    worst = max(worst, float(np.max(np.minimum(d, 1 - d), initial=0.0)))
    return ("swap realises digit swap", worst <= 1e-9, f"max error {worst:.2e}")


def _norm_check():
    spec_prog = compile_flow(mixing_spec(2))
    worst = 0.0
    for name in ("sin", "smooth_sign", "checker4"):
        f0 = datum(name)
        g0 = f0.grid(64)
        for t in (Fraction(12), Fraction(33, 2), Fraction(50), Fraction(71)):
            g = pullback(f0, spec_prog, t, 64)
            for p in (1, 2, np.inf):
                worst = max(worst, abs(lp_norm(g, p) - lp_norm(g0, p)))
    return ("inviscid norm preservation", worst <= 1e-8, f"max |dnorm| {worst:.2e}")


def run_all(seed: int = 0, points: int = 1000):
    rng = np.random.default_rng(seed)
    res = _schedule_checks()
    res.append(_cancellation_check(rng, points))
    res.append(_swap_check(rng, points))
    res.append(_norm_check())
    c = leak_constant_quadrature()
    res.append(("leak constant 8 sqrt(3)/sqrt(pi)", abs(c - LEAK_C) <= 1e-10, f"quadrature {c:.15f}"))
    return res
