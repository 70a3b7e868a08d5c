"""Exact combinatorics of the two time schedules.

Two index families drive the constructions:

* dyadic pairs ``(k, m)`` with ``0 <= m < 2**k`` order the shear
  applications of the fractal fields on ``[0, 1]``;
* quadruples ``(k, m, i, n)`` with ``m <= k``, ``i in {1, 2}`` and
  ``n <= 2**(k // 2)`` order the binary swaps of the mixing field on
  ``[0, 42]``.

All times are :class:`fractions.Fraction`. Floating point never enters this
module. Dyadic values are plain fractions whose denominator is a power of
two; :func:`dyadic` and :func:`log_denominator` convert between the two
views.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple, Sequence, Union

__all__ = [
    "DyadicPair", "QuadIndex", "ScheduleEntry", "dyadic", "log_denominator",
    "check_pair", "check_quad", "less_time_dyadic", "shear_start_time",
    "less_lex", "less_time_quad", "swap_start_time", "epoch_time",
    "swap_duration", "QUAD_HORIZON", "lex_iter", "lex_rank", "lex_unrank",
    "lex_prefix", "generate_schedule", "schedule_csv", "parse_quad",
]

#: Total swap time, sum of all durations over the quadruple family.
QUAD_HORIZON = Fraction(42)


def dyadic(numerator: int, log_den: int = 0) -> Fraction:
    """Return ``numerator / 2**log_den`` as an exact fraction."""
    if log_den < 0:
        raise ValueError("log_den must be non-negative")
    return Fraction(numerator, 1 << log_den)


def log_denominator(q: Fraction) -> int:
    """Exponent of the (reduced) power-of-two denominator of ``q``."""
    q = Fraction(q)
    d = q.denominator
    if d & (d - 1):
        raise ValueError(f"{q} is not dyadic")
    return d.bit_length() - 1


class DyadicPair(NamedTuple):
    k: int
    m: int


class QuadIndex(NamedTuple):
    k: int
    m: int
    i: int
    n: int


Payload = Union[DyadicPair, QuadIndex]


@dataclass(frozen=True)
class ScheduleEntry:
    """One half-open activity interval ``[start, start + duration)``."""

    start: Fraction
    duration: Fraction
    payload: Payload

    @property
    def end(self) -> Fraction:
        return self.start + self.duration


def check_pair(p) -> DyadicPair:
    k, m = p
    if not (isinstance(k, int) and isinstance(m, int)) or k < 1 or not 0 <= m < (1 << k):
        raise ValueError(f"{tuple(p)} is not a dyadic pair (need k >= 1, 0 <= m < 2^k)")
    return DyadicPair(k, m)


def check_quad(q) -> QuadIndex:
    k, m, i, n = q
    ok = all(isinstance(v, int) for v in (k, m, i, n))
    if not ok or k < 1 or not 1 <= m <= k or i not in (1, 2) or not 1 <= n <= (1 << (k // 2)):
        raise ValueError(f"{tuple(q)} is not a valid quad index")
    return QuadIndex(k, m, i, n)


# ---------------------------------------------------------------- dyadic family

def less_time_dyadic(a, b) -> bool:
    """Time order on dyadic pairs: by ``m 2^-k``, ties broken by smaller ``k``."""
    a, b = check_pair(a), check_pair(b)
    # compare m_a 2^-k_a with m_b 2^-k_b over the common denominator
    lhs = a.m << b.k
    rhs = b.m << a.k
    if lhs != rhs:
        return lhs < rhs
    return a.k < b.k


def shear_start_time(p) -> Fraction:
    r"""Start time :math:`t_{k,m}` of the shear slot ``(k, m)``.

    Pairs preceding ``(k, m)`` at a coarser level ``k' < k`` are those with
    ``m' 2^{-k'} <= m 2^{-k}``, i.e. ``m' <= floor(m 2^{k'-k})``; at a finer
    or equal level they need ``m' 2^{-k'} < m 2^{-k}``, which for ``k' >= k``
    gives ``m 2^{k'-k}`` of them. Summing ``4^{-k'}`` over the latter is a
    geometric series worth ``m 2^{1-2k}``.
    """
    k, m = check_pair(p)
    t = Fraction(m, 1 << (2 * k - 1))
    for kp in range(1, k):
        t += Fraction((m >> (k - kp)) + 1, 1 << (2 * kp))
    return t


def _check_taus(taus: Sequence[Fraction]) -> list[Fraction]:
    out = []
    for k, tau in enumerate(taus, start=1):
        tau = Fraction(tau)
        if not 0 < tau <= Fraction(1, 1 << (2 * k)):
            raise ValueError(f"finiteness condition fails at k={k}: tau={tau} not in (0, 4^-{k}]")
        out.append(tau)
    return out


# ------------------------------------------------------------------ quad family

def less_lex(a, b) -> bool:
    a, b = check_quad(a), check_quad(b)
    return tuple(a) < tuple(b)


def less_time_quad(a, b) -> bool:
    """``a <_time b`` iff ``(m_a, k_b, i_b, n_b) <_lex (m_b, k_a, i_a, n_a)``."""
    a, b = check_quad(a), check_quad(b)
    return (a.m, b.k, b.i, b.n) < (b.m, a.k, a.i, a.n)


def swap_duration(q) -> Fraction:
    return Fraction(3, 1 << check_quad(q).k)


def _level_weight(k: int) -> Fraction:
    """Total duration of one (k, m) bracket: both directions, all strips."""
    return Fraction(6 << (k // 2), 1 << k)


def _tail_from(k: int) -> Fraction:
    r"""Exact value of :math:`\sum_{k' \ge k} 6\cdot 2^{\lfloor k'/2\rfloor - k'}`.

    Pairing ``k' = 2j`` and ``2j+1`` gives ``6 (2^{-j} + 2^{-j-1}) = 9 2^{-j}``,
    so the full sum from 1 is ``3 + 9 = 12``.
    """
    total = Fraction(12)
    for kp in range(1, k):
        total -= _level_weight(kp)
    return total


def epoch_time(m: int) -> Fraction:
    r"""Epoch boundary :math:`T_m`, with :math:`T_0 = 0` and :math:`T_m \to 42`.

    Every level ``k`` contributes ``min(k, m)`` brackets of weight
    :func:`_level_weight`, so ``T_m = 12 m - sum_{k<m} (m-k) w_k``.
    """
    if m < 0:
        raise ValueError("epoch index must be non-negative")
    total = Fraction(12 * m)
    for k in range(1, m):
        total -= (m - k) * _level_weight(k)
    return total


def swap_start_time(q) -> Fraction:
    """Start time ``T_(k,m,i,n)`` as an exact rational.

    Predecessors in time are: every entry with smaller ``m`` (worth
    ``T_{m-1}``), every entry with the same ``m`` and larger ``k``, the
    ``i = 2`` block when ``i = 1``, and the strips ``n' > n``.
    """
    k, m, i, n = check_quad(q)
    dur = Fraction(3, 1 << k)
    strips = 1 << (k // 2)
    t = epoch_time(m - 1) + _tail_from(k + 1)
    if i == 1:
        t += strips * dur
    t += (strips - n) * dur
    return t


def lex_iter(max_k: int | None = None) -> Iterator[QuadIndex]:
    """Enumerate the quad family in increasing lexicographic order."""
    k = 1
    while max_k is None or k <= max_k:
        for m in range(1, k + 1):
            for i in (1, 2):
                for n in range(1, (1 << (k // 2)) + 1):
                    yield QuadIndex(k, m, i, n)
        k += 1


def _level_count(k: int) -> int:
    return k * 2 * (1 << (k // 2))


def lex_rank(q) -> int:
    """1-based position of ``q`` in the lexicographic enumeration."""
    k, m, i, n = check_quad(q)
    strips = 1 << (k // 2)
    r = sum(_level_count(kp) for kp in range(1, k))
    return r + (m - 1) * 2 * strips + (i - 1) * strips + n


def lex_unrank(r: int) -> QuadIndex:
    """Inverse of :func:`lex_rank`."""
    if r < 1:
        raise ValueError("rank starts at 1")
    k = 1
    while r > _level_count(k):
        r -= _level_count(k)
        k += 1
    strips = 1 << (k // 2)
    r -= 1
    m, r = divmod(r, 2 * strips)
    i, n = divmod(r, strips)
    return QuadIndex(k, m + 1, i + 1, n + 1)


def lex_prefix(K) -> list[QuadIndex]:
    """All quads ``<=_lex K`` in lexicographic order (empty for ``K`` None/0)."""
    if K is None or K == 0:
        return []
    K = check_quad(K)
    out = []
    for q in lex_iter(K.k):
        out.append(q)
        if q == K:
            break
    return out


def parse_quad(text: str) -> QuadIndex | None:
    """Parse ``"(k,m,i,n)"`` (or ``"0"`` for the empty prefix)."""
    s = text.strip().strip("()[]")
    if s in ("", "0"):
        return None
    parts = [int(v) for v in s.replace(" ", "").split(",")]
    if len(parts) != 4:
        raise ValueError(f"expected four integers, got {text!r}")
    return check_quad(tuple(parts))


# --------------------------------------------------------------- generation

def generate_schedule(depth, family: str = "dyadic", taus: Sequence[Fraction] | None = None) -> list[ScheduleEntry]:
    """Sorted list of activity intervals for a truncated family.

    ``family="dyadic"``: ``depth`` is the level count K and ``taus`` the
    slot durations ``tau_1..tau_K`` (non-strict finiteness ``tau_k <= 4^-k``).
    ``family="quad"``: ``depth`` is the lexicographic prefix bound (a quad,
    or 0/None for the empty prefix).
    """
    if family == "dyadic":
        K = int(depth or 0)
        if K == 0:
            return []
        if taus is None or len(taus) < K:
            raise ValueError("dyadic schedule needs one tau per level")
        taus = _check_taus(list(taus)[:K])
        entries = [
            ScheduleEntry(shear_start_time((k, m)), taus[k - 1], DyadicPair(k, m))
            for k in range(1, K + 1) for m in range(1 << k)
        ]
    elif family == "quad":
        entries = [
            ScheduleEntry(swap_start_time(q), swap_duration(q), q)
            for q in lex_prefix(depth)
        ]
    else:
        raise ValueError(f"unknown family {family!r}")
    entries.sort(key=lambda e: e.start)
    for a, b in zip(entries, entries[1:]):
        if a.end > b.start:  # pragma: no cover - guarded by the theory
            raise AssertionError(f"overlapping entries {a} and {b}")
    return entries


def schedule_csv(entries: Sequence[ScheduleEntry]) -> str:
    """Exact CSV dump: integers only, times as numerator/denominator pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["payload", "start_num", "start_den", "duration_num", "duration_den"])
    for e in entries:
        w.writerow([
            "(" + ",".join(str(v) for v in e.payload) + ")",
            e.start.numerator, e.start.denominator,
            e.duration.numerator, e.duration.denominator,
        ])
    return buf.getvalue()
