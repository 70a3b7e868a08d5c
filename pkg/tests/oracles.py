"""Independent oracles shared by the test modules."""
from fractions import Fraction
from functools import cmp_to_key

from torusmix.schedule import less_time_quad


def transpose_digits(x, i, k, n):
    """Swap binary digits k and k+1 of coordinate i when it lies in the n-th strip of level k."""
    y = list(x)
    v = y[i - 1]
    w = Fraction(1, 2 ** (k // 2))
    if not (n - 1) * w <= v < n * w:
        return tuple(y)
    d = [int(v * 2 ** l) % 2 for l in (k, k + 1)]
    y[i - 1] = v + (d[1] - d[0]) * Fraction(1, 2 ** (k + 1))
    return tuple(y)


def oracle_inverse(quads, x):
    """Preimage of ``x`` under the swaps in ``quads`` applied in time order."""
    order = sorted(quads, key=cmp_to_key(lambda a, b: -1 if less_time_quad(a, b) else 1))
    for q in reversed(order):
        x = transpose_digits(x, q.i, q.k, q.n)
    return x


def beta_battery():
    """Clip, square-clip and a smoothed sign: bounded continuous renormalizations."""
    import numpy as np
    return {
        "clip": lambda v: np.clip(v, -0.5, 0.5),
        "square_clip": lambda v: np.clip(v * v, 0, 0.3),
        "sign_smooth": lambda v: np.tanh(8 * v),
    }
