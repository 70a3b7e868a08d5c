from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from torusmix.flows import (
    CancellationError, Rect, Reversed, ShearSpec, Still, SwapPhase, SwapSpec, cancellation_compose,
    digit_shift, rect_rotation_map, rect_rotation_velocity, shear_map, shear_velocity, swap_endpoint,
    swap_map, swap_velocity, wrap,
)

dyadic_pts = st.tuples(st.integers(0, 2 ** 16 - 1), st.integers(0, 2 ** 16 - 1)).map(
    lambda p: (Fraction(p[0], 2 ** 16), Fraction(p[1], 2 ** 16)))


# --- shears ---------------------------------------------------------------------

def test_shear_velocity_strips():
    s = ShearSpec(1, 2)
    pts = np.array([[0.3, 0.1], [0.3, 0.3], [0.3, 0.6], [0.3, 0.9]])
    v = shear_velocity(s, pts)
    assert np.array_equal(v[:, 0], [1, -1, 1, -1])
    assert np.array_equal(v[:, 1], [0, 0, 0, 0])
    assert shear_velocity(ShearSpec(2, 1), (Fraction(3, 4), Fraction(0))) == (0, -1)


@given(st.sampled_from([1, 2]), st.integers(1, 64), dyadic_pts,
       st.integers(-64, 64).map(lambda n: Fraction(n, 64)))
def test_shear_flow_inverts_exactly(i, L, x, t):
    s = ShearSpec(i, L)
    assert shear_map(s, -t, shear_map(s, t, x)) == x


@given(st.sampled_from([1, 2]), st.integers(1, 64), dyadic_pts)
def test_shear_flow_is_a_group(i, L, x):
    s = ShearSpec(i, L)
    a, b = Fraction(1, 8), Fraction(3, 32)
    assert shear_map(s, a + b, x) == shear_map(s, b, shear_map(s, a, x))


def test_shear_spec_validation():
    with pytest.raises(ValueError):
        ShearSpec(3, 1)
    with pytest.raises(ValueError):
        ShearSpec(1, 0)


# --- cancellation ---------------------------------------------------------------

@given(st.sampled_from([1, 2]), st.integers(1, 64), st.integers(1, 64), st.integers(0, 5), dyadic_pts)
def test_cancellation_identity_exact(i1, L1, L2, j, x):
    tau2 = Fraction(1, 4 * L1)
    tau1 = Fraction(2 * j + 1, 2 * L2)
    y = cancellation_compose(ShearSpec(i1, L1), tau1, ShearSpec(3 - i1, L2), tau2, x)
    assert y == x


def test_cancellation_reports_first_failed_hypothesis():
    s1, s2 = ShearSpec(1, 4), ShearSpec(2, 3)
    with pytest.raises(CancellationError, match="directions"):
        cancellation_compose(s1, Fraction(1, 6), ShearSpec(1, 3), Fraction(1, 16), (0, 0))
    with pytest.raises(CancellationError, match="2\\*tau2"):
        cancellation_compose(s1, Fraction(1, 6), s2, Fraction(1, 8), (0, 0))
    with pytest.raises(CancellationError, match="odd"):
        cancellation_compose(s1, Fraction(1, 3), s2, Fraction(1, 16), (0, 0))


def test_cancellation_fails_without_hypotheses():
    # an even multiple moves points: the composite is then not the identity
    s1, s2 = ShearSpec(1, 4), ShearSpec(2, 3)
    x = (Fraction(1, 10), Fraction(1, 7))
    y = cancellation_compose(s1, Fraction(1, 3), s2, Fraction(1, 16), x, strict=False)
    assert y != x


# --- rectangle rotation ------------------------------------------------------------

def ode_rotation(r, t, x):
    """Integrate the piecewise-linear rotation field with a high-accuracy ODE solver."""
    sol = solve_ivp(lambda _, y: rect_rotation_velocity(r, np.asarray(y)), (0, t), list(x),
                    rtol=1e-11, atol=1e-13, max_step=r.period / 64)
    return sol.y[:, -1]


@pytest.mark.parametrize("W,H", [(1.0, 1.0), (0.5, 0.125), (0.25, 1.0)])
@pytest.mark.parametrize("t", [0.05, 0.4, 1.3])
def test_rotation_matches_ode(W, H, t):
    r = Rect((0.5, 0.5), W, H)
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = 0.5 + (rng.random(2) - 0.5) * np.array([W, H]) * 0.9
        assert np.allclose(rect_rotation_map(r, t, x), ode_rotation(r, t, x), atol=2e-6)


@given(st.floats(0.05, 0.45), st.floats(0.05, 0.45))
def test_half_turn_is_point_reflection(a, b):
    r = Rect((0.5, 0.5), 0.5, 0.25)
    x = np.array([0.5 + (a - 0.25), 0.5 + (b - 0.25) / 2])
    y = rect_rotation_map(r, 2 * r.period, x)
    assert np.array_equal(y, 2 * np.array(r.center) - x)


@given(st.integers(1, 15), st.integers(1, 15))
def test_rotation_period_exact(a, b):
    r = Rect((Fraction(1, 2), Fraction(1, 2)), Fraction(1, 2), Fraction(1, 4))
    x = (Fraction(1, 4) + Fraction(a, 32), Fraction(3, 8) + Fraction(b, 64))
    assert rect_rotation_map(r, 4 * r.period, x) == x
    assert rect_rotation_map(r, -Fraction(3, 7), rect_rotation_map(r, Fraction(3, 7), x)) == x


def test_rotation_conserves_level_and_is_bounded():
    r = Rect((0.0, 0.0), 1.0, 0.5)
    pts = (np.random.default_rng(2).random((200, 2)) - 0.5) * [0.99, 0.49]
    y = rect_rotation_map(r, 0.37, pts)
    lev = lambda p: np.maximum(np.abs(p[:, 0]) / 1.0, np.abs(p[:, 1]) / 0.5)
    assert np.allclose(lev(y), lev(pts), atol=1e-14)
    v = rect_rotation_velocity(r, pts)
    assert np.max(np.abs(v)) <= 1.0 + 1e-15


def test_rotation_rejects_outside_points():
    with pytest.raises(ValueError):
        rect_rotation_velocity(Rect((0, 0), 1, 1), (Fraction(1, 2), 0))


# --- binary swaps -------------------------------------------------------------------

def digit(x, l):
    return int(np.floor(x * 2 ** l)) % 2


def test_swap_endpoint_transposes_digits():
    s = SwapSpec(1, 2, 1, 4)  # strip [0, 1/2)
    x = (Fraction(1, 4) + Fraction(1, 64), Fraction(1, 3))  # digits 0,1,0,... -> 0,0,1
    y = swap_endpoint(s, x)
    assert y == (Fraction(1, 8) + Fraction(1, 64), Fraction(1, 3))
    outside = (Fraction(3, 4), Fraction(1, 3))
    assert swap_endpoint(s, outside) == outside


@given(st.sampled_from([1, 2]), st.integers(1, 6), st.data(), dyadic_pts)
def test_swap_endpoint_is_an_involution(i, k, data, x):
    n = data.draw(st.integers(1, 2 ** (k // 2)))
    s = SwapSpec(i, k, n, k + 2)
    assert swap_endpoint(s, swap_endpoint(s, x)) == x


@pytest.mark.parametrize("i", [1, 2])
@pytest.mark.parametrize("k,n,L", [(1, 1, 2), (2, 2, 3), (3, 1, 5), (4, 3, 8)])
def test_swap_flow_realizes_endpoint(i, k, n, L):
    s = SwapSpec(i, k, n, L)
    x = np.random.default_rng(k * 10 + n).random((4000, 2))
    g = x * 2.0 ** (L + 1)
    x = x[np.all(np.abs(g - np.round(g)) > 1e-7, axis=1)]
    d = np.abs(swap_map(s, s.duration, x) - swap_endpoint(s, x))
    assert np.max(np.minimum(d, 1 - d)) <= 1e-9


def test_swap_flow_exact_mode_agrees():
    s = SwapSpec(2, 3, 2, 5)
    rng = np.random.default_rng(5)
    for _ in range(40):
        x = (Fraction(int(rng.integers(0, 2 ** 12)) * 2 + 1, 2 ** 13),
             Fraction(int(rng.integers(0, 2 ** 12)) * 2 + 1, 2 ** 13))
        assert swap_map(s, s.duration, x) == swap_endpoint(s, x)


def test_swap_velocity_bounded_and_supported_in_strip():
    s = SwapSpec(1, 2, 2, 4)
    x = np.random.default_rng(3).random((5000, 2))
    for t in (0.1, 0.6):
        v = swap_velocity(s, t, x)
        assert np.max(np.abs(v)) <= 1 + 1e-12
        lo, hi = map(float, s.strip())
        outside = (x[:, 0] < lo) | (x[:, 0] >= hi)
        assert np.all(v[outside] == 0)


def test_swap_velocity_divergence_free_weakly():
    # flux of the field through the boundary of random boxes vanishes (incompressibility)
    s = SwapSpec(1, 2, 1, 3)
    rng = np.random.default_rng(4)
    n = 4000
    for _ in range(5):
        x0, y0 = rng.random(2) * 0.5
        w, h = 0.2, 0.15
        s_ = (np.arange(n) + 0.5) / n
        flux = 0.0
        for side, pts, normal, length in [
            ("b", np.c_[x0 + w * s_, np.full(n, y0)], (0, -1), w),
            ("t", np.c_[x0 + w * s_, np.full(n, y0 + h)], (0, 1), w),
            ("l", np.c_[np.full(n, x0), y0 + h * s_], (-1, 0), h),
            ("r", np.c_[np.full(n, x0 + w), y0 + h * s_], (1, 0), h),
        ]:
            v = swap_velocity(s, 0.2, pts)
            flux += np.mean(v @ np.array(normal)) * length
        assert abs(flux) < 5e-3


def test_swap_validation_and_phases():
    with pytest.raises(ValueError):
        SwapSpec(1, 3, 1, 3)  # needs L >= k + 1
    s = SwapSpec(1, 2, 1, 4)
    assert s.duration == Fraction(3, 4)
    assert s.phase_split == Fraction(1, 2)
    p1, p2 = s.phases()
    assert isinstance(p1, SwapPhase) and p2.phase == 2
    with pytest.raises(ValueError):
        swap_map(s, Fraction(1), (0, 0))


def test_digit_shift_exact():
    x = (Fraction(5, 8), Fraction(3, 16))
    assert digit_shift(2, x) == (Fraction(1, 2), Fraction(3, 4))
    arr = np.array([[0.625, 0.1875]])
    assert np.array_equal(digit_shift(2, arr), [[0.5, 0.75]])


# --- program primitives ---------------------------------------------------------------

@given(dyadic_pts)
def test_reversed_flow_inverts(x):
    base = ShearSpec(2, 6)
    r = Reversed(base)
    assert r.flow(base.flow(x, Fraction(1, 5)), Fraction(1, 5)) == x
    assert r.velocity(x) == tuple(-v for v in base.velocity(x))


def test_still_is_identity():
    x = np.random.default_rng(0).random((10, 2))
    assert np.array_equal(Still().flow(x, 3.0), x)
    assert np.array_equal(Still().velocity(x), np.zeros_like(x))


def test_wrap():
    assert wrap((Fraction(5, 4), Fraction(-1, 4))) == (Fraction(1, 4), Fraction(3, 4))
