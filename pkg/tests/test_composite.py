from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusmix.composite import (
    BASE_LEVEL, FractalSpec, MirroredSpec, MixSpec, ProximityError, TestFamily, build_vv_params,
    dumps_spec, field_segments, fractal_velocity, loads_spec, mirrored_velocity, mixing_velocity,
    validate_fractal, weak_star_distance, _grid_modes, _shear_modes,
)
from torusmix.flows import ShearSpec
from torusmix.schedule import epoch_time, lex_iter


# --- fractal fields ---------------------------------------------------------------

def test_inductive_parameters():
    spec = build_vv_params(4)
    assert spec.levels[0] == BASE_LEVEL == (1, 4, Fraction(1, 4))  # base tuple (1, 2^2, 2^-2)
    assert spec.levels == ((1, 4, Fraction(1, 4)), (2, 18, Fraction(1, 16)),
                           (1, 72, Fraction(1, 72)), (2, 324, Fraction(1, 288)))
    Ls = [1] + [L for _, L, _ in spec.levels]
    for n in range(1, spec.K):
        i0, L0, _ = spec.levels[n - 1]
        i1, L1, t1 = spec.levels[n]
        assert i1 == 3 - i0
        assert t1 == Fraction(1, 4 * L0)
        odd = L1 // (2 * Ls[n - 1])
        assert L1 == 2 * Ls[n - 1] * odd and odd % 2 == 1
        assert L1 >= 4 ** (n + 1)


@given(st.integers(1, 6))
def test_built_fields_satisfy_conditions(K):
    rep = validate_fractal(build_vv_params(K))
    assert rep.ok
    # tau_1 = 1/4 and tau_2 = 1/16 sit exactly on the finiteness boundary
    assert rep.boundary_levels == [k for k in (1, 2) if k <= K]


def test_validate_flags_violations():
    rep = validate_fractal(FractalSpec(((1, 4, Fraction(1, 4)), (1, 18, Fraction(1, 8)))))
    assert not rep.finite
    assert not rep.cancellation[0]["directions_alternate"]
    assert not rep.cancellation[0]["tau_matches_strip"]
    assert not rep.ok


def test_proximity_budget_raises_M():
    loose = build_vv_params(3)
    tight = build_vv_params(3, proximity_budget=[1e-9, 1e-30], family=TestFamily(q_max=2))
    assert tight.levels[1][1] >= loose.levels[1][1]
    assert float(weak_star_distance(tight.truncate(2), tight.truncate(1), TestFamily(q_max=2))) <= 1e-9
    with pytest.raises(ProximityError):
        build_vv_params(2, proximity_budget=[0.0], M_cap=3)


def test_fractal_velocity_piecewise():
    spec = build_vv_params(2)
    x = np.array([[0.1, 0.1], [0.1, 0.2]])
    # the first slot is the level-1 shear (i=1, L=4)
    assert np.array_equal(fractal_velocity(spec, x, Fraction(1, 8)), ShearSpec(1, 4).velocity(x))
    v = fractal_velocity(spec, x, Fraction(999, 1000))
    assert np.all(np.abs(v) <= 1)
    with pytest.raises(ValueError):
        fractal_velocity(spec, x, Fraction(2))


def test_fractal_segments_cover_budget():
    spec = build_vv_params(3)
    total = sum(s.duration for s in field_segments(spec))
    assert total == 2 * Fraction(1, 4) + 4 * Fraction(1, 16) + 8 * Fraction(1, 72)
    assert total <= 1


# --- mixing fields ------------------------------------------------------------------

def test_mixspec_rule_and_validation():
    m = MixSpec.with_rule((2, 1, 2, 2))
    assert [L for _, L in m.Ls] == [q.k + 3 for q in list(lex_iter(2))[:6]]
    assert m.max_k == 2 and m.max_L == 5
    with pytest.raises(ValueError):
        MixSpec((1, 1, 1, 1), ())
    with pytest.raises(ValueError):
        MixSpec.with_rule((2, 1, 1, 1), rule=lambda q: q.k)  # L must exceed k


def test_mix_segments_inside_epochs():
    m = MixSpec.with_rule(list(lex_iter(3))[-1])
    segs = field_segments(m)
    assert len(segs) == 2 * len(m.Ls)
    assert all(0 <= s.start < s.end <= epoch_time(3) for s in segs)
    for a, b in zip(segs, segs[1:]):
        assert a.end <= b.start


@given(st.floats(0.0, 50.0), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
@settings(max_examples=40)
def test_mirrored_field_is_time_reversed(t, x1, x2):
    spec = MirroredSpec(MixSpec.with_rule((2, 2, 2, 2)))
    x = np.array([[x1, x2]])
    t = Fraction(t).limit_denominator(1 << 20)
    a = mirrored_velocity(spec, x, t)
    b = mirrored_velocity(spec, x, 100 - t)
    on_break = any(t in (s.start, s.end) for s in field_segments(spec.mix))
    if not on_break:
        assert np.array_equal(a, -b)
        assert np.array_equal(a, mixing_velocity(spec.mix, x, t))


# --- weak-* metric -------------------------------------------------------------------

def test_shear_coefficients_match_fft_oracle():
    s = ShearSpec(1, 4)
    closed = {j: c for _, j, c in _shear_modes(s, 64)}
    grid = {j: c for comp, j, c in _grid_modes(s, 1024, 64) if comp == 0 and abs(c) > 1e-9}
    for j, c in closed.items():
        # cell-centre sampling of the square wave costs O((j/M)^2) relative error
        assert abs(grid[j] - c) <= 1e-2 * abs(c)
    assert set(grid) <= set(closed)


def test_weak_star_metric_properties():
    fam = TestFamily(q_max=2)
    u1, u2, u3 = build_vv_params(1), build_vv_params(2), build_vv_params(3)
    assert float(weak_star_distance(u2, u2, fam)) < 1e-25
    d12 = float(weak_star_distance(u1, u2, fam))
    d21 = float(weak_star_distance(u2, u1, fam))
    assert d12 == pytest.approx(d21, rel=1e-12)
    d13 = float(weak_star_distance(u1, u3, fam))
    d23 = float(weak_star_distance(u2, u3, fam))
    assert d13 <= d12 + d23 + 1e-15
    assert d23 < d12  # finer levels are weak-* smaller


def test_weak_star_decreases_with_L():
    fam = TestFamily(q_max=2)
    base = build_vv_params(1)
    ds = [float(weak_star_distance(build_vv_params(2, extra_M=[M]), base, fam)) for M in (4, 9, 19)]
    assert ds[0] > ds[1] > ds[2]


def test_swap_distance_flags_under_resolution():
    fam = TestFamily(q_max=1, grid=32)
    m1 = MixSpec.with_rule((1, 1, 1, 1))
    d = weak_star_distance(m1, MixSpec.with_rule(None), fam)
    assert d.under_resolved and float(d) > 0


# --- serialization --------------------------------------------------------------------

@pytest.mark.parametrize("spec", [
    build_vv_params(3),
    FractalSpec(()),
    MixSpec.with_rule((2, 1, 2, 1)),
    MirroredSpec(MixSpec.with_rule((3, 1, 1, 2), rule=3)),
    MixSpec.with_rule(None),
])
def test_spec_text_roundtrip(spec):
    text = dumps_spec(spec)
    assert loads_spec(text) == spec
    assert dumps_spec(loads_spec(text)) == text


def test_loads_rejects_unknown_kind():
    with pytest.raises(ValueError):
        loads_spec("kind = spiral\n")
