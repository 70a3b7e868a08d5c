import json
import math

import pytest
from hypothesis import given, strategies as st

from torusmix.composite import FractalSpec, build_vv_params
from torusmix.limits import (
    LEAK_C, CalibrationError, Criterion, ExperimentReport, MixConfig, VVConfig, calibrate_nu, eps_min_formula,
    leak_constant_quadrature, measure_swap_leak, mixing_spec, nu_grid, probe_change, run_mixing_experiment,
    run_vv_experiment, snapshot_times, sup_distance, swap_leak_bound, tolerance,
)
from torusmix.transport import compile_flow, constant, sin_x1


def test_tolerance_rule():
    assert tolerance(1) == 1.0
    assert tolerance(4) == 0.25
    assert tolerance(20) == 0.05
    assert tolerance(100) == 0.05


def test_nu_grid_is_dyadic():
    g = nu_grid(40)
    assert len(g) == 40 and g[0] == 1.0
    assert all(b == a / 2 for a, b in zip(g, g[1:]))


@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=8))
def test_eps_formula_halves_every_budget(deltas):
    eps = eps_min_formula(deltas)
    assert eps <= deltas[-1] / 2
    n = len(deltas)
    assert all(eps <= deltas[n - 1 - k] * 2.0 ** (-k - 1) for k in range(n))
    assert any(math.isclose(eps, deltas[n - 1 - k] * 2.0 ** (-k - 1)) for k in range(n))


def test_eps_formula_rejects_empty():
    with pytest.raises(ValueError):
        eps_min_formula([])


def test_snapshot_times_include_breakpoints():
    prog = compile_flow(build_vv_params(2))
    ts = snapshot_times(prog)
    assert ts == sorted(set(ts)) and ts[-1] == 1 and min(ts) > 0
    for seg in prog.segments:
        if seg.end > 0:
            assert seg.end in ts


def _heat_only_distance(nu):
    # no flow: exact transport is the identity and sin decays by e^{-4 pi^2 nu t}
    return 2 / math.pi * (1 - math.exp(-4 * math.pi ** 2 * nu))


def test_sup_distance_heat_only_oracle():
    for nu in (1e-3, 1e-2):
        d = sup_distance(sin_x1(), FractalSpec(()), nu, 64)
        assert abs(d - _heat_only_distance(nu)) < 1e-3


def test_calibrate_nu_matches_closed_form():
    tol = 0.1
    expected = max(nu for nu in nu_grid() if _heat_only_distance(nu) <= tol)
    c = calibrate_nu(FractalSpec(()), [sin_x1()], tol, N=64, workers=1)
    assert c.nu == expected == 2.0 ** -8
    assert c.next_nu == expected / 2
    assert c.monotone_verified
    assert c.distance <= tol


def test_relaxed_tolerance_gives_weakly_larger_nu():
    a = calibrate_nu(FractalSpec(()), [sin_x1()], 0.05, N=32, workers=1)
    b = calibrate_nu(FractalSpec(()), [sin_x1()], 0.2, N=32, workers=1)
    assert b.nu >= a.nu


def test_constant_battery_accepts_top_of_grid():
    c = calibrate_nu(build_vv_params(2), [constant(1.0)], 0.05, N=32, workers=1)
    assert c.nu == 1.0


def test_unattainable_tolerance_reports_curve():
    with pytest.raises(CalibrationError) as e:
        calibrate_nu(FractalSpec(()), [sin_x1()], 1e-12, N=32, grid=nu_grid(6), workers=1)
    curve = e.value.curve
    assert len(curve) == 6
    assert all(d > 1e-12 for _, d, _ in curve)


def test_calibrate_nu_respects_upper_bound():
    c = calibrate_nu(FractalSpec(()), [sin_x1()], 0.5, N=32, nu_max=2.0 ** -10, workers=1)
    assert c.nu < 2.0 ** -10


def test_probe_change_identical_fields_is_zero():
    spec = build_vv_params(2)
    assert probe_change(spec, spec, [sin_x1()], [1e-3], 32, workers=1) == 0.0


def test_leak_constant_closed_form():
    assert abs(leak_constant_quadrature() - LEAK_C) < 1e-10
    assert abs(LEAK_C - 7.81764019044672) < 1e-12


@given(st.integers(1, 12), st.floats(0, 1), st.floats(0.1, 4))
def test_leak_bound_shape(k, nu, sup):
    b = swap_leak_bound(nu, k, sup)
    assert b >= swap_leak_bound(0.0, k, sup) == 2 * sup * 2.0 ** -(k // 2)
    assert math.isclose(swap_leak_bound(nu, k, 2 * sup), 2 * b)


def test_leak_bound_rejects_negative_nu():
    with pytest.raises(ValueError):
        swap_leak_bound(-1.0, 2, 1.0)


def test_measured_leak_below_bound():
    r = measure_swap_leak(2, 1e-2, N=64, samples=4)
    assert 0 < r["measured"] <= r["bound"]


def test_mixing_spec_levels():
    spec = mixing_spec(2)
    assert spec.horizon == 100


def test_report_round_trip():
    rep = ExperimentReport("vv", {"N": 8}, [Criterion("a", 0.1, 0.2, True, "<=", "spec")],
                           series={"nu": [1.0, 0.5]})
    d = json.loads(rep.to_json())
    back = ExperimentReport.from_dict(d)
    assert back.to_dict() == rep.to_dict()
    assert back.passed and back.criterion("a").value == 0.1
    assert "[PASS] a" in back.render()
    with pytest.raises(KeyError):
        back.criterion("missing")


def test_vv_constant_datum_passes():
    rep = run_vv_experiment(constant(0.5), 3, VVConfig(N=64, battery=("constant",), workers=1))
    assert rep.error is None
    assert rep.series["nu"] == [1.0, 0.5, 0.25]
    assert all(abs(d) < 1e-12 for d in rep.series["d_even"] + rep.series["d_odd"])
    assert rep.passed


def test_mixing_constant_datum_has_no_variance():
    rep = run_mixing_experiment(constant(0.5), 2, MixConfig(N=64, battery=("constant",), workers=1))
    assert all(abs(v) < 1e-24 for v in rep.series["variance"].values())
    assert rep.series["nu"] == [1.0, 0.5] and rep.series["nu_next"] == 0.25


def test_experiment_depth_bounds():
    with pytest.raises(ValueError):
        run_vv_experiment(constant(0.0), 2)
    with pytest.raises(ValueError):
        run_mixing_experiment(constant(0.0), 1)


def test_eps_probes_shrink_with_resolved_strips():
    from torusmix.limits import calibrate_eps
    spec = build_vv_params(2)
    r = calibrate_eps(spec, [sin_x1()], (1e-4, 1e-3), 1.0, N=128, probes=3, workers=1)
    changes = [p["change"] for p in r.probes]
    weak = [p["weak_star"] for p in r.probes]
    assert weak == sorted(weak, reverse=True)
    assert changes[-1] <= changes[0]
    assert r.eps <= r.delta / 2 + 1e-300
