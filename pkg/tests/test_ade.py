from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusmix.ade import (
    SolverConfig, TestFunction, advect_step, default_dt_max, heat_step, solve, trace_csv, trace_residual,
)
from torusmix.composite import FractalSpec, MirroredSpec, MixSpec, build_vv_params
from torusmix.grid import GridField, cell_centers
from torusmix.transport import compile_flow, constant, pullback, sin_x1, smooth_sign


def single_mode(N, j1, j2):
    X = cell_centers(N)
    return np.cos(2 * np.pi * (j1 * X[..., 0] + j2 * X[..., 1]))


@given(st.integers(0, 5), st.integers(-5, 5), st.floats(1e-5, 1e-2))
@settings(max_examples=30)
def test_heat_single_mode_decay(j1, j2, nu_t):
    v = single_mode(32, j1, j2)
    got = heat_step(v, nu_t).values
    assert np.max(np.abs(got - v * np.exp(-4 * np.pi ** 2 * (j1 ** 2 + j2 ** 2) * nu_t))) < 1e-12


def test_heat_only_run_matches_closed_form():
    nu = 1e-3
    tr, f = solve(GridField(single_mode(64, 1, 0)), FractalSpec(()), SolverConfig(N=64, nu=nu))
    assert np.max(np.abs(f.values - single_mode(64, 1, 0) * np.exp(-4 * np.pi ** 2 * nu))) < 1e-6
    assert tr.energy_residual < 1e-12


def test_heat_rejects_negative_time():
    with pytest.raises(ValueError):
        heat_step(np.zeros((4, 4)), -1.0)


def test_fractal_run_invariants():
    tr, _ = solve(sin_x1(), build_vv_params(2), SolverConfig(N=128, nu=1e-3))
    assert tr.mass_drift <= 1e-12
    assert np.all(np.diff(tr.l2) <= 1e-10)
    assert tr.energy_residual <= 1e-4
    assert max(tr.linf) <= 1 + 1e-12


def test_mixing_run_invariants():
    spec = MirroredSpec(MixSpec.with_rule((2, 1, 2, 2)))
    tr, _ = solve(smooth_sign(), spec, SolverConfig(N=64, nu=1e-4))
    assert tr.mass_drift <= 1e-12
    assert np.all(np.diff(tr.l2) <= 1e-10)
    # off-grid rotations add interpolation dissipation outside the heat ledger
    assert tr.energy_residual <= 0.05


def test_fractal_energy_ledger_at_reference_resolution():
    tr, _ = solve(sin_x1(), build_vv_params(2), SolverConfig(N=256, nu=1e-3))
    assert tr.energy_residual <= 1e-4


def test_aligned_shear_is_an_exact_permutation():
    # displacement of whole cells: advection reduces to a permutation, so
    # the inviscid-limit run equals exact transport up to the heat factor
    N = 64
    spec = FractalSpec(((1, 4, Fraction(1, 4)), (2, 18, Fraction(1, 16))))
    tr, f = solve(smooth_sign(), spec, SolverConfig(N=N, nu=1e-12))
    exact = pullback(smooth_sign(), compile_flow(spec), 1, N).values
    assert np.max(np.abs(f.values - exact)) < 1e-6


def test_constant_field_is_preserved():
    _, f = solve(constant(0.7), build_vv_params(3), SolverConfig(N=64, nu=1e-3))
    assert np.max(np.abs(f.values - 0.7)) < 1e-13


def test_clipped_interpolation_keeps_bounds():
    N = 64
    v = np.where(cell_centers(N)[..., 0] < 0.5, -1.0, 1.0)
    prog = compile_flow(FractalSpec(((2, 3, Fraction(1, 10)),)))
    out = advect_step(v, prog, 0, Fraction(1, 10)).values
    assert out.min() >= -1 - 1e-12 and out.max() <= 1 + 1e-12


def test_off_grid_shear_converges_to_transport():
    # one shear with a displacement of 1/5: smooth data stays smooth and
    # the cubic semi-Lagrangian error falls by roughly 8x per refinement
    spec = FractalSpec(((1, 4, Fraction(1, 5)),))
    errs = []
    for N in (32, 64, 128, 256):
        _, f = solve(sin_x1(), spec, SolverConfig(N=N, nu=1e-12))
        exact = pullback(sin_x1(), compile_flow(spec), 1, N).values
        errs.append(np.mean(np.abs(f.values - exact)))
    assert all(b < a / 4 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-5


def test_weak_form_residual_small():
    spec = build_vv_params(2)
    tr, _ = solve(sin_x1(), spec, SolverConfig(N=64, nu=1e-2, record_states=True, dt_max=1 / 256))
    for phi in (TestFunction(), TestFunction((((1, 0), 1.0), ((1, 2), 0.5j)), (1.0, -0.5))):
        assert trace_residual(tr, phi) < 1e-3
    with pytest.raises(ValueError):
        trace_residual(solve(sin_x1(), spec, SolverConfig(N=16, nu=1e-2))[0], TestFunction())


def test_snapshots_hit_requested_times():
    tr, f = solve(sin_x1(), build_vv_params(2), SolverConfig(N=32, nu=1e-3),
                  snapshot_times=[0, Fraction(1, 3), Fraction(1, 2), 1])
    assert set(tr.snapshots) == {0.0, 1 / 3, 0.5, 1.0}
    assert np.array_equal(tr.snapshots[1.0], f.values)
    assert Fraction(1, 3) in {Fraction(t).limit_denominator(10) for t in tr.times}


def test_partial_span_and_horizon_check():
    spec = build_vv_params(2)
    tr, _ = solve(sin_x1(), spec, SolverConfig(N=32, nu=1e-3), t_span=(0, Fraction(1, 2)))
    assert tr.times[-1] == 0.5
    with pytest.raises(ValueError):
        solve(sin_x1(), spec, SolverConfig(N=32, nu=1e-3), t_span=(0, 2))


def test_default_step_follows_finest_level():
    assert default_dt_max(compile_flow(build_vv_params(1))) == 2.0 ** -3
    assert default_dt_max(compile_flow(build_vv_params(3))) == 2.0 ** -6
    assert default_dt_max(compile_flow(MixSpec.with_rule((3, 1, 1, 1)))) == 2.0 ** -5


def test_config_validation():
    for kw in ({"N": 48}, {"nu": 0.0}, {"dt_max": -1.0}, {"interpolation": "spectral"}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


def test_linear_interpolation_option_runs():
    tr, _ = solve(sin_x1(), build_vv_params(2), SolverConfig(N=32, nu=1e-3, interpolation="linear"))
    assert tr.mass_drift <= 1e-12


def test_trace_csv_columns():
    tr, _ = solve(sin_x1(), build_vv_params(1), SolverConfig(N=16, nu=1e-3))
    lines = trace_csv(tr).strip().splitlines()
    assert lines[0] == "t,mass,l1,l2,linf,cumulative_dissipation"
    assert len(lines) == len(tr.times) + 1
