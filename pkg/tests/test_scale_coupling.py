import numpy as np
import pytest
from hypothesis import given, strategies as st

from fembem.errors import ContactSolverError, FitError, ParameterError
from fembem.micro_bem import corrected_pressure, shape_factor
from fembem.rough_surface import generate_rmd, surface_stats
from fembem.scale_coupling import (SECANT_EPS, CouplingState, CQNLaw, PowerLawFit, QNLaw,
                                   SANLaw, cqn_response, fit_power_law, make_laws,
                                   offline_sample_curve, qn_response, san_response)
from oracles import grid_search_power_law

A, B = 2e-4, 2.8


def power_state(a=A, b=B, **kw):
    return CouplingState(None, None, pressure_fn=lambda g: a * g**b, **kw)


@pytest.fixture(scope="module")
def small_surface():
    return generate_rmd(3, 0.7, 5, 10.0, size=100.0)


# QN and CQN

@pytest.mark.parametrize("g", [0.0, -1.0])
def test_open_gap_is_traction_free(g, small_surface, elastic):
    state = CouplingState(small_surface, elastic)
    for resp in (qn_response(state, g), cqn_response(state, g, 0), cqn_response(state, g, 3)):
        assert (resp.pressure, resp.tangent) == (0.0, 0.0)


@given(st.floats(0.1, 50.0))
def test_qn_tangent_close_to_analytic(g):
    resp = qn_response(power_state(), g)
    assert resp.pressure == pytest.approx(A * g**B)
    assert resp.tangent == pytest.approx(A * B * g ** (B - 1), rel=0.03)


def test_qn_uses_absolute_floor_for_tiny_gaps(small_surface, elastic):
    state = CouplingState(small_surface, elastic, pressure_fn=lambda g: g)
    floor = 1e-4 * surface_stats(small_surface).rms
    assert state.abs_floor == pytest.approx(floor)
    assert qn_response(state, 1e-9).tangent == pytest.approx(1.0)
    assert state.n_evaluations == 2


def test_cqn_first_step_equals_qn():
    a, b = power_state(), power_state()
    assert cqn_response(a, 3.0, 0) == qn_response(b, 3.0)


def test_cqn_secant_matches_hand_quotient():
    state = power_state()
    state.commit(2.0, A * 2.0**B)
    resp = cqn_response(state, 3.0, 1)
    assert resp.pressure == pytest.approx(A * 3.0**B)
    assert resp.tangent == pytest.approx((A * 3.0**B - A * 2.0**B) / 1.0, rel=1e-12)
    assert state.n_evaluations == 1


def test_cqn_degenerate_secant_reuses_last_tangent():
    state = power_state()
    state.commit(2.0, A * 2.0**B)
    first = cqn_response(state, 3.0, 1).tangent
    state.commit(3.0, A * 3.0**B)
    assert cqn_response(state, 3.0 + SECANT_EPS / 10, 2).tangent == first


def test_qn_and_cqn_pressures_coincide(small_surface, elastic):
    qn = CouplingState(small_surface, elastic)
    cqn = CouplingState(small_surface, elastic)
    cqn.commit(0.5, 0.0)
    for g in (1.0, 2.0):
        assert qn_response(qn, g).pressure == cqn_response(cqn, g, 1).pressure


def test_state_uses_corrected_bem(small_surface, elastic):
    alpha = shape_factor(small_surface.N)
    state = CouplingState(small_surface, elastic, alpha=alpha)
    p, area = state.pressure(2.0)
    ref = corrected_pressure(small_surface, elastic, 2.0, alpha)
    assert p == pytest.approx(ref.pressure, rel=1e-9)
    assert 0 < area <= 1
    assert state.warm_start.shape == (small_surface.N ** 2,)


def test_tangents_non_negative_for_rough_surface(small_surface, elastic):
    state = CouplingState(small_surface, elastic)
    s = surface_stats(small_surface).rms
    for g in np.linspace(0.2, 2.0, 5) * s:
        assert qn_response(state, g).tangent >= 0


def test_laws_commit_and_tag_errors():
    law = CQNLaw(power_state(), tag=(0, 1))
    law.begin_step(0)
    resp = law.evaluate(1.0)
    law.commit(1.0, resp)
    assert law.state.prev_gap == 1.0 and law.state.prev_pressure == resp.pressure

    def broken(g):
        raise ContactSolverError("boom", 3, 1.0)

    bad = QNLaw(CouplingState(None, None, pressure_fn=broken), tag=(0, 1))
    with pytest.raises(ContactSolverError) as info:
        bad.evaluate(1.0)
    assert any("(0, 1)" in note for note in info.value.__notes__)


def test_make_laws_independent_states(small_surface, elastic):
    laws = make_laws("cqn", 2, surface=small_surface, elastic=elastic)
    assert len(laws) == 2 and len(laws[0]) == 2
    states = {id(law.state) for row in laws for law in row}
    assert len(states) == 4
    with pytest.raises(ParameterError):
        make_laws("newton", 1, surface=small_surface, elastic=elastic)
    with pytest.raises(ParameterError):
        make_laws("san", 1)


# power-law fit

def test_fit_recovers_exact_power_law():
    g = np.linspace(0.1, 5.0, 40)
    fit = fit_power_law(np.column_stack([g, 2 * g**3]))
    assert fit.a == pytest.approx(2.0, rel=1e-8)
    assert fit.b == pytest.approx(3.0, rel=1e-8)
    assert abs(fit.r2 - 1.0) < 1e-10
    assert fit.ssr + fit.sse == pytest.approx(fit.sst, rel=1e-8)


def test_fit_matches_grid_search_on_noisy_data():
    rng = np.random.default_rng(7)
    g = np.linspace(0.2, 3.0, 60)
    p = 1.5 * g**2.4 * (1 + 0.05 * rng.standard_normal(g.size))
    fit = fit_power_law(np.column_stack([g, p]))
    a_grid = np.linspace(1.0, 2.0, 201)
    b_grid = np.linspace(2.0, 3.0, 201)
    a_ref, b_ref = grid_search_power_law(g, p, a_grid, b_grid)
    assert abs(fit.a - a_ref) <= a_grid[1] - a_grid[0]
    assert abs(fit.b - b_ref) <= b_grid[1] - b_grid[0]


def test_fit_drops_non_positive_samples():
    g = np.linspace(0.0, 2.0, 11)
    p = np.where(g > 0.5, g**2, 0.0)
    fit = fit_power_law(np.column_stack([g, p]))
    assert fit.n_samples == int(np.sum(g > 0.5))


@pytest.mark.parametrize("samples", [
    [(1.0, 1.0), (2.0, 4.0)],
    [(1.0, 3.0), (2.0, 3.0), (3.0, 3.0)],
    [(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 1.0)],
])
def test_fit_rejects_degenerate_samples(samples):
    with pytest.raises(FitError):
        fit_power_law(samples)


def test_fit_round_trip(tmp_path):
    fit = PowerLawFit(a=1.25e-6, b=2.83, sse=5.7e-7, ssr=3.7e-4, sst=3.72e-4, r2=0.9985,
                      n_samples=100, n_steps=100, delta_max=30.0, surface="rmd-n6")
    fit.save(tmp_path / "fit.csv")
    back = PowerLawFit.load(tmp_path / "fit.csv")
    assert back == fit


# SAN

def test_san_hand_values():
    fit = PowerLawFit(a=2.0, b=3.0, sse=0, ssr=0, sst=0, r2=1.0)
    resp = san_response(fit, 0.5)
    assert (resp.pressure, resp.tangent) == pytest.approx((0.25, 1.5))
    open_ = san_response(PowerLawFit(a=1.0, b=2.0, sse=0, ssr=0, sst=0, r2=1.0), 0.0)
    assert (open_.pressure, open_.tangent) == (0.0, 0.0)
    assert san_response(fit, -1.0).pressure == 0.0


@given(st.floats(0.05, 100.0), st.floats(1.0, 4.0))
def test_san_tangent_is_exact_derivative(g, b):
    fit = PowerLawFit(a=3e-5, b=b, sse=0, ssr=0, sst=0, r2=1.0)
    h = 1e-5 * g
    fd = (san_response(fit, g + h).pressure - san_response(fit, g - h).pressure) / (2 * h)
    assert san_response(fit, g).tangent == pytest.approx(fd, rel=1e-6)


def test_san_area_interpolated_from_offline_curve():
    fit = PowerLawFit(a=1.0, b=2.0, sse=0, ssr=0, sst=0, r2=1.0,
                      area_curve=[(0.0, 0.0), (1.0, 0.2), (4.0, 0.5)])
    assert SANLaw(fit).evaluate(1.0).contact_area_fraction == pytest.approx(0.2)
    assert fit.contact_area(2.5) == pytest.approx(0.35)


# off-line sampling

def test_offline_two_steps(small_surface, elastic):
    alpha = shape_factor(small_surface.N)
    s = surface_stats(small_surface).rms
    out = offline_sample_curve(small_surface, elastic, alpha, 2, 3 * s)
    assert out.shape == (2, 2)
    assert out[1, 1] >= out[0, 1] >= 0
    assert np.all(out[:, 0] <= np.array([1.5, 3.0]) * s)


@pytest.mark.parametrize("mode", ["far_field", "gap"])
def test_offline_samples_monotone(mode, small_surface, elastic):
    alpha = shape_factor(small_surface.N)
    s = surface_stats(small_surface).rms
    out = offline_sample_curve(small_surface, elastic, alpha, 12, s, with_area=True, mode=mode)
    assert np.all(np.diff(out[:, 1]) >= 0)
    assert np.all(np.diff(out[:, 2]) >= 0)
    if mode == "gap":
        assert np.allclose(out[:, 0], s * np.arange(1, 13) / 12)


def test_far_field_sample_matches_corrected_pressure(small_surface, elastic):
    # the far-field route and the iterative correction agree at the same gap
    alpha = shape_factor(small_surface.N)
    s = surface_stats(small_surface).rms
    g, p = offline_sample_curve(small_surface, elastic, alpha, 4, 2 * s)[2]
    ref = corrected_pressure(small_surface, elastic, g, alpha, tol=1e-6).pressure
    assert p == pytest.approx(ref, rel=1e-3)


def test_offline_rejects_bad_arguments(small_surface, elastic):
    with pytest.raises(ParameterError):
        offline_sample_curve(small_surface, elastic, 0.8, 1, 1.0)
    with pytest.raises(ParameterError):
        offline_sample_curve(small_surface, elastic, 0.8, 5, 0.0)
    with pytest.raises(ParameterError):
        offline_sample_curve(small_surface, elastic, 0.8, 5, 1.0, mode="exact")


def test_fit_refinement_changes_exponent_below_one_percent(bench_surface, elastic):
    alpha = shape_factor(bench_surface.N)
    s = surface_stats(bench_surface).rms
    b100 = fit_power_law(offline_sample_curve(bench_surface, elastic, alpha, 100, 3 * s)).b
    b200 = fit_power_law(offline_sample_curve(bench_surface, elastic, alpha, 200, 3 * s)).b
    assert abs(b200 - b100) / b100 < 0.01
