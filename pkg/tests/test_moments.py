import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from delaykit import moments
from delaykit.distribution import delay_distribution_em
from delaykit.envelope import gaussian_envelope
from delaykit.errors import (
    ApproximationDomainError,
    ClosedChannelError,
    ConvergenceError,
    InvalidParameterError,
    UndefinedMomentError,
)
from delaykit.moments import (
    distribution_moments,
    moment_report,
    monochromatic_limit_check,
    second_moment_smallband,
    wigner_smith_element,
    wigner_smith_trace,
)
from delaykit.smatrix import (
    Dispersion,
    Resonance,
    block_diagonal,
    blaschke_product,
    identity_model,
    kmatrix_cayley,
    pure_delay,
)

EM = Dispersion("em")


def phase_delay(E, E0, G):
    return G / ((E - E0) ** 2 + G**2 / 4)


# distribution moments


def test_identity_mean_vanishes():
    d = delay_distribution_em(identity_model(dispersion=EM), gaussian_envelope(10, 1))
    assert distribution_moments(d, 1) == pytest.approx(0.0, abs=1e-6)


def test_identity_second_moment_is_inverse_bandwidth_squared():
    d = delay_distribution_em(identity_model(dispersion=EM), gaussian_envelope(10, 1))
    assert distribution_moments(d, 2) == pytest.approx(1.0, abs=1e-3)


def test_pure_delay_mean_is_shift():
    d = delay_distribution_em(pure_delay(3.0), gaussian_envelope(10, 1))
    assert distribution_moments(d, 1) == pytest.approx(3.0, abs=1e-6)


def test_zero_mass_pair_has_no_moment():
    d = delay_distribution_em(identity_model(2, EM), gaussian_envelope(10, 1), i=0, f=1)
    with pytest.raises(UndefinedMomentError):
        distribution_moments(d, 1)


def test_only_first_two_orders():
    d = delay_distribution_em(identity_model(dispersion=EM), gaussian_envelope(10, 1))
    with pytest.raises(InvalidParameterError):
        distribution_moments(d, 3)


def test_report_carries_both_normalisations():
    # two-channel K-matrix: the 0->1 pair carries a fraction of the flux
    G = 1.0
    km = kmatrix_cayley([Resonance(10.0, G, (np.sqrt(G / 2), np.sqrt(G / 2)))], dispersion=EM)
    d = delay_distribution_em(km, gaussian_envelope(10, 0.5), i=0, f=1)
    r = moment_report(d, km)
    assert 0 < r.mass < 1
    assert r.mean_unnormalized == pytest.approx(r.mean * r.mass, rel=1e-12)
    assert r.second_moment_unnormalized == pytest.approx(r.second_moment * r.mass, rel=1e-12)
    assert np.isfinite(r.wigner_smith_reference)
    assert set(r.to_dict()) >= {"mean", "second_moment", "variance", "wigner_smith_reference"}


# Wigner-Smith


def test_ws_at_resonance():
    model = blaschke_product([(5.0, 0.5)])
    assert wigner_smith_element(model, 0, 0, 5.0, h=0.5 / 1000) == pytest.approx(8.0, abs=1e-4)
    assert wigner_smith_element(model, 0, 0, 5.0) == pytest.approx(8.0, abs=1e-4)


@pytest.mark.parametrize("E", [3.0, 4.7, 5.2, 9.0])
def test_ws_matches_breit_wigner_phase_derivative(E):
    model = blaschke_product([(5.0, 0.5)])
    assert wigner_smith_element(model, 0, 0, E) == pytest.approx(phase_delay(E, 5.0, 0.5), rel=1e-7)


def test_ws_identity_vanishes():
    assert wigner_smith_element(identity_model(), 0, 0, 5.0, h=1e-3) == 0.0
    assert wigner_smith_trace(identity_model(3), 5.0, h=1e-3) == 0.0


def test_ws_pure_delay_is_length():
    assert wigner_smith_element(pure_delay(3.0), 0, 0, 10.0, h=1e-4, variable="k") == pytest.approx(3.0, abs=1e-8)


def test_ws_rejects_bad_step_and_variable():
    with pytest.raises(InvalidParameterError):
        wigner_smith_element(identity_model(), 0, 0, 5.0, h=-1.0)
    with pytest.raises(InvalidParameterError):
        wigner_smith_element(identity_model(), 0, 0, 5.0, variable="t")


def test_trace_single_pole_and_block_average():
    pole = blaschke_product([(5.0, 0.5)])
    assert wigner_smith_trace(pole, 5.0) == pytest.approx(8.0, abs=1e-4)
    model = block_diagonal([pole, identity_model()])
    assert wigner_smith_trace(model, 5.0) == pytest.approx(4.0, abs=1e-4)


def test_trace_rejects_closed_channel():
    model = kmatrix_cayley([], np.zeros((2, 2)), Dispersion(thresholds=(0.0, 10.0)))
    with pytest.raises(ClosedChannelError):
        wigner_smith_trace(model, 5.0)


# monochromatic limit


def test_pole_mean_converges_to_ws():
    G = 1.0
    table = monochromatic_limit_check(blaschke_product([(10.0, G)], EM), 0, 0, 10.0, [0.2 * G, 0.1 * G, 0.05 * G])
    assert table.monotone
    assert np.all(np.diff(table.errors) < 0)
    assert table.rows[0].ws_reference == pytest.approx(4 / G, rel=1e-8)
    assert table.errors[-1] < 0.02


def test_pure_delay_limit_is_exact():
    table = monochromatic_limit_check(pure_delay(3.0), 0, 0, 10.0, [1.0, 0.5, 0.25])
    assert np.all(table.errors < 1e-6)


def test_identity_limit_means_vanish():
    table = monochromatic_limit_check(identity_model(dispersion=EM), 0, 0, 10.0, [1.0, 0.5, 0.25])
    assert all(abs(r.mean) < 1e-6 for r in table.rows)


def test_sigma_sequence_must_decrease():
    with pytest.raises(InvalidParameterError):
        monochromatic_limit_check(identity_model(dispersion=EM), 0, 0, 10.0, [0.1, 0.2])


@pytest.mark.parametrize(
    "errors, ok",
    [([1.0, 0.5, 0.51, 0.2], True), ([1.0, 0.5, 0.6], False), ([1.0, 0.5, 0.51, 0.52], False), ([0.0, 1e-10], True)],
)
def test_monotone_rule(errors, ok):
    assert moments._is_monotone(np.array(errors)) is ok


def test_strict_non_monotone_raises(monkeypatch):
    monkeypatch.setattr(moments, "_is_monotone", lambda e: False)
    with pytest.raises(ConvergenceError):
        monochromatic_limit_check(pure_delay(3.0), 0, 0, 10.0, [1.0, 0.5], strict=True)
    assert not monochromatic_limit_check(pure_delay(3.0), 0, 0, 10.0, [1.0, 0.5]).monotone


def test_convergence_csv(tmp_path):
    table = monochromatic_limit_check(pure_delay(3.0), 0, 0, 10.0, [1.0, 0.5])
    table.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "sigma,mean,ws_reference,abs_error" and len(lines) == 3


# small-band second moment


def test_smallband_identity():
    assert second_moment_smallband(identity_model(dispersion=EM), 0, 0, 10.0, 0.2) == pytest.approx(25.0, rel=1e-12)


def test_smallband_pure_delay():
    val = second_moment_smallband(pure_delay(3.0), 0, 0, 10.0, 0.1)
    assert val == pytest.approx(100 + 9, rel=1e-8)
    d = delay_distribution_em(pure_delay(3.0), gaussian_envelope(10, 0.1))
    assert distribution_moments(d, 2) == pytest.approx(val, rel=1e-4)


def test_smallband_scaled_value_tends_to_modulus():
    model = blaschke_product([(10.0, 1.0)], EM)
    vals = [second_moment_smallband(model, 0, 0, 10.3, s) * s**2 for s in (0.02, 0.01, 0.005)]
    assert abs(vals[-1] - 1) < abs(vals[0] - 1)
    assert vals[-1] == pytest.approx(1.0, abs=1e-3)


def test_smallband_rejects_fast_variation():
    with pytest.raises(ApproximationDomainError):
        second_moment_smallband(blaschke_product([(10.0, 0.1)], EM), 0, 0, 10.0, 1.0)


# properties


@settings(max_examples=4)
@given(st.floats(0.8, 3.0), st.floats(-1.0, 1.0))
def test_second_moment_diverges_as_inverse_bandwidth_squared(G, offset):
    model = blaschke_product([(10.0 + offset, G)], EM)
    sig = np.array([0.05, 0.1, 0.15, 0.2])
    m2 = [distribution_moments(delay_distribution_em(model, gaussian_envelope(10, s)), 2) for s in sig]
    slope = np.polyfit(1 / sig**2, m2, 1)[0]
    assert slope == pytest.approx(1.0, rel=0.02)


@settings(max_examples=6)
@given(st.floats(2.0, 5.0), st.floats(-2.0, 2.0), st.floats(0.05, 0.2))
def test_smallband_agrees_with_distribution(G, offset, sigma):
    model = blaschke_product([(10.0 + offset, G)], EM)
    try:
        approx = second_moment_smallband(model, 0, 0, 10.0, sigma)
    except ApproximationDomainError:
        assume(False)
    d = delay_distribution_em(model, gaussian_envelope(10, sigma))
    assert distribution_moments(d, 2) == pytest.approx(approx, rel=0.05)


@given(st.floats(5.0, 200.0), st.floats(0.2, 5.0), st.floats(-3.0, 3.0))
def test_ws_chain_rule(E_res, G, offset):
    model = blaschke_product([(E_res, G)])
    E0 = max(E_res + offset, 1.0)
    k0 = np.sqrt(E0)  # hbar = 1, m = 1/2
    in_E = wigner_smith_element(model, 0, 0, E0, variable="E")
    in_k = wigner_smith_element(model, 0, 0, k0, variable="k")
    # dE/dk = hbar^2 k / m
    assert in_E == pytest.approx(in_k * 0.5 / k0, rel=1e-6)


@settings(max_examples=10)
@given(st.lists(st.tuples(st.floats(6, 14), st.floats(0.3, 3)), min_size=1, max_size=3), st.floats(0.3, 2))
def test_variance_non_negative(poles, sigma):
    d = delay_distribution_em(blaschke_product(poles, EM), gaussian_envelope(10, sigma))
    r = moment_report(d)
    assert r.second_moment >= r.mean**2 - 1e-12
    assert r.variance >= 0
