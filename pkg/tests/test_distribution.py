import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from oracles import gaussian_pulse_density

from delaykit import distribution

from delaykit.distribution import (
    all_channel_distributions,
    autocorrelation_distribution_em,
    autocorrelation_distribution_qm,
    autocorrelation_em,
    autocorrelation_energy,
    delay_distribution_em,
    delay_distribution_qm,
    dispersion_width,
    energy_weight,
    total_mass,
)
from delaykit.envelope import evaluate_envelope, gaussian_envelope
from delaykit.errors import (
    ApproximationDomainError,
    ClosedChannelError,
    InvalidParameterError,
    MassCoverageError,
    ResolutionError,
)
from delaykit.smatrix import (
    DelayedModel,
    Dispersion,
    Resonance,
    blaschke_product,
    evaluate_s,
    feshbach_pole_model,
    identity_model,
    kmatrix_cayley,
    pure_delay,
    unitarity_defect,
)

EM = Dispersion("em")


def em_pole(E=10.0, G=1.0):
    return blaschke_product([(E, G)], EM)


def test_identity_em_is_gaussian_pulse():
    d = delay_distribution_em(identity_model(dispersion=EM), gaussian_envelope(10, 1))
    np.testing.assert_allclose(d.density, gaussian_pulse_density(d.grid, 1.0), atol=1e-12)
    assert d.density.max() == pytest.approx(0.3989 * 1.0, abs=1e-3)


def test_pure_delay_recentres_pulse():
    d = delay_distribution_em(pure_delay(3.0), gaussian_envelope(10, 1))
    np.testing.assert_allclose(d.density, gaussian_pulse_density(d.grid, 1.0, shift=3.0), atol=1e-12)
    assert d.grid[np.argmax(d.density)] == pytest.approx(3.0, abs=d.step)


def test_identity_off_diagonal_vanishes():
    d = delay_distribution_em(identity_model(2, EM), gaussian_envelope(10, 1), i=0, f=1)
    assert np.all(d.density == 0.0)


def test_default_grid_starts_at_minus_six_over_sigma():
    d = delay_distribution_em(identity_model(dispersion=EM), gaussian_envelope(10, 0.5))
    assert d.grid[0] == pytest.approx(-12.0)
    assert d.step <= 1 / (10 + 8 * 0.5)


def test_identity_qm_peaked_at_zero_and_normalised():
    d = delay_distribution_qm(identity_model(), gaussian_envelope(10, 1))
    assert abs(d.grid[np.argmax(d.density)]) < 0.01
    assert total_mass([d]) == pytest.approx(1.0, abs=1e-4)


def test_qm_pole_decays_at_rate_gamma():
    d = delay_distribution_qm(blaschke_product([(100, 1.0)]), gaussian_envelope(10, 0.05))
    w = (d.grid >= 10) & (d.grid <= 20)
    slope = np.polyfit(d.grid[w], np.log(d.density[w]), 1)[0]
    assert slope == pytest.approx(-1.0, rel=0.05)


def _distribution_without_velocity(model, env, tau):
    # independent brute force: drop sqrt(k) from the quantum transform
    k = np.linspace(*env.support, 4001)
    amp = evaluate_envelope(env, k) * evaluate_s(model, k, "k")[:, 0, 0]
    w = np.full(len(k), k[1] - k[0])
    w[[0, -1]] *= 0.5
    ph = np.exp(-1j * np.outer(tau, k**2 - k[2000] ** 2))
    return np.abs(ph @ (w * amp)) ** 2 / (2 * np.pi * 0.5)


def test_velocity_factor_restores_normalisation():
    env = gaussian_envelope(10, 1)
    model = blaschke_product([(100, 2.0)])
    with_v = delay_distribution_qm(model, env)
    assert with_v.mass == pytest.approx(1.0, abs=1e-4)
    tau = np.linspace(-1.5, 8, 6001)
    without = np.trapezoid(_distribution_without_velocity(model, env, tau), tau)
    # Plancherel in E: without sqrt(k) the mass is int omega^2 / k dk (hbar = 1, m = 1/2)
    oracle = quad(lambda k: evaluate_envelope(env, k) ** 2 / k, *env.support, points=[10])[0]
    assert without == pytest.approx(oracle, rel=1e-4)
    assert abs(10 * without - 1) < env.sigma / env.k0


def test_autocorrelation_identity_and_delay():
    eta = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(autocorrelation_em(identity_model(dispersion=EM), 0, 0, 10, 1, eta), 1.0, atol=1e-12)
    np.testing.assert_allclose(autocorrelation_em(pure_delay(2.5), 0, 0, 10, 1, eta), np.exp(2.5j * eta), atol=1e-12)


def test_autocorrelation_needs_whole_line_regime():
    with pytest.raises(ApproximationDomainError):
        autocorrelation_em(em_pole(), 0, 0, 2.0, 1.0, 0.3)


def test_autocorrelation_route_matches_direct_for_pole():
    env = gaussian_envelope(10, 1)
    direct = delay_distribution_em(em_pole(), env)
    route = autocorrelation_distribution_em(em_pole(), env, s_grid=direct.grid)
    assert route.meta["route"] == "whole_line_gaussian"
    assert np.abs(route.density - direct.density).max() < 1e-3 * direct.density.max()


def test_half_line_route_used_for_wide_band():
    env = gaussian_envelope(2, 1)
    grid = np.arange(-40, 40, 1 / env.support[1])
    direct = delay_distribution_em(em_pole(2, 1), env, s_grid=grid)
    route = autocorrelation_distribution_em(em_pole(2, 1), env, s_grid=grid)
    assert route.meta["route"] == "half_line_exact"
    assert np.abs(route.density - direct.density).max() < 1e-3 * direct.density.max()


def test_auto_grid_size_is_capped(monkeypatch):
    # an envelope cut off at k = 0 gives algebraic tails that no modest grid captures
    monkeypatch.setattr(distribution, "MAX_AUTO_POINTS", 2000)
    with pytest.raises(MassCoverageError) as err:
        delay_distribution_em(em_pole(3, 1), gaussian_envelope(3, 2))
    assert err.value.tail_estimate > 1e-5


def test_pointwise_autocorrelation_agrees_with_lattice_route():
    # C(eta) from the xi quadrature reproduces the lattice transform at a few delays
    env = gaussian_envelope(10, 1)
    model = em_pole()
    eta = np.linspace(-10, 10, 801)
    C = autocorrelation_em(model, 0, 0, 10, 1, eta)
    s = np.array([-1.0, 0.0, 1.0, 2.5])
    integrand = np.exp(-(eta**2) / 2) * C
    P = np.trapezoid(np.exp(-1j * np.outer(s, eta)) * integrand, eta, axis=1).real / (2 * np.pi)
    direct = delay_distribution_em(model, env)
    np.testing.assert_allclose(P, np.interp(s, direct.grid, direct.density), atol=1e-4 * direct.density.max())


@pytest.mark.parametrize("eps", [0.0, 0.5, 3.0])
def test_energy_autocorrelation_identity(eps):
    assert autocorrelation_energy(identity_model(), 0, 0, 100.0, 0.1, eps) == pytest.approx(1.0, abs=1e-6)


def test_energy_autocorrelation_at_zero_is_mean_modulus():
    val = autocorrelation_energy(blaschke_product([(100, 1.0)]), 0, 0, 100.0, 0.1, 0.0)
    assert abs(val.imag) < 1e-14
    assert val.real == pytest.approx(1.0, abs=1e-6)


def test_energy_weight_integrates_to_one():
    E0, rho = 100.0, 0.1
    val = quad(lambda E: energy_weight(E, E0, rho), 90, 110, points=[E0], limit=200)[0]
    assert val == pytest.approx(1.0, abs=1e-9)


def test_energy_autocorrelation_clips_with_warning():
    with pytest.warns(RuntimeWarning, match="clipped"):
        autocorrelation_energy(identity_model(), 0, 0, 1.0, 0.5, 3.0)


def test_energy_route_matches_direct_qm():
    env = gaussian_envelope(10, 0.1)  # sigma/k0 = 0.01
    model = blaschke_product([(100, 1.0)])
    direct = delay_distribution_qm(model, env)
    route = autocorrelation_distribution_qm(model, env, tau_grid=direct.grid)
    assert np.abs(route.density - direct.density).max() < 1e-3 * direct.density.max()


def test_total_mass_identity_and_kmatrix():
    env = gaussian_envelope(10, 0.5)
    assert total_mass(all_channel_distributions(identity_model(2), env, 0, "qm")) == pytest.approx(1, abs=1e-4)
    rng = np.random.default_rng(5)
    res = []
    for E, G in [(99.0, 1.0), (101.0, 0.7)]:
        g = rng.normal(size=3)
        res.append(Resonance(E, G, tuple(g / np.linalg.norm(g) * np.sqrt(G))))
    km = kmatrix_cayley(res)
    for i in range(3):
        assert total_mass(all_channel_distributions(km, env, i, "qm")) == pytest.approx(1, abs=1e-4)


def test_feshbach_mass_bounded_by_defect():
    env = gaussian_envelope(25, 1.0)
    report = []
    for sep in [0.2, 1.0, 4.0]:
        m = feshbach_pole_model([Resonance(25 - sep / 2, 0.5), Resonance(25 + sep / 2, 0.5)], strict=False, dispersion=EM)
        mass = delay_distribution_em(m, env).mass
        defect = unitarity_defect(m, np.linspace(*env.support, 2001), "k")
        report.append((sep, mass, defect))
        # for one channel |S|^2 - 1 is the defect matrix itself, so C = 1
        assert abs(mass - 1) <= defect * (1 + 1e-6)
    print("feshbach separation, mass, defect:", report)


def test_short_grid_fails_coverage():
    env = gaussian_envelope(10, 1)
    model = em_pole(10, 0.2)
    grid = np.arange(-6, 5, 1 / 18)
    d = delay_distribution_em(model, env, s_grid=grid)
    with pytest.raises(MassCoverageError) as err:
        total_mass([d])
    assert err.value.tail_estimate == pytest.approx(d.expected_mass - d.mass)


def test_coarse_grid_rejected_with_required_points():
    with pytest.raises(ResolutionError) as err:
        delay_distribution_em(em_pole(), gaussian_envelope(10, 1), s_grid=np.linspace(-6, 10, 50))
    assert err.value.required_points == int(np.ceil(16 * 18)) + 1
    with pytest.raises(ResolutionError):
        delay_distribution_qm(blaschke_product([(100, 1)]), gaussian_envelope(10, 1), tau_grid=np.linspace(-1, 5, 100))


def test_non_uniform_grid_rejected():
    with pytest.raises(InvalidParameterError):
        delay_distribution_em(em_pole(), gaussian_envelope(10, 1), s_grid=np.array([0, 0.01, 0.03, 0.04]))


def test_closed_outgoing_channel_rejected():
    disp = Dispersion("qm", thresholds=(0.0, 200.0))
    m = kmatrix_cayley([], np.zeros((2, 2)), disp)
    with pytest.raises(ClosedChannelError):
        delay_distribution_qm(m, gaussian_envelope(10, 0.5))


def _mean_delay_oracle(env, E_res, G, eps):
    # envelope average of the Blaschke phase delay G / ((E - E_res)^2 + G^2/4), E = k^2 + eps
    tau = lambda k: G / ((k**2 + eps - E_res) ** 2 + G**2 / 4)  # noqa: E731
    return quad(lambda k: evaluate_envelope(env, k) ** 2 * tau(k), *env.support, points=[10], limit=400)[0]


def test_threshold_override_shifts_energy():
    # the pole at 110 is on resonance for k0 = 10 only with the channel threshold 10
    env = gaussian_envelope(10, 0.3)
    model = blaschke_product([(110, 1.0)], Dispersion(thresholds=(10.0,)))
    means = []
    for eps in (None, 0.0):
        d = delay_distribution_qm(model, env, eps_i=eps)
        means.append(np.trapezoid(d.grid * d.density, d.grid))
    assert means[0] == pytest.approx(_mean_delay_oracle(env, 110, 1.0, 10.0), rel=1e-3)
    assert means[1] == pytest.approx(_mean_delay_oracle(env, 110, 1.0, 0.0), rel=1e-3)
    assert means[0] > 20 * means[1]


def test_grid_refinement_stability():
    env = gaussian_envelope(10, 1)
    model = em_pole()
    a = delay_distribution_em(model, env)
    h = a.meta["quadrature_step"]
    b = delay_distribution_em(model, env, s_grid=a.grid, step=h / 2)
    peak = np.argmax(a.density)
    assert abs(a.density[peak] - b.density[peak]) < 1e-6 * a.density[peak]


def test_csv_and_sidecar(tmp_path):
    d = delay_distribution_em(pure_delay(3.0), gaussian_envelope(10, 1))
    d.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "delay,density" and len(lines) == len(d.grid) + 1
    meta = json.loads((tmp_path / "p.json").read_text())
    assert meta["dispersion"] == "em" and meta["k0"] == 10 and meta["sigma"] == 1
    assert meta["quadrature_step"] > 0 and meta["mass"] == pytest.approx(1, abs=1e-4)


def test_dispersion_width_examples():
    assert dispersion_width(2.0, 0.0) == pytest.approx(1.0)
    # sigma^2 hbar t / 2m = 1
    assert dispersion_width(1.0, 1.0) == pytest.approx(2 * np.sqrt(2), rel=1e-15)
    assert dispersion_width(1.0, 3.0) == pytest.approx(2 * np.sqrt(10), rel=1e-15)
    assert dispersion_width(1.0, 3.0) == pytest.approx(6.3246, abs=1e-4)
    with pytest.raises(InvalidParameterError):
        dispersion_width(0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        dispersion_width(1.0, 1.0, mass=0.0)


# properties

poles = st.lists(st.tuples(st.floats(6, 14), st.floats(0.3, 3)), min_size=1, max_size=3)


@settings(max_examples=15)
@given(poles, st.floats(0.3, 1.5))
def test_positivity_and_normalisation_em(pole_list, sigma):
    env = gaussian_envelope(10, sigma)
    d = delay_distribution_em(blaschke_product(pole_list, EM), env)
    assert np.all(d.density >= 0)
    assert d.mass == pytest.approx(1.0, abs=1e-4)


@settings(max_examples=5)
@given(st.integers(0, 1000), st.floats(0.3, 1.0))
def test_normalisation_qm_kmatrix(seed, sigma):
    rng = np.random.default_rng(seed)
    res = []
    for E, G in zip(rng.uniform(95, 105, 2), rng.uniform(0.5, 2, 2)):
        g = rng.normal(size=2)
        res.append(Resonance(float(E), float(G), tuple(g / np.linalg.norm(g) * np.sqrt(G))))
    dists = all_channel_distributions(kmatrix_cayley(res), gaussian_envelope(10, sigma), 0, "qm")
    assert all(np.all(d.density >= 0) for d in dists)
    assert total_mass(dists) == pytest.approx(1.0, abs=1e-4)


@settings(max_examples=10)
@given(st.floats(-8, 8), st.floats(0.5, 2))
def test_shift_covariance(L, G):
    env = gaussian_envelope(10, 1)
    base = em_pole(10, G)
    grid = np.linspace(-4, 14, 18 * 18 + 1)
    shifted = delay_distribution_em(DelayedModel(base, L), env, s_grid=grid)
    plain = delay_distribution_em(base, env, s_grid=grid - L)
    np.testing.assert_allclose(shifted.density, plain.density, atol=1e-9 * plain.density.max())


@settings(max_examples=10)
@given(st.floats(2.05, 12), st.floats(0.3, 3), st.floats(-1, 1))
def test_route_equivalence_property(ratio, G, offset):
    sigma = 1.0
    k0 = ratio * sigma
    env = gaussian_envelope(k0, sigma)
    model = em_pole(k0 + offset, G)
    grid = np.arange(-40, 40, 1 / env.support[1])
    direct = delay_distribution_em(model, env, s_grid=grid)
    route = autocorrelation_distribution_em(model, env, s_grid=grid)
    assert np.abs(route.density - direct.density).max() < 1e-3 * direct.density.max()


def test_whole_line_route_error_near_its_boundary():
    # forced whole-line at k0 = 2.25 sigma: within exp(-q^2) for q = 2, outside 1e-3
    env = gaussian_envelope(2.25, 1)
    grid = np.arange(-40, 40, 1 / env.support[1])
    direct = delay_distribution_em(em_pole(2.25, 1), env, s_grid=grid)
    route = autocorrelation_distribution_em(em_pole(2.25, 1), env, s_grid=grid, q=2.0)
    assert route.meta["route"] == "whole_line_gaussian"
    dev = np.abs(route.density - direct.density).max() / direct.density.max()
    assert 1e-3 < dev < np.exp(-4)
    with pytest.raises(ApproximationDomainError):
        autocorrelation_distribution_em(em_pole(), env, q=1.5)
