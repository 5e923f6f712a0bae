"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""

import time

import numpy as np
import pytest

from oracles import gaussian_pulse_density, trajectories_by_shooting

from delaykit.billiard import (
    classical_delay_histogram,
    equilateral_configuration,
    find_all_trajectories,
    histogram_tail_fit,
    monte_carlo_escape,
)
from delaykit.distribution import (
    all_channel_distributions,
    autocorrelation_distribution_em,
    delay_distribution_em,
    delay_distribution_qm,
    dispersion_width,
    total_mass,
)
from delaykit.envelope import gaussian_envelope
from delaykit.moments import distribution_moments, monochromatic_limit_check
from delaykit.smatrix import Dispersion, Resonance, blaschke_product, evaluate_s, kmatrix_cayley, pure_delay

EM = Dispersion("em")
RESULTS = []


def record(number, name, ok, detail, elapsed, budget=None):
    within = budget is None or elapsed < budget
    limit = f" (limit {budget:g} s)" if budget else ""
    status = "PASS" if ok and within else "FAIL"
    RESULTS.append(f"criterion {number} {name}: {status} {detail}; {elapsed:.2f} s{limit}")
    assert ok, detail
    assert within, f"took {elapsed:.1f} s, limit {budget} s"


def widths(rng, gammas, n_channels):
    res = []
    for E, G in gammas:
        v = rng.normal(size=n_channels)
        res.append(Resonance(E, G, tuple(np.sqrt(G) * v / np.linalg.norm(v))))
    return res


def test_criterion_1_normalisation():
    t = time.perf_counter()
    rng = np.random.default_rng(1)
    model = kmatrix_cayley(widths(rng, [(95, 2.0), (100, 1.5), (103, 1.0), (98, 2.5)], 3))
    dists = all_channel_distributions(model, gaussian_envelope(10.0, 0.5), 0, "qm")
    mass = total_mass(dists)
    elapsed = time.perf_counter() - t
    record(1, "normalisation", abs(mass - 1) < 1e-4, f"total mass {mass:.8f}", elapsed, 10)


def test_criterion_2_monochromatic_limit():
    t = time.perf_counter()
    model = blaschke_product([Resonance(25.0, 1.0)], EM)
    table = monochromatic_limit_check(model, 0, 0, 25.0, [0.2, 0.1, 0.05], kind="em")
    means = np.array([r.mean for r in table.rows])
    err = np.abs(means - 4.0) / 4.0
    elapsed = time.perf_counter() - t
    ok = bool(np.all(np.diff(err) < 0)) and err[-1] < 0.02
    record(2, "monochromatic limit", ok, f"relative errors {np.round(err, 5).tolist()}", elapsed, 30)


def test_criterion_3_second_moment_divergence():
    t = time.perf_counter()
    model = blaschke_product([Resonance(25.0, 1.0)], EM)
    sigmas = np.array([0.05, 0.1, 0.15, 0.2])
    second = [distribution_moments(delay_distribution_em(model, gaussian_envelope(25.0, s)), 2) for s in sigmas]
    slope = np.polyfit(1 / sigmas**2, second, 1)[0]
    s0 = abs(evaluate_s(model, np.array([25.0]), "k")[0, 0, 0]) ** 2
    elapsed = time.perf_counter() - t
    record(3, "second-moment divergence", abs(slope / s0 - 1) < 0.02, f"slope {slope:.5f}, |S|^2 {s0:.5f}", elapsed)


def test_criterion_4_resonance_decay():
    t = time.perf_counter()
    G = 1.0
    model = blaschke_product([Resonance(100.0, G)])
    d = delay_distribution_qm(model, gaussian_envelope(10.0, 0.2))
    w = (d.grid >= 2 / G) & (d.grid <= 6 / G)
    slope = np.polyfit(d.grid[w], np.log(d.density[w]), 1)[0]
    elapsed = time.perf_counter() - t
    record(4, "resonance decay", abs(slope / -G - 1) < 0.05, f"log slope {slope:.5f} (expected {-G})", elapsed)


def test_criterion_5_route_equivalence():
    t = time.perf_counter()
    model = blaschke_product([Resonance(10.0, 1.0)], EM)
    env = gaussian_envelope(10.0, 1.0)
    grid = np.arange(-12.0, 30.0, 0.05)
    direct = delay_distribution_em(model, env, s_grid=grid)
    route = autocorrelation_distribution_em(model, env, s_grid=grid)
    dev = np.abs(route.density - direct.density).max() / direct.density.max()
    elapsed = time.perf_counter() - t
    record(5, "route equivalence", dev < 1e-3, f"max relative deviation {dev:.3e}", elapsed)


def test_criterion_6_trajectory_solver():
    t = time.perf_counter()
    cfg = equilateral_configuration(6.0)
    worst_res, worst_angle, missing, extra = 0.0, 0.0, 0, 0
    for pair in [(0.3, 2.2), (1.1, 4.0)]:
        trajs = [tr for tr in find_all_trajectories(cfg, *pair, 6) if not tr.grazing]
        worst_res = max(worst_res, max(tr.residual for tr in trajs))
        oracle = trajectories_by_shooting(cfg.centers, *pair, 6, cfg.enclosing_radius)
        mine = {tr.code: tr for tr in trajs}
        missing += len(set(oracle) - set(mine))
        extra += len(set(mine) - set(oracle))
        for code, sols in oracle.items():
            if code not in mine:
                continue
            diff = min(
                np.abs(np.angle(np.exp(1j * (np.asarray(mine[code].theta) - s[0])))).max() for s in sols
            )
            worst_angle = max(worst_angle, diff)
    elapsed = time.perf_counter() - t
    ok = worst_res < 1e-10 and worst_angle < 1e-6 and missing == 0 and extra == 0
    detail = f"max residual {worst_res:.2e}, max angle error {worst_angle:.2e}, missing {missing}, extra {extra}"
    record(6, "trajectory solver", ok, detail, elapsed, 60)


def test_criterion_7_classical_escape():
    t = time.perf_counter()
    cfg = equilateral_configuration(6.0)
    curve = monte_carlo_escape(cfg, 100_000, rng_seed=0)
    hist = classical_delay_histogram(cfg, 0.3, 2.2, 8, 0.5, weights="classical")
    tail = histogram_tail_fit(hist, start=2 * cfg.enclosing_radius)
    verbatim = histogram_tail_fit(classical_delay_histogram(cfg, 0.3, 2.2, 8, 0.5, weights="amplitude"))
    elapsed = time.perf_counter() - t
    corr = abs(curve.fit.correlation)
    rel = abs(tail.gamma / curve.fit.gamma - 1)
    RESULTS.append(f"criterion 7 informational: |A|^2-weighted histogram slope {verbatim.gamma:.4f}")
    detail = f"MC gamma {curve.fit.gamma:.4f} (|r| {corr:.4f}), histogram gamma {tail.gamma:.4f} ({rel:.1%})"
    record(7, "classical escape", corr > 0.99 and rel < 0.10, detail, elapsed, 120)


def test_criterion_8_pulse_shift():
    t = time.perf_counter()
    env = gaussian_envelope(10.0, 1.0)
    d = delay_distribution_em(pure_delay(3.0, dispersion=EM), env)
    free = gaussian_pulse_density(d.grid, 1.0, shift=3.0)
    dev = np.abs(d.density - free).max()
    mean = distribution_moments(d, 1)
    elapsed = time.perf_counter() - t
    ok = dev < 1e-6 and abs(mean - 3) < 1e-6
    record(8, "pulse shift", ok, f"max density deviation {dev:.2e}, mean {mean:.9f}", elapsed)


def test_criterion_9_dispersion_width():
    t = time.perf_counter()
    sigma, mass, hbar = 0.7, 0.5, 1.0
    at0 = dispersion_width(sigma, 0.0, mass, hbar)
    t1 = 2 * mass / (sigma**2 * hbar)
    at1 = dispersion_width(sigma, t1, mass, hbar)
    elapsed = time.perf_counter() - t
    ok = at0 == pytest.approx(2 / sigma, rel=1e-15) and at1 == pytest.approx(np.sqrt(2) * 2 / sigma, rel=1e-15)
    record(9, "dispersion width", ok, f"w(0) sigma/2 = {at0 * sigma / 2:.15f}, w(t1)/w(0) = {at1 / at0:.15f}", elapsed)
