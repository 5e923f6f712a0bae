"""Delay-time distributions of scattered wave packets.

A packet with envelope omega(k) entering channel i leaves channel f as

    psi_f(t) ~ int dk omega(k) S_fi(k) exp(-i E(k) t / hbar).

For light (E = hbar c k) the intensity seen as a function of the optical
path difference s = ct is

    P(s) = (1/2pi) |int dk omega(k) S_fi(k) exp(-i k s)|^2,

and for massive particles (E = hbar^2 k^2 / 2m + eps_i) the flux through a
distant detector gives

    P(tau) = (hbar / 2 pi m) |int dk sqrt(k) omega(k) S_fi(k) exp(-i E(k) tau / hbar)|^2.

The sqrt(k) is the velocity factor of the flux; with it, Parseval's
theorem gives sum_f int P dtau = int omega^2 sum_f |S_fi|^2 dk, which is 1
for unitary S. Both integrals are evaluated by the trapezoid rule on the
envelope's effective support, where it converges spectrally because
omega decays like a Gaussian at the edges.

Writing k = xi + eta/2, k' = xi - eta/2 turns |.|^2 into a double
integral over the S-matrix autocorrelation. For a Gaussian envelope on
the whole line this factorises exactly, giving the form-factor route
implemented in ``autocorrelation_em`` and ``autocorrelation_energy``.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .envelope import Envelope, bandwidth_ratio_check, evaluate_envelope
from .errors import (
    ApproximationDomainError,
    InvalidParameterError,
    MassCoverageError,
    ResolutionError,
)
from .smatrix import Dispersion, SMatrixModel, evaluate_s

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-5
# target for the automatically extended grids, stricter than TAIL_TOL
AUTO_TAIL_TOL = 1e-6
MAX_EXTENSIONS = 24
MAX_AUTO_POINTS = 20_000
CHUNK = 2_000_000


@dataclass
class DelayDistribution:
    """Sampled delay density for one channel pair.

    ``grid`` holds s (em, length units) or tau (qm, time units).
    ``expected_mass`` is int omega^2 |S_fi|^2 dk, the exact total mass of
    the density on the whole line.
    """

    dispersion: str
    i: int
    f: int
    grid: np.ndarray
    density: np.ndarray
    k0: float
    sigma: float
    expected_mass: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    @property
    def tail_estimate(self) -> float:
        """Mass outside the grid: expected minus captured."""
        return max(self.expected_mass - self.mass, 0.0)

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def metadata(self) -> dict:
        out = {
            "dispersion": self.dispersion,
            "channel_in": self.i,
            "channel_out": self.f,
            "k0": self.k0,
            "sigma": self.sigma,
            "grid_min": float(self.grid[0]),
            "grid_max": float(self.grid[-1]),
            "grid_points": len(self.grid),
            "mass": self.mass,
            "expected_mass": self.expected_mass,
        }
        out.update(self.meta)
        return out

    def to_csv(self, path, sidecar: bool = True):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delay", "density"])
            for x, p in zip(self.grid, self.density):
                w.writerow([f"{x:.12g}", f"{p:.12g}"])
        if sidecar:
            path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))


def dispersion_width(sigma: float, t: float, mass: float = 0.5, hbar: float = 1.0) -> float:
    """Spatial width (2/sigma) sqrt(1 + (sigma^2 hbar t / 2m)^2) of a free packet at time t."""
    if not sigma > 0:
        raise InvalidParameterError("sigma must be positive")
    if not mass > 0:
        raise InvalidParameterError("mass must be positive")
    return float((2.0 / sigma) * np.sqrt(1.0 + (sigma**2 * hbar * t / (2.0 * mass)) ** 2))


def _as_kind(model: SMatrixModel, kind: str) -> SMatrixModel:
    if model.dispersion.kind == kind:
        return model
    return model.with_dispersion(model.dispersion.with_kind(kind))


def _scale_in_k(model: SMatrixModel, k_hi: float) -> float:
    sc = model.scale
    if model.natural == "E":
        sc = sc / float(np.max(model.dispersion.dE_dk(np.array([k_hi]))))
    lengths = getattr(model, "lengths", None)
    if lengths is not None and len(lengths):
        sc = min(sc, 1.0 / max(np.abs(lengths).max(), 1e-300))
    L = getattr(model, "L", None)
    if L:
        sc = min(sc, 1.0 / abs(L))
    return sc


def _k_step(env: Envelope, model: SMatrixModel, phase_rate: float) -> float:
    """Trapezoid step: <= sigma/8, >= 8 points per period of the fastest
    phase, and 10 points per S-matrix variation scale."""
    lo, hi = env.support
    h = env.sigma / 8.0
    if phase_rate > 0:
        h = min(h, np.pi / (4.0 * phase_rate))
    return min(h, _scale_in_k(model, hi) / 10.0)


def _k_nodes(env: Envelope, h: float):
    lo, hi = env.support
    n = int(np.ceil((hi - lo) / h)) + 1
    k = np.linspace(lo, hi, max(n, 3))
    w = np.full(len(k), k[1] - k[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return k, w


def _amplitudes(model, env, i, fs, k, kind):
    S = evaluate_s(model, k, "k", channel=i)
    amp = S[:, list(fs), i]
    om = evaluate_envelope(env, k)
    return om, amp


def _transform(weights, phase_nodes, grid, carrier):
    """|sum_n weights_nf exp(-i (x_n - carrier) t)|^2 per grid point t, chunked."""
    dx = phase_nodes - carrier
    out = np.empty((len(grid), weights.shape[1]))
    rows = max(1, CHUNK // max(len(dx), 1))
    for a in range(0, len(grid), rows):
        t = grid[a : a + rows]
        ph = np.exp(-1j * np.outer(t, dx))
        out[a : a + rows] = np.abs(ph @ weights) ** 2
    return out


def _check_uniform(grid, name):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3:
        raise InvalidParameterError(f"{name} needs at least 3 points")
    d = np.diff(grid)
    if np.any(d <= 0) or np.ptp(d) > 1e-9 * abs(d.mean()) + 1e-12 * np.abs(grid).max():
        raise InvalidParameterError(f"{name} must be uniform and increasing")
    return grid


def _required_step(env, kind, dispersion, i):
    k_hi = env.support[1]
    if kind == "em":
        return 1.0 / k_hi
    kin = dispersion.hbar**2 * k_hi**2 / (2 * dispersion.mass)
    return dispersion.hbar / kin


def _check_resolution(grid, env, kind, dispersion, i):
    need = _required_step(env, kind, dispersion, i)
    step = grid[1] - grid[0]
    if step > need * (1 + 1e-12):
        n = int(np.ceil((grid[-1] - grid[0]) / need)) + 1
        raise ResolutionError(
            f"delay grid step {step:.4g} cannot resolve oscillations of scale {need:.4g}; "
            f"use at least {n} points on [{grid[0]:.6g}, {grid[-1]:.6g}]",
            required_points=n,
        )


def _mean_delay_estimate(model, env, i, kind):
    # phase delay at the carrier, to centre the first grid guess
    k0 = env.k0
    h = min(env.sigma, _scale_in_k(model, env.support[1])) * 1e-3
    S = evaluate_s(model, np.array([k0 - h, k0, k0 + h]), "k", channel=i)[:, :, i]
    dS = (S[2] - S[0]) / (2 * h)
    num = np.imag(np.conj(S[1]) * dS).sum()
    den = (np.abs(S[1]) ** 2).sum()
    d = num / den if den > 0 else 0.0
    if kind == "qm":
        d = d * model.dispersion.mass / (model.dispersion.hbar * k0)
    return float(d)


def _compute(model, env, i, fs, kind, grid, step=None):
    disp = model.dispersion
    if kind == "em":
        rate = np.abs(grid).max()
    else:
        vmax = disp.hbar * env.support[1] / disp.mass
        rate = vmax * np.abs(grid).max()
    h = step or _k_step(env, model, rate)
    k, w = _k_nodes(env, h)
    om, amp = _amplitudes(model, env, i, fs, k, kind)
    if kind == "em":
        weights = (w * om)[:, None] * amp
        dens = _transform(weights, k, grid, env.k0) / (2 * np.pi)
    else:
        E = disp.energy(k, i) / disp.hbar
        weights = (w * np.sqrt(k) * om)[:, None] * amp
        dens = _transform(weights, E, grid, disp.energy(env.k0, i) / disp.hbar)
        dens *= disp.hbar / (2 * np.pi * disp.mass)
    expected = np.sum((w * om**2)[:, None] * np.abs(amp) ** 2, axis=0)
    return dens, expected, h, len(k)


def _auto_grid(model, env, i, fs, kind):
    disp = model.dispersion
    step = _required_step(env, kind, disp, i)
    if kind == "em":
        width = 6.0 / env.sigma
    else:
        width = 6.0 * disp.mass / (disp.hbar * env.k0 * env.sigma)
    centre = _mean_delay_estimate(model, env, i, kind)
    lo = min(-width, centre - width)
    hi = max(width, centre + width)
    missing = float("nan")
    last = None
    for _ in range(MAX_EXTENSIONS):
        n = int(np.ceil((hi - lo) / step)) + 1
        if n > MAX_AUTO_POINTS:
            # algebraic tails, e.g. from an envelope cut off sharply at k = 0:
            # settle for the contract tolerance rather than grow without bound
            if last is not None and missing <= TAIL_TOL * np.sum(last[2]):
                return last
            raise MassCoverageError(
                f"automatic delay grid would need more than {MAX_AUTO_POINTS} points "
                f"(still missing {missing:.3g} of the mass); pass an explicit grid",
                tail_estimate=float(missing),
            )
        grid = lo + step * np.arange(n)
        dens, expected, h, nk = _compute(model, env, i, fs, kind, grid)
        last = grid, dens, expected, h, nk
        mass = np.trapezoid(dens, grid, axis=0)
        missing = np.sum(expected) - np.sum(mass)
        if np.sum(expected) == 0 or missing <= AUTO_TAIL_TOL * np.sum(expected):
            return last
        total = dens.sum(axis=1)
        # extend the side whose edge density is larger, or both
        left, right = total[: max(len(total) // 20, 1)].sum(), total[-max(len(total) // 20, 1) :].sum()
        span = hi - lo
        if right >= left:
            hi += span
        if left >= right or left > 0.1 * right:
            lo -= 0.5 * span
    raise MassCoverageError(
        f"delay grid [{lo:.4g}, {hi:.4g}] still misses {missing:.3g} of the mass after extension",
        tail_estimate=float(missing),
    )


def _distributions(model, env, i, fs, kind, grid=None, step=None, check_resolution=True):
    model = _as_kind(model, kind)
    if not (0 <= i < model.n_channels) or any(not (0 <= f < model.n_channels) for f in fs):
        raise InvalidParameterError(f"channel index out of range for a {model.n_channels}-channel model")
    if grid is None:
        grid, dens, expected, h, nk = _auto_grid(model, env, i, fs, kind)
    else:
        grid = _check_uniform(grid, "delay grid")
        if check_resolution:
            _check_resolution(grid, env, kind, model.dispersion, i)
        dens, expected, h, nk = _compute(model, env, i, fs, kind, grid, step)
    meta = {"quadrature_step": h, "quadrature_nodes": nk, "model": model.kind}
    return [
        DelayDistribution(kind, i, f, grid, dens[:, n], env.k0, env.sigma, float(expected[n]), dict(meta))
        for n, f in enumerate(fs)
    ]


def delay_distribution_em(
    model: SMatrixModel, env: Envelope, i: int = 0, f: int = 0, s_grid=None, step=None, check_resolution=True
) -> DelayDistribution:
    """P(s) = (1/2pi) |int omega S_fi e^{-iks} dk|^2 for linear dispersion.

    Energy-defined models are evaluated at E = hbar c k. Without ``s_grid`` a
    uniform grid from -6/sigma is extended until it holds all but 1e-6 of
    the mass. A user grid coarser than 1/(k0 + 8 sigma) raises ResolutionError.
    """
    return _distributions(model, env, i, [f], "em", s_grid, step, check_resolution)[0]


def delay_distribution_qm(
    model: SMatrixModel,
    env: Envelope,
    i: int = 0,
    f: int = 0,
    tau_grid=None,
    eps_i: Optional[float] = None,
    step=None,
    check_resolution=True,
) -> DelayDistribution:
    """P(tau) = (hbar/2pi m) |int sqrt(k) omega S_fi(E(k)) e^{-iE(k)tau/hbar} dk|^2.

    E(k) = hbar^2 k^2/2m + eps_i; ``eps_i`` overrides the model's threshold
    for the incoming channel. The grid step must satisfy
    E_kin(k0 + 8 sigma) dtau / hbar <= 1.
    """
    model = _with_threshold(_as_kind(model, "qm"), i, eps_i)
    return _distributions(model, env, i, [f], "qm", tau_grid, step, check_resolution)[0]


def _with_threshold(model, i, eps_i):
    if eps_i is None:
        return model
    d = model.dispersion
    th = list(d.thresholds) + [0.0] * max(0, model.n_channels - len(d.thresholds))
    th[i] = float(eps_i)
    return model.with_dispersion(Dispersion(d.kind, d.hbar, d.mass, d.c, tuple(th)))


def all_channel_distributions(
    model: SMatrixModel, env: Envelope, i: int = 0, kind: str = "qm", grid=None, step=None, check_resolution=True
) -> list[DelayDistribution]:
    """Distributions for every outgoing channel on a shared grid."""
    if kind not in ("em", "qm"):
        raise InvalidParameterError("kind must be 'em' or 'qm'")
    return _distributions(model, env, i, list(range(model.n_channels)), kind, grid, step, check_resolution)


def total_mass(dists: Sequence[DelayDistribution], tol: float = TAIL_TOL) -> float:
    """sum_f int P_fi over the grids; MassCoverageError if the grids miss
    more than ``tol`` of the expected mass."""
    dists = list(dists)
    if not dists:
        raise InvalidParameterError("no distributions given")
    if len({d.i for d in dists}) != 1:
        raise InvalidParameterError("distributions must share the incoming channel")
    mass = sum(d.mass for d in dists)
    expected = sum(d.expected_mass for d in dists)
    if np.isfinite(expected) and expected > 0:
        missing = expected - mass
        if missing > tol * expected:
            raise MassCoverageError(
                f"grids capture {mass:.8g} of the expected {expected:.8g}", tail_estimate=float(missing)
            )
    return float(mass)


# ---------------------------------------------------------------- form factor


def _gauss_xi_nodes(k0, sigma, h):
    # the xi weight exp(-2 (xi-k0)^2/sigma^2) has std sigma/2
    half = 6.0 * sigma
    n = int(np.ceil(2 * half / h)) + 1
    return np.linspace(k0 - half, k0 + half, max(n, 3))


def autocorrelation_em(model: SMatrixModel, i: int, f: int, k0: float, sigma: float, eta, step=None):
    """C(eta) = sqrt(2/pi sigma^2) int dxi exp(-2(xi-k0)^2/sigma^2) S(xi+eta/2) S*(xi-eta/2).

    The Gaussian mean of the S-matrix autocorrelation; requires k0 > 2 sigma
    so that extending the envelope to the whole line is harmless.
    """
    if not k0 > 2 * sigma:
        raise ApproximationDomainError(f"whole-line form factor needs k0 > 2 sigma (k0={k0}, sigma={sigma})")
    model = _as_kind(model, "em")
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    h = step or min(sigma / 16.0, _scale_in_k(model, k0 + 6 * sigma + np.abs(eta).max()) / 10.0)
    xi = _gauss_xi_nodes(k0, sigma, h)
    wx = np.sqrt(2 / (np.pi * sigma**2)) * np.exp(-2 * (xi - k0) ** 2 / sigma**2)
    wx = wx * (xi[1] - xi[0])
    wx[[0, -1]] *= 0.5
    out = np.empty(len(eta), dtype=complex)
    for n, e in enumerate(eta):
        sp = evaluate_s(model, xi + e / 2, "k", channel=i)[:, f, i]
        sm = evaluate_s(model, xi - e / 2, "k", channel=i)[:, f, i]
        out[n] = np.sum(wx * sp * np.conj(sm))
    return out if out.size > 1 else out[0]


def _lag_correlation(weight_fn, values, k, max_lag):
    """sum_b weight((k_b + k_{b+m})/2, m) v_{b+m} v_b^* dk for lags -max_lag..max_lag."""
    dk = k[1] - k[0]
    lags = np.arange(-max_lag, max_lag + 1)
    out = np.zeros(len(lags), dtype=complex)
    n = len(k)
    for j, m in enumerate(lags):
        a0, a1 = max(0, -m), min(n, n - m)
        if a1 - a0 < 2:
            continue
        b = np.arange(a0, a1)
        xi = 0.5 * (k[b] + k[b + m])
        wt = weight_fn(xi, k[b + m], k[b]) * dk
        wt[[0, -1]] *= 0.5
        out[j] = np.sum(wt * values[b + m] * np.conj(values[b]))
    return lags * dk, out


def autocorrelation_distribution_em(
    model: SMatrixModel, env: Envelope, i: int = 0, f: int = 0, s_grid=None, q: float = 3.0
) -> DelayDistribution:
    """P(s) by the form-factor route, (1/2pi) int deta e^{-i eta s} G(eta) C(eta).

    For a Gaussian envelope with k0 > q sigma the whole-line identity is used
    (q must be at least 2; its amplitude error is of order exp(-(k0/sigma)^2),
    so the default q = 3 keeps the two routes within 1e-3):
    G(eta) = exp(-eta^2/2 sigma^2) and C is the Gaussian autocorrelation.
    Otherwise C(eta) is the exact half-line correlation of omega S, with
    G = 1. Both are sampled on a common k lattice so that xi +- eta/2 fall
    on lattice points.
    """
    model = _as_kind(model, "em")
    if s_grid is None:
        s_grid = delay_distribution_em(model, env, i, f).grid
    if q < 2:
        raise ApproximationDomainError("the whole-line form factor needs q >= 2")
    s_grid = _check_uniform(s_grid, "delay grid")
    smax = np.abs(s_grid).max()
    whole_line = env.kind == "gaussian" and bandwidth_ratio_check(env, q)
    sigma, k0 = env.sigma, env.k0
    h = min(sigma / 16.0, np.pi / (4 * smax), _scale_in_k(model, env.support[1] + 8 * sigma) / 10.0)
    if whole_line:
        half = 6.0 * sigma + 5.0 * sigma  # xi spread plus half the eta range
        k = np.arange(k0 - half, k0 + half + h / 2, h)
        vals = evaluate_s(model, k, "k", channel=i)[:, f, i]
        pref = np.sqrt(2 / (np.pi * sigma**2))
        weight = lambda xi, kp, km: pref * np.exp(-2 * (xi - k0) ** 2 / sigma**2)  # noqa: E731
        max_lag = int(np.ceil(10.0 * sigma / h))
        eta, C = _lag_correlation(weight, vals, k, max_lag)
        G = np.exp(-(eta**2) / (2 * sigma**2))
        route = "whole_line_gaussian"
    else:
        lo, hi = env.support
        k = np.arange(lo, hi + h / 2, h)
        vals = evaluate_s(model, k, "k", channel=i)[:, f, i] * evaluate_envelope(env, k)
        weight = lambda xi, kp, km: np.ones_like(xi)  # noqa: E731
        eta, C = _lag_correlation(weight, vals, k, len(k) - 1)
        G = np.ones_like(eta)
        route = "half_line_exact"
    deta = eta[1] - eta[0]
    integrand = G * C * deta
    integrand[[0, -1]] *= 0.5
    dens = np.empty(len(s_grid))
    rows = max(1, CHUNK // len(eta))
    for a in range(0, len(s_grid), rows):
        s = s_grid[a : a + rows]
        dens[a : a + rows] = np.real(np.exp(-1j * np.outer(s, eta)) @ integrand) / (2 * np.pi)
    expected = float(np.trapezoid(evaluate_envelope(env, k) ** 2 * np.abs(evaluate_s(model, k, "k", channel=i)[:, f, i]) ** 2, k))
    meta = {"route": route, "quadrature_step": h, "model": model.kind}
    return DelayDistribution("em", i, f, s_grid, dens, k0, sigma, expected, meta)


def energy_weight(E, E0, rho):
    """(1/2) sqrt(2/pi rho^2) E^{-1/2} exp(-2 ((sqrt(E) - sqrt(E0))/rho)^2)."""
    E = np.asarray(E, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = 0.5 * np.sqrt(2 / (np.pi * rho**2)) / np.sqrt(E) * np.exp(-2 * ((np.sqrt(E) - np.sqrt(E0)) / rho) ** 2)
    return np.where(E > 0, w, 0.0)


def _energy_nodes(E0, rho, h_u):
    u0 = np.sqrt(E0)
    half = 6.0 * rho
    lo = max(u0 - half, 0.0)
    n = int(np.ceil((u0 + half - lo) / h_u)) + 1
    return np.linspace(lo, u0 + half, max(n, 3))


def autocorrelation_energy(
    model: SMatrixModel, i: int, f: int, E0: float, rho: float, epsilon, eps_i: float = 0.0, step=None
):
    """Weighted energy average of S(E + eps/2) S*(E - eps/2).

    The weight is that of ``energy_weight`` in the kinetic energy E; S is
    evaluated at E + eps_i. The substitution u = sqrt(E) removes the
    E^{-1/2} singularity. Where E - |eps|/2 < 0 the integrand is dropped
    with a warning.
    """
    model = _as_kind(model, "qm")
    epsilon = np.atleast_1d(np.asarray(epsilon, dtype=float))
    u0 = np.sqrt(E0)
    if step is None:
        sc_u = model.scale / (2 * (u0 + 6 * rho)) if model.natural == "E" else model.scale
        step = min(rho / 16.0, sc_u / 10.0)
    u = _energy_nodes(E0, rho, step)
    wu = np.sqrt(2 / (np.pi * rho**2)) * np.exp(-2 * (u - u0) ** 2 / rho**2) * (u[1] - u[0])
    wu[[0, -1]] *= 0.5
    E = u**2
    out = np.empty(len(epsilon), dtype=complex)
    clipped = False
    for n, e in enumerate(epsilon):
        ok = E - abs(e) / 2 >= 0
        if not np.all(ok | (wu < 1e-300)):
            clipped = True
        Ep, Em = E[ok] + e / 2 + eps_i, E[ok] - e / 2 + eps_i
        sp = evaluate_s(model, Ep, "E")[:, f, i]
        sm = evaluate_s(model, Em, "E")[:, f, i]
        out[n] = np.sum(wu[ok] * sp * np.conj(sm))
    if clipped:
        warnings.warn("energy grid clipped where E < |epsilon|/2", RuntimeWarning, stacklevel=2)
    return out if out.size > 1 else out[0]


def autocorrelation_distribution_qm(
    model: SMatrixModel, env: Envelope, i: int = 0, f: int = 0, tau_grid=None, eps_i: Optional[float] = None
) -> DelayDistribution:
    """P(tau) by the energy form-factor route,

        (1/2 pi hbar) int deps e^{-i eps tau/hbar} exp(-eps^2 / 8 rho^2 E0) C_E(eps),

    with rho = sigma hbar / sqrt(2m) and E0 the carrier kinetic energy. Exact
    up to terms of relative order (sigma/k0)^2.
    """
    model = _with_threshold(_as_kind(model, "qm"), i, eps_i)
    disp = model.dispersion
    eps = disp.threshold(i)
    if tau_grid is None:
        tau_grid = delay_distribution_qm(model, env, i, f).grid
    tau_grid = _check_uniform(tau_grid, "delay grid")
    rho = env.sigma * disp.hbar / np.sqrt(2 * disp.mass)
    E0 = disp.hbar**2 * env.k0**2 / (2 * disp.mass)
    width = 2.0 * rho * np.sqrt(E0)
    tmax = np.abs(tau_grid).max()
    sc = model.scale if model.natural == "E" else model.scale * disp.hbar**2 * env.k0 / disp.mass
    de = min(width / 8.0, np.pi * disp.hbar / (4 * tmax), sc / 10.0)
    n = int(np.ceil(10.0 * width / de))
    e = de * np.arange(-n, n + 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        C = autocorrelation_energy(model, i, f, E0, rho, e, eps_i=eps)
    integrand = np.exp(-(e**2) / (8 * rho**2 * E0)) * C * de
    integrand[[0, -1]] *= 0.5
    dens = np.empty(len(tau_grid))
    rows = max(1, CHUNK // len(e))
    for a in range(0, len(tau_grid), rows):
        t = tau_grid[a : a + rows]
        dens[a : a + rows] = np.real(np.exp(-1j * np.outer(t, e) / disp.hbar) @ integrand) / (2 * np.pi * disp.hbar)
    meta = {"route": "energy_form_factor", "energy_step": de, "model": model.kind}
    return DelayDistribution("qm", i, f, tau_grid, dens, env.k0, env.sigma, float("nan"), meta)
