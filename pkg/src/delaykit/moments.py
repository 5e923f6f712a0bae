"""Moments of delay distributions and the monochromatic (Wigner-Smith) limit.

For a unitary model the mean of the delay distribution is an envelope
average of the local phase delay,

    <s> = int dk omega(k)^2 Im[S*(k) dS/dk],

which tends to the Wigner-Smith value Im[S* dS/dk] at k0 as the band
narrows (hbar Im[S* dS/dE] for massive particles). The second moment
does not have a finite monochromatic limit: for small sigma

    <s^2> ~ |S(k0)|^2 / sigma^2 - (1/2) Re[S* S'' - |S'|^2],

the first term being the spread of the incoming pulse itself.

Sign convention: we use Im[S* dS], which is positive for a delay when
S = exp(2 i delta) with increasing phase shift.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .distribution import DelayDistribution, TAIL_TOL, delay_distribution_em, delay_distribution_qm
from .envelope import gaussian_envelope
from .errors import (
    ApproximationDomainError,
    ClosedChannelError,
    ConvergenceError,
    InvalidParameterError,
    MassCoverageError,
    UndefinedMomentError,
)
from .smatrix import SMatrixModel, evaluate_s

SLOW_VARIATION_TOL = 0.01
MONOTONE_SLACK = 0.05
MONOTONE_FLOOR = 1e-9
ZERO_MASS = 1e-14


@dataclass
class MomentReport:
    mean: float
    second_moment: float
    variance: float
    i: int
    f: int
    sigma: float
    wigner_smith_reference: Optional[float] = None
    mass: float = float("nan")
    mean_unnormalized: float = float("nan")
    second_moment_unnormalized: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_coverage(dist: DelayDistribution, tol: float = TAIL_TOL):
    exp = dist.expected_mass
    if np.isfinite(exp) and exp > 0 and dist.tail_estimate > tol * exp:
        raise MassCoverageError(
            f"grid misses {dist.tail_estimate:.3g} of {exp:.6g} for channels {dist.i}->{dist.f}",
            tail_estimate=dist.tail_estimate,
        )


def distribution_moments(dist: DelayDistribution, order: int, normalized: bool = True) -> float:
    """Trapezoid moment of order 1 or 2, divided by the pair's own mass
    unless ``normalized=False``."""
    if order not in (1, 2):
        raise InvalidParameterError("only moments of order 1 and 2 are supported")
    mass = dist.mass
    if not mass > ZERO_MASS:
        raise UndefinedMomentError(f"channel pair {dist.i}->{dist.f} carries no probability")
    _check_coverage(dist)
    m = float(np.trapezoid(dist.grid**order * dist.density, dist.grid))
    return m / mass if normalized else m


def moment_report(dist: DelayDistribution, model: Optional[SMatrixModel] = None) -> MomentReport:
    """Both normalisations of the first two moments, plus the monochromatic
    reference at the carrier when ``model`` is given."""
    mean = distribution_moments(dist, 1)
    second = distribution_moments(dist, 2)
    ref = None
    if model is not None:
        ref = _ws_reference(model, dist.i, dist.f, dist.k0, dist.dispersion, dist.sigma)
    return MomentReport(
        mean=mean,
        second_moment=second,
        variance=max(second - mean**2, 0.0),
        i=dist.i,
        f=dist.f,
        sigma=dist.sigma,
        wigner_smith_reference=ref,
        mass=dist.mass,
        mean_unnormalized=distribution_moments(dist, 1, normalized=False),
        second_moment_unnormalized=distribution_moments(dist, 2, normalized=False),
    )


def _element(model, x, i, f, variable):
    return evaluate_s(model, np.atleast_1d(x), variable, channel=i)[:, f, i]


def _local_scale(model, x, variable, sigma=None):
    """Smallest variation scale of S in ``variable`` near x."""
    disp = model.dispersion
    sc = model.scale
    L = getattr(model, "L", None)
    if model.natural == "k" and L:
        sc = min(sc, 1.0 / abs(L))
    if variable != model.natural:
        k = float(disp.wavenumber(x)) if variable == "E" else x
        slope = float(disp.dE_dk(max(k, 1e-12)))
        sc = sc * slope if variable == "E" else sc / slope
    if sigma:
        sc = min(sc, sigma)
    return sc


def _derivative(fn, x, h, order=1):
    """Central differences at h and h/2 combined by one Richardson step.

    The combination is O(h^4); for a pure phase exp(ikL) the plain
    central difference would carry a relative error (Lh)^2/6.
    """

    def central(step):
        if order == 1:
            v = fn(np.array([x - step, x + step]))
            return (v[1] - v[0]) / (2 * step)
        v = fn(np.array([x - step, x, x + step]))
        return (v[0] - 2 * v[1] + v[2]) / step**2

    d1, d2 = central(h), central(h / 2)
    return (4 * d2 - d1) / 3


def wigner_smith_element(
    model: SMatrixModel, i: int, f: int, x0: float, h: Optional[float] = None, variable: str = "E"
) -> float:
    """hbar Im[S_fi* dS_fi/dE] at E0 (``variable="E"``), or Im[S* dS/dk] at k0
    (``variable="k"``, no hbar: a length for light).

    Default step is a thousandth of the model's smallest variation scale.
    """
    if variable not in ("E", "k"):
        raise InvalidParameterError("variable must be 'E' or 'k'")
    if h is not None and not h > 0:
        raise InvalidParameterError("derivative step must be positive")
    h = h or _local_scale(model, x0, variable) / 1000.0
    fn = lambda x: _element(model, x, i, f, variable)  # noqa: E731
    S0 = fn(x0)[0]
    dS = _derivative(fn, x0, h)
    val = float(np.imag(np.conj(S0) * dS))
    if variable == "E":
        val *= model.dispersion.hbar
    return val


def wigner_smith_trace(model: SMatrixModel, E0: float, h: Optional[float] = None, variable: str = "E") -> float:
    """(hbar/N0) Im tr[S^dagger dS/dE] over the N0 channels, all of which must be open."""
    disp = model.dispersion
    if disp.kind == "qm" and variable == "E":
        closed = [j for j in range(model.n_channels) if E0 < disp.threshold(j)]
        if closed:
            raise ClosedChannelError(f"channels {closed} are closed at E = {E0}")
    h = h or _local_scale(model, E0, variable) / 1000.0
    fn = lambda x: evaluate_s(model, x, variable)  # noqa: E731
    S0 = fn(np.array([E0]))[0]
    dS = _derivative(fn, E0, h)
    val = float(np.imag(np.trace(S0.conj().T @ dS))) / model.n_channels
    if variable == "E":
        val *= disp.hbar
    return val


def _ws_reference(model, i, f, k0, kind, sigma=None):
    """Monochromatic delay at k0 in the units of the distribution, per unit |S_fi|^2."""
    disp = model.dispersion if model.dispersion.kind == kind else model.dispersion.with_kind(kind)
    m = model.with_dispersion(disp)
    S0 = _element(m, k0, i, f, "k")[0]
    if abs(S0) ** 2 < ZERO_MASS:
        return float("nan")
    if kind == "em":
        return wigner_smith_element(m, i, f, k0, variable="k") / abs(S0) ** 2
    E0 = float(disp.energy(k0, i))
    return wigner_smith_element(m, i, f, E0, variable="E") / abs(S0) ** 2


@dataclass
class ConvergenceRow:
    sigma: float
    mean: float
    ws_reference: float
    abs_error: float


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    monotone: bool = True
    i: int = 0
    f: int = 0
    kind: str = "em"

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.abs_error for r in self.rows])

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sigma", "mean", "ws_reference", "abs_error"])
            for r in self.rows:
                w.writerow([f"{r.sigma:.12g}", f"{r.mean:.12g}", f"{r.ws_reference:.12g}", f"{r.abs_error:.12g}"])


def _is_monotone(errors) -> bool:
    bad = 0
    for a, b in zip(errors[:-1], errors[1:]):
        if b <= a + MONOTONE_FLOOR:
            continue
        if b - a < MONOTONE_SLACK * a and bad == 0:
            bad += 1
            continue
        return False
    return True


def monochromatic_limit_check(
    model: SMatrixModel,
    i: int,
    f: int,
    E0: float,
    sigma_sequence: Sequence[float],
    kind: str = "em",
    strict: bool = False,
) -> ConvergenceTable:
    """Mean delays at decreasing bandwidths against the Wigner-Smith value.

    ``sigma_sequence`` is in wavenumber units, and the carrier is the
    wavenumber of E0 under ``kind`` dispersion. The absolute error must be
    non-increasing, allowing one step up of less than 5%; otherwise
    ``monotone`` is False, and ConvergenceError is raised with ``strict``.
    """
    sig = np.asarray(sigma_sequence, dtype=float)
    if sig.ndim != 1 or len(sig) < 2 or np.any(sig <= 0) or np.any(np.diff(sig) >= 0):
        raise InvalidParameterError("sigma_sequence must be positive and strictly decreasing")
    if kind not in ("em", "qm"):
        raise InvalidParameterError("kind must be 'em' or 'qm'")
    disp = model.dispersion if model.dispersion.kind == kind else model.dispersion.with_kind(kind)
    m = model.with_dispersion(disp)
    k0 = float(disp.wavenumber(E0, i))
    ref = _ws_reference(m, i, f, k0, kind)
    table = ConvergenceTable(i=i, f=f, kind=kind)
    for s in sig:
        env = gaussian_envelope(k0, s)
        dist = delay_distribution_em(m, env, i, f) if kind == "em" else delay_distribution_qm(m, env, i, f)
        mean = distribution_moments(dist, 1)
        table.rows.append(ConvergenceRow(float(s), mean, ref, abs(mean - ref)))
    table.monotone = _is_monotone(table.errors)
    if strict and not table.monotone:
        raise ConvergenceError(f"mean-delay error is not decreasing: {table.errors.tolist()}")
    return table


def second_moment_smallband(
    model: SMatrixModel, i: int, f: int, k0: float, sigma: float, h: Optional[float] = None, tol: float = SLOW_VARIATION_TOL
) -> float:
    """(1/sigma^2)|S|^2 - (1/2) Re[S* S'' - |S'|^2] at k0, derivatives in k.

    The expansion assumes S is close to quadratic over (k0 - sigma, k0 + sigma):
    if S departs from its second-order Taylor polynomial there by more than
    ``tol`` of its size, ApproximationDomainError is raised.
    """
    if not sigma > 0:
        raise InvalidParameterError("sigma must be positive")
    fn = lambda x: _element(model, x, i, f, "k")  # noqa: E731
    h = h or _local_scale(model, k0, "k", sigma) / 1000.0
    S0 = fn(k0)[0]
    d1 = _derivative(fn, k0, h)
    d2 = _derivative(fn, k0, h, order=2)
    dk = np.linspace(-sigma, sigma, 9)
    vals = fn(k0 + dk)
    taylor = S0 + d1 * dk + 0.5 * d2 * dk**2
    size = max(np.abs(vals).max(), 1e-300)
    dev = np.abs(vals - taylor).max() / size
    if dev > tol:
        raise ApproximationDomainError(
            f"S changes too fast over k0 +- sigma for the small-band expansion (relative deviation {dev:.3g})"
        )
    return float(abs(S0) ** 2 / sigma**2 - 0.5 * np.real(np.conj(S0) * d2 - abs(d1) ** 2))
