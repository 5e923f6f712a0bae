"""Spectral envelopes of incoming wave packets.

A packet is a superposition of plane waves with real, non-negative weight
omega(k) on the half-line k >= 0, square-normalised so that
integral omega^2 dk = 1. The standard choice is the Gaussian

    omega(k) = A (2 / pi sigma^2)^{1/4} exp(-(k - k0)^2 / sigma^2)

whose square is a normal density of standard deviation sigma/2 centred on
the carrier k0. A corrects for the part of the Gaussian cut off at k = 0;
for k0 = q sigma it differs from 1 by less than exp(-q^2), which is what
makes the whole-line extension of wavenumber integrals harmless when
k0 > 2 sigma.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfc

from .errors import InvalidParameterError

# half-width of the effective support in units of sigma
SUPPORT_HALF_WIDTH = 8.0


class MultimodalEnvelopeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Envelope:
    """Immutable envelope; call it to evaluate omega(k).

    For tabulated envelopes ``k0`` is the location of the largest sample and
    ``sigma`` is twice the standard deviation of omega^2, which reproduces
    the Gaussian's sigma.
    """

    kind: str
    k0: float
    sigma: float
    norm_const: float = 1.0
    samples: Optional[np.ndarray] = None

    def __call__(self, k):
        return evaluate_envelope(self, k)

    @property
    def support(self) -> tuple[float, float]:
        """Interval outside which omega^2 carries less than ~1e-27 of the weight."""
        if self.kind == "gaussian":
            half = SUPPORT_HALF_WIDTH * self.sigma
            return max(0.0, self.k0 - half), self.k0 + half
        return float(self.samples[0, 0]), float(self.samples[-1, 0])

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "k0": self.k0, "sigma": self.sigma}
        return {"kind": "tabulated", "samples": self.samples.tolist()}


def _gaussian_profile(k, k0, sigma):
    return (2.0 / (np.pi * sigma**2)) ** 0.25 * np.exp(-((k - k0) ** 2) / sigma**2)


def gaussian_mass_on_half_line(k0: float, sigma: float) -> float:
    """Integral over k >= 0 of the unnormalised Gaussian profile squared.

    The squared profile is a normal density of std sigma/2, so the integral
    is 1 - erfc(sqrt(2) k0/sigma)/2 in closed form.
    """
    return 0.5 * erfc(-np.sqrt(2.0) * k0 / sigma)


def gaussian_envelope(k0: float, sigma: float) -> Envelope:
    """Square-normalised Gaussian envelope on the half-line."""
    if not (np.isfinite(k0) and k0 > 0):
        raise InvalidParameterError(f"k0 must be positive, got {k0}")
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    norm = 1.0 / np.sqrt(gaussian_mass_on_half_line(k0, sigma))
    return Envelope("gaussian", float(k0), float(sigma), float(norm))


def _squared_norm_linear(k, w):
    # exact integral of the square of the piecewise-linear interpolant
    a, b = w[:-1], w[1:]
    return float(np.sum(np.diff(k) * (a * a + a * b + b * b) / 3.0))


def _local_maxima(w):
    # count peaks of a piecewise-linear profile, treating plateaus as one peak
    keep = np.concatenate([[True], np.diff(w) != 0])
    v = w[keep]
    if len(v) < 3:
        return 1
    interior = (v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])
    return int(np.count_nonzero(interior) + (v[0] > v[1]) + (v[-1] > v[-2]))


def tabulated_envelope(samples, normalize: bool = True) -> Envelope:
    """Envelope from ``(k, omega)`` samples, linearly interpolated.

    With ``normalize=True`` (the default) the samples are rescaled so that
    the interpolant is square-normalised. Envelopes with more than one
    maximum are accepted with a MultimodalEnvelopeWarning.
    """
    arr = np.array(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise InvalidParameterError("tabulated envelope needs at least two (k, omega) pairs")
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    k, w = arr[:, 0], arr[:, 1]
    if np.any(~np.isfinite(arr)):
        raise InvalidParameterError("tabulated envelope contains non-finite values")
    if np.any(np.diff(k) <= 0):
        raise InvalidParameterError("tabulated envelope has repeated k values")
    if k[0] < 0:
        raise InvalidParameterError("tabulated envelope must live on k >= 0")
    if np.any(w < 0):
        raise InvalidParameterError("envelope values must be non-negative")
    norm2 = _squared_norm_linear(k, w)
    if norm2 <= 0:
        raise InvalidParameterError("tabulated envelope is identically zero")
    if _local_maxima(w) > 1:
        warnings.warn("tabulated envelope has more than one maximum", MultimodalEnvelopeWarning, stacklevel=2)
    scale = 1.0 / np.sqrt(norm2) if normalize else 1.0
    arr[:, 1] = w * scale
    arr.setflags(write=False)
    # moments of omega^2 on a fine grid of the interpolant
    fine = np.linspace(k[0], k[-1], 20 * len(k) + 1)
    dens = np.interp(fine, k, arr[:, 1]) ** 2
    mass = np.trapezoid(dens, fine)
    mean = np.trapezoid(fine * dens, fine) / mass
    std = np.sqrt(max(np.trapezoid((fine - mean) ** 2 * dens, fine) / mass, 0.0))
    k0 = float(k[np.argmax(arr[:, 1])])
    return Envelope("tabulated", k0, float(2.0 * std), float(scale), arr)


def evaluate_envelope(env: Envelope, k):
    """omega(k); zero for k < 0 and, for tables, outside the sampled range."""
    k = np.asarray(k, dtype=float)
    if env.kind == "gaussian":
        val = env.norm_const * _gaussian_profile(k, env.k0, env.sigma)
    else:
        val = np.interp(k, env.samples[:, 0], env.samples[:, 1], left=0.0, right=0.0)
    val = np.where(k < 0, 0.0, val)
    return val if val.ndim else float(val)


def bandwidth_ratio_check(env: Envelope, q: float) -> bool:
    """True iff k0 > q sigma (strict)."""
    if q <= 0:
        raise InvalidParameterError("q must be positive")
    return bool(env.k0 > q * env.sigma)


def envelope_from_dict(spec: dict) -> Envelope:
    kind = spec.get("kind", "gaussian")
    if kind == "gaussian":
        return gaussian_envelope(spec["k0"], spec["sigma"])
    if kind == "tabulated":
        return tabulated_envelope(spec["samples"], spec.get("normalize", True))
    raise InvalidParameterError(f"unknown envelope kind {kind!r}")
