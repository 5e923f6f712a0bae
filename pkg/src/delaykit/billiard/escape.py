"""Classical escape from the disc repeller and semiclassical code sums.

Rays injected uniformly over the enclosing circle C (uniform position,
uniform inward angle) bounce specularly until they leave C again. For a
hyperbolic repeller such as three well separated discs the fraction of
rays still inside after path length s decays as exp(-gamma s), with gamma
the classical escape rate. The same rate governs the long-delay tail of
the code sum over classical trajectories, which gives an independent
estimate from fixed-direction trajectories.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from ..errors import InsufficientStatisticsError, InvalidParameterError, WindowError
from .geometry import DiscConfiguration, exit_distance, first_hits, reflect
from .trajectories import Trajectory, find_all_trajectories

logger = logging.getLogger(__name__)

MIN_SURVIVORS = 100
EXPONENTIAL_CORRELATION = 0.99


@dataclass(frozen=True)
class EscapeFit:
    gamma: float
    correlation: float
    stderr: float
    window: tuple
    n_points: int
    exponential: bool
    note: str = ""


@dataclass
class SurvivalCurve:
    s: np.ndarray
    survival: np.ndarray
    escape_lengths: np.ndarray
    n_samples: int
    seed: Optional[int] = None
    fit: Optional[EscapeFit] = None
    n_discs: int = 0

    @property
    def chaotic(self):
        """A hyperbolic repeller needs at least three discs; with two only
        the axial orbit traps rays, with one nothing does."""
        return self.n_discs >= 3

    @property
    def exponential(self):
        """True when the fit is exponential and the system is chaotic."""
        return bool(self.fit and self.fit.exponential and self.chaotic)

    @property
    def flags(self):
        out = []
        if not self.chaotic:
            out.append("non-chaotic: fewer than 3 discs")
        if self.fit and not self.fit.exponential:
            out.append("non-exponential fit: " + self.fit.note)
        return out

    @property
    def gamma(self):
        return self.fit.gamma if self.fit else float("nan")

    @property
    def correlation(self):
        return self.fit.correlation if self.fit else float("nan")

    @property
    def window(self):
        return self.fit.window if self.fit else None

    def survivors(self, s) -> int:
        return int(np.count_nonzero(self.escape_lengths > s))


def trace_escape(config: DiscConfiguration, pos, dirs, s_max):
    """Path length inside C for each ray; ``inf`` for rays still inside at ``s_max``."""
    pos = np.array(pos, dtype=float)
    dirs = np.array(dirs, dtype=float)
    n = len(pos)
    centers = config.centers
    length = np.zeros(n)
    skip = np.full(n, -1)
    out = np.full(n, np.inf)
    # rays starting on a disc rim and pointing inward reflect at once
    for j, c in enumerate(centers):
        rel = pos - c
        on_rim = np.abs(np.einsum("ij,ij->i", rel, rel) - 1.0) < 1e-12
        inward = np.einsum("ij,ij->i", rel, dirs) < 0
        sel = on_rim & inward & (skip < 0)
        if np.any(sel):
            dirs[sel] = reflect(dirs[sel], rel[sel])
            skip[sel] = j
    idx = np.arange(n)
    while idx.size:
        t, j = first_hits(pos[idx], dirs[idx], centers, skip[idx])
        esc = j < 0
        ie = idx[esc]
        out[ie] = length[ie] + exit_distance(pos[ie], dirs[ie], config.enclosing_center, config.enclosing_radius)
        ih, th, jh = idx[~esc], t[~esc], j[~esc]
        pos[ih] += th[:, None] * dirs[ih]
        length[ih] += th
        dirs[ih] = reflect(dirs[ih], pos[ih] - centers[jh])
        skip[ih] = jh
        idx = ih[length[ih] < s_max]
    return out


def sample_entry_rays(config: DiscConfiguration, n_samples: int, rng):
    """Uniform points on C with a uniform inward angle."""
    u = rng.uniform(0.0, 2 * np.pi, n_samples)
    a = rng.uniform(-np.pi / 2, np.pi / 2, n_samples)
    rim = np.column_stack([np.cos(u), np.sin(u)])
    pos = config.enclosing_center + config.enclosing_radius * rim
    ang = u + np.pi + a
    return pos, np.column_stack([np.cos(ang), np.sin(ang)])


def default_window(escape_lengths, config: DiscConfiguration, s_max):
    """Fit window ``[2 R_C, s_end]``: starts after the direct transits and
    ends where only 100 rays remain inside."""
    start = 2.0 * config.enclosing_radius
    survivors = np.count_nonzero(escape_lengths > start)
    if survivors < MIN_SURVIVORS:
        raise InsufficientStatisticsError(
            f"only {survivors} rays survive past the window start s={start:.4g}; need {MIN_SURVIVORS}"
        )
    ordered = np.sort(escape_lengths)[::-1]
    end = float(ordered[MIN_SURVIVORS - 1])
    return start, min(end, s_max)


def fit_escape_rate(curve, window=None, n_points=None) -> EscapeFit:
    """Least-squares slope of log survival on ``window``.

    ``curve`` is a SurvivalCurve or an ``(s, survival)`` pair. The fit is
    flagged non-exponential when |correlation| <= 0.99 or undefined.
    """
    if isinstance(curve, SurvivalCurve):
        s, surv = curve.s, curve.survival
    else:
        s, surv = (np.asarray(a, dtype=float) for a in curve)
    if window is None:
        window = (s[0], s[-1])
    lo, hi = window
    if not (lo < hi) or lo < s[0] - 1e-12 or hi > s[-1] + 1e-12:
        raise WindowError(f"window {window} outside the sampled range [{s[0]}, {s[-1]}]")
    sel = (s >= lo) & (s <= hi)
    if n_points is not None:
        grid = np.linspace(lo, hi, n_points)
        y = np.interp(grid, s, surv)
        x = grid
    else:
        x, y = s[sel], surv[sel]
    if len(x) < 3:
        raise WindowError("fit window contains fewer than 3 samples")
    if np.any(y <= 0):
        raise WindowError("survival is not positive on the whole fit window")
    logy = np.log(y)
    if np.ptp(logy) == 0.0:
        return EscapeFit(0.0, float("nan"), 0.0, (lo, hi), len(x), False, "constant survival")
    res = stats.linregress(x, logy)
    gamma = -float(res.slope)
    corr = float(res.rvalue)
    exponential = bool(np.isfinite(corr) and abs(corr) > EXPONENTIAL_CORRELATION and gamma > 0)
    note = "" if exponential else "correlation below threshold"
    return EscapeFit(gamma, corr, float(res.stderr), (float(lo), float(hi)), len(x), bool(exponential), note)


def monte_carlo_escape(
    config: DiscConfiguration,
    n_samples: int = 100_000,
    s_max: Optional[float] = None,
    rng_seed: int = 0,
    n_grid: int = 1000,
    window=None,
) -> SurvivalCurve:
    """Survival curve of uniformly injected rays, with an exponential fit.

    ``s_max`` defaults to 20 enclosing radii. Raises
    InsufficientStatisticsError if fewer than 100 rays survive past the
    fit-window start.
    """
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be positive")
    if s_max is None:
        s_max = 20.0 * config.enclosing_radius
    rng = np.random.default_rng(rng_seed)
    pos, dirs = sample_entry_rays(config, n_samples, rng)
    lengths = trace_escape(config, pos, dirs, s_max)
    s = np.linspace(0.0, s_max, n_grid)
    ordered = np.sort(lengths)
    survival = 1.0 - np.searchsorted(ordered, s, side="right") / n_samples
    curve = SurvivalCurve(s, survival, lengths, n_samples, rng_seed, n_discs=config.n_discs)
    if window is None:
        window = default_window(lengths, config, s_max)
    elif np.count_nonzero(lengths > window[0]) < MIN_SURVIVORS:
        raise InsufficientStatisticsError(
            f"fewer than {MIN_SURVIVORS} rays survive past the window start s={window[0]:.4g}"
        )
    curve.fit = fit_escape_rate(curve, window)
    for flag in curve.flags:
        logger.warning("escape fit on %s flagged: %s", window, flag)
    return curve


@dataclass
class DelayHistogram:
    """Trajectory masses binned by interior length."""

    edges: np.ndarray
    mass: np.ndarray
    lengths: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bounces: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    @property
    def bin_width(self):
        return float(self.edges[1] - self.edges[0]) if len(self.edges) > 1 else float("nan")

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self):
        return self.mass / self.bin_width

    @property
    def is_empty(self):
        return len(self.lengths) == 0


def _weights(trajectories: Sequence[Trajectory], kind: str):
    if kind == "amplitude":
        return np.array([t.amplitude**2 for t in trajectories])
    if kind == "classical":
        return np.array([t.classical_weight for t in trajectories])
    raise InvalidParameterError(f"unknown trajectory weighting {kind!r}; use 'amplitude' or 'classical'")


def _histogram(lengths, weights, bounces, bin_width):
    if bin_width <= 0:
        raise InvalidParameterError("bin_width must be positive")
    if len(lengths) == 0:
        return DelayHistogram(np.zeros(0), np.zeros(0))
    n_bins = int(np.floor(lengths.max() / bin_width)) + 1
    edges = bin_width * np.arange(n_bins + 1)
    mass, _ = np.histogram(lengths, edges, weights=weights)
    return DelayHistogram(edges, mass, lengths, weights, bounces)


def classical_delay_histogram(
    config: DiscConfiguration,
    omega_i,
    omega_f,
    m_max: int,
    bin_width: float,
    weights: str = "amplitude",
    trajectories: Optional[Sequence[Trajectory]] = None,
    executor=None,
) -> DelayHistogram:
    """Histogram over s of the trajectory weights, each at its length L.

    ``weights="amplitude"`` uses |A|^2 from the reflection amplitude;
    ``weights="classical"`` uses the stability weight |db/dphi_f| (phase-space
    measure of the trajectory for a uniform incoming beam), whose tail decays
    with the classical escape rate. Single-bounce trajectories are excluded.
    """
    if trajectories is None:
        trajectories = find_all_trajectories(config, omega_i, omega_f, m_max, executor)
    trajectories = [t for t in trajectories if t.n_bounces > 1]
    lengths = np.array([t.length for t in trajectories])
    bounces = np.array([t.n_bounces for t in trajectories], dtype=int)
    return _histogram(lengths, _weights(trajectories, weights), bounces, bin_width)


def averaged_delay_histogram(
    config: DiscConfiguration,
    m_max: int,
    bin_width: float,
    n_directions: int = 8,
    weights: str = "classical",
    rng_seed: int = 0,
    executor=None,
) -> DelayHistogram:
    """Code histogram averaged over ``n_directions`` random direction pairs."""
    rng = np.random.default_rng(rng_seed)
    lengths, w, bounces = [], [], []
    for _ in range(n_directions):
        phi_i, phi_f = rng.uniform(0.0, 2 * np.pi, 2)
        trajs = [t for t in find_all_trajectories(config, phi_i, phi_f, m_max, executor) if t.n_bounces > 1]
        lengths.extend(t.length for t in trajs)
        w.extend(_weights(trajs, weights) / n_directions)
        bounces.extend(t.n_bounces for t in trajs)
    return _histogram(np.array(lengths), np.array(w), np.array(bounces, dtype=int), bin_width)


def histogram_tail_fit(hist: DelayHistogram, start: float = 0.0, by: str = "shell") -> EscapeFit:
    """Exponential fit of the code histogram tail for lengths beyond ``start``.

    Lengths cluster by bounce number, so fixed-width bins alias against the
    shell spacing. ``by="shell"`` (default) fits log of each bounce shell's
    total mass against the shell's mean length; ``by="bins"`` fits the
    occupied bins up to the truncation edge set by the longest shell.
    """
    if hist.is_empty:
        raise InsufficientStatisticsError("empty histogram")
    if by == "shell":
        shells = np.unique(hist.bounces)
        x = np.array([hist.lengths[hist.bounces == m].mean() for m in shells])
        y = np.array([hist.weights[hist.bounces == m].sum() for m in shells])
    elif by == "bins":
        m_top = hist.bounces.max()
        end = hist.lengths[hist.bounces == m_top].min()
        keep = (hist.centers <= end) & (hist.mass > 0)
        x, y = hist.centers[keep], hist.mass[keep]
    else:
        raise InvalidParameterError(f"unknown tail grouping {by!r}")
    sel = (x >= start) & (y > 0)
    if np.count_nonzero(sel) < 3:
        raise InsufficientStatisticsError("fewer than 3 occupied points in the tail window")
    x, y = x[sel], y[sel]
    return fit_escape_rate((x, y), window=(x[0], x[-1]))


@dataclass(frozen=True)
class SemiclassicalResult:
    value: complex
    shell_estimate: float
    shells: dict
    n_trajectories: int

    def __complex__(self):
        return complex(self.value)


def semiclassical_s(
    config: DiscConfiguration,
    omega_i,
    omega_f,
    k: float,
    m_max: int,
    trajectories: Optional[Sequence[Trajectory]] = None,
    executor=None,
    weights: str = "amplitude",
) -> SemiclassicalResult:
    """Code sum ``sum_a A_a exp(i k L_a)`` over feasible trajectories with M <= m_max.

    ``weights="amplitude"`` uses the reflection amplitude A_a;
    ``weights="classical"`` replaces it by ``(-1)^M sqrt(p_a)`` with p_a the
    stability weight, for which the shells shrink like exp(-gamma L / 2).
    ``shell_estimate`` is the magnitude of the M = m_max shell, the
    truncation estimate.
    """
    if k <= 0:
        raise InvalidParameterError("k must be positive")
    if trajectories is None:
        trajectories = find_all_trajectories(config, omega_i, omega_f, m_max, executor)
    trajectories = [t for t in trajectories if t.n_bounces <= m_max]
    if weights == "amplitude":
        amps = [t.amplitude for t in trajectories]
    elif weights == "classical":
        amps = [(-1.0) ** t.n_bounces * np.sqrt(t.classical_weight) for t in trajectories]
    else:
        raise InvalidParameterError(f"unknown trajectory weighting {weights!r}; use 'amplitude' or 'classical'")
    shells = {m: 0j for m in range(1, m_max + 1)}
    for t, a in zip(trajectories, amps):
        shells[t.n_bounces] += a * np.exp(1j * k * t.length)
    value = sum(shells.values())
    return SemiclassicalResult(complex(value), abs(shells[m_max]), shells, len(trajectories))
