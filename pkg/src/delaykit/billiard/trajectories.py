"""Periodic-free scattering trajectories of the N-disc billiard.

A trajectory is labelled by its code, the sequence of discs it bounces
off. For fixed incoming and outgoing directions the reflection points
``R_m = rho_{a_m} + (cos theta_m, sin theta_m)`` are unknowns. Writing
``d_0 = omega_i``, ``d_M = omega_f`` and ``d_m`` for the unit vector from
``R_m`` to ``R_{m+1}``, specular reflection at every bounce means the
tangential components of the incoming and outgoing directions agree::

    F_m(theta) = t_m . (d_{m-1} - d_m) = 0,   t_m = (-sin theta_m, cos theta_m)

For interior bounces this is the stationarity of the polygon length
``L = sum |R_m - R_{m-1}|``; at the two end bounces it is the specular
endpoint condition. ``F`` is the gradient of
``omega_i . R_1 + L - omega_f . R_M``, so its Jacobian is symmetric.
The system is solved by damped Newton with a finite-difference Jacobian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Iterator, Optional, Sequence

import numpy as np

from .geometry import DiscConfiguration, segment_hits_interior

logger = logging.getLogger(__name__)

NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-13
RESIDUAL_TOL = 1e-10
JACOBIAN_STEP = 1e-7
GRAZING_TOL = 1e-12
N_RESTARTS = 8


@dataclass(frozen=True)
class Trajectory:
    code: tuple
    theta: np.ndarray
    points: np.ndarray
    omega_i: np.ndarray
    omega_f: np.ndarray
    length: float
    amplitude: float
    residual: float
    shadowing_ok: bool = True
    grazing: bool = False
    classical_weight: float = field(default=float("nan"))

    @property
    def n_bounces(self) -> int:
        return len(self.code)


def code_count(n_discs: int, m_max: int) -> int:
    return sum(n_discs * (n_discs - 1) ** (m - 1) for m in range(1, m_max + 1))


def enumerate_codes(n_discs: int, m_max: int) -> Iterator[tuple]:
    """Codes with no immediate repeats, shortest first, lexicographic within a length."""
    for m in range(1, m_max + 1):
        for code in product(range(n_discs), repeat=m):
            if all(a != b for a, b in zip(code, code[1:])):
                yield code


def reflection_points(centers, code, theta):
    theta = np.asarray(theta, dtype=float)
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return centers[list(code)] + normals, normals


def _as_direction(v):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return np.array([np.cos(v), np.sin(v)])
    return v / np.linalg.norm(v)


def _segment_directions(points, omega_i, omega_f):
    """d_0..d_M for a batch of point sets, shape (..., M+1, 2)."""
    diff = np.diff(points, axis=-2)
    seg = diff / np.linalg.norm(diff, axis=-1, keepdims=True)
    shape = points.shape[:-2] + (1, 2)
    return np.concatenate(
        [np.broadcast_to(omega_i, shape), seg, np.broadcast_to(omega_f, shape)], axis=-2
    )


def specular_residuals(theta, centers, code, omega_i, omega_f):
    """The tangential specular conditions F_m for a batch of angle vectors."""
    theta = np.asarray(theta, dtype=float)
    points, _ = reflection_points(centers, code, theta)
    d = _segment_directions(points, omega_i, omega_f)
    tangents = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    return np.einsum("...mk,...mk->...m", tangents, d[..., :-1, :] - d[..., 1:, :])


def endpoint_residuals(theta, centers, code, omega_i, omega_f):
    """Residuals of the two endpoint conditions in their normal-component form:
    ``omega_i.r_1 + r_1.Rhat_12`` and ``omega_f.r_M + r_M.Rhat_{M-1,M}``."""
    points, normals = reflection_points(centers, code, theta)
    d = _segment_directions(points, omega_i, omega_f)
    first = omega_i @ normals[0] + normals[0] @ d[1]
    last = omega_f @ normals[-1] + normals[-1] @ d[-2]
    return np.array([first, last])


def numerical_jacobian(theta, centers, code, omega_i, omega_f, step=JACOBIAN_STEP):
    m = len(theta)
    shifts = step * np.eye(m)
    batch = np.concatenate([theta + shifts, theta - shifts])
    values = specular_residuals(batch, centers, code, omega_i, omega_f)
    return ((values[:m] - values[m:]) / (2 * step)).T


def initial_angles(centers, code, omega_i, omega_f):
    """Each normal bisects the directions towards the neighbouring centres
    (``-omega_i`` before the first bounce, ``omega_f`` after the last)."""
    m = len(code)
    theta = np.empty(m)
    for j, a in enumerate(code):
        if j == 0:
            prev = -omega_i
        else:
            prev = centers[code[j - 1]] - centers[a]
            prev = prev / np.linalg.norm(prev)
        if j == m - 1:
            nxt = omega_f
        else:
            nxt = centers[code[j + 1]] - centers[a]
            nxt = nxt / np.linalg.norm(nxt)
        bisector = prev + nxt
        if np.linalg.norm(bisector) < 1e-12:
            bisector = np.array([-nxt[1], nxt[0]])
        theta[j] = np.arctan2(bisector[1], bisector[0])
    return theta


def newton_solve(theta0, centers, code, omega_i, omega_f, max_iter=NEWTON_MAX_ITER):
    """Damped Newton on the specular system. Returns ``(theta, converged)``."""
    theta = np.array(theta0, dtype=float)
    f = specular_residuals(theta, centers, code, omega_i, omega_f)
    norm = np.abs(f).max()
    for _ in range(max_iter):
        if norm < NEWTON_TOL:
            return theta, True
        jac = numerical_jacobian(theta, centers, code, omega_i, omega_f)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -f, rcond=None)[0]
        biggest = np.abs(step).max()
        if not np.isfinite(biggest):
            return theta, False
        if biggest > 0.5:
            step *= 0.5 / biggest
        alpha = 1.0
        while alpha > 1e-4:
            trial = theta + alpha * step
            f_trial = specular_residuals(trial, centers, code, omega_i, omega_f)
            n_trial = np.abs(f_trial).max()
            if n_trial < norm or (norm < 1e-10 and n_trial <= norm):
                break
            alpha *= 0.5
        else:
            return theta, norm < NEWTON_TOL
        theta, f, norm = trial, f_trial, n_trial
    return theta, norm < NEWTON_TOL


def _is_feasible(centers, code, theta, omega_i, omega_f):
    points, normals = reflection_points(centers, code, theta)
    d = _segment_directions(points, omega_i, omega_f)
    incoming = np.einsum("mk,mk->m", d[:-1], normals)
    outgoing = np.einsum("mk,mk->m", d[1:], normals)
    # grazing bounces (both products zero) are kept; they get zero amplitude
    if np.any(incoming > GRAZING_TOL) or np.any(outgoing < -GRAZING_TOL):
        return False
    if np.abs(endpoint_residuals(theta, centers, code, omega_i, omega_f)).max() > RESIDUAL_TOL:
        return False
    return not _shadowed(centers, points, omega_i, omega_f)


def _shadowed(centers, points, omega_i, omega_f):
    if segment_hits_interior(points[0], -omega_i, np.inf, centers):
        return True
    if segment_hits_interior(points[-1], omega_f, np.inf, centers):
        return True
    for p, q in zip(points[:-1], points[1:]):
        seg = q - p
        length = np.linalg.norm(seg)
        if segment_hits_interior(p, seg / length, length, centers):
            return True
    return False


def _restart_offsets(m):
    signs = (-1.0) ** np.arange(m)
    for j in range(N_RESTARTS):
        delta = 0.12 * (j // 2 + 1) * (1 if j % 2 == 0 else -1)
        yield delta * signs


def solve_code(config: DiscConfiguration, code, omega_i, omega_f, all_starts=False):
    """Feasible solutions of the specular system for one code.

    With ``all_starts=False`` stops at the first feasible solution
    (default start, then the restarts). With ``all_starts=True`` every
    start is tried and the list of feasible solutions is returned, for
    checking that distinct starts collapse onto one trajectory.
    """
    centers = config.centers
    omega_i = _as_direction(omega_i)
    omega_f = _as_direction(omega_f)
    theta0 = initial_angles(centers, code, omega_i, omega_f)
    starts = [theta0] + [theta0 + off for off in _restart_offsets(len(code))]
    found = []
    for start in starts:
        theta, ok = newton_solve(start, centers, code, omega_i, omega_f)
        if ok and _is_feasible(centers, code, theta, omega_i, omega_f):
            found.append(np.mod(theta + np.pi, 2 * np.pi) - np.pi)
            if not all_starts:
                break
    return found


def _build(config, code, theta, omega_i, omega_f) -> Trajectory:
    centers = config.centers
    points, normals = reflection_points(centers, code, theta)
    d = _segment_directions(points, omega_i, omega_f)
    length = float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())
    residual = max(
        np.abs(specular_residuals(theta, centers, code, omega_i, omega_f)).max(),
        np.abs(endpoint_residuals(theta, centers, code, omega_i, omega_f)).max(),
    )
    amp, grazing = _amplitude(normals, d[1:])
    # a grazing path is a measure-zero boundary of its cylinder
    weight = 0.0 if grazing else _classical_weight(config, code, theta, omega_i, omega_f)
    for arr in (theta, points):
        arr.setflags(write=False)
    return Trajectory(
        code=tuple(int(a) for a in code),
        theta=theta,
        points=points,
        omega_i=omega_i,
        omega_f=omega_f,
        length=length,
        amplitude=amp,
        residual=float(residual),
        shadowing_ok=True,
        grazing=grazing,
        classical_weight=weight,
    )


def find_trajectory(config: DiscConfiguration, code, omega_i, omega_f) -> Optional[Trajectory]:
    """The classical trajectory with the given code, or None if it does not exist.

    Directions may be given as unit vectors or as angles in radians.
    """
    code = tuple(code)
    if any(a == b for a, b in zip(code, code[1:])):
        raise ValueError(f"code {code} repeats a disc on consecutive bounces")
    omega_i = _as_direction(omega_i)
    omega_f = _as_direction(omega_f)
    found = solve_code(config, code, omega_i, omega_f)
    if not found:
        return None
    return _build(config, code, found[0], omega_i, omega_f)


def find_all_trajectories(config, omega_i, omega_f, m_max, executor=None) -> list[Trajectory]:
    """All feasible trajectories with at most ``m_max`` bounces, in code order."""
    codes = list(enumerate_codes(config.n_discs, m_max))
    solve = lambda code: find_trajectory(config, code, omega_i, omega_f)  # noqa: E731
    results = executor.map(solve, codes) if executor is not None else map(solve, codes)
    return [t for t in results if t is not None]


def trajectory_length(traj: Trajectory) -> float:
    """Interior polygon length; zero for a single bounce."""
    return float(np.linalg.norm(np.diff(traj.points, axis=0), axis=1).sum())


def _amplitude(normals, out_dirs):
    m = len(normals)
    cross = normals[:, 0] * out_dirs[:, 1] - normals[:, 1] * out_dirs[:, 0]
    factors = np.sqrt(np.clip(1.0 - cross**2, 0.0, None))
    grazing = bool(np.any(factors < 1e-8))
    amp = (-1.0) ** m / 2.0 ** (m / 2) * np.sqrt(np.prod(factors))
    return float(amp), grazing


def amplitude(traj: Trajectory, omega_i=None, omega_f=None) -> float:
    """Reflection amplitude ``(-1)^M 2^{-M/2} [prod sqrt(1 - (r_m x Rhat_m)^2)]^{1/2}``,
    where ``Rhat_m`` is the outgoing direction after bounce m (``omega_f``
    after the last). Grazing bounces give zero and set ``traj.grazing``.
    """
    omega_i = traj.omega_i if omega_i is None else _as_direction(omega_i)
    omega_f = traj.omega_f if omega_f is None else _as_direction(omega_f)
    normals = np.stack([np.cos(traj.theta), np.sin(traj.theta)], axis=-1)
    d = _segment_directions(traj.points, omega_i, omega_f)
    return _amplitude(normals, d[1:])[0]


def _classical_weight(config, code, theta, omega_i, omega_f):
    """|db/dphi_f|: impact-parameter width per unit outgoing angle.

    From the implicit function theorem on ``F(theta; phi_f) = 0``, with
    ``b = omega_i_perp . R_1``. This is the classical probability of the
    trajectory for a uniform incoming beam.
    """
    jac = numerical_jacobian(theta, config.centers, code, omega_i, omega_f)
    try:
        inv_col = np.linalg.solve(jac, np.eye(len(theta))[:, -1])
    except np.linalg.LinAlgError:
        return float("inf")
    t1 = np.array([-np.sin(theta[0]), np.cos(theta[0])])
    tm = np.array([-np.sin(theta[-1]), np.cos(theta[-1])])
    perp_i = np.array([-omega_i[1], omega_i[0]])
    perp_f = np.array([-omega_f[1], omega_f[0]])
    return float(abs((perp_i @ t1) * inv_col[0] * (tm @ perp_f)))


def classical_weight(traj: Trajectory, config: DiscConfiguration) -> float:
    return _classical_weight(config, traj.code, np.asarray(traj.theta), traj.omega_i, traj.omega_f)


def make_trajectory(config: DiscConfiguration, code: Sequence[int], theta, omega_i, omega_f) -> Trajectory:
    """Wrap given reflection angles as a Trajectory without solving or
    shadowing checks (for hand-built reference geometries)."""
    theta = np.array(theta, dtype=float)
    return _build(config, tuple(code), theta, _as_direction(omega_i), _as_direction(omega_f))
