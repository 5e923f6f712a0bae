"""Unit-disc scatterer geometry and exact ray/circle intersection."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..errors import InvalidGeometryError

DISCRIMINANT_TOL = 1e-12
LENGTH_TOL = 1e-9


@dataclass(frozen=True)
class DiscConfiguration:
    """Non-overlapping unit discs and the smallest circle enclosing them.

    ``centers`` has shape ``(N, 2)``; disc indices used in codes are
    0-based row indices into it.
    """

    centers: np.ndarray
    enclosing_center: np.ndarray
    enclosing_radius: float

    @property
    def n_discs(self) -> int:
        return len(self.centers)

    def to_dict(self):
        return {"discs": self.centers.tolist()}


def _circle_two(a, b):
    center = 0.5 * (a + b)
    return center, 0.5 * float(np.linalg.norm(a - b))


def _circle_three(a, b, c):
    # circumcircle; None for (near) collinear triples
    d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    if abs(d) < 1e-14:
        return None
    sa, sb, sc = a @ a, b @ b, c @ c
    ux = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d
    uy = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d
    center = np.array([ux, uy])
    return center, float(np.linalg.norm(a - center))


def smallest_enclosing_circle(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimal circle containing all points (exhaustive over pairs/triples).

    The optimal circle is determined by two or three of the points, so
    checking every candidate is exact; fine for the handful of discs used here.
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 1:
        return points[0].copy(), 0.0
    candidates = [_circle_two(a, b) for a, b in combinations(points, 2)]
    candidates += [c for c in (_circle_three(*t) for t in combinations(points, 3)) if c]
    best = None
    for center, radius in candidates:
        if np.all(np.linalg.norm(points - center, axis=1) <= radius * (1 + 1e-12) + 1e-12):
            if best is None or radius < best[1]:
                best = (center, radius)
    return best


def validate_configuration(centers) -> DiscConfiguration:
    centers = np.array(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[1] != 2 or len(centers) < 1:
        raise InvalidGeometryError("geometry needs at least one 2D disc center")
    for i, j in combinations(range(len(centers)), 2):
        dist = float(np.linalg.norm(centers[i] - centers[j]))
        if dist <= 2.0:
            raise InvalidGeometryError(
                f"discs {i} and {j} overlap (center distance {dist:.6g} <= 2)", pair=(i, j)
            )
    center, radius = smallest_enclosing_circle(centers)
    centers.setflags(write=False)
    center.setflags(write=False)
    return DiscConfiguration(centers, center, radius + 1.0)


def equilateral_configuration(side: float) -> DiscConfiguration:
    """Three unit discs on an equilateral triangle centred at the origin."""
    r = side / np.sqrt(3.0)
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    return validate_configuration(np.column_stack([r * np.cos(angles), r * np.sin(angles)]))


def unit(angle):
    return np.array([np.cos(angle), np.sin(angle)])


def segment_hits_interior(start, direction, length, centers) -> bool:
    """True if the open segment ``start + t*direction, 0 < t < length`` enters
    the open interior of any unit disc. ``length`` may be ``inf`` (a ray).

    Tangency and touching at the endpoints do not count.
    """
    rel = start - centers
    b = rel @ direction
    c = np.einsum("ij,ij->i", rel, rel) - 1.0
    disc = b * b - c
    mask = disc > DISCRIMINANT_TOL
    if not np.any(mask):
        return False
    root = np.sqrt(disc[mask])
    t1 = -b[mask] - root
    t2 = -b[mask] + root
    lo = np.maximum(t1, 0.0)
    hi = np.minimum(t2, length)
    return bool(np.any(hi - lo > LENGTH_TOL))


def first_hits(pos, dirs, centers, exclude=None):
    """Vectorised first intersection of rays with the unit discs.

    Returns ``(t, index)``; ``t`` is ``inf`` and ``index`` is -1 for rays
    that hit nothing. ``exclude`` gives, per ray, a disc to ignore (the one
    the ray is leaving), or -1.
    """
    rel = pos[:, None, :] - centers[None, :, :]
    b = np.einsum("rnk,rk->rn", rel, dirs)
    c = np.einsum("rnk,rnk->rn", rel, rel) - 1.0
    disc = b * b - c
    t = np.full(disc.shape, np.inf)
    ok = disc > 0.0
    tt = -b[ok] - np.sqrt(disc[ok])
    t[ok] = np.where(tt > 1e-12, tt, np.inf)
    if exclude is not None:
        rows = np.nonzero(exclude >= 0)[0]
        t[rows, exclude[rows]] = np.inf
    index = np.argmin(t, axis=1)
    tmin = t[np.arange(len(t)), index]
    index = np.where(np.isfinite(tmin), index, -1)
    return tmin, index


def reflect(dirs, normals):
    return dirs - 2.0 * np.einsum("rk,rk->r", dirs, normals)[:, None] * normals


def exit_distance(pos, dirs, center, radius):
    """Distance along each ray to the enclosing circle (rays start inside)."""
    rel = pos - center
    b = np.einsum("rk,rk->r", rel, dirs)
    c = np.einsum("rk,rk->r", rel, rel) - radius * radius
    return -b + np.sqrt(np.maximum(b * b - c, 0.0))
