"""On-shell scattering matrices built from resonance data.

Near isolated resonances the S matrix is dominated by its poles at
E_mu - i Gamma_mu / 2 in the lower half of the complex energy plane:

    S_fi(E) = S^P_fi - i sum_mu g_{f mu} g_{mu i} / (E - E_mu + i Gamma_mu / 2).

This pole form is unitary only when the partial-width rows are orthogonal
with squared norms Gamma_mu (and then only for a trivial prompt part), so
three constructions are offered:

* Blaschke products, exactly unitary in a single channel;
* the literal pole form above, whose unitarity defect is reported;
* a K-matrix model S = (1 + iK)(1 - iK)^{-1} with real symmetric K, which is
  exactly unitary and symmetric in any number of channels.

Every model carries a ``Dispersion`` that converts between the incoming
wavenumber k and the total energy E: E = hbar c k for electromagnetic
waves, E = hbar^2 k^2 / 2m + eps_i for massive particles entering through
channel i with threshold eps_i.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ClosedChannelError, InvalidParameterError, NumericalSingularityError

logger = logging.getLogger(__name__)

UNITARITY_TOL = 1e-8
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Dispersion:
    """Relation between wavenumber and energy, with channel thresholds.

    ``kind="qm"``: E = hbar^2 k^2 / 2m + eps_i. ``kind="em"``: E = hbar c k.
    Defaults are hbar = c = 1, m = 1/2, so E = k^2 or E = k.
    """

    kind: str = "qm"
    hbar: float = 1.0
    mass: float = 0.5
    c: float = 1.0
    thresholds: tuple = ()

    def __post_init__(self):
        if self.kind not in ("qm", "em"):
            raise InvalidParameterError(f"dispersion kind must be 'qm' or 'em', got {self.kind!r}")
        for name in ("hbar", "mass", "c"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")

    def threshold(self, channel: int) -> float:
        return float(self.thresholds[channel]) if channel < len(self.thresholds) else 0.0

    def energy(self, k, channel: int = 0):
        k = np.asarray(k, dtype=float)
        if self.kind == "em":
            return self.hbar * self.c * k
        return self.hbar**2 * k**2 / (2 * self.mass) + self.threshold(channel)

    def wavenumber(self, E, channel: int = 0):
        E = np.asarray(E, dtype=float)
        if self.kind == "em":
            return E / (self.hbar * self.c)
        kinetic = E - self.threshold(channel)
        if np.any(kinetic < 0):
            raise ClosedChannelError(f"energy below the threshold of channel {channel}")
        return np.sqrt(2 * self.mass * kinetic) / self.hbar

    def dE_dk(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind == "em":
            return np.full_like(k, self.hbar * self.c)
        return self.hbar**2 * k / self.mass

    def with_kind(self, kind: str) -> "Dispersion":
        return Dispersion(kind, self.hbar, self.mass, self.c, self.thresholds)


@dataclass(frozen=True)
class Resonance:
    """Pole at E - i Gamma/2 with partial-width amplitudes ``g`` (one per channel).

    ``g`` defaults to (sqrt(Gamma),) for single-channel use.
    """

    E: float
    Gamma: float
    g: Optional[tuple] = None

    def __post_init__(self):
        if not (np.isfinite(self.Gamma) and self.Gamma > 0):
            raise InvalidParameterError(f"resonance width must be positive, got {self.Gamma}")
        if self.g is None:
            object.__setattr__(self, "g", (float(np.sqrt(self.Gamma)),))
        else:
            object.__setattr__(self, "g", tuple(float(x) for x in self.g))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.g, dtype=float)


class SMatrixModel:
    """Base class. ``natural`` is "E" or "k", the variable the model is
    defined in; ``_matrix`` maps a 1-D array of that variable to an
    ``(n, N, N)`` complex array."""

    kind = "abstract"
    natural = "E"

    def __init__(self, n_channels: int, dispersion: Optional[Dispersion] = None):
        self.n_channels = int(n_channels)
        self.dispersion = dispersion or Dispersion()

    def _matrix(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def scale(self) -> float:
        """Smallest scale of variation in the natural variable."""
        return 1.0

    @property
    def exactly_unitary(self) -> bool:
        return False

    def __call__(self, x, variable: Optional[str] = None, channel: int = 0):
        return evaluate_s(self, x, variable, channel)

    def with_dispersion(self, dispersion: Dispersion) -> "SMatrixModel":
        import copy

        new = copy.copy(self)
        new.dispersion = dispersion
        return new

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class IdentityModel(SMatrixModel):
    kind = "identity"

    def _matrix(self, x):
        return np.broadcast_to(np.eye(self.n_channels, dtype=complex), (len(x), self.n_channels, self.n_channels)).copy()

    @property
    def exactly_unitary(self):
        return True

    def to_dict(self):
        return {"kind": "identity", "n_channels": self.n_channels}


def identity_model(n_channels: int = 1, dispersion: Optional[Dispersion] = None) -> IdentityModel:
    return IdentityModel(n_channels, dispersion)


class BlaschkeModel(SMatrixModel):
    kind = "blaschke"

    def __init__(self, poles, dispersion=None):
        super().__init__(1, dispersion)
        self.poles = tuple((float(E), float(G)) for E, G in poles)

    def _matrix(self, E):
        s = np.ones(len(E), dtype=complex)
        for E0, G in self.poles:
            s *= (E - E0 - 0.5j * G) / (E - E0 + 0.5j * G)
        return s[:, None, None]

    @property
    def scale(self):
        return min((G for _, G in self.poles), default=1.0)

    @property
    def exactly_unitary(self):
        return True

    def to_dict(self):
        return {"kind": "blaschke", "poles": [{"E": E, "Gamma": G} for E, G in self.poles]}


def _pole_pairs(resonances):
    out = []
    for r in resonances:
        if isinstance(r, Resonance):
            out.append((r.E, r.Gamma))
        elif isinstance(r, dict):
            out.append((r["E"], r["Gamma"]))
        else:
            out.append(tuple(r))
    return out


def blaschke_product(resonances, dispersion: Optional[Dispersion] = None) -> SMatrixModel:
    """Single-channel S(E) = prod (E - E_mu - i G/2) / (E - E_mu + i G/2)."""
    pairs = _pole_pairs(resonances)
    if not pairs:
        logger.warning("empty resonance list: returning the identity model")
        return IdentityModel(1, dispersion)
    for _, G in pairs:
        if not (np.isfinite(G) and G > 0):
            raise InvalidParameterError(f"resonance width must be positive, got {G}")
    return BlaschkeModel(pairs, dispersion)


def _width_matrix(resonances, n_channels):
    if not resonances:
        return np.zeros((0, n_channels))
    G = np.array([r.vector for r in resonances], dtype=float).reshape(len(resonances), -1)
    if G.size and G.shape[1] != n_channels:
        raise InvalidParameterError(
            f"partial-width vectors have {G.shape[1]} entries but the model has {n_channels} channels"
        )
    return G


def check_width_orthogonality(resonances, tol: float = UNITARITY_TOL):
    """Raise if sum_k g_{mu k} g_{nu k} != delta_{mu nu} Gamma_mu beyond ``tol``.

    The tolerance is relative to sqrt(Gamma_mu Gamma_nu).
    """
    G = np.array([r.vector for r in resonances])
    gram = G @ G.T
    gammas = np.array([r.Gamma for r in resonances])
    target = np.diag(gammas)
    scale = np.sqrt(np.outer(gammas, gammas))
    bad = np.abs(gram - target) > tol * scale
    if np.any(bad):
        mu, nu = (int(x) for x in np.argwhere(bad)[0])
        raise InvalidParameterError(
            f"partial widths of resonances {mu} and {nu} violate the unitarity constraint "
            f"(g_mu.g_nu = {gram[mu, nu]:.6g}, expected {target[mu, nu]:.6g})"
        )


def orthogonal_widths(seeds, gammas) -> np.ndarray:
    """Gram-Schmidt the seed rows and rescale row mu to norm sqrt(Gamma_mu)."""
    seeds = np.array(seeds, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    if seeds.ndim != 2 or len(seeds) != len(gammas):
        raise InvalidParameterError("need one seed vector per resonance")
    if len(seeds) > seeds.shape[1]:
        raise InvalidParameterError("more resonances than channels: widths cannot be orthogonal")
    out = np.zeros_like(seeds)
    for mu, v in enumerate(seeds):
        w = v - out[:mu].T @ (out[:mu] @ v) if mu else v.copy()
        norm = np.linalg.norm(w)
        if norm < 1e-12 * max(1.0, np.linalg.norm(v)):
            raise InvalidParameterError(f"seed vector {mu} is linearly dependent on the previous ones")
        out[mu] = w / norm
    return out * np.sqrt(gammas)[:, None]


class FeshbachModel(SMatrixModel):
    kind = "feshbach"

    def __init__(self, resonances, prompt, dispersion=None):
        prompt = np.atleast_2d(np.asarray(prompt, dtype=complex))
        super().__init__(prompt.shape[0], dispersion)
        self.resonances = tuple(resonances)
        self.prompt = prompt
        self._G = _width_matrix(self.resonances, self.n_channels)
        self._E = np.array([r.E for r in self.resonances])
        self._W = np.array([r.Gamma for r in self.resonances])

    def _matrix(self, E):
        out = np.broadcast_to(self.prompt, (len(E),) + self.prompt.shape).copy()
        if len(self.resonances):
            d = 1.0 / (E[:, None] - self._E[None, :] + 0.5j * self._W[None, :])
            out -= 1j * np.einsum("mf,em,mi->efi", self._G, d, self._G)
        return out

    @property
    def scale(self):
        return float(self._W.min()) if len(self._W) else 1.0

    def to_dict(self):
        return {
            "kind": "feshbach",
            "resonances": [{"E": r.E, "Gamma": r.Gamma, "g": list(r.g)} for r in self.resonances],
            "prompt_re": self.prompt.real.tolist(),
            "prompt_im": self.prompt.imag.tolist(),
        }


def feshbach_pole_model(
    resonances: Sequence[Resonance],
    prompt=None,
    dispersion: Optional[Dispersion] = None,
    strict: bool = True,
) -> FeshbachModel:
    """Literal pole form S = S^P - i sum_mu g_mu g_mu^T / (E - E_mu + i Gamma_mu/2).

    With ``strict=True`` the partial widths must satisfy the orthogonality
    constraint (and the prompt part must be unitary) to 1e-8. ``strict=False``
    skips the checks so that deliberately non-unitary models can be studied;
    their unitarity defect is then only reported.
    """
    resonances = [r if isinstance(r, Resonance) else Resonance(**r) for r in resonances]
    if prompt is None:
        n = len(resonances[0].g) if resonances else 1
        prompt = np.eye(n)
    prompt = np.atleast_2d(np.asarray(prompt, dtype=complex))
    if prompt.shape[0] != prompt.shape[1]:
        raise InvalidParameterError("prompt matrix must be square")
    if strict:
        defect = np.abs(prompt.conj().T @ prompt - np.eye(len(prompt))).max()
        if defect > UNITARITY_TOL:
            raise InvalidParameterError(f"prompt matrix is not unitary (defect {defect:.3g})")
        if resonances:
            check_width_orthogonality(resonances)
    return FeshbachModel(resonances, prompt, dispersion)


class KMatrixModel(SMatrixModel):
    kind = "kmatrix"

    def __init__(self, resonances, background, dispersion=None):
        background = np.atleast_2d(np.asarray(background, dtype=float))
        super().__init__(background.shape[0], dispersion)
        self.resonances = tuple(resonances)
        self.background = background
        self._G = _width_matrix(self.resonances, self.n_channels)
        self._E = np.array([r.E for r in self.resonances])

    def k_matrix(self, E, skip=()):
        E = np.atleast_1d(np.asarray(E, dtype=float))
        K = np.broadcast_to(self.background, (len(E),) + self.background.shape).astype(float)
        for mu, r in enumerate(self.resonances):
            if mu in skip:
                continue
            g = self._G[mu]
            K = K + 0.5 * np.outer(g, g)[None] / (r.E - E)[:, None, None]
        return K

    def _single(self, E):
        eye = np.eye(self.n_channels)
        at_pole = [mu for mu, r in enumerate(self.resonances) if r.E == E]
        if not at_pole:
            K = self.k_matrix(E)[0]
            A = eye - 1j * K
            if np.linalg.cond(A) > COND_LIMIT:
                raise NumericalSingularityError(f"1 - iK is singular to working precision at E={E}")
            # S = (1 + iK)(1 - iK)^{-1}; K symmetric so both factors commute
            return np.linalg.solve(A, eye + 1j * K)
        # at a pole K diverges along span{g_mu}, where S -> -1; on the
        # complement V the regular part of K applies
        Kr = self.k_matrix(E, skip=set(at_pole))[0]
        gs = self._G[at_pole]
        _, sv, vt = np.linalg.svd(gs)
        rank = int(np.count_nonzero(sv > 1e-12 * sv.max()))
        V = vt[rank:].T
        if V.shape[1] == 0:
            return -eye.astype(complex)
        M = V.T @ (eye - 1j * Kr) @ V
        if np.linalg.cond(M) > COND_LIMIT:
            raise NumericalSingularityError(f"reduced 1 - iK is singular at the pole E={E}")
        return -eye + 2 * V @ np.linalg.solve(M, V.T)

    def _matrix(self, E):
        if not self.resonances or not np.any(np.isin(E, self._E)):
            K = self.k_matrix(E)
            eye = np.eye(self.n_channels)
            A = eye[None] - 1j * K
            cond = np.linalg.cond(A)
            if np.any(cond > COND_LIMIT):
                raise NumericalSingularityError("1 - iK is singular to working precision")
            return np.linalg.solve(A, eye[None] + 1j * K)
        return np.array([self._single(e) for e in E])

    @property
    def scale(self):
        widths = [r.Gamma for r in self.resonances]
        return min(widths) if widths else 1.0

    @property
    def exactly_unitary(self):
        return True

    def to_dict(self):
        return {
            "kind": "kmatrix",
            "resonances": [{"E": r.E, "Gamma": r.Gamma, "g": list(r.g)} for r in self.resonances],
            "background": self.background.tolist(),
        }


def kmatrix_cayley(
    resonances: Sequence[Resonance], background=None, dispersion: Optional[Dispersion] = None
) -> KMatrixModel:
    """K(E) = B + (1/2) sum_mu g_mu g_mu^T / (E_mu - E), S = (1 + iK)(1 - iK)^{-1}."""
    resonances = [r if isinstance(r, Resonance) else Resonance(**r) for r in resonances]
    if background is None:
        n = len(resonances[0].g) if resonances else 1
        background = np.zeros((n, n))
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if background.shape[0] != background.shape[1] or not np.allclose(background, background.T, atol=1e-14):
        raise InvalidParameterError("K-matrix background must be real symmetric")
    for r in resonances:
        if abs(r.vector @ r.vector - r.Gamma) > UNITARITY_TOL * max(1.0, r.Gamma):
            raise InvalidParameterError(f"|g|^2 = {r.vector @ r.vector:.6g} does not match Gamma = {r.Gamma:.6g}")
    return KMatrixModel(resonances, background, dispersion)


class PureDelayModel(SMatrixModel):
    """S(k) = exp(i k L) times the identity: a pure translation by L."""

    kind = "pure_delay"
    natural = "k"

    def __init__(self, L, n_channels=1, dispersion=None):
        super().__init__(n_channels, dispersion)
        self.L = float(L)

    def _matrix(self, k):
        ph = np.exp(1j * k * self.L)
        return ph[:, None, None] * np.eye(self.n_channels)[None]

    @property
    def exactly_unitary(self):
        return True

    def to_dict(self):
        return {"kind": "pure_delay", "L": self.L, "n_channels": self.n_channels}


def pure_delay(L: float, n_channels: int = 1, dispersion: Optional[Dispersion] = None) -> PureDelayModel:
    return PureDelayModel(L, n_channels, dispersion or Dispersion("em"))


class BlockDiagonalModel(SMatrixModel):
    kind = "block_diagonal"

    def __init__(self, blocks, dispersion=None):
        blocks = list(blocks)
        naturals = {b.natural for b in blocks}
        if len(naturals) != 1:
            raise InvalidParameterError("blocks must share their natural variable")
        super().__init__(sum(b.n_channels for b in blocks), dispersion or blocks[0].dispersion)
        self.blocks = blocks
        self.natural = naturals.pop()

    def _matrix(self, x):
        out = np.zeros((len(x), self.n_channels, self.n_channels), dtype=complex)
        o = 0
        for b in self.blocks:
            n = b.n_channels
            out[:, o : o + n, o : o + n] = b._matrix(x)
            o += n
        return out

    @property
    def scale(self):
        return min(b.scale for b in self.blocks)

    @property
    def exactly_unitary(self):
        return all(b.exactly_unitary for b in self.blocks)

    def to_dict(self):
        return {"kind": "block_diagonal", "blocks": [b.to_dict() for b in self.blocks]}


def block_diagonal(blocks, dispersion: Optional[Dispersion] = None) -> BlockDiagonalModel:
    return BlockDiagonalModel(blocks, dispersion)


class TabulatedModel(SMatrixModel):
    """S sampled on a grid of the natural variable, linearly interpolated
    in real and imaginary parts. Sample points return the stored values."""

    kind = "tabulated"

    def __init__(self, grid, values, natural="E", dispersion=None):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=complex)
        if values.ndim == 1:
            values = values[:, None, None]
        if len(grid) < 2 or values.shape[0] != len(grid) or values.shape[1] != values.shape[2]:
            raise InvalidParameterError("tabulated S needs matching grid and (n, N, N) values")
        order = np.argsort(grid)
        grid, values = grid[order], values[order]
        if np.any(np.diff(grid) <= 0):
            raise InvalidParameterError("tabulated S grid has repeated points")
        super().__init__(values.shape[1], dispersion)
        self.natural = natural
        self.grid = grid
        self.values = values

    def _matrix(self, x):
        if np.any(x < self.grid[0]) or np.any(x > self.grid[-1]):
            raise InvalidParameterError(
                f"tabulated S evaluated outside its range [{self.grid[0]}, {self.grid[-1]}]"
            )
        idx = np.clip(np.searchsorted(self.grid, x, side="right") - 1, 0, len(self.grid) - 2)
        x0, x1 = self.grid[idx], self.grid[idx + 1]
        t = ((x - x0) / (x1 - x0))[:, None, None]
        return (1 - t) * self.values[idx] + t * self.values[idx + 1]

    @property
    def scale(self):
        return float(np.min(np.diff(self.grid))) * 10

    def to_dict(self):
        return {"kind": "tabulated", "natural": self.natural, "n_points": len(self.grid)}


_CSV_COLUMN = re.compile(r"^(re|im)_(\d+)_?(\d+)$")


def load_tabulated_csv(path, dispersion: Optional[Dispersion] = None) -> TabulatedModel:
    """Read a tabulated S from CSV with columns ``E`` (or ``k``) and
    ``re_fi, im_fi`` for every channel pair (0-based indices; ``re_f_i`` is
    also accepted). Missing pairs are zero."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidParameterError(f"{path}: empty table")
    cols = rows[0].keys()
    natural = "E" if "E" in cols else "k" if "k" in cols else None
    if natural is None:
        raise InvalidParameterError(f"{path}: needs an 'E' or 'k' column")
    entries = {}
    for c in cols:
        m = _CSV_COLUMN.match(c.strip())
        if m:
            entries[c] = (m.group(1), int(m.group(2)), int(m.group(3)))
    if not entries:
        raise InvalidParameterError(f"{path}: no re_ij / im_ij columns")
    n = 1 + max(max(f, i) for _, f, i in entries.values())
    grid = np.array([float(r[natural]) for r in rows])
    values = np.zeros((len(rows), n, n), dtype=complex)
    for c, (part, f, i) in entries.items():
        col = np.array([float(r[c]) for r in rows])
        values[:, f, i] += col if part == "re" else 1j * col
    return TabulatedModel(grid, values, natural, dispersion)


class DelayedModel(SMatrixModel):
    """exp(i k L) S(k): the base model followed by free propagation over L."""

    kind = "delayed"
    natural = "k"

    def __init__(self, base: SMatrixModel, L: float):
        super().__init__(base.n_channels, base.dispersion)
        self.base = base
        self.L = float(L)

    def _matrix(self, k):
        inner = evaluate_s(self.base, k, "k")
        inner = inner if inner.ndim == 3 else inner[None]
        return np.exp(1j * k * self.L)[:, None, None] * inner

    @property
    def scale(self):
        sc = self.base.scale
        if self.base.natural == "E":
            sc = sc / float(np.max(self.dispersion.dE_dk(1.0)))
        return sc

    @property
    def exactly_unitary(self):
        return self.base.exactly_unitary


class SemiclassicalDiscModel(SMatrixModel):
    """1x1 S(k) = sum_a A_a exp(i k L_a) over fixed disc trajectories.

    Not unitary: the code sum lacks the direct term and is truncated.
    """

    kind = "semiclassical_disc"
    natural = "k"

    def __init__(self, trajectories, weights: str = "amplitude", dispersion=None):
        super().__init__(1, dispersion or Dispersion("em"))
        self.trajectories = tuple(trajectories)
        if weights == "amplitude":
            amps = [t.amplitude for t in self.trajectories]
        elif weights == "classical":
            amps = [(-1.0) ** t.n_bounces * np.sqrt(t.classical_weight) for t in self.trajectories]
        else:
            raise InvalidParameterError(f"unknown trajectory weighting {weights!r}")
        self.amplitudes = np.array(amps, dtype=float)
        self.lengths = np.array([t.length for t in self.trajectories], dtype=float)

    def _matrix(self, k):
        if not len(self.lengths):
            return np.zeros((len(k), 1, 1), dtype=complex)
        s = np.exp(1j * np.outer(k, self.lengths)) @ self.amplitudes
        return s[:, None, None]

    def to_dict(self):
        return {"kind": "semiclassical_disc", "n_trajectories": len(self.trajectories)}


def evaluate_s(model: SMatrixModel, x, variable: Optional[str] = None, channel: int = 0):
    """S at ``x``; ``variable`` is "E", "k" or None for the model's natural one.

    Wavenumbers are those of the incoming ``channel`` and are converted by the
    model's dispersion. For massive particles, a conversion landing below any
    channel threshold raises ClosedChannelError. Returns ``(N, N)`` for scalar input,
    ``(n, N, N)`` otherwise.
    """
    variable = variable or model.natural
    if variable not in ("E", "k"):
        raise InvalidParameterError(f"variable must be 'E' or 'k', got {variable!r}")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    disp = model.dispersion
    if variable == model.natural:
        nat = x
    else:
        if variable == "k":
            E = disp.energy(x, channel)
            nat = E
        else:
            E = x
            nat = disp.wavenumber(x, channel)
        if disp.kind == "qm":
            closed = [j for j in range(model.n_channels) if np.any(E < disp.threshold(j))]
            if closed:
                raise ClosedChannelError(f"channels {closed} are closed at the requested energies")
    out = model._matrix(nat)
    return out[0] if scalar else out


def unitarity_defect(model: SMatrixModel, grid, variable: Optional[str] = None) -> float:
    """max over the grid of max-norm |S^dagger S - I|."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise InvalidParameterError("empty grid")
    S = evaluate_s(model, grid, variable)
    S = S if S.ndim == 3 else S[None]
    prod = np.einsum("eji,ejk->eik", S.conj(), S)
    return float(np.abs(prod - np.eye(model.n_channels)[None]).max())


def unwrapped_phase(values) -> np.ndarray:
    """arg of a sampled complex function continued along the grid on the
    nearest branch."""
    return np.unwrap(np.angle(np.asarray(values)))


def model_from_dict(spec: dict, dispersion: Optional[Dispersion] = None, base_dir=None) -> SMatrixModel:
    """Model from a config block, e.g. ``{"kind": "blaschke", "poles": [{"E": 5, "Gamma": 0.5}]}``."""
    kind = spec.get("kind")
    if kind == "identity":
        return identity_model(spec.get("n_channels", 1), dispersion)
    if kind == "blaschke":
        return blaschke_product(spec.get("poles", []), dispersion)
    if kind in ("feshbach", "kmatrix"):
        res = [Resonance(p["E"], p["Gamma"], p.get("g")) for p in spec.get("resonances", spec.get("poles", []))]
        if kind == "feshbach":
            prompt = spec.get("prompt")
            return feshbach_pole_model(res, prompt, dispersion, strict=spec.get("strict", True))
        return kmatrix_cayley(res, spec.get("background"), dispersion)
    if kind == "pure_delay":
        return PureDelayModel(spec["L"], spec.get("n_channels", 1), dispersion or Dispersion("em"))
    if kind == "block_diagonal":
        return block_diagonal([model_from_dict(b, dispersion, base_dir) for b in spec["blocks"]], dispersion)
    if kind == "tabulated":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_tabulated_csv(path, dispersion)
    raise InvalidParameterError(f"unknown model kind {kind!r}")
