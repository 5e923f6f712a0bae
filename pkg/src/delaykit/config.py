"""Run configuration: JSON schema, validation and construction of domain objects.

Units default to hbar = c = 1 and m = 1/2. Unknown keys are an error in
strict mode; otherwise they are dropped with a warning.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, model_validator

from .billiard.geometry import DiscConfiguration, validate_configuration
from .envelope import Envelope, envelope_from_dict
from .errors import ConfigError
from .smatrix import Dispersion, SMatrixModel, model_from_dict

logger = logging.getLogger(__name__)

TASKS = ("distribution", "moments", "ws_limit", "autocorrelation", "billiard_s", "billiard_classical", "escape")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Units(_Block):
    hbar: PositiveFloat = 1.0
    mass: PositiveFloat = 0.5
    c: PositiveFloat = 1.0


class Pole(_Block):
    E: float
    Gamma: PositiveFloat
    g: Optional[list[float]] = None


class ModelBlock(_Block):
    kind: Literal["identity", "blaschke", "feshbach", "kmatrix", "pure_delay", "block_diagonal", "tabulated"]
    n_channels: int = Field(1, ge=1)
    poles: list[Pole] = []
    resonances: list[Pole] = []
    prompt: Optional[list[list[float]]] = None
    background: Optional[list[list[float]]] = None
    strict: bool = True
    L: Optional[float] = None
    blocks: list["ModelBlock"] = []
    path: Optional[str] = None
    thresholds: list[float] = []

    @model_validator(mode="after")
    def _required(self):
        if self.kind == "pure_delay" and self.L is None:
            raise ValueError("pure_delay model needs L")
        if self.kind == "block_diagonal" and not self.blocks:
            raise ValueError("block_diagonal model needs blocks")
        if self.kind == "tabulated" and not self.path:
            raise ValueError("tabulated model needs path")
        if self.kind in ("feshbach", "kmatrix") and not (self.poles or self.resonances):
            raise ValueError(f"{self.kind} model needs resonances")
        return self


class EnvelopeBlock(_Block):
    kind: Literal["gaussian", "tabulated"] = "gaussian"
    k0: Optional[PositiveFloat] = None
    sigma: Optional[PositiveFloat] = None
    samples: Optional[list[tuple[float, float]]] = None
    normalize: bool = True

    @model_validator(mode="after")
    def _required(self):
        if self.kind == "gaussian" and (self.k0 is None or self.sigma is None):
            raise ValueError("gaussian envelope needs k0 and sigma")
        if self.kind == "tabulated" and not self.samples:
            raise ValueError("tabulated envelope needs samples")
        return self


class GridBlock(_Block):
    min: float
    max: float
    points: int = Field(ge=3)

    @model_validator(mode="after")
    def _order(self):
        if not self.max > self.min:
            raise ValueError("grid max must exceed min")
        return self


class GeometryBlock(_Block):
    discs: list[tuple[float, float]] = Field(min_length=1)


class BilliardBlock(_Block):
    omega_i: float = 0.3
    omega_f: float = 2.2
    m_max: int = Field(6, ge=1, le=14)
    bin_width: PositiveFloat = 0.5
    k: PositiveFloat = 10.0
    weights: Literal["amplitude", "classical"] = "amplitude"


class EscapeBlock(_Block):
    n_samples: int = Field(100_000, ge=1)
    s_max: Optional[PositiveFloat] = None
    n_grid: int = Field(1000, ge=3)
    window: Optional[tuple[float, float]] = None


class Tolerances(_Block):
    mass: PositiveFloat = 1e-5
    route: PositiveFloat = 1e-3


class RunConfig(_Block):
    task: Literal[TASKS]
    dispersion: Literal["qm", "em"] = "qm"
    units: Units = Units()
    model: Optional[ModelBlock] = None
    envelope: Optional[EnvelopeBlock] = None
    grid: Optional[GridBlock] = None
    i: int = Field(0, ge=0)
    f: Optional[int] = Field(None, ge=0)
    E0: Optional[float] = None
    sigma_sequence: Optional[list[PositiveFloat]] = None
    geometry: Optional[GeometryBlock] = None
    billiard: BilliardBlock = BilliardBlock()
    escape: EscapeBlock = EscapeBlock()
    tolerances: Tolerances = Tolerances()
    output_dir: Optional[str] = None
    seed: int = 0

    @model_validator(mode="after")
    def _blocks_for_task(self):
        need = {
            "distribution": ("model", "envelope"),
            "moments": ("model", "envelope"),
            "autocorrelation": ("model", "envelope"),
            "ws_limit": ("model", "E0", "sigma_sequence"),
            "billiard_s": ("geometry",),
            "billiard_classical": ("geometry",),
            "escape": ("geometry",),
        }[self.task]
        missing = [n for n in need if getattr(self, n) is None]
        if missing:
            raise ValueError(f"task {self.task!r} requires {', '.join(missing)}")
        if self.sigma_sequence is not None and any(
            b >= a for a, b in zip(self.sigma_sequence, self.sigma_sequence[1:])
        ):
            raise ValueError("sigma_sequence must be strictly decreasing")
        return self

    # domain objects

    def build_dispersion(self) -> Dispersion:
        th = tuple(self.model.thresholds) if self.model else ()
        return Dispersion(self.dispersion, self.units.hbar, self.units.mass, self.units.c, th)

    def build_model(self, base_dir=None) -> SMatrixModel:
        return model_from_dict(_model_spec(self.model), self.build_dispersion(), base_dir)

    def build_envelope(self) -> Envelope:
        return envelope_from_dict(self.envelope.model_dump(exclude_none=True))

    def build_geometry(self) -> DiscConfiguration:
        return validate_configuration(self.geometry.discs)


def _model_spec(block: ModelBlock) -> dict:
    spec = block.model_dump(exclude_none=True, exclude={"blocks"})
    # poles and resonances are accepted as synonyms
    spec["resonances"] = spec["resonances"] or spec["poles"]
    spec["poles"] = spec["poles"] or spec["resonances"]
    spec["blocks"] = [_model_spec(b) for b in block.blocks]
    return spec


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"])
        parts.append(f"{loc}: {e['msg']}" if loc else e["msg"])
    return "; ".join(parts)


def _drop(raw, loc):
    node = raw
    for key in loc[:-1]:
        node = node[key]
    node.pop(loc[-1], None)


def validate_config(raw: dict, strict: bool = False) -> RunConfig:
    """RunConfig from a parsed JSON object; ConfigError naming the offending fields."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    raw = json.loads(json.dumps(raw))
    for _ in range(100):
        try:
            cfg = RunConfig.model_validate(raw)
            break
        except ValidationError as err:
            extra = [e["loc"] for e in err.errors() if e["type"] == "extra_forbidden"]
            if strict or not extra:
                raise ConfigError(_format_errors(err)) from None
            for loc in extra:
                logger.warning("ignoring unknown config key %s", ".".join(str(x) for x in loc))
                _drop(raw, loc)
    if cfg.geometry is not None:
        cfg.build_geometry()
    return cfg


def parse_config(path, strict: bool = False) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}") from None
    return validate_config(raw, strict)
