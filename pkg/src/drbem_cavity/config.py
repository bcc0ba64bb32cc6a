"""JSON run configuration.

Every section rejects unknown keys and all violations are reported together.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .geometry import LidSegment, SingleLid, SplitLid
from .solver import FlowParams, SolverConfig, stable_dt


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MeshSection(_Strict):
    n_boundary: int = Field(320, ge=8)
    k_interior: int = Field(39, ge=2)
    quadrature_order: int = Field(8, ge=2)

    @model_validator(mode="after")
    def _divisible(self):
        if self.n_boundary % 4:
            raise ValueError("n_boundary must be divisible by 4")
        return self


class FlowSection(_Strict):
    reynolds: float = Field(ge=0)
    darcy: Optional[float] = Field(None, gt=0)
    porosity: float = Field(1.0, gt=0, le=1)
    viscosity_coeff: float = Field(1.0, gt=0)
    navier_stokes: bool = False

    @model_validator(mode="after")
    def _darcy_needed(self):
        if not self.navier_stokes and self.darcy is None:
            raise ValueError("darcy is required unless navier_stokes is true")
        return self


class SegmentSection(_Strict):
    velocity: float = 1.0
    slip: float = Field(0.0, ge=0)


class LidSection(_Strict):
    mode: Literal["single", "split"] = "single"
    segments: list[SegmentSection] = Field(default_factory=lambda: [SegmentSection()])
    leaky_corners: bool = False

    @model_validator(mode="after")
    def _count(self):
        want = 1 if self.mode == "single" else 2
        if len(self.segments) != want:
            raise ValueError(f"lid mode {self.mode!r} needs {want} segment(s), got {len(self.segments)}")
        return self


class SolverSection(_Strict):
    dt: Optional[float] = Field(None, gt=0)
    dt_factor: float = Field(0.9, gt=0)
    relax_omega: float = Field(1.0, gt=0, le=1)
    relax_omega_q: float = Field(1.0, gt=0, le=1)
    tol: float = Field(1e-6, gt=0)
    max_iters: int = Field(50000, ge=1)
    slip_derivative: Literal["drbem", "vorticity"] = "drbem"


class OutputSection(_Strict):
    dir: str = "out"
    resolution: int = Field(1000, ge=100)
    formats: list[Literal["csv", "json", "svg"]] = Field(default_factory=lambda: ["csv", "json"])
    residual_log: bool = False
    cache_dir: Optional[str] = None


class OracleSection(_Strict):
    n: int = Field(129, ge=33)
    tol: float = Field(1e-8, gt=0)
    max_sweeps: int = Field(200000, ge=1)
    sor_factor: float = Field(1.5, gt=0, lt=2)
    omega_relax: float = Field(0.5, gt=0, le=1)


class RunConfig(_Strict):
    mesh: MeshSection = Field(default_factory=MeshSection)
    flow: FlowSection
    lid: LidSection = Field(default_factory=LidSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    output: OutputSection = Field(default_factory=OutputSection)
    oracle: OracleSection = Field(default_factory=OracleSection)

    def flow_params(self) -> FlowParams:
        segs = [LidSegment(s.velocity, s.slip) for s in self.lid.segments]
        lid = SingleLid(segs[0]) if self.lid.mode == "single" else SplitLid(segs[0], segs[1])
        f = self.flow
        return FlowParams(
            reynolds=f.reynolds,
            darcy=f.darcy,
            porosity=f.porosity,
            viscosity_coeff=f.viscosity_coeff,
            navier_stokes=f.navier_stokes,
            lid=lid,
            leaky_corners=self.lid.leaky_corners,
        )

    def solver_config(self) -> SolverConfig:
        s = self.solver
        dt = s.dt if s.dt is not None else stable_dt(self.mesh.k_interior, s.dt_factor)
        return SolverConfig(
            dt=dt,
            relax_omega=s.relax_omega,
            relax_omega_q=s.relax_omega_q,
            tol=s.tol,
            max_iters=s.max_iters,
            slip_derivative=s.slip_derivative,
        )


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            problems.append(f"{loc}: {err['msg']}")
        raise ConfigError(problems) from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return parse_config(data)
