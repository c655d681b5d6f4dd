"""Pydantic request/response schemas for the clustering service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PointsPayload(_Strict):
    """A dataset shipped inline: one row per point, optional integer weights."""

    points: list[list[float]] = Field(min_length=1)
    weights: list[int] | None = None


class SeedRequest(PointsPayload):
    ell: int = Field(ge=1, description="number of centers to oversample")
    theta: float | None = Field(default=None, gt=0.0,
                                description="penalty threshold; omit for none")
    seed: int = 0
    metropolized: bool = False
    mh_steps: int = Field(default=100, ge=1)


class SeedResponse(BaseModel):
    sites: list[int]
    centers: list[list[float]]
    distance_evals: int


class LocalSearchRequest(PointsPayload):
    k: int = Field(ge=1)
    z: int = Field(ge=0)
    eps: float = Field(default=0.5, gt=0.0, le=1.0)
    seed: int = 0


class FastRequest(PointsPayload):
    k: int = Field(ge=1)
    z: int = Field(ge=0)
    seed: int = 0
    a: float = Field(default=2.0, gt=0.0, description="outlier-slack exponent base")


class DistributedRequest(PointsPayload):
    k: int = Field(ge=1)
    z: int = Field(ge=0)
    eps: float = Field(default=0.5, gt=0.0, le=1.0)
    machines: int = Field(default=10, ge=1)
    mode: Literal["guha_simple", "guha_refined", "kmeans_par"] = "guha_simple"
    seed: int = 0
    alpha: float = Field(default=1.0, gt=0.0)


class SolutionResponse(BaseModel):
    centers: list[list[float]]
    outliers: list[int]
    num_outliers: int
    phi_cost: float
    tau_cost: float
    theta: float | None
    qualified: bool
    distance_evals: int | None = None


class DistributedResponse(SolutionResponse):
    message_scalars: int
    per_machine: dict[int, int]


class HardnessRequest(_Strict):
    n: int = Field(ge=2)
    k: int = Field(ge=2)
    z: int = Field(ge=1)
    budget: int = Field(ge=0)
    strategy: Literal["uniform", "exhaustive", "fast"] = "fast"
    seed: int = 0
    mass_mult: float = Field(default=100.0, gt=0.0)
    outlier_mult: float = Field(default=2.0, ge=1.0)


class HardnessResponse(BaseModel):
    center_sites: list[int]
    outliers: list[int]
    num_outliers: int
    phi_cost: float
    queries_used: int
    budget: int
    relaxed_constants: bool


class ExperimentRequest(PointsPayload):
    config: str
    threads: int = Field(default=1, ge=1)


class ExperimentResponse(BaseModel):
    reports: list[dict]


class ScoreRequest(PointsPayload):
    reports: list[dict] = Field(min_length=1)


class ScoreResponse(BaseModel):
    results: list[dict]
    all_ok: bool


class HealthResponse(BaseModel):
    status: str
    version: str
