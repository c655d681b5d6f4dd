"""The HTTP face of the toolkit: one endpoint per solver plus experiment
batch runs, report scoring, and the query-oracle harness.

Domain errors map to stable status codes: malformed values and configs are
422, unreadable data is 400, and instances the solver proves infeasible
(``k + z >= n`` and friends) are 409.
"""

from __future__ import annotations

import math
from dataclasses import asdict

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import (
    BudgetExhausted,
    CountingSpace,
    DataError,
    Dataset,
    DistanceCounter,
    InfeasibleProblem,
    InfeasibleRung,
    PenaltyThreshold,
    RngStream,
)
from ..hardness import (
    exhaustive_label_cover,
    gen_hard_instance,
    oracle_fast_strategy,
    run_budgeted_eval,
    uniform_random_centers,
)
from ..local_search import local_search_with_outliers
from ..metropolis import _metropolized_sites, fast_algorithm
from ..distributed import run_distributed
from ..pipeline import (
    ConfigError,
    parse_config,
    report_from_dict,
    run_experiment,
    score_reports,
)
from ..seeding import overseed_penalized
from . import models

__all__ = ["app", "create_app"]


def _dataset(payload: models.PointsPayload) -> Dataset:
    coords = np.asarray(payload.points, dtype=float)
    weights = None if payload.weights is None else np.asarray(payload.weights)
    return Dataset(coords, weights)


def _solution_response(cls, sol, *, distance_evals=None, **extra):
    theta = float(sol.theta)
    return cls(
        centers=[[float(v) for v in row] for row in sol.centers.coords],
        outliers=list(sol.outliers),
        num_outliers=sol.n_outliers,
        phi_cost=sol.phi_cost,
        tau_cost=sol.tau_cost,
        theta=theta if math.isfinite(theta) else None,
        qualified=sol.qualified,
        distance_evals=distance_evals,
        **extra,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="kmeans-outliers", version=__version__)

    @app.get("/health", response_model=models.HealthResponse)
    def health():
        return models.HealthResponse(status="ok", version=__version__)

    @app.post("/seed", response_model=models.SeedResponse)
    def seed(req: models.SeedRequest):
        data = _dataset(req)
        counter = DistanceCounter()
        space = CountingSpace(data, counter)
        theta = (PenaltyThreshold.infinite() if req.theta is None
                 else PenaltyThreshold(req.theta))
        rng = RngStream(req.seed, 0)
        if req.metropolized:
            sites = _metropolized_sites(space, req.ell, float(theta),
                                        req.mh_steps, rng.generator())
        else:
            sites, _ = overseed_penalized(space, req.ell, theta, rng)
        return models.SeedResponse(
            sites=[int(s) for s in sites],
            centers=[[float(v) for v in data.coords[s]] for s in sites],
            distance_evals=counter.count,
        )

    @app.post("/local-search", response_model=models.SolutionResponse)
    def local_search(req: models.LocalSearchRequest):
        data = _dataset(req)
        sol = local_search_with_outliers(data, req.k, req.z, req.eps,
                                         rng=RngStream(req.seed, 0))
        return _solution_response(models.SolutionResponse, sol)

    @app.post("/fast", response_model=models.SolutionResponse)
    def fast(req: models.FastRequest):
        data = _dataset(req)
        counter = DistanceCounter()
        sol = fast_algorithm(data, req.k, req.z, RngStream(req.seed, 0),
                             A=req.a, counter=counter)
        return _solution_response(models.SolutionResponse, sol,
                                  distance_evals=counter.count)

    @app.post("/distributed", response_model=models.DistributedResponse)
    def distributed(req: models.DistributedRequest):
        data = _dataset(req)
        sol, ledger = run_distributed(data, req.machines, req.k, req.z, req.eps,
                                      req.mode, RngStream(req.seed, 0),
                                      alpha=req.alpha)
        return _solution_response(
            models.DistributedResponse, sol,
            message_scalars=ledger.total,
            per_machine={int(m): int(c) for m, c in ledger.scalars.items()},
        )

    @app.post("/hardness", response_model=models.HardnessResponse)
    def hardness(req: models.HardnessRequest):
        instance = gen_hard_instance(req.n, req.k, req.z, RngStream(req.seed, 0),
                                     mass_mult=req.mass_mult)
        if req.strategy == "uniform":
            strategy = uniform_random_centers(RngStream(req.seed, 1))
        elif req.strategy == "fast":
            strategy = oracle_fast_strategy(RngStream(req.seed, 1))
        else:
            strategy = exhaustive_label_cover
        sol, used = run_budgeted_eval(instance, strategy, req.budget,
                                      outlier_mult=req.outlier_mult)
        return models.HardnessResponse(
            center_sites=[int(row[0]) for row in sol.centers.coords],
            outliers=list(sol.outliers),
            num_outliers=sol.n_outliers,
            phi_cost=sol.phi_cost,
            queries_used=used,
            budget=req.budget,
            relaxed_constants=instance.relaxed_constants,
        )

    @app.post("/experiment", response_model=models.ExperimentResponse)
    def experiment(req: models.ExperimentRequest):
        cfg = parse_config(req.config)
        data = _dataset(req)
        reports = run_experiment(cfg, data, threads=req.threads)
        return models.ExperimentResponse(reports=[asdict(r) for r in reports])

    @app.post("/score", response_model=models.ScoreResponse)
    def score(req: models.ScoreRequest):
        data = _dataset(req)
        try:
            reports = [report_from_dict(d) for d in req.reports]
        except KeyError as exc:
            raise ConfigError(f"report is missing field {exc}") from None
        results = score_reports(data, reports)
        return models.ScoreResponse(results=results,
                                    all_ok=all(r["ok"] for r in results))

    def _as_detail(status: int):
        def handler(_, exc):
            return JSONResponse({"detail": str(exc)}, status_code=status)
        return handler

    app.add_exception_handler(DataError, _as_detail(400))
    app.add_exception_handler(ConfigError, _as_detail(422))
    app.add_exception_handler(ValueError, _as_detail(422))
    app.add_exception_handler(InfeasibleProblem, _as_detail(409))
    app.add_exception_handler(InfeasibleRung, _as_detail(409))
    app.add_exception_handler(BudgetExhausted, _as_detail(409))
    return app


app = create_app()
