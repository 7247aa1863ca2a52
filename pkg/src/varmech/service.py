"""HTTP service exposing the engine.

Each endpoint accepts a `ProblemConfig` JSON body (the same schema the CLI
reads from disk) and returns a typed report.  Semantic config problems map
to 400 with a message carrying the offending field or parse location;
numerical failures (singular Legendre maps, non-convergence, drift beyond
tolerance) are legitimate outcomes and come back as 200 with status
"failed" or "violation".
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import __version__
from .runners import (
    ConfigError, run_check, run_derive, run_plateau, run_residual, run_simulate,
)
from .schemas import (
    CheckResponse, PlateauResponse, ProblemConfig, ResidualResponse,
    RunReport, SimulateResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="varmech",
        version=__version__,
        description="Variational mechanics engine: Euler-Lagrange derivation on Lie "
                    "algebroids, higher-order mechanics, and minimal-surface solving.",
    )

    def guard(fn, cfg):
        try:
            return fn(cfg)
        except ConfigError as err:
            raise HTTPException(status_code=400, detail=str(err)) from err

    @app.get("/")
    def info() -> dict:
        return {
            "name": "varmech",
            "version": __version__,
            "endpoints": ["/check", "/derive", "/simulate", "/plateau", "/residual"],
        }

    @app.post("/check", response_model=CheckResponse)
    def check(cfg: ProblemConfig) -> CheckResponse:
        return guard(run_check, cfg)

    @app.post("/derive", response_model=RunReport)
    def derive(cfg: ProblemConfig) -> RunReport:
        return guard(run_derive, cfg)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(cfg: ProblemConfig) -> SimulateResponse:
        return guard(run_simulate, cfg)

    @app.post("/plateau", response_model=PlateauResponse)
    def plateau(cfg: ProblemConfig) -> PlateauResponse:
        return guard(run_plateau, cfg)

    @app.post("/residual", response_model=ResidualResponse)
    def residual(cfg: ProblemConfig) -> ResidualResponse:
        return guard(run_residual, cfg)

    return app


app = create_app()
