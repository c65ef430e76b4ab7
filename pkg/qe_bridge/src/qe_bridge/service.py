"""HTTP surface: one batch scoring endpoint plus a liveness probe."""

from __future__ import annotations

import os
import time

from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .metrics import CONTEXT_TAG, ModelUnavailableError, ScoringModel, UnavailableModel, load_model
from .schema import HealthResponse, ScoreRequest, ScoreResponse

ENV_MODEL = "QE_BRIDGE_MODEL"
ENV_PORT = "QE_BRIDGE_PORT"


def create_app(model_id: str | None = None) -> FastAPI:
    """Build the service around one scoring model; model id falls back to the env."""
    resolved = model_id or os.environ.get(ENV_MODEL) or "stub-charf"
    model: ScoringModel = load_model(resolved)
    started = time.monotonic()
    app = FastAPI(title="qe-bridge", docs_url=None, redoc_url=None)

    # Schema violations are caller errors: report 400, not the framework's 422.
    @app.exception_handler(RequestValidationError)
    async def _validation_to_400(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": jsonable_encoder(exc.errors())})

    @app.post("/v1/score", response_model=ScoreResponse)
    def score(request: ScoreRequest) -> ScoreResponse | JSONResponse:
        try:
            scores = model.score_batch(request.metric, request.items)
        except ModelUnavailableError as exc:
            return JSONResponse(status_code=503, content={"detail": str(exc)})
        reported = model.model_id
        if request.metric == "context_ref_based":
            reported = f"{reported}+{CONTEXT_TAG}"
        return ScoreResponse(scores=scores, model_id=reported)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            ok=not isinstance(model, UnavailableModel),
            model_id=model.model_id,
            uptime=time.monotonic() - started,
        )

    return app
