"""
Diffusion Open-ended Goal Planner API
Main FastAPI application
"""
import logging
from typing import Annotated

from fastapi import Depends, FastAPI, HTTPException, status
from fastapi.exceptions import RequestValidationError
from fastapi.openapi.utils import get_openapi
from fastapi.responses import JSONResponse

import config
from middleware.auth import verify_api_key
from models.api_models import EnergyRequest, EnergyResponse, HealthResponse, PlanRequest, PlanResponse
from models.config_models import GuidanceConfig
from models.goal_spec import GoalSpecError, goal_tags, parse_goal_obj
from utils.maze_env import EnvState
from utils.plan_service import PlannerUnavailableError, PlanService

logger = logging.getLogger(__name__)

app = FastAPI(
    title="Diffusion Open-ended Goal Planner API",
    description="""
    ## Diffusion Open-ended Goal Planner API

    Samples plan windows for a point mass in a grid maze from an unconditional
    trajectory diffusion model, steered at test time by a goal energy.

    ### Quick Checks
    - Health check: GET /health (no API key required)
    - API documentation: GET /docs
    - Root endpoint: GET / (returns API information and goal tags)

    ### Authentication
    Planning and energy requests require a valid API key in the x-api-key header.

    ### Goal specs
    Goals are single-key tagged JSON objects, for example
    `{"state": {"x": 4.5, "y": 4.5}}` or
    `{"hybrid": [{"w": 1, "g": {"state": {"x": 4.5, "y": 4.5}}}, {"w": 10, "g": {"avoid": {"x": 2.5, "y": 2.5, "sigma": 1}}}]}`.
    """,
    version="1.0.0",
    license_info={"name": "MIT"},
    tags_metadata=[
        {"name": "Planning", "description": "Goal-guided plan windows and goal energies"},
        {"name": "Health", "description": "Health check and status endpoints"},
    ],
)

plan_service = PlanService()

PROTECTED_PATHS = ("/api/plan", "/api/goal/energy")


@app.get("/", tags=["Health"], summary="Root endpoint", response_description="API information")
async def root():
    """Returns API information and the accepted goal tags."""
    return {
        "message": "Diffusion Open-ended Goal Planner API",
        "version": "1.0.0",
        "goal_tags": goal_tags(),
    }


@app.get("/health", tags=["Health"], summary="Health check", response_model=HealthResponse)
async def health_check():
    return HealthResponse(status="healthy", planner_loaded=plan_service.planner_loaded)


@app.post(
    "/api/plan",
    response_model=PlanResponse,
    tags=["Planning"],
    summary="Sample a goal-guided plan window",
    status_code=status.HTTP_200_OK,
    responses={
        401: {"description": "Invalid or missing API key",
              "content": {"application/json": {"example": {"status": "error", "message": "Invalid API key"}}}},
        422: {"description": "Malformed goal or request",
              "content": {"application/json": {"example": {"status": "error",
                                                           "message": "$: unknown goal tag 'bogus'"}}}},
        503: {"description": "Planner checkpoint unavailable"},
    },
)
def plan(request: PlanRequest, api_key: Annotated[str, Depends(verify_api_key)]) -> PlanResponse:
    """
    Sample one plan window from `start` towards `goal`.

    Args:
        request: Goal, start state, seed and optional guidance overrides
        api_key: Verified API key from dependency

    Returns:
        PlanResponse with the window rows [x, y, vx, vy] and the goal energy
    """
    goal = parse_goal_obj(request.goal)
    guidance = GuidanceConfig(**request.guidance_overrides())
    start = EnvState(request.start.x, request.start.y, request.start.vx, request.start.vy)
    result = plan_service.plan(goal, start, request.seed, guidance)
    return PlanResponse(
        status="success",
        horizon=result.horizon,
        states=result.states.astype(float).tolist(),
        energy=result.energy,
    )


@app.post("/api/goal/energy", response_model=EnergyResponse, tags=["Planning"], summary="Evaluate a goal energy")
def goal_energy(request: EnergyRequest, api_key: Annotated[str, Depends(verify_api_key)]) -> EnergyResponse:
    """Energy and gradient of `goal` on a caller-supplied window."""
    goal = parse_goal_obj(request.goal)
    result = PlanService.energy(goal, request.states)
    return EnergyResponse(status="success", energy=result.value, gradient=result.grad.tolist())


def custom_openapi():
    if app.openapi_schema:
        return app.openapi_schema
    openapi_schema = get_openapi(
        title=app.title,
        version=app.version,
        description=app.description,
        routes=app.routes,
    )
    openapi_schema.setdefault("components", {})["securitySchemes"] = {
        "ApiKeyAuth": {
            "type": "apiKey",
            "in": "header",
            "name": config.API_KEY_HEADER,
            "description": "API key, sent as: x-api-key: YOUR_API_KEY",
        }
    }
    for path, path_item in openapi_schema["paths"].items():
        if path in PROTECTED_PATHS:
            for operation in path_item.values():
                operation["security"] = [{"ApiKeyAuth": []}]
    app.openapi_schema = openapi_schema
    return app.openapi_schema


app.openapi = custom_openapi


def _error(status_code: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"status": "error", "message": message})


@app.exception_handler(HTTPException)
async def http_exception_handler(request, exc: HTTPException):
    return _error(exc.status_code, exc.detail)


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request, exc: RequestValidationError):
    first = exc.errors()[0] if exc.errors() else {}
    where = ".".join(str(part) for part in first.get("loc", ()))
    return _error(status.HTTP_422_UNPROCESSABLE_ENTITY, f"{where}: {first.get('msg', 'invalid request')}")


@app.exception_handler(GoalSpecError)
async def goal_spec_exception_handler(request, exc: GoalSpecError):
    return _error(status.HTTP_422_UNPROCESSABLE_ENTITY, str(exc))


@app.exception_handler(ValueError)
async def value_error_handler(request, exc: ValueError):
    return _error(status.HTTP_422_UNPROCESSABLE_ENTITY, str(exc))


@app.exception_handler(PlannerUnavailableError)
async def planner_unavailable_handler(request, exc: PlannerUnavailableError):
    logger.warning("plan request without a planner: %s", exc)
    return _error(status.HTTP_503_SERVICE_UNAVAILABLE, str(exc))


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
