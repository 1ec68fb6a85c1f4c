#!/usr/bin/env python3
"""
GHZ-Share HTTP server.

Read and run surface over the run registry: list stored runs, show a run
with its parameters, stream its public transcript, validate a
configuration and start a new run.
"""

import io
import logging
import os
from datetime import datetime, timezone
from pathlib import Path as FilePath
from pathlib import PurePath
from typing import Any, Dict, List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException, Path, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import __version__
from .cli import EXIT_INVALID_CONFIG, execute
from .config import (
    SCENARIOS, SEED_MAX, ConfigurationError, ScenarioConfig, apply_overrides, build_config, validate
)
from .database import (
    DatabaseError, RUN_STATUSES, get_database_stats, get_run, get_run_parameters, get_runs,
    set_db_path
)
from .export import ExportError, read_public_transcript

# Configure logging
logger = logging.getLogger(__name__)

PUBLIC_TRANSCRIPT = 'transcript_public.csv'
RESULTS_ROOT_ENV = 'GHZSHARE_RESULTS'


# Pydantic models for API request/response validation
class RunRecord(BaseModel):
    """Stored run model."""
    id: int
    created_at: str
    scenario: str
    seed: int
    status: str
    exit_code: int
    output_path: str
    duration_seconds: float
    summary: Dict[str, Any]


class ConfigPayload(BaseModel):
    """Configuration given as sections of key/value pairs, like the INI file."""
    sections: Dict[str, Dict[str, Any]] = Field(default_factory=dict)


class ValidationResult(BaseModel):
    """Configuration validation result model."""
    valid: bool
    diagnostics: List[str]


class RunRequest(ConfigPayload):
    """Run request model."""
    scenario: Optional[str] = Field(None, description=f"One of {', '.join(SCENARIOS)}")
    seed: Optional[int] = Field(None, ge=0, le=SEED_MAX)
    output_path: Optional[str] = None


class RunResponse(BaseModel):
    """Run response model."""
    run_id: Optional[int]
    exit_code: int
    status: str
    diagnostics: List[str]
    artifacts: List[str]
    summary: Dict[str, Any]


def _error_body(request: Request, error: str, message: str, **extra: Any) -> Dict[str, Any]:
    body = {
        "error": error,
        "message": message,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "path": str(request.url),
    }
    body.update(extra)
    return body


def _request_config(payload: ConfigPayload) -> ScenarioConfig:
    return build_config(payload.sections)


def resolve_output_path(requested: str, root: FilePath) -> FilePath:
    """
    Place a client-supplied output directory under the results root.

    Args:
        requested: Relative directory named by the client
        root: Directory all API runs write into

    Returns:
        FilePath: Resolved directory inside the root

    Raises:
        HTTPException: 400 for empty or absolute paths, '..' segments and
            symlinks leading out of the root
    """
    relative = PurePath(requested)
    if not requested.strip() or relative.is_absolute() or '..' in relative.parts:
        raise HTTPException(status_code=400,
                            detail=f"Output path must be relative to the results root: {requested}")
    base = root.resolve()
    target = (base / relative).resolve()
    if target != base and base not in target.parents:
        raise HTTPException(status_code=400, detail=f"Output path leaves the results root: {requested}")
    return target


def create_app(db_path: Optional[str] = None, results_root: Optional[str] = None) -> FastAPI:
    """
    Create and configure the FastAPI application.

    Args:
        db_path: Run registry location
        results_root: Directory receiving the artifacts of API runs,
            GHZSHARE_RESULTS or 'results' when not given
    """
    if db_path is not None:
        set_db_path(db_path)
    results_dir = FilePath(results_root or os.environ.get(RESULTS_ROOT_ENV, 'results'))

    app = FastAPI(
        title="GHZ-Share",
        description="Three-party quantum secret sharing simulator",
        version=__version__,
        docs_url="/docs",
        redoc_url="/redoc",
        openapi_url="/openapi.json"
    )

    # Global exception handlers
    @app.exception_handler(ConfigurationError)
    async def configuration_error_handler(request: Request, exc: ConfigurationError):
        logger.warning(f"Configuration error: {exc}")
        return JSONResponse(
            status_code=422,
            content=_error_body(request, "ConfigurationError", str(exc), diagnostics=exc.diagnostics)
        )

    @app.exception_handler(DatabaseError)
    async def database_error_handler(request: Request, exc: DatabaseError):
        logger.error(f"Database error: {exc}")
        return JSONResponse(status_code=500, content=_error_body(request, "DatabaseError", str(exc)))

    @app.exception_handler(ExportError)
    async def export_error_handler(request: Request, exc: ExportError):
        logger.error(f"Export error: {exc}")
        return JSONResponse(status_code=500, content=_error_body(request, "ExportError", str(exc)))

    @app.exception_handler(HTTPException)
    async def http_exception_handler(request: Request, exc: HTTPException):
        logger.warning(f"HTTP exception: {exc.status_code} - {exc.detail}")
        return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})

    @app.exception_handler(Exception)
    async def general_exception_handler(request: Request, exc: Exception):
        logger.error(f"Unexpected error: {exc}", exc_info=True)
        return JSONResponse(
            status_code=500,
            content=_error_body(request, "InternalServerError", "An unexpected error occurred")
        )

    @app.get("/")
    async def root():
        """Root endpoint."""
        return {
            "name": "GHZ-Share",
            "version": __version__,
            "description": "Three-party quantum secret sharing simulator",
            "scenarios": list(SCENARIOS),
        }

    @app.get("/health")
    async def health_check():
        """Health check endpoint, including the run registry."""
        return {"status": "healthy", "database": get_database_stats()}

    # ============================================================================
    # RUN REGISTRY ENDPOINTS
    # ============================================================================

    @app.get("/api/runs",
             response_model=List[RunRecord],
             summary="List runs",
             description="Stored runs, newest first, with optional filtering.")
    def list_runs(
        limit: int = Query(50, ge=1, le=1000, description="Maximum number of runs"),
        offset: int = Query(0, ge=0, description="Number of runs to skip"),
        scenario: Optional[str] = Query(None, description="Filter by scenario"),
        status: Optional[str] = Query(None, description="Filter by status")
    ):
        if scenario is not None and scenario not in SCENARIOS:
            raise HTTPException(status_code=400, detail=f"Unknown scenario: {scenario}")
        if status is not None and status not in RUN_STATUSES:
            raise HTTPException(status_code=400, detail=f"Unknown status: {status}")
        return get_runs(limit=limit, offset=offset, scenario=scenario, status=status)

    def _existing_run(run_id: int) -> Dict[str, Any]:
        run = get_run(run_id)
        if run is None:
            raise HTTPException(status_code=404, detail=f"Run {run_id} not found")
        return run

    @app.get("/api/runs/{run_id}", response_model=RunRecord, summary="Get run")
    def show_run(run_id: int = Path(..., ge=1, description="Run ID")):
        return _existing_run(run_id)

    @app.get("/api/runs/{run_id}/parameters",
             response_model=Dict[str, str],
             summary="Get run parameters",
             description="Resolved configuration of a run as dotted keys.")
    def show_run_parameters(run_id: int = Path(..., ge=1, description="Run ID")):
        _existing_run(run_id)
        return get_run_parameters(run_id)

    @app.get("/api/runs/{run_id}/transcript",
             summary="Export public transcript",
             description="Public announcements of a keygen run as CSV. Secret columns are never served.")
    def export_transcript(run_id: int = Path(..., ge=1, description="Run ID")):
        run = _existing_run(run_id)
        transcript = FilePath(run['output_path']) / PUBLIC_TRANSCRIPT
        if not transcript.is_file():
            raise HTTPException(status_code=404, detail=f"Run {run_id} has no public transcript")
        # parsing first rejects anything that is not a public transcript
        read_public_transcript(transcript)
        content = transcript.read_text(encoding='utf-8')
        return StreamingResponse(
            io.StringIO(content),
            media_type="text/csv",
            headers={"Content-Disposition": f"attachment; filename=run_{run_id}_{PUBLIC_TRANSCRIPT}"}
        )

    # ============================================================================
    # CONFIGURATION AND EXECUTION ENDPOINTS
    # ============================================================================

    @app.post("/api/config/validate", response_model=ValidationResult, summary="Validate configuration")
    def validate_config(payload: ConfigPayload):
        try:
            config = _request_config(payload)
        except ConfigurationError as e:
            return ValidationResult(valid=False, diagnostics=e.diagnostics or [str(e)])
        diagnostics = validate(config)
        return ValidationResult(valid=not diagnostics, diagnostics=diagnostics)

    @app.post("/api/runs",
              response_model=RunResponse,
              summary="Start run",
              description="Run a scenario synchronously and record it.")
    def start_run(request: RunRequest):
        if request.scenario is not None and request.scenario not in SCENARIOS:
            raise HTTPException(status_code=400, detail=f"Unknown scenario: {request.scenario}")
        config = apply_overrides(_request_config(request), scenario=request.scenario, seed=request.seed)
        requested = request.output_path
        if requested is None:
            requested = request.sections.get('cli', {}).get('output_path', config.scenario.name)
        output_path = resolve_output_path(str(requested), results_dir)
        config = apply_overrides(config, output_path=str(output_path))
        logger.info(f"API run of scenario {config.scenario.name} with seed {config.scenario.seed}")
        result = execute(config, record=True)
        if result.exit_code == EXIT_INVALID_CONFIG:
            raise ConfigurationError("Invalid configuration", result.diagnostics)
        stored = get_run(result.run_id) if result.run_id is not None else None
        outcome = result.outcome
        return RunResponse(
            run_id=result.run_id,
            exit_code=result.exit_code,
            status=result.status,
            diagnostics=result.diagnostics,
            artifacts=[str(path) for path in outcome.artifacts] if outcome else [],
            summary=stored['summary'] if stored else {},
        )

    return app


def main() -> None:
    """Main entry point for the server."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    db_path = os.environ.get("GHZSHARE_DB", "ghzshare.db")
    set_db_path(db_path)

    app = create_app()
    uvicorn.run(
        app,
        host=os.environ.get("GHZSHARE_HOST", "127.0.0.1"),
        port=int(os.environ.get("GHZSHARE_PORT", "8000")),
        log_level="info"
    )


if __name__ == "__main__":
    main()
