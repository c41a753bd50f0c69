"""
Main FastAPI application for the carbon-aware FaaS scheduler.
"""
import glob
import json
import os
from datetime import datetime
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.concurrency import run_in_threadpool

from config import parse_config, settings
from models.schemas import ExperimentRunRequest, HealthResponse, SummaryResponse
from services.experiment_service import run_experiment
from utils import setup_logging

setup_logging(settings.log_level)

# Initialize FastAPI app
app = FastAPI(
    title="Carbon-Aware FaaS Scheduler API",
    description="Run carbon- and SLO-aware container placement experiments",
    version="1.0.0"
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/", tags=["Root"])
async def root():
    """Root endpoint."""
    return {
        "message": "Carbon-Aware FaaS Scheduler API",
        "version": "1.0.0",
        "docs": "/docs"
    }


@app.get("/health", response_model=HealthResponse, tags=["Health"])
async def health_check():
    """
    Health check endpoint; reports whether the default experiment config
    and the data files it references can be loaded.
    """
    default_found = Path(settings.default_config_path).is_file()
    if not default_found:
        return HealthResponse(
            status="degraded",
            message=f"Default config not found: {settings.default_config_path}",
            default_config_found=False,
        )
    try:
        parse_config(settings.default_config_path)
    except ValueError as e:
        return HealthResponse(status="degraded", message=str(e), default_config_found=True)
    return HealthResponse(status="healthy", message="Service is running", default_config_found=True)


@app.post("/experiments/run", response_model=SummaryResponse, tags=["Experiments"])
async def run_experiment_endpoint(request: ExperimentRunRequest):
    """
    Run one experiment and write its metrics under the output directory.

    Args:
        request: Config path (defaults to the bundled config), policy,
            seed and optional parameter overrides

    Returns:
        SummaryResponse with the day-level results and output file paths
    """
    config_path = request.config_path or settings.default_config_path
    if not Path(config_path).is_file():
        raise HTTPException(status_code=404, detail=f"Config not found: {config_path}")

    stamp = datetime.now().strftime("%Y%m%dT%H%M%S%f")
    out_dir = Path(settings.output_dir)
    overrides = {
        "policy": request.policy,
        "seed": request.seed,
        "intensity": request.intensity,
        "laxity": request.laxity,
        "cstr": request.cstr,
        "nodes": request.nodes,
        "out": str(out_dir / f"metrics_{stamp}.csv"),
        "summary": str(out_dir / f"summary_{stamp}.json"),
    }
    try:
        config = parse_config(config_path, overrides)
        result = await run_in_threadpool(run_experiment, config)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"Experiment failed: {str(e)}")

    return SummaryResponse(
        **result.summary,
        metrics_file_path=str(config.out),
        summary_file_path=str(config.summary),
    )


@app.get("/summary/latest", response_model=SummaryResponse, tags=["Experiments"])
async def get_latest_summary():
    """
    Retrieve the most recent experiment summary.

    Returns:
        SummaryResponse read from the newest summary file
    """
    summary_files = glob.glob(f"{settings.output_dir}/summary_*.json")
    if not summary_files:
        raise HTTPException(status_code=404, detail="No summaries found")

    latest_file = max(summary_files, key=os.path.getmtime)
    try:
        with open(latest_file, 'r') as f:
            summary = json.load(f)
        return SummaryResponse(**summary, summary_file_path=latest_file)
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"Error retrieving latest summary: {str(e)}")


@app.get("/config", tags=["Configuration"])
async def get_config():
    """
    Get current API configuration (non-sensitive values only).
    """
    return {
        "default_config_path": settings.default_config_path,
        "output_dir": settings.output_dir,
        "decision_budget_s": settings.decision_budget_s,
        "eval_workers": settings.eval_workers,
        "oracle_bound": settings.oracle_bound,
        "log_level": settings.log_level,
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "main:app",
        host=settings.api_host,
        port=settings.api_port,
        reload=settings.api_reload
    )
