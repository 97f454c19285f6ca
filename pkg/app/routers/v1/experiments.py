"""
Experiment router: run a spec in-process and return its summary.
"""
import logging
from typing import Any, Dict

from fastapi import APIRouter, Body, HTTPException, status
from fastapi.concurrency import run_in_threadpool

from app.core.exceptions import DynkinError, SpecValidationError
from app.services.experiment_service import experiment_service
from app.utils.report_writer import ReportWriter

logger = logging.getLogger(__name__)
router = APIRouter(prefix="/experiments", tags=["experiments"])


@router.post("")
async def run_experiment(spec: Dict[str, Any] = Body(...), include_details: bool = False):
    """
    Run an experiment specification.

    **Body:** an experiment spec (schema_version "1.0").

    **Returns:**
    - The run summary; with `include_details`, the full per-check reports
    - 422 for invalid specs, 400 for solver refusals
    """
    try:
        parsed = experiment_service.validate_spec(spec, source="request")
    except SpecValidationError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))

    try:
        summary, reports = await run_in_threadpool(experiment_service.run, parsed)
    except DynkinError as e:
        logger.error(f"Experiment '{parsed.name}' refused: {str(e)}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    payload = {"summary": summary}
    if include_details:
        payload["checks"] = reports
    return ReportWriter.create_standardized_response(payload)
