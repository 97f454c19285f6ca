from datetime import datetime, timezone

from fastapi import APIRouter
from fastapi.encoders import jsonable_encoder

from app.config import settings
from app.utils.report_writer import ReportWriter

router = APIRouter()


@router.get("/health")
async def health_check():
    """Basic health check endpoint."""
    response_data = {
        "status": "healthy",
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "service": settings.project_name,
        "version": settings.version
    }
    return ReportWriter.create_standardized_response(jsonable_encoder(response_data))


@router.get("/health/live")
async def liveness_check():
    """Liveness check."""
    return ReportWriter.create_standardized_response({"status": "alive"})
