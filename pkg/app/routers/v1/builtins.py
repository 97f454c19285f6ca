"""
Built-in catalog endpoint.
"""
import logging

from fastapi import APIRouter

from app.services.builtin_service import builtin_service
from app.utils.report_writer import ReportWriter

logger = logging.getLogger(__name__)
router = APIRouter(prefix="/builtins", tags=["builtins"])


@router.get("")
async def list_builtins():
    """
    List payoff and dynamics built-ins.

    **Returns:**
    - Payoff maps and diffusions with their parameter JSON schemas
    """
    catalog = builtin_service.list_builtins()
    logger.info(f"Listed {len(catalog['payoffs'])} payoffs and {len(catalog['dynamics'])} dynamics")
    return ReportWriter.create_standardized_response(catalog)
