# API v1 routers package initialization

from .builtins import router as builtins_router
from .experiments import router as experiments_router
from .health import router as health_router

__all__ = ["builtins_router", "experiments_router", "health_router"]
