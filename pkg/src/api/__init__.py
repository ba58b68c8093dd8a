from .run_routes import router as run_router

__all__ = ["run_router"]
