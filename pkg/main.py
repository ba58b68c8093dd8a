from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from src import __version__
from src.api import run_router
from src.config import settings
from src.utils import configure_logging

configure_logging()

# Create FastAPI app
app = FastAPI(
    title="Wick NLS Lab",
    description="Browser for the runs of the Wick-ordered NLS laboratory: manifests, tables and digests",
    version=__version__,
    docs_url="/docs",
    redoc_url="/redoc"
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(run_router)


@app.get("/", tags=["Root"])
async def root():
    """
    Root endpoint - service information.
    """
    return {
        "message": "Wick NLS Lab run browser",
        "version": __version__,
        "docs": "/docs",
        "redoc": "/redoc",
        "endpoints": {
            "runs": "/runs",
            "run": "/runs/{run_id}",
            "tables": "/runs/{run_id}/tables",
            "table": "/runs/{run_id}/tables/{name}",
            "clear": "/runs/clear"
        }
    }


@app.get("/health", tags=["Health"])
async def health_check():
    """
    Health check endpoint.
    """
    return {
        "status": "healthy",
        "runs_path": str(settings.runs_path),
        "runs_path_exists": settings.runs_path.is_dir(),
        "workers": settings.workers
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run("main:app", host="0.0.0.0", port=8000, reload=True)
