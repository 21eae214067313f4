import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI

from app.api import ric
from app.api.deps import close_session
from app.core.config import settings

# Configure logging
logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan manager"""
    logger.info("Starting WattLens RIC simulator...")

    yield

    logger.info("Shutting down WattLens RIC simulator...")
    close_session()


app = FastAPI(
    title=settings.APP_NAME,
    version=settings.APP_VERSION,
    description="""
    WattLens - explainable power prediction for virtualized RAN base stations

    ## RIC loop

    * **POST /api/v1/ric/records**: one telemetry record in, prediction + attribution + control message out
    * **POST /api/v1/ric/stream**: line-delimited records in, line-delimited transcript out

    Control messages are E2-style recommendations; nothing is applied to a live network.
    """,
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)

app.include_router(ric.router, prefix="/api/v1")


@app.get("/", tags=["Root"])
async def root():
    """Root endpoint with application information"""
    return {
        "message": "Welcome to WattLens",
        "version": settings.APP_VERSION,
        "docs": "/docs",
        "health": "/health",
    }


@app.get("/health", tags=["Health"])
async def health_check():
    """Health check endpoint for monitoring"""
    return {
        "status": "healthy",
        "service": settings.APP_NAME,
        "version": settings.APP_VERSION,
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("app.main:app", host="127.0.0.1", port=8000, log_level="info")
