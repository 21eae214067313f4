import logging
from typing import Optional

from fastapi import HTTPException, status

from app.core.config import settings
from app.core.errors import WattLensError
from app.schemas.run import RunConfig
from app.services.ric_service import RicSession

logger = logging.getLogger(__name__)

# Lazy RIC session creation
_session: Optional[RicSession] = None


def set_session(session: Optional[RicSession]) -> None:
    """Install the session the routes serve (the CLI does this before uvicorn starts)"""
    global _session
    _session = session


def get_ric_session() -> RicSession:
    """Get or create the RIC session lazily from settings"""
    global _session
    if _session is None:
        try:
            config = RunConfig.from_settings(
                settings,
                dataset_path=settings.RIC_DATA_PATH,
            )
            _session = RicSession.from_config(config, settings.RIC_MODEL_PATH)
            logger.info("RIC session created from settings")
        except WattLensError as e:
            logger.error(f"RIC session unavailable: {e}")
            raise HTTPException(
                status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
                detail=f"RIC session unavailable: {e}",
            )
    return _session


def close_session() -> None:
    global _session
    if _session is not None:
        logger.info(f"RIC session closed after {_session.handled} records")
        _session = None
