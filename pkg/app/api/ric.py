from fastapi import APIRouter, Depends, HTTPException, Request, status
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import PlainTextResponse

from app.api.deps import get_ric_session
from app.core.errors import WattLensError
from app.schemas.ric import RicResponse, TelemetryRecord
from app.services.ric_service import RicSession

router = APIRouter(prefix="/ric", tags=["RIC"])


@router.post("/records", response_model=RicResponse)
def post_record(
    record: TelemetryRecord,
    session: RicSession = Depends(get_ric_session),
):
    """
    Explain one telemetry record and return the tuning recommendation.

    The response carries the predicted power, the attribution of every
    feature and an E2-style control message.
    """
    try:
        return session.respond_next(record)
    except WattLensError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=f"[{e.module}] {e}",
        )


@router.post("/stream", response_class=PlainTextResponse)
async def post_stream(
    request: Request,
    session: RicSession = Depends(get_ric_session),
):
    """
    Replay a line-delimited stream of records.

    Returns one line per non-blank input line, in input order; malformed
    lines yield error lines and processing continues.
    """
    body = await request.body()
    transcript = await run_in_threadpool(session.transcript, body.splitlines())
    return PlainTextResponse(transcript, media_type="application/x-ndjson")
