"""
FastAPI server for corrlab experiments.

Design decisions:
- Experiments run synchronously in the request; heavy presets belong on the CLI.
- Rejected or failed runs come back as status/reason JSON, never a stack trace.
- Output lands in CORRLAB_OUT_DIR (default: runs/) exactly as with the CLI;
  an upload may pick a subdirectory of it but never a path outside.

Endpoints:
- GET  /          : health check
- GET  /presets   : available preset names
- POST /run       : upload an experiment config (JSON) -> RunRecord
- POST /convert   : micro (N, ell, t) -> macro (Lambda, L, T)
"""

import json
import logging

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import JSONResponse

from corrlab import __version__, harness, settings
from corrlab.errors import CorrlabError, ValidationError
from corrlab.functionals import micro_to_macro
from corrlab.settings import configure_logging

configure_logging()
app = FastAPI(title="Correlation Structure API", version=__version__)
logger = logging.getLogger("corrlab_api")


# -------------------------------------------------------------------
# Error translation
# -------------------------------------------------------------------
def _rejected(exc: CorrlabError) -> JSONResponse:
    status = "REJECTED" if isinstance(exc, ValidationError) else "FAILED"
    logger.warning("%s: %s", type(exc).__name__, exc)
    return JSONResponse(
        status_code=200,
        content={
            "status": status,
            "reason": type(exc).__name__,
            "message": str(exc),
            "exit_code": exc.exit_code,
            "loc": getattr(exc, "loc", None),
        },
    )


# -------------------------------------------------------------------
# Health check
# -------------------------------------------------------------------
@app.get("/")
def health():
    return {
        "status": "corrlab API running",
        "version": __version__,
        "endpoints": ["/presets", "/run", "/convert"],
    }


@app.get("/presets")
def presets():
    return {"presets": harness.list_presets()}


# -------------------------------------------------------------------
# Run endpoint
# -------------------------------------------------------------------
@app.post("/run")
async def run(file: UploadFile = File(...)):
    """
    Accept an experiment config and return the RunRecord.

    Rules:
    - Invalid JSON, a non-object body or bad config fields -> REJECTED with the field path.
    - output.dir must stay under CORRLAB_OUT_DIR.
    - Output that cannot be written -> FAILED output_not_writable.
    - Numerical or resource failures -> FAILED with the error class.
    - A run with failed points comes back with status PARTIAL.
    """
    try:
        content = await file.read()
        try:
            data = json.loads(content.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return JSONResponse(content={"status": "REJECTED", "reason": "config_not_json"})
        if not isinstance(data, dict):
            return JSONResponse(content={"status": "REJECTED", "reason": "config_not_object"})
        preset = data.pop("preset", None)
        config = harness.load_config(preset=preset, overrides=data)
        harness.confine_output(config, settings.OUT_DIR)
        try:
            record = harness.run_experiment(config)
        except OSError as exc:
            logger.warning("output not writable: %s", exc)
            return JSONResponse(content={"status": "FAILED", "reason": "output_not_writable", "message": str(exc)})
        return JSONResponse(content=record.model_dump(mode="json"))

    except CorrlabError as exc:
        return _rejected(exc)
    except Exception as e:
        logger.exception("Unhandled error in /run: %s", e)
        raise HTTPException(status_code=500, detail="internal_server_error")


# -------------------------------------------------------------------
# Convert endpoint
# -------------------------------------------------------------------
@app.post("/convert")
def convert(N: int = Form(...), ell: float = Form(...), t: float = Form(...)):
    try:
        return dict(micro_to_macro(N, ell, t), status="OK")
    except CorrlabError as exc:
        return _rejected(exc)
    except Exception as e:
        logger.exception("Unhandled error in /convert: %s", e)
        raise HTTPException(status_code=500, detail="internal_server_error")
