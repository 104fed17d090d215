"""HTTP chat service over immutable model snapshots.

Endpoints (all under /v1): POST /chat, GET /models, POST /score, GET /health.
Every chat reply is scored with the metric bundle; requests resolve one
registry snapshot up front so a concurrent hot swap can never mix versions
inside a single response.
"""

import time
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .errors import EmptySentence
from .metrics import MetricBundle, coh1, coh2, lm_score, scl
from .registry import ModelRegistry, tokenize_message


class ChatRequest(BaseModel):
    message: str
    model_id: str
    sentiment: Optional[float] = None


class ScoreRequest(BaseModel):
    x: str
    y: str


def score_pair(bundle: MetricBundle, x_tokens, y_tokens) -> dict:
    return {
        "coh1": coh1(bundle, x_tokens, y_tokens),
        "coh2": coh2(bundle, x_tokens, y_tokens),
        "scl": scl(bundle, y_tokens),
        "lm": lm_score(bundle, y_tokens),
    }


def create_app(registry: ModelRegistry, bundle: MetricBundle, segmentation: str = "word") -> FastAPI:
    app = FastAPI(title="sentibot", version="1")

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "models": len(registry.snapshot())}

    @app.get("/v1/models")
    def models():
        return {"models": registry.list_models()}

    @app.post("/v1/chat")
    def chat(request: ChatRequest):
        if request.sentiment is not None and not 0.0 <= request.sentiment <= 1.0:
            raise HTTPException(status_code=400, detail="sentiment must be in [0, 1]")
        if not request.message.strip():
            raise HTTPException(status_code=400, detail="message must be non-empty")
        snapshot = registry.snapshot()
        entry = snapshot.get(request.model_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown model {request.model_id!r}")
        start = time.perf_counter()
        tokens = tokenize_message(request.message, segmentation)
        try:
            reply_tokens = entry.responder.respond(tokens, request.sentiment)
        except EmptySentence as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        latency_ms = (time.perf_counter() - start) * 1000.0
        scores = score_pair(bundle, tokens, reply_tokens) if reply_tokens else None
        response = {
            "reply": " ".join(reply_tokens),
            "scores": scores,
            "latency_ms": latency_ms,
            "model_id": entry.model_id,
            "kind": entry.kind,
            "metadata": entry.metadata,
        }
        if entry.responder.sentiment_control == "fixed by training" and request.sentiment is not None:
            response["notice"] = "sentiment ignored: fixed by training"
        return response

    @app.post("/v1/score")
    def score(request: ScoreRequest):
        try:
            x_tokens = tokenize_message(request.x, segmentation)
            y_tokens = tokenize_message(request.y, segmentation)
        except EmptySentence as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return score_pair(bundle, x_tokens, y_tokens)

    return app
