"""Recommendation composition and the HTTP inference service.

The service is stateless over an immutable loaded bundle: embedding
lookups feed the context assembly, the distance model predicts the
required workout distance, and the sequence model rolls the chosen
route's profile into per-step speed and heart-rate plans.  Endpoints
never expose demographic fields; /users returns opaque ids only.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .bundle import SCHEMA_VERSION, ModelBundle
from .data import SPORTS
from .errors import NotFoundError, ValidationError
from .models import assemble_context, predict_distance, predict_sequences
from .tensor import embedding_lookup


@dataclass(frozen=True)
class RecommendationRequest:
    user_id: str
    route_id: str
    sport: str
    target_calories: float
    gender: str | None = None


@dataclass
class RecommendationResponse:
    predicted_distance_km: float
    speed_seq: list[float]
    heartrate_seq: list[float]
    speed_avg_kmh: float
    heartrate_avg_bpm: float
    request: dict
    bundle_version: str

    def to_dict(self) -> dict:
        return asdict(self)


def recommend(bundle: ModelBundle, request: RecommendationRequest) -> RecommendationResponse:
    """Deterministic what-if recommendation for one (user, route, sport, calories)."""
    if request.target_calories is None or request.target_calories <= 0:
        raise ValidationError("target_calories", "target calories must be > 0")
    if request.sport not in SPORTS:
        raise ValidationError("sport", f"unknown sport {request.sport!r}; expected one of {SPORTS}")
    if request.gender is not None and request.gender not in ("male", "female", "unknown"):
        raise ValidationError("gender", f"unknown gender {request.gender!r}")

    user_vec = embedding_lookup(bundle.factors, bundle.user_ids, user_id=request.user_id)
    row = bundle.catalog.row(request.route_id)
    if row is None:
        raise NotFoundError("route", request.route_id)
    cluster_id = int(bundle.catalog.cluster_ids[row])
    route_vec = embedding_lookup(bundle.factors, bundle.user_ids, cluster_id=cluster_id)

    gender = request.gender or bundle.user_genders.get(request.user_id, "unknown")
    context = assemble_context(
        user_vec,
        route_vec,
        calories=request.target_calories,
        sport=request.sport,
        gender=gender,
        total_route_km=float(bundle.catalog.total_km[row]),
        stats=bundle.stats,
        layout=bundle.layout,
    )
    km = predict_distance(bundle.distance_model, context)
    speed, heartrate = predict_sequences(
        bundle.sequence_model,
        context,
        km,
        bundle.catalog.altitude[row],
        bundle.catalog.distance[row],
    )
    return RecommendationResponse(
        predicted_distance_km=float(km),
        speed_seq=[float(v) for v in speed],
        heartrate_seq=[float(v) for v in heartrate],
        speed_avg_kmh=float(np.mean(speed)),
        heartrate_avg_bpm=float(np.mean(heartrate)),
        request={
            "user_id": request.user_id,
            "route_id": request.route_id,
            "sport": request.sport,
            "target_calories": float(request.target_calories),
            "gender": request.gender,
        },
        bundle_version=f"{SCHEMA_VERSION}:{bundle.digest()}",
    )


def create_app(bundle: ModelBundle):
    """FastAPI app over a loaded bundle; import-light so the CLI stays fast."""
    from fastapi import FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    class RecommendBody(BaseModel):
        user_id: str
        route_id: str
        sport: str
        target_calories: float
        gender: str | None = None

    app = FastAPI(title="fitforge", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ValidationError)
    async def _validation_handler(_req: Request, exc: ValidationError):
        return JSONResponse(status_code=422, content={"code": "validation_error", "field": exc.field, "message": str(exc)})

    @app.exception_handler(NotFoundError)
    async def _not_found_handler(_req: Request, exc: NotFoundError):
        field = "user_id" if exc.kind == "user" else "route_id"
        return JSONResponse(status_code=404, content={"code": "not_found", "field": field, "message": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _body_handler(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = [str(part) for part in first.get("loc", []) if part != "body"]
        return JSONResponse(
            status_code=400,
            content={"code": "malformed_request", "field": ".".join(loc) or "body", "message": first.get("msg", "invalid body")},
        )

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/meta")
    async def meta():
        lo, hi = bundle.stats.ranges["calories"]
        return {
            "schema_version": SCHEMA_VERSION,
            "bundle_version": f"{SCHEMA_VERSION}:{bundle.digest()}",
            "rank": bundle.rank,
            "sequence_length": bundle.sequence_length,
            "calorie_range": [lo, hi],
            "sports": list(SPORTS),
        }

    @app.get("/users")
    async def users():
        return {"users": list(bundle.user_ids)}

    @app.get("/routes")
    async def routes():
        return {
            "routes": [
                {
                    "route_id": rid,
                    "total_km": float(bundle.catalog.total_km[i]),
                    "cluster_id": int(bundle.catalog.cluster_ids[i]),
                }
                for i, rid in enumerate(bundle.catalog.route_ids)
            ]
        }

    @app.get("/routes/{route_id}/profile")
    async def route_profile(route_id: str):
        row = bundle.catalog.row(route_id)
        if row is None:
            raise NotFoundError("route", route_id)
        return {
            "route_id": route_id,
            "altitude_seq": [float(v) for v in bundle.catalog.altitude[row]],
            "distance_seq": [float(v) for v in bundle.catalog.distance[row]],
        }

    @app.post("/recommend")
    async def recommend_endpoint(body: RecommendBody):
        request = RecommendationRequest(
            user_id=body.user_id,
            route_id=body.route_id,
            sport=body.sport,
            target_calories=body.target_calories,
            gender=body.gender,
        )
        return recommend(bundle, request).to_dict()

    return app


def serve(bundle: ModelBundle, host: str = "127.0.0.1", port: int = 8765) -> None:
    import uvicorn

    uvicorn.run(create_app(bundle), host=host, port=port, log_level="warning")
