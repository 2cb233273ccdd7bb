"""HTTP surface of the gateway.

Every route is a thin adapter over a :class:`~healthchain.gateway.Gateway`
method: parse the request, call, serialize. Errors travel as
``{"code": ..., "message": ...}`` with a status drawn from the code, so
clients can match on the stable code string rather than prose.

Handlers are plain ``def`` so FastAPI runs them in its threadpool: a
submit that blocks waiting for the batch timer must not stall the event
loop for everyone else.
"""

from __future__ import annotations

from typing import Optional

from fastapi import Body, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .errors import AuthRequired, HealthchainError
from .gateway import Gateway

_STATUS = {
    "AuthRequired": 401,
    "BadCredentials": 401,
    "AuthenticationFailure": 401,
    "Forbidden": 403,
    "PendingReview": 403,
    "OutOfScope": 403,
    "Expired": 403,
    "NotYetValid": 403,
    "BadSignature": 403,
    "ScopeNotOwned": 403,
    "MissingReKey": 403,
    "NotFound": 404,
    "UnknownEntity": 404,
    "UnknownUser": 404,
    "UnknownObject": 404,
    "UnknownIndex": 404,
    "UnknownRequest": 404,
    "UnknownExchange": 404,
    "PhoneTaken": 409,
    "DuplicateEntity": 409,
    "DuplicateDocId": 409,
    "StaleVersion": 409,
    "TxInvalidated": 409,
    "SizeExceeded": 413,
    "TxTooLarge": 413,
}


def status_for(code: str) -> int:
    return _STATUS.get(code, 400)


def _token(authorization: str) -> str:
    if not authorization.lower().startswith("bearer ") or not authorization[7:].strip():
        raise AuthRequired("missing bearer token")
    return authorization[7:].strip()


def create_app(gw: Gateway, cors_origins: Optional[list[str]] = None) -> FastAPI:
    app = FastAPI(title="healthchain gateway", docs_url=None, redoc_url=None,
                  openapi_url=None)
    if cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(CORSMiddleware, allow_origins=cors_origins,
                           allow_methods=["*"], allow_headers=["Authorization", "Content-Type"])

    @app.exception_handler(HealthchainError)
    async def on_domain_error(request: Request, exc: HealthchainError):
        return JSONResponse(status_code=status_for(exc.code),
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def on_invalid_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"code": "BadRequest", "message": str(exc.errors())})

    @app.exception_handler(KeyError)
    async def on_missing_field(request: Request, exc: KeyError):
        return JSONResponse(status_code=400,
                            content={"code": "BadRequest",
                                     "message": f"missing field {exc.args[0]!r}"})

    @app.exception_handler(ValueError)
    async def on_bad_value(request: Request, exc: ValueError):
        return JSONResponse(status_code=400,
                            content={"code": "BadRequest", "message": str(exc)})

    # -- accounts -----------------------------------------------------------

    @app.post("/register")
    def register(body: dict = Body(...)):
        return gw.register(body)

    @app.post("/login")
    def login(body: dict = Body(...)):
        return gw.login(body["phone"], body["password"])

    @app.post("/admin/approve")
    def approve(body: dict = Body(...), authorization: str = Header("")):
        return gw.approve(_token(authorization), body["phone"])

    @app.post("/keys/update")
    def update_key(body: dict = Body(...), authorization: str = Header("")):
        return gw.update_key(_token(authorization), body)

    # -- public records ------------------------------------------------------

    @app.post("/records")
    def upload_record(body: dict = Body(...), authorization: str = Header("")):
        return gw.upload_public(_token(authorization), body)

    @app.get("/records/latest")
    def query_latest(cert_no: str, name: str, authorization: str = Header("")):
        return gw.query_latest(_token(authorization), cert_no, name)

    @app.get("/records/{entity_id}/history")
    def query_history(entity_id: str, authorization: str = Header("")):
        return gw.query_history(_token(authorization), entity_id)

    # -- private datasets ------------------------------------------------------

    @app.post("/private/{entity_id}/dataset")
    def upload_dataset(entity_id: str, body: dict = Body(...),
                       authorization: str = Header("")):
        return gw.upload_private(_token(authorization), entity_id, body)

    @app.post("/private/{entity_id}/search")
    def search_private(entity_id: str, body: dict = Body(...),
                       authorization: str = Header("")):
        return gw.search_private(_token(authorization), entity_id, body)

    # -- sharing ----------------------------------------------------------------

    @app.post("/share/requests")
    def create_share_request(body: dict = Body(...), authorization: str = Header("")):
        return gw.create_share_request(_token(authorization), body)

    @app.get("/share/requests")
    def list_share_requests(authorization: str = Header("")):
        return gw.list_share_requests(_token(authorization))

    @app.post("/share/requests/{request_id}/deny")
    def deny_share_request(request_id: str, authorization: str = Header("")):
        return gw.deny_share_request(_token(authorization), request_id)

    @app.post("/share/exchange")
    def start_exchange(body: dict = Body(...), authorization: str = Header("")):
        return gw.start_exchange(_token(authorization), body)

    @app.get("/share/exchange")
    def list_exchanges(authorization: str = Header("")):
        return gw.list_exchanges(_token(authorization))

    @app.get("/share/exchange/{exchange_id}")
    def get_exchange(exchange_id: str, authorization: str = Header("")):
        return gw.get_exchange(_token(authorization), exchange_id)

    @app.post("/share/exchange/{exchange_id}/respond")
    def respond_exchange(exchange_id: str, body: dict = Body(...),
                         authorization: str = Header("")):
        return gw.respond_exchange(_token(authorization), exchange_id, body)

    @app.post("/share/rekeys")
    def register_rekey(body: dict = Body(...), authorization: str = Header("")):
        return gw.register_rekey(_token(authorization), body)

    @app.post("/share/grants")
    def register_grant(body: dict = Body(...), authorization: str = Header("")):
        return gw.register_grant(_token(authorization), body)

    @app.post("/share/fetch")
    def share_fetch(body: dict = Body(...), authorization: str = Header("")):
        return gw.share_fetch(_token(authorization), body)

    # -- proofs, audit, liveness --------------------------------------------------

    @app.get("/objects/{object_id}/proof")
    def merkle_path(object_id: str, chunk: int = 0, authorization: str = Header("")):
        return gw.merkle_path(_token(authorization), object_id, chunk)

    @app.get("/audit")
    def get_audit(kind: Optional[str] = None, authorization: str = Header("")):
        return gw.get_audit(_token(authorization), kind)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "height": gw.ledger.height,
                "channel": gw.config.channel}

    return app
