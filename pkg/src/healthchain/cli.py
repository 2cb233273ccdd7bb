"""Command-line front end.

Server-side commands (``init-genesis``, ``serve``) operate on a data
directory. User commands talk to a running gateway over HTTP and keep
all secrets in a local key file that never leaves the machine.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import httpx

from .client import ApiClient, ApiError, UserClient, UserKeys
from .config import GatewayConfig, load_config
from .crypto import hash_data


def _echo_json(doc) -> None:
    click.echo(json.dumps(doc, indent=1, sort_keys=True))


def _gateway_config(config_path, data_dir, **overrides) -> GatewayConfig:
    values = {k: v for k, v in overrides.items() if v is not None}
    if data_dir:
        values["data_dir"] = data_dir
    if config_path:
        return load_config(config_path, values)
    if "data_dir" not in values:
        raise click.UsageError("either --config or --data-dir is required")
    return GatewayConfig(**values)


def _client(url: str, keys_file, token) -> UserClient:
    keys = UserKeys.load(keys_file) if keys_file and Path(keys_file).exists() \
        else UserKeys.generate(owner=False)
    api = ApiClient(httpx.Client(base_url=url, timeout=30.0))
    user = UserClient(api, keys)
    user.token = token
    return user


def _fail(exc: ApiError):
    raise click.ClickException(f"[{exc.code}] {exc.message}")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML config for server commands.")
@click.pass_context
def main(ctx, config_path):
    """Permissioned health-record ledger: server and user tools."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@main.command("init-genesis")
@click.option("--data-dir", type=click.Path(file_okay=False), default=None)
@click.option("--admin-phone", required=True)
@click.option("--admin-name", required=True)
@click.option("--admin-password", required=True)
@click.pass_context
def init_genesis(ctx, data_dir, admin_phone, admin_name, admin_password):
    """Create the channel: root CA, peer/orderer identities, genesis
    block, and the administrator account."""
    from .gateway import Gateway

    cfg = _gateway_config(ctx.obj["config_path"], data_dir)
    gw = Gateway.init_genesis(cfg, admin_phone=admin_phone, admin_name=admin_name,
                              admin_password=admin_password)
    click.echo(f"channel {cfg.channel!r} created at {cfg.data_dir}")
    click.echo(f"genesis block 0, ledger height {gw.ledger.height}")


@main.command()
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--cors-origin", "cors_origins", multiple=True,
              help="Origin allowed to call the API from a browser (repeatable).")
@click.pass_context
def serve(ctx, data_dir, host, port, cors_origins):
    """Run the gateway HTTP API."""
    import uvicorn

    from .api import create_app
    from .gateway import Gateway

    cfg = _gateway_config(ctx.obj["config_path"], data_dir, host=host, port=port)
    gw = Gateway(cfg)
    gw.start_ticker()
    try:
        uvicorn.run(create_app(gw, cors_origins=list(cors_origins) or None),
                    host=cfg.host, port=cfg.port, log_level="warning")
    finally:
        gw.stop_ticker()


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--role", type=click.Choice(["DO", "DU", "MIFS", "DDBS"]), required=True)
@click.option("--phone", required=True)
@click.option("--name", required=True)
@click.option("--password", required=True)
@click.option("--institution-code", default=None)
@click.option("--keys-file", type=click.Path(dir_okay=False), required=True,
              help="Where to store the generated local keys.")
def register(url, role, phone, name, password, institution_code, keys_file):
    """Create an account; keys are generated locally and only the
    public halves are sent."""
    path = Path(keys_file)
    if path.exists():
        keys = UserKeys.load(path)
    else:
        keys = UserKeys.generate(owner=(role == "DO"))
        keys.save(path)
    user = UserClient(ApiClient(httpx.Client(base_url=url, timeout=30.0)), keys)
    try:
        out = user.register(role=role, phone=phone, name=name, password=password,
                            institution_code=institution_code)
    except ApiError as exc:
        if exc.code == "PendingReview":
            click.echo(f"registered; status pending (keys saved to {keys_file})")
            return
        _fail(exc)
    click.echo(f"registered {out['role']} {out['name']}; "
               f"certificate serial {out['certificate']['serial'][:16]}…")
    click.echo(f"keys saved to {keys_file}")


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--phone", required=True)
@click.option("--password", required=True)
def login(url, phone, password):
    """Print a session token."""
    api = ApiClient(httpx.Client(base_url=url, timeout=30.0))
    try:
        doc = api.post("/login", body={"phone": phone, "password": password})
    except ApiError as exc:
        _fail(exc)
    click.echo(doc["token"])


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
@click.option("--keys-file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--record", "record_file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with a public health record.")
@click.option("--mode", type=click.Choice(["auto", "add", "update"]), default="auto")
@click.option("--entity", default=None, help="Entity id for a private dataset upload.")
@click.option("--file", "files", type=click.Path(exists=True, dir_okay=False),
              multiple=True, help="Private document (repeatable).")
@click.option("--keywords", default="", help="Comma-separated keywords for every doc.")
def upload(url, token, keys_file, record_file, mode, entity, files, keywords):
    """Submit a public record to the ledger, or encrypt and upload a
    private dataset (anchoring its root on-chain)."""
    user = _client(url, keys_file, token)
    try:
        if record_file:
            out = user.upload_record(json.loads(Path(record_file).read_text()), mode=mode)
            click.echo(f"committed tx {out['tx_id'][:16]}… in block {out['block']} "
                       f"({out['op']})")
        elif entity and files:
            docs = {Path(f).name: Path(f).read_bytes() for f in files}
            kw = [k.strip() for k in keywords.split(",") if k.strip()]
            out = user.upload_dataset(entity, docs, {d: kw for d in docs})
            click.echo(f"dataset v{out['index_version']} anchored in block {out['block']} "
                       f"(root {out['merkle_root'][:16]}…)")
            for obj in out["objects"]:
                click.echo(f"  {obj['doc_id']}: owner {obj['owner_object_id'][:16]}… "
                           f"share {obj['share_object_id'][:16]}…")
        else:
            raise click.UsageError("provide --record FILE, or --entity with --file")
    except ApiError as exc:
        _fail(exc)


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
@click.option("--cert-no", default=None)
@click.option("--name", default=None)
@click.option("--history", "entity_id", default=None,
              help="Entity id to fetch full on-chain history for.")
def query(url, token, cert_no, name, entity_id):
    """Query the latest record by certificate number and name, or the
    full history of an entity."""
    user = _client(url, None, token)
    try:
        if entity_id:
            _echo_json(user.query_history(entity_id))
        elif cert_no and name:
            _echo_json(user.query_latest(cert_no, name))
        else:
            raise click.UsageError("provide --cert-no with --name, or --history ENTITY")
    except ApiError as exc:
        _fail(exc)


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
@click.option("--entity", required=True)
@click.option("--keyword", default=None,
              help="Keyword to search for (owner only; derives the trapdoor locally).")
@click.option("--trapdoor", default=None,
              help="Trapdoor tag in hex (grantees use tags from their grant scope).")
@click.option("--keys-file", type=click.Path(exists=True, dir_okay=False), default=None)
def search(url, token, entity, keyword, trapdoor, keys_file):
    """Search a private dataset's encrypted index; prints matching doc
    ids and fetchable object ids."""
    user = _client(url, keys_file, token)
    try:
        if keyword is not None:
            if keys_file is None:
                raise click.UsageError("--keyword needs --keys-file (owner key)")
            trapdoor = user.trapdoor_for(keyword)
        if not trapdoor:
            raise click.UsageError("provide --keyword (owner) or --trapdoor HEX")
        out = user.search(entity, trapdoor)
    except ApiError as exc:
        _fail(exc)
    if not out["doc_ids"]:
        click.echo("no matches")
        return
    for doc_id, object_id in zip(out["doc_ids"], out["object_ids"]):
        click.echo(f"{doc_id}  {object_id}")


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
@click.option("--entity", required=True)
@click.option("--start", type=int, required=True, help="Window start (Unix seconds).")
@click.option("--end", type=int, required=True, help="Window end, exclusive.")
def request(url, token, entity, start, end):
    """Ask a data owner for access to an entity's records."""
    user = _client(url, None, token)
    try:
        out = user.request_share(entity, {"record_ids": [entity]}, start, end)
    except ApiError as exc:
        _fail(exc)
    click.echo(f"request {out['request_id']} is {out['status']}")


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
def requests(url, token):
    """List share requests involving you (inbox = you own the data)."""
    user = _client(url, None, token)
    try:
        _echo_json(user.list_requests())
    except ApiError as exc:
        _fail(exc)


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
@click.option("--keys-file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--request-id", required=True)
@click.option("--keywords", default="", help="Keywords the grantee may search for.")
@click.option("--wait", type=float, default=30.0,
              help="Seconds to wait for the grantee to answer the key exchange.")
def grant(url, token, keys_file, request_id, keywords, wait):
    """Approve a share request: run the blinded key exchange, register
    the re-encryption key, and sign the access grant."""
    user = _client(url, keys_file, token)
    try:
        inbox = user.list_requests()["inbox"]
        req = next((r for r in inbox if r["request_id"] == request_id), None)
        if req is None:
            raise click.ClickException(f"no inbound request {request_id}")
        exchange_id = user.start_exchange(request_id)
        click.echo(f"exchange {exchange_id} started; waiting for grantee…")
        deadline = time.monotonic() + wait
        while True:
            doc = user.api.get(f"/share/exchange/{exchange_id}", token=user.token)
            if doc.get("y"):
                break
            if time.monotonic() >= deadline:
                raise click.ClickException("grantee did not answer the exchange in time")
            time.sleep(0.5)
        rekey_ref = user.finish_exchange(exchange_id)
        kw = [k.strip() for k in keywords.split(",") if k.strip()]
        scope = dict(req["scope"])
        if kw:
            scope = {"record_ids": scope.get("record_ids", []),
                     "trapdoors": sorted({user.trapdoor_for(k) for k in kw}
                                         | set(scope.get("trapdoors", [])))}
        signed = user.sign_grant(req["requester_pub"], scope, req["start"], req["end"],
                                 rekey_ref)
        out = user.register_grant(signed, request_id=request_id)
    except ApiError as exc:
        _fail(exc)
    click.echo(f"grant {out['serial'][:16]}… registered (rekey {rekey_ref[:16]}…)")


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
@click.option("--keys-file", type=click.Path(exists=True, dir_okay=False), required=True)
def respond(url, token, keys_file):
    """Answer any pending key exchanges addressed to you (grantee side)."""
    user = _client(url, keys_file, token)
    try:
        mine = user.api.get("/share/exchange", token=user.token)["exchanges"]
        pub = user.keys.sign.public.hex()
        pending = [e for e in mine
                   if e["grantee_pub"] == pub and e["state"] == "awaiting-grantee"]
        for exchange in pending:
            user.answer_exchange(exchange["exchange_id"])
            click.echo(f"answered exchange {exchange['exchange_id']}")
    except ApiError as exc:
        _fail(exc)
    if not pending:
        click.echo("no pending exchanges")


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
@click.option("--keys-file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--object-id", required=True)
@click.option("--grant-serial", default=None)
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None)
@click.option("--verify-chunk", type=int, default=None,
              help="Also verify this chunk index against the anchored root.")
def fetch(url, token, keys_file, object_id, grant_serial, out_file, verify_chunk):
    """Fetch an off-chain object and decrypt it locally."""
    user = _client(url, keys_file, token)
    try:
        doc = user.fetch(object_id, grant_serial)
        plain = user.fetch_plaintext(object_id, grant_serial)
        if verify_chunk is not None:
            import base64

            chunk = base64.b64decode(doc["chunks"][verify_chunk])
            ok = user.verify_chunk(object_id, verify_chunk, chunk)
            click.echo(f"chunk {verify_chunk} proof: {'verified' if ok else 'FAILED'}")
    except ApiError as exc:
        _fail(exc)
    if out_file:
        Path(out_file).write_bytes(plain)
        click.echo(f"wrote {len(plain)} bytes to {out_file}")
    else:
        click.echo(f"{doc['doc_id']} ({doc['copy']} copy, {len(plain)} bytes) "
                   f"sha256 {hash_data(plain).hex}")


@main.command()
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
@click.option("--phone", required=True)
def approve(url, token, phone):
    """Administrator: activate a pending infrastructure account."""
    user = _client(url, None, token)
    try:
        out = user.api.post("/admin/approve", token=user.token, body={"phone": phone})
    except ApiError as exc:
        _fail(exc)
    click.echo(f"approved {phone}; certificate {out['certificate']['serial'][:16]}…")


@main.command("audit-keys")
@click.option("--url", default="http://127.0.0.1:9000")
@click.option("--token", required=True, envvar="HEALTHCHAIN_TOKEN")
def audit_keys(url, token):
    """Run the key-lifecycle audit and print one line per finding."""
    user = _client(url, None, token)
    try:
        doc = user.api.get("/audit", token=user.token, params={"kind": "keys"})
    except ApiError as exc:
        _fail(exc)
    findings = doc["findings"]
    if not findings:
        click.echo("audit clean: no findings")
        return
    for f in findings:
        click.echo(f"key {f['key_id'][:16]}… owner {f['owner'][:12]}… "
                   f"[{f['status']}] {', '.join(f['reasons'])}")
    sys.exit(1)


if __name__ == "__main__":
    main()
