"""Thin command-line client for the service.

Subcommands mirror the endpoints: check, derive, simulate, plateau, and
residual.  By default requests run against the in-process ASGI app (one
command, one process, no server needed); `--server URL` targets a running
instance instead.  The client is responsible for file I/O only: it loads
the JSON config, inlines any referenced surface CSV, posts the request,
prints the report as JSON, and writes returned artifacts under --out.

Exit codes: 0 success, 1 numerical/verification failure, 2 usage or config
error.
"""

from __future__ import annotations

import asyncio
import json
import pathlib
import sys

import click
import httpx

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str) -> dict:
    p = pathlib.Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        _fail(EXIT_CONFIG, f"cannot read config {path}: {err}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        _fail(EXIT_CONFIG, f"config {path} is not valid JSON: {err}")
    if not isinstance(cfg, dict):
        _fail(EXIT_CONFIG, f"config {path} must be a JSON object")
    return cfg


def _inline_surface(cfg: dict, config_path: str):
    """Read a client-side surface CSV referenced by io.surface into the request."""
    rel = (cfg.get("io") or {}).get("surface")
    if not rel or cfg.get("surface"):
        return
    path = pathlib.Path(config_path).parent / rel
    try:
        text = path.read_text()
    except OSError as err:
        _fail(EXIT_CONFIG, f"cannot read surface CSV {path}: {err}")
    from .strings import SurfaceGrid
    try:
        grid = SurfaceGrid.from_csv(text)
    except ValueError as err:
        _fail(EXIT_CONFIG, f"surface CSV {path}: {err}")
    cfg["surface"] = {
        "t": grid.t.tolist(),
        "s": grid.s.tolist(),
        "values": grid.values.tolist(),
    }


def _post(server: str | None, endpoint: str, payload: dict) -> httpx.Response:
    try:
        if server:
            with httpx.Client(base_url=server, timeout=600.0) as client:
                return client.post(endpoint, json=payload)
        return asyncio.run(_post_inprocess(endpoint, payload))
    except httpx.HTTPError as err:
        _fail(EXIT_NUMERICAL, f"request failed: {err}")


async def _post_inprocess(endpoint: str, payload: dict) -> httpx.Response:
    from .service import app
    transport = httpx.ASGITransport(app=app)
    async with httpx.AsyncClient(transport=transport, base_url="http://varmech",
                                 timeout=600.0) as client:
        return await client.post(endpoint, json=payload)


def _finish(resp: httpx.Response, out: str) -> int:
    if resp.status_code in (400, 422):
        detail = resp.json().get("detail", resp.text)
        _fail(EXIT_CONFIG, f"config rejected: {detail}")
    if resp.status_code != 200:
        _fail(EXIT_NUMERICAL, f"service error {resp.status_code}: {resp.text}")
    body = resp.json()
    files = body.pop("files", None) or {}
    out_dir = pathlib.Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, content in sorted(files.items()):
        (out_dir / name).write_text(content)
        body.setdefault("written", []).append(str(out_dir / name))
    click.echo(json.dumps(body, indent=2, sort_keys=True))
    status = body.get("status", "ok")
    return EXIT_OK if status == "ok" else EXIT_NUMERICAL


def _common(f):
    f = click.option("--config", "config_path", required=True,
                     type=click.Path(), help="Problem config (JSON).")(f)
    f = click.option("--seed", type=int, default=None, help="Override the config seed.")(f)
    f = click.option("--out", default=".", type=click.Path(), show_default=True,
                     help="Directory for returned artifacts.")(f)
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
                     help="Artifact format override.")(f)
    f = click.option("--latex", is_flag=True, help="Also emit a LaTeX equations file.")(f)
    f = click.option("--server", default=None, help="Remote service URL (default: in-process).")(f)
    return f


def _run(endpoint: str, config_path: str, seed: int | None, out: str,
         fmt: str | None, latex: bool, server: str | None):
    cfg = _load_config(config_path)
    if seed is not None:
        cfg["seed"] = seed
    io_block = cfg.setdefault("io", {})
    if fmt is not None:
        io_block["format"] = fmt
    if latex:
        io_block["latex"] = True
    if endpoint == "/residual":
        _inline_surface(cfg, config_path)
    cfg.pop("io_paths", None)
    payload = dict(cfg)
    payload.get("io", {}).pop("surface", None)  # client-side path, not for the wire
    resp = _post(server, endpoint, payload)
    sys.exit(_finish(resp, out))


@click.group()
def main():
    """Variational mechanics engine client."""


@main.command()
@_common
def check(config_path, seed, out, fmt, latex, server):
    """Verify algebroid axioms and homogeneity claims."""
    _run("/check", config_path, seed, out, fmt, latex, server)


@main.command()
@_common
def derive(config_path, seed, out, fmt, latex, server):
    """Derive momenta and Euler-Lagrange equations."""
    _run("/derive", config_path, seed, out, fmt, latex, server)


@main.command()
@_common
def simulate(config_path, seed, out, fmt, latex, server):
    """Integrate the explicit flow; writes a trajectory artifact."""
    _run("/simulate", config_path, seed, out, fmt, latex, server)


@main.command()
@_common
def plateau(config_path, seed, out, fmt, latex, server):
    """Solve the graph Plateau problem; writes the surface and a convergence log."""
    _run("/plateau", config_path, seed, out, fmt, latex, server)


@main.command()
@_common
def residual(config_path, seed, out, fmt, latex, server):
    """Evaluate the string Euler-Lagrange residual on an imported surface CSV."""
    _run("/residual", config_path, seed, out, fmt, latex, server)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
