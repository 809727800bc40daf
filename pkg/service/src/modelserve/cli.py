"""Command-line entry points: serve, conformance."""

from __future__ import annotations

import sys

import click

from .config import ServiceConfig
from .errors import ModelServeError


@click.group()
def main():
    """Reference model service for the backend wire protocol."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--port", type=int, default=None, help="Override the configured port.")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config_path, port, host):
    """Load the configured models and serve the wire protocol."""
    import uvicorn

    from .app import create_app

    try:
        cfg = ServiceConfig.load(config_path)
        if port is not None:
            cfg.port = port
        app = create_app(cfg)  # models load here; failures abort startup
    except ModelServeError as e:
        click.echo(f"ERROR {type(e).__name__}: {e}", err=True)
        sys.exit(1)
    uvicorn.run(app, host=host, port=cfg.port)


@main.command("conformance")
@click.option("--target", required=True, help="Base URL of the server under test.")
@click.option("--image-path", default=None,
              help="Image reference the target is expected to know.")
def conformance_cmd(target, image_path):
    """Run the protocol conformance suite against a live server."""
    from .conformance import conformance

    try:
        report = conformance(
            target, image={"path": image_path} if image_path else None
        )
    except ModelServeError as e:
        click.echo(f"ERROR {type(e).__name__}: {e}", err=True)
        sys.exit(1)
    click.echo(report.render())
    if not report.ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
