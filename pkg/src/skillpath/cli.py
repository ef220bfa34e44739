"""Command line interface.

Thin wrappers over the pipeline library. Exit codes: 0 success, 2 gate
failures (validation violations, unapproved emit), 1 hard errors.
"""
from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import load_project_config, load_scenario_config
from .errors import SkillPathError
from .pipeline import fuse_to_file, revalidate, run_emit, run_synth
from .session import load_session, save_session

EXIT_OK = 0
EXIT_HARD = 1
EXIT_GATE = 2


def _fail(message: str, code: int = EXIT_HARD):
    click.echo(f"skillpath: error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(package_name="skillpath")
def main():
    """Turn a human skill demonstration plus a CAD contour into a validated
    robot motion program."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Project config JSON.")
@click.option("--session", "session_path", default="session.json", show_default=True,
              type=click.Path(), help="Session file to write.")
def fuse(config_path, session_path):
    """Run the full ingest-fuse-validate pipeline and write a session."""
    try:
        config = load_project_config(config_path)
        state = fuse_to_file(config, session_path)
    except SkillPathError as exc:
        _fail(str(exc))
    n = len(state.fused)
    if state.report.passed:
        click.echo(f"fused {n} waypoints -> {session_path} (validation passed)")
        sys.exit(EXIT_OK)
    click.echo(
        f"fused {n} waypoints -> {session_path} "
        f"({len(state.report.violations)} validation violations)",
        err=True,
    )
    for v in state.report.violations:
        click.echo(f"  waypoint {v.index}: {v.kind}: {v.detail}", err=True)
    sys.exit(EXIT_GATE)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Scenario config JSON.")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0), help="RNG seed.")
def synth(config_path, seed):
    """Synthesize a demonstration trace (plus ground truth) for a scenario."""
    try:
        config = load_scenario_config(config_path)
        written = run_synth(config, seed)
    except SkillPathError as exc:
        _fail(str(exc))
    for kind, path in written.items():
        click.echo(f"wrote {kind}: {path}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--session", "session_path", required=True, type=click.Path())
@click.option("--backend", type=click.Choice(["portable", "inform"]), default="portable",
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Emit despite missing approval or violations.")
def emit(session_path, backend, out_path, force):
    """Serialize an approved session into a robot program file."""
    try:
        state = load_session(session_path)
    except SkillPathError as exc:
        _fail(str(exc))
    try:
        data = run_emit(state, backend, force=force)
    except SkillPathError as exc:
        _fail(str(exc), EXIT_GATE)
    if force:
        click.echo("warning: emitting without approval gate (--force); "
                   "the program header records this", err=True)
    Path(out_path).write_bytes(data)
    click.echo(f"wrote {backend} program: {out_path} ({len(data)} bytes)")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--session", "session_path", required=True, type=click.Path())
def validate(session_path):
    """Re-run validation for a session and print the report."""
    try:
        state = load_session(session_path)
        state = revalidate(state)
        save_session(state, session_path)
    except SkillPathError as exc:
        _fail(str(exc))
    if state.report.passed:
        click.echo(f"validation passed ({len(state.fused)} waypoints)")
        sys.exit(EXIT_OK)
    click.echo(f"{len(state.report.violations)} violations:", err=True)
    for v in state.report.violations:
        click.echo(f"  waypoint {v.index}: {v.kind}: {v.detail}", err=True)
    sys.exit(EXIT_GATE)


@main.command()
@click.option("--session", "session_path", required=True, type=click.Path())
@click.option("--bind", default="127.0.0.1:8077", show_default=True,
              help="address:port to listen on.")
@click.option("--ui", "ui_dir", default=None, type=click.Path(),
              help="Directory of built review-ui assets to serve at /.")
def serve(session_path, bind, ui_dir):
    """Serve the review API (and optionally the browser UI) for a session."""
    import uvicorn

    from .service import SessionManager, create_app

    try:
        manager = SessionManager.open(session_path)
    except SkillPathError as exc:
        _fail(str(exc))
    app = create_app(manager, ui_dir=ui_dir)
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        _fail(f"--bind must look like host:port, got {bind!r}")
    uvicorn.run(app, host=host, port=int(port), log_level="warning")


if __name__ == "__main__":
    main()
