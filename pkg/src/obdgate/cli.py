"""Command line front end.

Subcommands:

* ``run``       -- execute a scenario file, print the report, set the exit code
* ``policy``    -- file-backed policy CRUD routed through the management API
* ``calibrate`` -- fit the pipeline cost model and write it to a file
* ``store``     -- serve the app/alert distribution endpoint over HTTP

Exit codes: 0 success (all expectations passed), 1 failed expectations or a
fit over tolerance, 2 validation and usage errors.
"""

from __future__ import annotations

import io
import json
import sys
from pathlib import Path

import click
import numpy as np

from .gateway import Gateway, GatewayError
from .partition import ModelError, calibrate as fit_model, load_default_observations, load_observations
from .policy import PolicyError, Principal, load_policy_documents
from .scenario import ScenarioError, load_scenario, render_text, run_scenario
from .vehicle import DrivingTrace, VirtualVehicle


class ValidationFailure(click.ClickException):
    """Bad input file or arguments; exits with status 2."""

    exit_code = 2


@click.group()
def main() -> None:
    """Vehicle gateway simulation toolkit."""


# --- run ---------------------------------------------------------------------


@main.command("run")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(), help="Scenario JSON file.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the JSON report here.")
@click.option(
    "--results",
    "results_path",
    type=click.Path(),
    default=None,
    help="Write per-run attack rows as CSV (attack scenarios only).",
)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def run_cmd(scenario_path: str, seed: int | None, out_path: str | None, results_path: str | None, fmt: str) -> None:
    """Run a scenario and report metrics against its expectations."""
    try:
        doc = load_scenario(scenario_path)
    except ScenarioError as exc:
        raise ValidationFailure(str(exc)) from None

    results_fh = open(results_path, "w", newline="") if results_path else None
    try:
        report = run_scenario(doc, seed=seed, base_dir=Path(scenario_path).parent, results_stream=results_fh)
    except (ScenarioError, GatewayError, PolicyError, ModelError) as exc:
        raise click.ClickException(str(exc)) from None
    finally:
        if results_fh is not None:
            results_fh.close()

    rendered = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(rendered + "\n")
    click.echo(rendered if fmt == "json" else render_text(report))
    if not report["passed"]:
        sys.exit(1)


# --- policy ------------------------------------------------------------------


def _policy_gateway(docs) -> Gateway:
    """Tiny gateway so policy mutations go through the management plane."""
    trace = DrivingTrace(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
    gateway = Gateway(VirtualVehicle(trace))
    for doc in docs:
        profile = str(doc.raw.get("profile", "unknown")) if hasattr(doc, "raw") else "unknown"
        gateway.attach(Principal(doc.principal_id, kind="dongle", profile=profile))
        for policy in doc.policies:
            gateway.store.add(policy)
    return gateway


def _load_policy_file(path: Path):
    if not path.exists():
        return [], []
    text = path.read_text()
    raw = json.loads(text)
    docs = load_policy_documents(io.StringIO(text))
    # keep the raw entries so profile/transform keys survive a round trip
    for doc, entry in zip(docs, raw):
        doc.raw = entry  # type: ignore[attr-defined]
    return docs, raw


def _save_policy_file(path: Path, gateway: Gateway, raw) -> None:
    extras = {str(entry.get("principal")): entry for entry in raw}
    by_principal: dict[str, list] = {}
    for p in gateway.store.all_policies():
        if p.origin.value != "user":
            continue
        by_principal.setdefault(p.principal_id, []).append(p)
    out = []
    for principal_id in sorted(by_principal):
        entry = dict(extras.get(principal_id, {"principal": principal_id}))
        entry["principal"] = principal_id
        entry["policies"] = [
            {
                "id": p.id,
                "resource": list(p.resource),
                "context": dict(p.context),
                "effect": p.effect.value,
                "priority": p.priority,
            }
            for p in sorted(by_principal[principal_id], key=lambda p: p.id)
        ]
        out.append(entry)
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


@main.group("policy")
@click.option(
    "--file",
    "store_path",
    type=click.Path(),
    default="policies.json",
    show_default=True,
    help="Policy documents file the subcommands operate on.",
)
@click.pass_context
def policy_group(ctx: click.Context, store_path: str) -> None:
    """Manage user-defined access policies stored in a JSON file."""
    ctx.obj = Path(store_path)


@policy_group.command("add")
@click.argument("new_docs", type=click.Path(exists=True))
@click.pass_obj
def policy_add(store_path: Path, new_docs: str) -> None:
    """Merge policies from NEW_DOCS into the policy file."""
    try:
        docs, raw = _load_policy_file(store_path)
        gateway = _policy_gateway(docs)
        with open(new_docs) as fh:
            incoming = load_policy_documents(fh)
        added = 0
        for doc in incoming:
            if doc.principal_id not in gateway.sessions:
                gateway.attach(Principal(doc.principal_id, kind="dongle", profile="unknown"))
            for policy in doc.policies:
                result = gateway.manage(
                    {
                        "op": "policy_add",
                        "principal": doc.principal_id,
                        "args": {
                            "id": policy.id,
                            "resource": list(policy.resource),
                            "effect": policy.effect.value,
                            "priority": policy.priority,
                            "context": dict(policy.context),
                        },
                    }
                )
                if not result["ok"]:
                    raise click.ClickException(result["error"])
                added += 1
        with open(new_docs) as fh:
            raw_incoming = json.load(fh)
        merged_raw = {str(e.get("principal")): e for e in raw}
        for e in raw_incoming:
            merged_raw.setdefault(str(e.get("principal")), e)
        _save_policy_file(store_path, gateway, list(merged_raw.values()))
        click.echo(f"added {added} policies to {store_path}")
    except (PolicyError, OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc)) from None


@policy_group.command("rm")
@click.argument("policy_id")
@click.pass_obj
def policy_rm(store_path: Path, policy_id: str) -> None:
    """Remove one policy by id; predefined baselines are refused."""
    try:
        docs, raw = _load_policy_file(store_path)
        gateway = _policy_gateway(docs)
        result = gateway.manage({"op": "policy_remove", "args": {"policy_id": policy_id}})
        if not result["ok"]:
            raise click.ClickException(result["error"])
        _save_policy_file(store_path, gateway, raw)
        click.echo(f"removed {policy_id}")
    except (PolicyError, OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc)) from None


@policy_group.command("list")
@click.pass_obj
def policy_list(store_path: Path) -> None:
    """Print the user-defined policies as JSON."""
    try:
        docs, _ = _load_policy_file(store_path)
        gateway = _policy_gateway(docs)
        result = gateway.manage({"op": "policy_list"})
        if not result["ok"]:
            raise click.ClickException(result["error"])
        user_rows = [row for row in result["data"] if row["origin"] == "user"]
        click.echo(json.dumps(user_rows, indent=2, sort_keys=True))
    except (PolicyError, OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc)) from None


# --- calibrate ---------------------------------------------------------------


@main.command("calibrate")
@click.option("--fixtures", type=click.Path(), default=None, help="Observations JSON (default: bundled).")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the fitted model JSON here.")
@click.option("--tolerance", type=float, default=0.05, show_default=True, help="Max relative residual.")
def calibrate_cmd(fixtures: str | None, out_path: str | None, tolerance: float) -> None:
    """Fit the placement cost model against measured tables."""
    try:
        if fixtures is None:
            observations, scenario = load_default_observations()
        else:
            with open(fixtures) as fh:
                observations, scenario = load_observations(json.load(fh))
        result = fit_model(observations, scenario, tolerance=tolerance)
    except (ModelError, OSError, json.JSONDecodeError) as exc:
        raise ValidationFailure(str(exc)) from None

    if out_path:
        Path(out_path).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    click.echo(f"max relative residual: {result.max_rel_error:.3g} (tolerance {tolerance:g})")
    for row in result.residuals:
        target = f"{row['kind']}/{row['placement']}/{row['resolution']}/{row['cpu_mhz']:g}MHz"
        err = f"rel={row['rel_error']:.2e}" if "rel_error" in row else f"abs={row['abs_error']:.2e}"
        click.echo(f"  {target:<44} expected={row['expected']:<8g} actual={row['actual']:.6g} {err}")
    if not result.ok:
        click.echo("calibration residual over tolerance", err=True)
        sys.exit(1)
    click.echo("calibration ok")


# --- store -------------------------------------------------------------------


@main.group("store")
def store_group() -> None:
    """App/alert distribution service."""


@store_group.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8320, show_default=True)
@click.option("--data-dir", type=click.Path(), default=None, help="Persist packages/alerts here.")
@click.option("--token", default=None, help="Bearer token required for mutations.")
def store_serve(host: str, port: int, data_dir: str | None, token: str | None) -> None:
    """Run the HTTP store until interrupted."""
    try:
        import uvicorn
    except ImportError:
        raise click.ClickException("uvicorn is not installed (pip install obdgate[serve])") from None
    from .store import Store, create_app

    app = create_app(Store(data_dir), token=token)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
