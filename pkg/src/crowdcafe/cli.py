"""Operator command line: seed data, load jobs, simulate, expire, export."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import analytics, simulator
from .engine import Platform
from .ingestion import FeedQuery, parse_csv
from .model import CrowdCafeError, judgment_duration
from .routing import ReservationPolicy
from .storage import Store


def _open_platform(data_dir: str | None, fixture: str | None, ttl: float) -> Platform:
    path = str(Path(data_dir) / "store.wal") if data_dir else None
    return Platform(
        store=Store(path),
        feed_fixture=Path(fixture) if fixture else None,
        policy=ReservationPolicy(ttl=ttl),
    )


@click.group()
@click.option("--data-dir", envvar="CROWDCAFE_DATA_DIR", default=None,
              help="Directory for the embedded store (in-memory if omitted).")
@click.option("--feed-fixture", envvar="CROWDCAFE_FEED_FIXTURE", default=None,
              help="Path to the JSON feed fixture file.")
@click.option("--reservation-ttl", envvar="CROWDCAFE_RESERVATION_TTL",
              default=600.0, type=float)
@click.pass_context
def main(ctx, data_dir, feed_fixture, reservation_ttl):
    """CrowdCafe operator tool."""
    ctx.obj = {
        "data_dir": data_dir,
        "feed_fixture": feed_fixture,
        "ttl": reservation_ttl,
    }


def _platform(ctx) -> Platform:
    return _open_platform(ctx.obj["data_dir"], ctx.obj["feed_fixture"], ctx.obj["ttl"])


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise click.ClickException(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        )
    except OSError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.argument("config", type=click.Path(exists=True))
@click.pass_context
def seed(ctx, config):
    """Idempotently load users, rewards, and coupon code pools from CONFIG."""
    platform = _platform(ctx)
    data = _load_json(config)
    summary = {"users": 0, "rewards": 0, "codes": 0}
    for user in data.get("users", []):
        platform.upsert_user(
            user["id"], user.get("display_name", user["id"]), user["role"],
            user.get("token"),
        )
        summary["users"] += 1
    for reward in data.get("rewards", []):
        codes = list(reward.get("codes", []))
        if "codes_csv" in reward:
            codes.extend(_read_codes_csv(reward["codes_csv"]))
        seen = {}
        for line_no, code in enumerate(codes, start=1):
            if code in seen:
                raise click.ClickException(
                    f"duplicate code {code!r} (entries {seen[code]} and {line_no})"
                )
            seen[code] = line_no
        item = platform.upsert_reward(
            reward["id"], reward["title"], int(reward["price_cents"]),
            reward.get("venue", ""), codes,
        )
        summary["rewards"] += 1
        summary["codes"] += item.remaining
    click.echo(json.dumps(summary))


def _read_codes_csv(path: str) -> list[str]:
    payloads = parse_csv(Path(path).read_bytes())
    try:
        return [p["code"] for p in payloads]
    except KeyError:
        raise click.ClickException(f"{path}: missing 'code' column")


@main.group()
def job():
    """Job management."""


@job.command("load")
@click.argument("config", type=click.Path(exists=True))
@click.pass_context
def job_load(ctx, config):
    """Create a job from a config file (Kitchen JSON plus a data source)."""
    platform = _platform(ctx)
    data = _load_json(config)
    created = platform.create_job(data["job"], owner_id=data.get("owner", "operator"))
    source = data.get("data")
    if source is None or source == "survey":
        counts = platform.add_data(created.id)
    elif "csv" in source:
        base = Path(config).parent
        counts = platform.add_data(created.id, csv_bytes=(base / source["csv"]).read_bytes())
    elif "feed" in source:
        counts = platform.add_data(created.id, feed_query=FeedQuery.from_json(source["feed"]))
    else:
        raise click.ClickException("data source must be 'survey', {'csv': ...} or {'feed': ...}")

    gold = data.get("gold")
    if gold:
        if "auto" in gold:
            auto = gold["auto"]
            field = auto.get("field") or created.answer_fields[0]
            choices = tuple(auto.get("choices", ("yes", "no")))
            unit_ids = [
                key for key, v in platform.store.list("units")
                if v["job_id"] == created.id
            ][: int(auto["count"])]
            platform.add_gold(created.id, {
                u: {field: simulator.truth_value(u, field, choices)} for u in unit_ids
            })
        else:
            platform.add_gold(created.id, gold["units"])
    if data.get("publish", True):
        platform.publish(created.id)
    click.echo(json.dumps({"job_id": created.id, **counts}))


@main.command()
@click.option("--workers", "-n", default=52, show_default=True)
@click.option("--accuracy", default=0.95, show_default=True)
@click.option("--seed", "seed_value", default=0, show_default=True)
@click.option("--job", "job_id", default=None, help="Job to simulate (default: first published).")
@click.option("--parallelism", default=1, show_default=True)
@click.option("--out", "-o", type=click.Path(), default=None, help="Write the report to a file.")
@click.pass_context
def simulate(ctx, workers, accuracy, seed_value, job_id, parallelism, out):
    """Drive synthetic workers through a published job; print the report."""
    platform = _platform(ctx)
    profile = simulator.BehaviorProfile(accuracy=accuracy)
    report = simulator.run_simulation(
        platform, n_workers=workers, profile=profile, seed=seed_value,
        job_id=job_id, parallelism=parallelism,
    )
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    click.echo(text)


@main.command()
@click.pass_context
def expire(ctx):
    """Expire stale reservations, returning their units to the pool."""
    platform = _platform(ctx)
    count = platform.expire_reservations()
    click.echo(json.dumps({"expired": count}))


@main.command()
@click.argument("kind", type=click.Choice(["results", "kappa", "stats"]))
@click.option("--job", "job_id", required=True)
@click.option("--field", "field_name", default=None,
              help="Answer field for the kappa matrix (default: first answer field).")
@click.option("--tags-field", default=None,
              help="List-valued field for the compliance rate in stats.")
@click.option("--format", "fmt", type=click.Choice(["json", "text"]), default="json")
@click.option("--out", "-o", type=click.Path(), default=None)
@click.pass_context
def export(ctx, kind, job_id, field_name, tags_field, fmt, out):
    """Export analytics for a job as JSON or aligned-column text."""
    platform = _platform(ctx)
    job_obj = platform.get_job(job_id)
    if kind == "results":
        payload = platform.results(job_id)
    elif kind == "kappa":
        payload = _kappa_report(platform, job_obj, field_name)
    else:
        payload = _stats_report(platform, job_obj, tags_field)
    text = _format_report(payload, fmt)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


def _kappa_report(platform, job_obj, field_name):
    field = field_name or job_obj.answer_fields[0]
    judgments = [j for j in platform.job_judgments(job_obj.id) if not j.flagged]
    ratings = {}
    for j in judgments:
        value = j.values.get(field)
        if value is None:
            continue
        ratings.setdefault(j.unit_id, []).append((j.submitted_at, str(value)))
    matrix = analytics.rating_matrix(ratings, n_raters=job_obj.min_judgments)
    result = analytics.fleiss_kappa(matrix)
    return {
        "job_id": job_obj.id,
        "field": field,
        "subjects": matrix.n_subjects,
        "raters_per_subject": matrix.n_raters,
        "categories": matrix.n_categories,
        **result.to_json(),
    }


def _stats_report(platform, job_obj, tags_field):
    judgments = [j for j in platform.job_judgments(job_obj.id) if not j.flagged]
    durations = analytics.instance_durations(judgments)
    report = {
        "job_id": job_obj.id,
        "judgments": len(judgments),
        "execution": analytics.execution_stats(durations),
        "contexts": analytics.context_distribution(judgments),
    }
    if tags_field:
        report["compliance_rate"] = analytics.compliance_rate(judgments, tags_field)
    return report


def _format_report(payload: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True)
    rows = _flatten(payload)
    width = max(len(key) for key, _ in rows) if rows else 0
    return "\n".join(f"{key.ljust(width)}  {value}" for key, value in rows)


def _flatten(payload, prefix=""):
    rows = []
    if isinstance(payload, dict):
        for key in sorted(payload):
            rows.extend(_flatten(payload[key], f"{prefix}{key}."))
    elif isinstance(payload, list):
        for i, item in enumerate(payload):
            rows.extend(_flatten(item, f"{prefix}{i}."))
    else:
        rows.append((prefix.rstrip("."), str(payload)))
    return rows


@main.command()
@click.option("--bind", envvar="CROWDCAFE_BIND", default="127.0.0.1:8000", show_default=True)
@click.option("--static-dir", envvar="CROWDCAFE_STATIC_DIR", default=None,
              help="Directory with the built web UI bundle.")
@click.pass_context
def serve(ctx, bind, static_dir):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    platform = _platform(ctx)
    host, _, port = bind.partition(":")
    app = create_app(platform, static_dir=static_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


if __name__ == "__main__":
    main()
