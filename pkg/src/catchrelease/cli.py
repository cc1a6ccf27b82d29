"""Operator command line.

Local subcommands (ingest, pipeline, qc, dataset) open the stores directly;
task subcommands administer a running service over HTTP. Either way the
command is a thin adapter over the same module calls, so state reached
through the CLI is identical to state reached in-process.

Exit codes: 0 on success, 1 with the error code name on a domain failure,
2 for usage errors (unknown flags, malformed MM:SS).
"""

from __future__ import annotations

import functools
import json
import sys
from decimal import Decimal
from pathlib import Path

import click
import httpx

from .config import AppConfig, build_runtime, load_config
from .errors import CatchReleaseError
from .media import CaptureMeta, Segment
from .pipeline import run_segment_pipeline


def parse_mmss(text: str) -> tuple[int, int]:
    """'MM:SS' with both parts 0..59; anything else is a usage error."""
    parts = text.split(":")
    if len(parts) != 2:
        raise click.UsageError(f"expected MM:SS, got {text!r}")
    try:
        minute, second = int(parts[0]), int(parts[1])
    except ValueError:
        raise click.UsageError(f"expected MM:SS, got {text!r}")
    if not (0 <= minute <= 59 and 0 <= second <= 59):
        raise click.UsageError(f"MM:SS parts must be 0..59, got {text!r}")
    return minute, second


def handle_errors(fn):
    """Domain errors become `Code: message` on stderr and exit 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CatchReleaseError as err:
            click.echo(f"{err.code}: {err}", err=True)
            sys.exit(1)
        except KeyError as err:
            # missing stored objects surface as KeyError, like a dict miss
            click.echo(f"NotFound: {err.args[0] if err.args else err}", err=True)
            sys.exit(1)
        except httpx.HTTPError as err:
            click.echo(f"ServiceUnreachable: {err}", err=True)
            sys.exit(1)
    return wrapper


def emit(ctx: click.Context, payload: dict, human: str) -> None:
    if ctx.obj["json"]:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(human)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config file (else CATCHRELEASE_CONFIG, else ./catchrelease.conf).")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, as_json: bool):
    ctx.ensure_object(dict)
    try:
        cfg = load_config(config_path)
    except CatchReleaseError as err:
        click.echo(f"{err.code}: {err}", err=True)
        sys.exit(1)
    ctx.obj["config"] = cfg
    ctx.obj["json"] = as_json
    ctx.obj["runtime"] = None


def runtime_of(ctx: click.Context):
    if ctx.obj["runtime"] is None:
        ctx.obj["runtime"] = build_runtime(ctx.obj["config"])
    return ctx.obj["runtime"]


def service_client(cfg: AppConfig) -> httpx.Client:
    headers = {}
    if cfg.service.token:
        headers["Authorization"] = f"Bearer {cfg.service.token}"
    return httpx.Client(base_url=cfg.service.endpoint, headers=headers, timeout=60.0)


def checked(response: httpx.Response) -> dict | list:
    body = response.json()
    if response.status_code >= 400:
        code = body.get("code", "ServiceError") if isinstance(body, dict) else "ServiceError"
        message = body.get("message", "") if isinstance(body, dict) else str(body)
        click.echo(f"{code}: {message}", err=True)
        sys.exit(1)
    return body


# -- local commands ----------------------------------------------------------------


@main.command()
@click.argument("video_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--harvester", required=True, help="Harvester id for provenance.")
@click.option("--site", required=True, help="Collection site name.")
@click.option("--season", required=True, type=click.Choice(["wet", "dry"]))
@click.option("--date", "date_str", required=True, help="Capture date YYYY-MM-DD.")
@click.option("--device-note", default=None)
@click.pass_context
@handle_errors
def ingest(ctx, video_path, harvester, site, season, date_str, device_note):
    """Strip location tags from a video and store it."""
    import datetime as dt

    rt = runtime_of(ctx)
    try:
        capture_date = dt.date.fromisoformat(date_str)
    except ValueError:
        raise click.UsageError(f"--date must be YYYY-MM-DD, got {date_str!r}")
    capture = CaptureMeta(
        harvester_id=harvester, site=site, capture_date=capture_date,
        season=season, device_note=device_note,
    )
    video = rt.media.ingest_video(Path(video_path).read_bytes(), capture)
    emit(ctx, video.to_dict(), video.video_id)


@main.command()
@click.argument("video_id")
@click.option("--start", required=True, help="Segment start MM:SS.")
@click.option("--end", required=True, help="Segment end MM:SS.")
@click.option("--fps", default=2.0, show_default=True, help="Sampling rate.")
@click.pass_context
@handle_errors
def pipeline(ctx, video_id, start, end, fps):
    """Run segment extraction, transcription, alignment, and QC."""
    rt = runtime_of(ctx)
    start_min, start_s = parse_mmss(start)
    end_min, end_s = parse_mmss(end)
    seg = Segment(video_id=video_id, start_min=start_min, start_s=start_s,
                  end_min=end_min, end_s=end_s)
    result = run_segment_pipeline(
        video_id, seg, fps,
        media=rt.media, dataset=rt.dataset, workflow=rt.workflow,
        registry=rt.registry, transcriber=rt.transcriber,
        thresholds=rt.config.qc,
        lead_pad_s=rt.config.align.lead_pad_s,
        min_confidence=rt.config.align.min_confidence,
        language_hint=rt.config.language_hint,
        actor="cli",
    )
    human = (
        f"{result.batch_id}\n"
        f"frames {len(result.frame_ids)}  utterances {result.n_utterances}  "
        f"labeled {result.n_labeled}  pass {result.n_pass}  "
        f"review items {len(result.review_item_ids)}"
    )
    emit(ctx, result.to_dict(), human)


@main.command()
@click.argument("batch_id")
@click.pass_context
@handle_errors
def qc(ctx, batch_id):
    """Show per-frame QC outcomes for a batch."""
    rt = runtime_of(ctx)
    batch = rt.workflow.get_batch(batch_id)
    rows = []
    for fid in batch.frame_ids:
        rep = batch.qc.get(fid, {})
        rows.append((
            fid[:12],
            rep.get("verdict", "?"),
            f"{rep.get('sharpness', 0.0):.1f}",
            f"{rep.get('mean_luma', 0.0):.1f}",
            (rep.get("duplicate_of") or "")[:12],
        ))
    header = ("frame", "verdict", "sharpness", "luma", "duplicate_of")
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(5)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    counts: dict[str, int] = {}
    for fid in batch.frame_ids:
        v = batch.qc.get(fid, {}).get("verdict", "?")
        counts[v] = counts.get(v, 0) + 1
    lines.append("  ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    emit(ctx, {"batch_id": batch_id, "qc": batch.qc, "counts": counts},
         "\n".join(lines))


@main.group()
def dataset():
    """Inspect and administer the versioned dataset."""


@dataset.command("status")
@click.pass_context
@handle_errors
def dataset_status(ctx):
    rt = runtime_of(ctx)
    m = rt.dataset.manifest()
    splits: dict[str, int] = {}
    quarantined = 0
    for e in m.entries.values():
        if e.quarantined:
            quarantined += 1
        splits[e.split] = splits.get(e.split, 0) + 1
    payload = {
        "version": m.version,
        "frames": len(m.entries),
        "batches": len(m.batches),
        "splits": splits,
        "quarantined": quarantined,
    }
    human = (
        f"version {m.version}: {len(m.entries)} frames in {len(m.batches)} batches, "
        f"{quarantined} quarantined\n"
        + "  ".join(f"{k}={v}" for k, v in sorted(splits.items()))
    )
    emit(ctx, payload, human)


@dataset.command("quarantine")
@click.argument("batch_id")
@click.option("--reason", required=True)
@click.option("--actor", default="cli")
@click.pass_context
@handle_errors
def dataset_quarantine(ctx, batch_id, reason, actor):
    rt = runtime_of(ctx)
    version = rt.dataset.quarantine_batch(batch_id, reason, actor)
    emit(ctx, {"version": version, "batch_id": batch_id},
         f"quarantined {batch_id} at version {version}")


@dataset.command("relabel")
@click.argument("batch_id")
@click.argument("new_taxon")
@click.option("--actor", default="cli")
@click.pass_context
@handle_errors
def dataset_relabel(ctx, batch_id, new_taxon, actor):
    rt = runtime_of(ctx)
    version = rt.dataset.relabel_batch(batch_id, new_taxon, actor, rt.registry)
    emit(ctx, {"version": version, "batch_id": batch_id, "taxon_id": new_taxon},
         f"relabeled {batch_id} to {new_taxon} at version {version}")


@dataset.command("split")
@click.option("--ratios", default=None, help="train,val,test e.g. 0.8,0.1,0.1")
@click.option("--seed", default=None, type=int)
@click.pass_context
@handle_errors
def dataset_split(ctx, ratios, seed):
    rt = runtime_of(ctx)
    cfg = rt.config.split
    parsed = cfg.ratios if ratios is None else tuple(float(x) for x in ratios.split(","))
    version = rt.dataset.assign_splits(
        ratios=parsed, seed=cfg.seed if seed is None else seed, actor="cli"
    )
    m = rt.dataset.manifest()
    splits: dict[str, int] = {}
    for e in m.entries.values():
        splits[e.split] = splits.get(e.split, 0) + 1
    emit(ctx, {"version": version, "splits": splits},
         f"split at version {version}: "
         + "  ".join(f"{k}={v}" for k, v in sorted(splits.items())))


@dataset.command("export")
@click.option("--version", "version", default=None, type=int)
@click.option("--root", "root", required=True, type=click.Path())
@click.pass_context
@handle_errors
def dataset_export(ctx, version, root):
    rt = runtime_of(ctx)
    summary = rt.dataset.export_dataset(version, Path(root), rt.content, rt.registry)
    human = (
        f"exported version {summary.version} to {summary.root}: "
        f"{summary.total_files} files"
    )
    emit(ctx, summary.to_dict(), human)


@dataset.command("report")
@click.option("--version", "version", default=None, type=int)
@click.option("--csv", "as_csv", is_flag=True)
@click.pass_context
@handle_errors
def dataset_report(ctx, version, as_csv):
    rt = runtime_of(ctx)
    report = rt.dataset.balance_report(version)
    if as_csv:
        click.echo(report.to_csv(), nl=False)
        return
    emit(ctx, report.to_dict(), report.to_text())


# -- remote commands ------------------------------------------------------------------


@main.group()
def task():
    """Administer collection tasks on the configured service."""


@task.command("create")
@click.argument("target_taxon")
@click.pass_context
@handle_errors
def task_create(ctx, target_taxon):
    with service_client(ctx.obj["config"]) as client:
        body = checked(client.post("/tasks", json={"target_taxon": target_taxon}))
    emit(ctx, body, f"{body['task_id']} state {body['state']} {body['state_name']}")


@task.command("show")
@click.argument("task_id")
@click.pass_context
@handle_errors
def task_show(ctx, task_id):
    with service_client(ctx.obj["config"]) as client:
        body = checked(client.get(f"/tasks/{task_id}"))
    human = (
        f"{body['task_id']} state {body['state']} {body['state_name']}\n"
        f"videos: {', '.join(body['linked_videos']) or '-'}\n"
        f"batch: {body['linked_batch'] or '-'}"
    )
    emit(ctx, body, human)


@task.command("advance")
@click.argument("task_id")
@click.argument("to_state", type=int)
@click.option("--note", default="")
@click.option("--actor", default="cli")
@click.pass_context
@handle_errors
def task_advance(ctx, task_id, to_state, note, actor):
    with service_client(ctx.obj["config"]) as client:
        body = checked(client.post(
            f"/tasks/{task_id}/advance",
            json={"to_state": to_state, "note": note, "actor": actor},
        ))
    emit(ctx, body, f"{body['task_id']} state {body['state']} {body['state_name']}")


@task.command("link")
@click.argument("task_id")
@click.argument("video_id")
@click.pass_context
@handle_errors
def task_link(ctx, task_id, video_id):
    with service_client(ctx.obj["config"]) as client:
        body = checked(client.post(f"/tasks/{task_id}/videos", json={"video_id": video_id}))
    emit(ctx, body, f"{body['task_id']} videos: {', '.join(body['linked_videos'])}")


@task.command("pay")
@click.argument("task_id")
@click.option("--harvester", required=True)
@click.option("--usd", required=True, help="Amount in USD, decimal string.")
@click.option("--rate", required=True, help="IDR per USD, decimal string.")
@click.option("--ref", default="", help="External payment confirmation reference.")
@click.pass_context
@handle_errors
def task_pay(ctx, task_id, harvester, usd, rate, ref):
    with service_client(ctx.obj["config"]) as client:
        body = checked(client.post(f"/tasks/{task_id}/payments", json={
            "harvester_id": harvester,
            "amount_usd": usd,
            "fx_rate": rate,
            "confirmation_ref": ref,
        }))
    emit(ctx, body, f"IDR {Decimal(body['amount_idr']):.2f} ({body['entry_id']})")


@task.command("review")
@click.argument("item_id", required=False)
@click.option("--decision", default=None, help="Resolve ITEM_ID with this decision.")
@click.option("--actor", default="cli")
@click.pass_context
@handle_errors
def task_review(ctx, item_id, decision, actor):
    """List unresolved review items, or resolve one."""
    with service_client(ctx.obj["config"]) as client:
        if item_id is None:
            body = checked(client.get("/review", params={"state": "unresolved"}))
            human = "\n".join(
                f"{i['item_id']}  {i['kind']}  {json.dumps(i['subject'], sort_keys=True)}"
                for i in body
            ) or "no unresolved items"
            emit(ctx, {"items": body}, human)
            return
        if decision is None:
            raise click.UsageError("resolving an item requires --decision")
        body = checked(client.post(
            f"/review/{item_id}/resolve",
            json={"decision": decision, "actor": actor},
        ))
        emit(ctx, body, f"{body['item_id']} resolved: {body['resolution']['decision']}")


if __name__ == "__main__":
    main()
