"""Command-line entry points: run, eval, convert, validate, caption, synth,
render, mock-serve.

Every subcommand exits 0 on success; toolkit errors print one
machine-parsable line ("ERROR <kind>: <message>") to stderr and exit 1.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from . import datasets as ds_mod
from . import metrics as metrics_mod
from .errors import VqaGroundError
from .pipeline import PipelineConfig, load_predictions, run_dataset
from .prompting import build_prompt, heuristic_declarative
from .report import ReportRow, draw_annotations, export_mask, render_report


def _tool_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except VqaGroundError as e:
            click.echo(f"ERROR {type(e).__name__}: {e}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """VQA-grounding pipeline orchestrator and evaluation toolkit."""


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["full", "answer-only"]), default=None,
              help="Override the config's pipeline mode.")
@click.option("--parallelism", type=int, default=None)
@_tool_errors
def run(dataset_path, config_path, out_path, mode, parallelism):
    """Run the pipeline over a dataset, writing predictions as JSONL."""
    cfg = PipelineConfig.load(config_path)
    if mode is not None:
        cfg.mode = mode.replace("-", "_")
    if parallelism is not None:
        cfg.parallelism = parallelism
    cfg.__post_init__()  # re-check after overrides
    dataset = ds_mod.load_canonical(dataset_path)
    summary = run_dataset(cfg, dataset, out_path)
    click.echo(
        f"processed={summary.processed} skipped={summary.skipped} "
        f"failed={summary.failed} wall_time_s={summary.wall_time_s:.2f}"
    )


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--scope", type=click.Choice(list(ds_mod.SCOPES)), default="answer")
@click.option("--iou-threshold", type=float, default=0.5, show_default=True)
@click.option("--overlap-threshold", type=float, default=0.5, show_default=True)
@click.option("--report", "report_fmt", type=click.Choice(["table", "json", "csv"]),
              default="table")
@click.option("--mask-iou", is_flag=True, help="Also report mean mask IoU.")
@click.option("--top-k", type=int, default=None,
              help="Keep only the top-K detections per record.")
@click.option("--label", default="pipeline", help="Model label for the report row.")
@_tool_errors
def eval_cmd(pred_path, dataset_path, scope, iou_threshold, overlap_threshold,
             report_fmt, mask_iou, top_k, label):
    """Score a predictions file against dataset ground truth."""
    records = load_predictions(pred_path)
    dataset = ds_mod.load_canonical(dataset_path)
    result = metrics_mod.evaluate_grounding(
        records, dataset, scope=scope,
        iou_threshold=iou_threshold, overlap_threshold=overlap_threshold,
        top_k=top_k, include_mask_iou=mask_iou,
    )
    click.echo(render_report([ReportRow.from_result(label, result)], report_fmt), nl=False)
    if report_fmt == "table":
        click.echo(f"\nsamples={result.n_samples} failed={result.n_failed} "
                   f"config={json.dumps(result.config_echo, sort_keys=True)}")
        if result.mean_mask_iou is not None:
            click.echo(f"mean_mask_iou={result.mean_mask_iou:.3f}")


@main.command()
@click.option("--from", "source", required=True, type=click.Choice(["gqa", "clevr", "vizwiz"]))
@click.option("--to", "out_path", required=True, type=click.Path())
@click.option("--questions", type=click.Path(exists=True),
              help="Questions file (gqa, clevr).")
@click.option("--scenes", type=click.Path(exists=True),
              help="GQA scene graphs file.")
@click.option("--annotations", type=click.Path(exists=True),
              help="Grounding annotations (clevr, vizwiz).")
@click.option("--descriptor", type=click.Path(exists=True),
              help="CLEVR field-mapping descriptor JSON.")
@_tool_errors
def convert(source, out_path, questions, scenes, annotations, descriptor):
    """Convert a source dataset into the canonical JSONL format."""
    if source == "gqa":
        if not (questions and scenes):
            raise click.UsageError("--from gqa needs --questions and --scenes")
        summary = ds_mod.convert_gqa(questions, scenes, out_path)
    elif source == "clevr":
        if not (questions and annotations):
            raise click.UsageError("--from clevr needs --questions and --annotations")
        desc = json.loads(Path(descriptor).read_text()) if descriptor else None
        summary = ds_mod.convert_clevr(questions, annotations, out_path, desc)
    else:
        if not annotations:
            raise click.UsageError("--from vizwiz needs --annotations")
        summary = ds_mod.convert_vizwiz(annotations, out_path)
    click.echo(f"converted={summary.converted} skipped={summary.skipped} "
               f"reasons={json.dumps(summary.skip_reasons, sort_keys=True)}")


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--images-required", is_flag=True)
@_tool_errors
def validate(dataset_path, images_required):
    """Validate a canonical dataset; exits nonzero when findings exist."""
    dataset = ds_mod.load_canonical(dataset_path)
    report = ds_mod.validate_dataset(dataset, images_required=images_required)
    for f in report.findings:
        click.echo(f"{f.sample_id}: {f.code}: {f.message}")
    click.echo(f"samples={report.n_samples} findings={len(report.findings)}")
    if not report.ok:
        sys.exit(1)


@main.command()
@click.option("--question", required=True)
@click.option("--answer", required=True)
@click.option("--show-prompt/--no-show-prompt", default=True)
@_tool_errors
def caption(question, answer, show_prompt):
    """Preview the rendered prompt and the offline declarative conversion."""
    if show_prompt:
        click.echo(build_prompt(question, answer))
    click.echo(heuristic_declarative(question, answer))


@main.command()
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--scenes", "n_scenes", type=int, default=50, show_default=True)
@click.option("--image-size", type=int, default=64, show_default=True)
@click.option("--out-dir", type=click.Path(), default="synth", show_default=True)
@_tool_errors
def synth(seed, n_scenes, image_size, out_dir):
    """Generate the deterministic closed-world fixture files."""
    scenes_path, dataset_path, vqa_path = ds_mod.synth_generate(
        seed, n_scenes, image_size, out_dir
    )
    click.echo(f"scenes={scenes_path}\ndataset={dataset_path}\nvqa_lookup={vqa_path}")


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--sample-id", required=True)
@click.option("--scope", default="answer", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--mask", "as_mask", is_flag=True,
              help="Export the predictions as a binary mask instead.")
@_tool_errors
def render(image_path, pred_path, dataset_path, sample_id, scope, out_path, as_mask):
    """Render one sample's GT and predicted boxes onto its image (or a mask)."""
    dataset = ds_mod.load_canonical(dataset_path)
    sample = dataset.by_id().get(sample_id)
    if sample is None:
        raise click.UsageError(f"sample {sample_id!r} not in dataset")
    record = next(
        (r for r in load_predictions(pred_path) if r.sample_id == sample_id), None
    )
    if record is None:
        raise click.UsageError(f"no prediction record for {sample_id!r}")
    if as_mask:
        export_mask(record.detections, sample.width, sample.height, out_path)
    else:
        gt = sample.groundings.get(scope)
        gt_boxes = gt.boxes if gt and gt.boxes else []
        draw_annotations(image_path, gt_boxes, [d.bbox for d in record.detections], out_path)
    click.echo(out_path)


@main.command("mock-serve")
@click.option("--scenes", "scenes_path", type=click.Path(exists=True), default=None)
@click.option("--vqa-table", "vqa_table_path", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8808, show_default=True,
              envvar="VQAGROUND_MOCK_PORT")
@click.option("--host", default="127.0.0.1", show_default=True)
@_tool_errors
def mock_serve(scenes_path, vqa_table_path, port, host):
    """Serve all three mock roles over the wire protocol on one port."""
    from .mock_server import MockBackendServer

    server = MockBackendServer(scenes_path, vqa_table_path, host=host, port=port)
    click.echo(f"serving on {server.base_url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
