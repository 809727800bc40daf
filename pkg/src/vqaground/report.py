"""Report tables and image exports (annotated boxes, binary masks)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from .backends import Detection
from .errors import ImageDecodeError, OutputNotWritable
from .geometry import BBox, rasterize_boxes
from .metrics import EvalResult, GroundingScore


@dataclass
class ReportRow:
    model: str
    scope: str
    accuracy: float
    iou: GroundingScore
    overlap: GroundingScore

    @classmethod
    def from_result(cls, model: str, result: EvalResult) -> "ReportRow":
        return cls(
            model=model,
            scope=str(result.config_echo.get("scope", "")),
            accuracy=result.accuracy,
            iou=result.iou_score,
            overlap=result.overlap_score,
        )

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "scope": self.scope,
            "accuracy": self.accuracy,
            "iou": {"precision": self.iou.precision, "recall": self.iou.recall,
                    "f1": self.iou.f1},
            "overlap": {"precision": self.overlap.precision,
                        "recall": self.overlap.recall, "f1": self.overlap.f1},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportRow":
        def _gs(g: dict) -> GroundingScore:
            return GroundingScore(g["precision"], g["recall"], g["f1"], 0, 0, 0)

        return cls(d["model"], d["scope"], d["accuracy"], _gs(d["iou"]), _gs(d["overlap"]))


_COLUMNS = [
    "Model", "Obj.", "Acc.",
    "IoU-P", "IoU-R", "IoU-F1",
    "Ovl-P", "Ovl-R", "Ovl-F1",
]


def _row_cells(row: ReportRow) -> list[str]:
    ratios = [
        row.accuracy,
        row.iou.precision, row.iou.recall, row.iou.f1,
        row.overlap.precision, row.overlap.recall, row.overlap.f1,
    ]
    return [row.model, row.scope] + [f"{v:.3f}" for v in ratios]


def render_report(rows: list[ReportRow], fmt: str = "table") -> str:
    """Render evaluation rows as a fixed-width table, JSON, or CSV.

    The table rounds ratios to 3 decimals; json/csv carry full precision so
    downstream comparisons are never contaminated by rounding.
    """
    if not rows:
        raise ValueError("render_report needs at least one row")
    if fmt == "json":
        return json.dumps([r.to_dict() for r in rows], indent=2)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([
            "model", "scope", "accuracy",
            "iou_precision", "iou_recall", "iou_f1",
            "overlap_precision", "overlap_recall", "overlap_f1",
        ])
        for r in rows:
            writer.writerow([
                r.model, r.scope, repr(r.accuracy),
                repr(r.iou.precision), repr(r.iou.recall), repr(r.iou.f1),
                repr(r.overlap.precision), repr(r.overlap.recall), repr(r.overlap.f1),
            ])
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")

    cells = [_COLUMNS] + [_row_cells(r) for r in rows]
    widths = [max(len(line[i]) for line in cells) for i in range(len(_COLUMNS))]
    lines = []
    for j, line in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


GT_COLOR = (255, 0, 0)
PRED_COLOR = (0, 255, 0)


def draw_annotations(
    image_path: str | Path,
    gt_boxes: list[BBox],
    pred_boxes: list[BBox],
    out_path: str | Path,
    stroke: int = 2,
) -> Path:
    """Write a PNG copy of the image with GT boxes in red, predictions in green."""
    try:
        with Image.open(image_path) as im:
            canvas = im.convert("RGB")
    except (UnidentifiedImageError, OSError) as e:
        raise ImageDecodeError(f"cannot decode {image_path}: {e}") from e
    draw = ImageDraw.Draw(canvas)
    w, h = canvas.size
    for boxes, color in ((gt_boxes, GT_COLOR), (pred_boxes, PRED_COLOR)):
        for box in boxes:
            clipped = box.clip(w, h)
            if clipped is None:
                continue
            draw.rectangle(
                [clipped.x_min, clipped.y_min, clipped.x_max - 1, clipped.y_max - 1],
                outline=color,
                width=stroke,
            )
    out_path = Path(out_path)
    canvas.save(out_path, format="PNG")
    return out_path


def export_mask(
    detections: list[Detection], width: int, height: int, out_path: str | Path
) -> Path:
    """Write the detections' union as a black/white PNG (foreground 255)."""
    mask = rasterize_boxes([d.bbox for d in detections], width, height)
    pixels = np.where(mask.data, 255, 0).astype(np.uint8)
    out_path = Path(out_path)
    try:
        Image.fromarray(pixels, mode="L").save(out_path, format="PNG")
    except OSError as e:
        raise OutputNotWritable(f"cannot write {out_path}: {e}") from e
    return out_path
