"""Canonical dataset format, validation, source adapters, and a synthetic
closed-world fixture generator.

The canonical form is JSONL, one sample per line:

    {"id": "s0001", "image": "images/a.png", "width": 64, "height": 64,
     "question": "what color is the cube?", "answer": "red",
     "groundings": {"answer": {"boxes": [[4, 4, 12, 12]]}},
     "meta": {}}

A grounding scope carries either "boxes" (corner-form [x0, y0, x1, y1]) or
"polygons" (lists of [x, y] points), never both.  Images are referenced by
path relative to the dataset root and never embedded.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DuplicateId,
    MappingDescriptorError,
    SchemaError,
    SourceLayoutError,
)
from .geometry import BBox, Polygon

SCOPES = ("answer", "full", "all", "question")


@dataclass
class GroundingTruth:
    """Ground truth for one scope: boxes or polygons, exactly one of the two."""

    boxes: list[BBox] | None = None
    polygons: list[Polygon] | None = None

    def __post_init__(self):
        if (self.boxes is None) == (self.polygons is None):
            raise ValueError("grounding truth needs exactly one of boxes/polygons")
        if not (self.boxes or self.polygons):
            raise ValueError("grounding truth must be non-empty")


@dataclass
class Sample:
    id: str
    image: str
    width: int | None
    height: int | None
    question: str
    answer: str
    groundings: dict[str, GroundingTruth] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


@dataclass
class Dataset:
    root: Path
    samples: list[Sample]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def scopes_present(self) -> set[str]:
        return {scope for s in self.samples for scope in s.groundings}

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}


@dataclass
class Finding:
    sample_id: str
    code: str
    message: str


@dataclass
class ValidationReport:
    n_samples: int
    findings: list[Finding]

    @property
    def ok(self) -> bool:
        return not self.findings


@dataclass
class ConversionSummary:
    converted: int
    skipped: int
    skip_reasons: dict[str, int] = field(default_factory=dict)


def _parse_grounding(raw, line: int, scope: str) -> GroundingTruth:
    if not isinstance(raw, dict):
        raise SchemaError("grounding must be an object", line, scope)
    has_boxes = "boxes" in raw
    has_polys = "polygons" in raw
    if has_boxes == has_polys:
        raise SchemaError(
            "grounding needs exactly one of 'boxes'/'polygons'", line, scope
        )
    if has_boxes:
        if not raw["boxes"]:
            raise SchemaError("grounding 'boxes' must be non-empty", line, scope)
        try:
            boxes = [BBox.from_list(b) for b in raw["boxes"]]
        except (ValueError, TypeError) as e:
            raise SchemaError(f"bad box: {e}", line, scope) from e
        return GroundingTruth(boxes=boxes)
    if not raw["polygons"]:
        raise SchemaError("grounding 'polygons' must be non-empty", line, scope)
    try:
        polys = [Polygon.from_list(p) for p in raw["polygons"]]
    except (ValueError, TypeError) as e:
        raise SchemaError(f"bad polygon: {e}", line, scope) from e
    return GroundingTruth(polygons=polys)


def _parse_sample(raw: dict, line: int) -> Sample:
    if not isinstance(raw, dict):
        raise SchemaError("sample must be a JSON object", line)
    for key in ("id", "image", "width", "height", "question", "answer"):
        if key not in raw:
            raise SchemaError(f"missing field {key!r}", line, key)
    if not isinstance(raw["id"], str) or not raw["id"]:
        raise SchemaError("'id' must be a non-empty string", line, "id")
    for key in ("width", "height"):
        v = raw[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise SchemaError(f"{key!r} must be an integer >= 1", line, key)
    if not isinstance(raw["question"], str) or not raw["question"].strip():
        raise SchemaError("'question' must be non-empty", line, "question")
    if not isinstance(raw["answer"], str):
        raise SchemaError("'answer' must be a string", line, "answer")
    groundings = {}
    for scope, g in (raw.get("groundings") or {}).items():
        if scope not in SCOPES:
            raise SchemaError(f"unknown grounding scope {scope!r}", line, "groundings")
        groundings[scope] = _parse_grounding(g, line, scope)
    meta = raw.get("meta") or {}
    if not isinstance(meta, dict):
        raise SchemaError("'meta' must be an object", line, "meta")
    return Sample(
        id=raw["id"],
        image=str(raw["image"]),
        width=raw["width"],
        height=raw["height"],
        question=raw["question"],
        answer=raw["answer"],
        groundings=groundings,
        meta=meta,
    )


def load_canonical(path: str | Path) -> Dataset:
    """Load a canonical JSONL file, reporting the offending line on failure."""
    path = Path(path)
    samples: list[Sample] = []
    seen: set[str] = set()
    with path.open() as fh:
        for lineno, text in enumerate(fh, start=1):
            text = text.strip()
            if not text:
                continue
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON: {e}", lineno) from e
            sample = _parse_sample(raw, lineno)
            if sample.id in seen:
                raise DuplicateId(f"duplicate sample id {sample.id!r}", lineno, "id")
            seen.add(sample.id)
            samples.append(sample)
    return Dataset(root=path.parent, samples=samples)


def sample_to_dict(sample: Sample) -> dict:
    groundings = {}
    for scope, g in sample.groundings.items():
        if g.boxes is not None:
            groundings[scope] = {"boxes": [b.to_list() for b in g.boxes]}
        else:
            groundings[scope] = {"polygons": [p.to_list() for p in g.polygons]}
    return {
        "id": sample.id,
        "image": sample.image,
        "width": sample.width,
        "height": sample.height,
        "question": sample.question,
        "answer": sample.answer,
        "groundings": groundings,
        "meta": sample.meta,
    }


def write_canonical(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for sample in ds.samples:
            fh.write(json.dumps(sample_to_dict(sample), sort_keys=True) + "\n")


def validate_dataset(ds: Dataset, images_required: bool = False) -> ValidationReport:
    """Check geometry bounds, optional image existence, and scope consistency."""
    findings: list[Finding] = []
    for s in ds.samples:
        w, h = s.width, s.height
        for scope, g in s.groundings.items():
            for box in g.boxes or []:
                if box.x_max > w or box.y_max > h:
                    findings.append(
                        Finding(s.id, "box-out-of-bounds",
                                f"scope {scope}: box {box.to_list()} exceeds {w}x{h}")
                    )
            for poly in g.polygons or []:
                xs = [x for x, _ in poly.vertices]
                ys = [y for _, y in poly.vertices]
                if min(xs) < 0 or min(ys) < 0 or max(xs) > w or max(ys) > h:
                    findings.append(
                        Finding(s.id, "polygon-out-of-bounds",
                                f"scope {scope}: polygon exceeds {w}x{h}")
                    )
        if images_required and not (ds.root / s.image).is_file():
            findings.append(Finding(s.id, "missing-image", f"no file {s.image!r}"))
    return ValidationReport(len(ds.samples), findings)


# ---------------------------------------------------------------------------
# source adapters


def convert_gqa(
    questions_path: str | Path,
    scene_graphs_path: str | Path,
    out_path: str | Path,
    image_ext: str = ".jpg",
) -> ConversionSummary:
    """Convert GQA questions + scene graphs to canonical JSONL.

    Emits scopes answer/full/all from the per-question object pointer
    annotations; "all" is the deduplicated union of every pointed box.
    Questions whose pointers cannot be resolved contribute what they can;
    a question resolving to nothing is skipped and counted.
    """
    questions = json.loads(Path(questions_path).read_text())
    scenes = json.loads(Path(scene_graphs_path).read_text())
    if not isinstance(questions, dict) or not isinstance(scenes, dict):
        raise SourceLayoutError("GQA questions and scene graphs must be JSON objects")

    skip_reasons: dict[str, int] = {}
    samples: list[Sample] = []

    def _skip(reason: str):
        skip_reasons[reason] = skip_reasons.get(reason, 0) + 1

    for qid in sorted(questions):
        q = questions[qid]
        for key in ("imageId", "question", "answer"):
            if key not in q:
                raise SourceLayoutError(f"GQA question {qid!r} missing {key!r}")
        scene = scenes.get(q["imageId"])
        if scene is None:
            _skip("missing-scene")
            continue
        if "width" not in scene or "height" not in scene:
            raise SourceLayoutError(f"GQA scene {q['imageId']!r} missing width/height")
        objects = scene.get("objects") or {}

        def _boxes(pointers) -> list[BBox]:
            out = []
            for obj_id in pointers:
                obj = objects.get(str(obj_id))
                if obj is None:
                    _skip("unresolved-pointer")
                    continue
                try:
                    out.append(BBox.from_xywh(obj["x"], obj["y"], obj["w"], obj["h"]))
                except (KeyError, ValueError):
                    _skip("bad-object-box")
            return out

        ann = q.get("annotations") or {}
        scope_boxes = {
            "answer": _boxes((ann.get("answer") or {}).values()),
            "full": _boxes((ann.get("fullAnswer") or {}).values()),
            "question": _boxes((ann.get("question") or {}).values()),
        }
        all_boxes: list[BBox] = []
        for boxes in scope_boxes.values():
            for b in boxes:
                if b not in all_boxes:
                    all_boxes.append(b)
        scope_boxes["all"] = all_boxes

        groundings = {
            scope: GroundingTruth(boxes=boxes)
            for scope, boxes in scope_boxes.items()
            if boxes
        }
        if not groundings:
            _skip("no-groundings")
            continue
        samples.append(
            Sample(
                id=qid,
                image=f"images/{q['imageId']}{image_ext}",
                width=int(scene["width"]),
                height=int(scene["height"]),
                question=q["question"],
                answer=q["answer"],
                groundings=groundings,
                meta={"full_answer": q.get("fullAnswer", "")},
            )
        )

    write_canonical(Dataset(Path(out_path).parent, samples), out_path)
    return ConversionSummary(len(samples), sum(skip_reasons.values()), skip_reasons)


DEFAULT_CLEVR_DESCRIPTOR = {
    "question_id_field": "question_index",
    "image_field": "image_filename",
    "question_field": "question",
    "answer_field": "answer",
    "boxes_field": "boxes",
    "box_format": "xyxy",
    "width_field": "width",
    "height_field": "height",
}


def convert_clevr(
    questions_path: str | Path,
    annotations_path: str | Path,
    out_path: str | Path,
    descriptor: dict | None = None,
) -> ConversionSummary:
    """Convert CLEVR questions + a companion grounding annotation file.

    Upstream grounding exports vary, so field names and the box format come
    from a small mapping descriptor (see DEFAULT_CLEVR_DESCRIPTOR).  The
    annotation file maps question id -> {boxes, width, height}.
    """
    desc = dict(DEFAULT_CLEVR_DESCRIPTOR)
    for key, value in (descriptor or {}).items():
        if key not in desc:
            raise MappingDescriptorError(f"unknown descriptor key {key!r}")
        desc[key] = value
    if desc["box_format"] not in ("xyxy", "xywh"):
        raise MappingDescriptorError(f"bad box_format {desc['box_format']!r}")

    raw = json.loads(Path(questions_path).read_text())
    questions = raw.get("questions") if isinstance(raw, dict) else raw
    if not isinstance(questions, list):
        raise SourceLayoutError("CLEVR questions file must hold a question list")
    annotations = json.loads(Path(annotations_path).read_text())
    if not isinstance(annotations, dict):
        raise SourceLayoutError("CLEVR annotation file must be a JSON object")

    skip_reasons: dict[str, int] = {}
    samples: list[Sample] = []
    for q in questions:
        try:
            qid = str(q[desc["question_id_field"]])
            image = q[desc["image_field"]]
            question = q[desc["question_field"]]
            answer = str(q[desc["answer_field"]])
        except (KeyError, TypeError) as e:
            raise SourceLayoutError(f"CLEVR question missing field: {e}") from e
        ann = annotations.get(qid)
        if ann is None:
            skip_reasons["missing-annotation"] = skip_reasons.get("missing-annotation", 0) + 1
            continue
        try:
            raw_boxes = ann[desc["boxes_field"]]
            width = int(ann[desc["width_field"]])
            height = int(ann[desc["height_field"]])
        except (KeyError, TypeError) as e:
            raise SourceLayoutError(f"CLEVR annotation {qid!r} missing field: {e}") from e
        if desc["box_format"] == "xywh":
            boxes = [BBox.from_xywh(*b) for b in raw_boxes]
        else:
            boxes = [BBox.from_list(b) for b in raw_boxes]
        if not boxes:
            skip_reasons["empty-boxes"] = skip_reasons.get("empty-boxes", 0) + 1
            continue
        samples.append(
            Sample(
                id=qid,
                image=f"images/{image}",
                width=width,
                height=height,
                question=question,
                answer=answer,
                groundings={"answer": GroundingTruth(boxes=boxes)},
            )
        )
    write_canonical(Dataset(Path(out_path).parent, samples), out_path)
    return ConversionSummary(len(samples), sum(skip_reasons.values()), skip_reasons)


def convert_vizwiz(annotations_path: str | Path, out_path: str | Path) -> ConversionSummary:
    """Convert a VizWiz-style annotation list (polygon boundaries) to canonical.

    Expected layout: a JSON list of records with image, question, answer,
    width, height, and polygons (lists of [x, y] boundary points).
    Boundaries with fewer than 3 points are skipped and counted.
    """
    records = json.loads(Path(annotations_path).read_text())
    if not isinstance(records, list):
        raise SourceLayoutError("VizWiz annotation file must hold a record list")
    skip_reasons: dict[str, int] = {}
    samples: list[Sample] = []
    for i, rec in enumerate(records):
        for key in ("image", "question", "answer", "width", "height", "polygons"):
            if key not in rec:
                raise SourceLayoutError(f"VizWiz record {i} missing {key!r}")
        polys = []
        for pts in rec["polygons"]:
            if len(pts) < 3:
                skip_reasons["degenerate-polygon"] = skip_reasons.get("degenerate-polygon", 0) + 1
                continue
            polys.append(Polygon.from_list(pts))
        if not polys:
            skip_reasons["no-polygons"] = skip_reasons.get("no-polygons", 0) + 1
            continue
        samples.append(
            Sample(
                id=rec.get("id", f"vizwiz_{i:05d}"),
                image=f"images/{rec['image']}",
                width=int(rec["width"]),
                height=int(rec["height"]),
                question=rec["question"],
                answer=str(rec["answer"]),
                groundings={"answer": GroundingTruth(polygons=polys)},
            )
        )
    write_canonical(Dataset(Path(out_path).parent, samples), out_path)
    return ConversionSummary(len(samples), sum(skip_reasons.values()), skip_reasons)


# ---------------------------------------------------------------------------
# synthetic closed world

COLORS = ("red", "blue", "green", "yellow", "purple", "gray")
SHAPES = ("cube", "ball", "cylinder", "cone", "pyramid")


def synth_generate(
    seed: int,
    n_scenes: int,
    image_size: int = 64,
    out_dir: str | Path = ".",
) -> tuple[Path, Path, Path]:
    """Generate a deterministic closed-world fixture.

    Writes three files into out_dir and returns their paths:
      scenes.json   - scene description usable as the mock detector's oracle
      dataset.jsonl - canonical dataset whose GT boxes match the scenes
      vqa_lookup.json - (image, question) -> ground-truth answer table

    Each scene holds 1-5 objects with distinct shapes and disjoint boxes, and
    one color question about one of them, so a pipeline built from the lookup
    answerer and the scene oracle is a perfect predictor by construction.
    """
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    if image_size < 16:
        raise ValueError("image_size must be >= 16")
    rng = random.Random(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    cell = image_size // 4  # 4x4 grid of disjoint cells keeps boxes disjoint
    scenes: dict[str, dict] = {}
    samples: list[Sample] = []
    vqa_table: dict[str, dict[str, str]] = {}

    for i in range(n_scenes):
        image = f"scene_{i:04d}.png"
        n_objects = rng.randint(1, 5)
        shapes = rng.sample(SHAPES, n_objects)
        cells = rng.sample(range(16), n_objects)
        objects = []
        for shape, cell_idx in zip(shapes, cells):
            color = rng.choice(COLORS)
            cx0 = (cell_idx % 4) * cell
            cy0 = (cell_idx // 4) * cell
            x0 = cx0 + rng.randint(0, cell // 4)
            y0 = cy0 + rng.randint(0, cell // 4)
            w = rng.randint(cell // 2, cell - (x0 - cx0) - 1)
            h = rng.randint(cell // 2, cell - (y0 - cy0) - 1)
            objects.append(
                {"attributes": [color, shape], "bbox": [x0, y0, x0 + w, y0 + h]}
            )
        scenes[image] = {"width": image_size, "height": image_size, "objects": objects}

        target = rng.randrange(n_objects)
        color, shape = objects[target]["attributes"]
        question = f"what color is the {shape}?"
        samples.append(
            Sample(
                id=f"s{i:04d}",
                image=image,
                width=image_size,
                height=image_size,
                question=question,
                answer=color,
                groundings={
                    "answer": GroundingTruth(
                        boxes=[BBox.from_list(objects[target]["bbox"])]
                    )
                },
            )
        )
        vqa_table.setdefault(image, {})[question] = color

    scenes_path = out_dir / "scenes.json"
    dataset_path = out_dir / "dataset.jsonl"
    vqa_path = out_dir / "vqa_lookup.json"
    scenes_path.write_text(json.dumps({"scenes": scenes}, sort_keys=True, indent=2) + "\n")
    write_canonical(Dataset(out_dir, samples), dataset_path)
    vqa_path.write_text(json.dumps(vqa_table, sort_keys=True, indent=2) + "\n")
    return scenes_path, dataset_path, vqa_path
