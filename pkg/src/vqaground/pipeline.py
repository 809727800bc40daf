"""Per-sample and per-dataset orchestration of the VQA -> caption -> detect
flow, with resumable batch runs and bounded parallelism.

"full" mode runs answerer -> prompt -> language model -> detector; in
"answer_only" mode the predicted answer is handed to the detector directly
and no prompt is built.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .backends import (
    BackendEndpoint,
    Detection,
    ImageRef,
    llm_query,
    ovd_query,
    vqa_query,
)
from .datasets import Dataset, Sample
from .errors import BackendError, ConfigError, OutputNotWritable, VqaGroundError
from .prompting import DEFAULT_TEMPLATE, PromptTemplate, build_prompt

MODES = ("full", "answer_only")

_CONFIG_KEYS = {
    "mode", "endpoints", "box_threshold", "text_threshold",
    "prompt_template", "parallelism", "continue_on_error", "cache_dir",
}
_ENDPOINT_KEYS = {"role", "base_url", "timeout", "max_retries", "backoff", "headers"}


@dataclass
class PipelineConfig:
    endpoints: dict[str, BackendEndpoint]
    mode: str = "full"
    box_threshold: float = 0.25
    text_threshold: float = 0.25
    prompt_template: PromptTemplate = DEFAULT_TEMPLATE
    parallelism: int = 1
    continue_on_error: bool = True
    cache_dir: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        required = {"vqa", "ovd"} if self.mode == "answer_only" else {"vqa", "llm", "ovd"}
        missing = required - set(self.endpoints)
        if missing:
            raise ConfigError(f"mode {self.mode!r} requires endpoints for {sorted(missing)}")
        for role, ep in self.endpoints.items():
            if ep.role != role:
                raise ConfigError(f"endpoint under {role!r} has role {ep.role!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    def config_echo(self) -> dict:
        return {
            "mode": self.mode,
            "box_threshold": self.box_threshold,
            "text_threshold": self.text_threshold,
            "endpoints": {role: ep.base_url for role, ep in sorted(self.endpoints.items())},
        }

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "box_threshold": self.box_threshold,
            "text_threshold": self.text_threshold,
            "parallelism": self.parallelism,
            "continue_on_error": self.continue_on_error,
            "endpoints": {
                role: {
                    "role": ep.role,
                    "base_url": ep.base_url,
                    "timeout": ep.timeout,
                    "max_retries": ep.max_retries,
                }
                for role, ep in sorted(self.endpoints.items())
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "endpoints" not in raw:
            raise ConfigError("config missing 'endpoints'")
        endpoints = {}
        for role, ep in raw["endpoints"].items():
            bad = set(ep) - _ENDPOINT_KEYS
            if bad:
                raise ConfigError(f"unknown endpoint keys for {role!r}: {sorted(bad)}")
            if "base_url" not in ep:
                raise ConfigError(f"endpoint {role!r} missing 'base_url'")
            kwargs = {k: v for k, v in ep.items() if k != "role"}
            if "headers" in kwargs:
                # secrets stay out of config files: ${VAR} is expanded at load
                kwargs["headers"] = {
                    k: os.path.expandvars(v) if isinstance(v, str) else v
                    for k, v in kwargs["headers"].items()
                }
            endpoints[role] = BackendEndpoint(role=ep.get("role", role), **kwargs)
        template = DEFAULT_TEMPLATE
        if "prompt_template" in raw:
            tpl = raw["prompt_template"]
            bad = set(tpl) - {"question_label", "answer_label", "instruction"}
            if bad:
                raise ConfigError(f"unknown prompt_template keys: {sorted(bad)}")
            template = PromptTemplate(**tpl)
        return cls(
            endpoints=endpoints,
            mode=raw.get("mode", "full"),
            box_threshold=raw.get("box_threshold", 0.25),
            text_threshold=raw.get("text_threshold", 0.25),
            prompt_template=template,
            parallelism=raw.get("parallelism", 1),
            continue_on_error=raw.get("continue_on_error", True),
            cache_dir=raw.get("cache_dir"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        return cls.from_dict(raw)


@dataclass
class StageError:
    stage: str
    kind: str
    message: str


@dataclass
class PredictionRecord:
    sample_id: str
    predicted_answer: str | None = None
    prompt: str | None = None
    caption: str | None = None
    detections: list[Detection] = field(default_factory=list)
    stage_timings: dict[str, float] = field(default_factory=dict)
    cache_hits: list[str] = field(default_factory=list)
    error: StageError | None = None
    config_echo: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        # fixed key order; absent optional fields are omitted entirely
        doc: dict = {"sample_id": self.sample_id}
        if self.predicted_answer is not None:
            doc["predicted_answer"] = self.predicted_answer
        if self.prompt is not None:
            doc["prompt"] = self.prompt
        if self.caption is not None:
            doc["caption"] = self.caption
        doc["detections"] = [d.to_dict() for d in self.detections]
        if include_timings:
            doc["stage_timings"] = self.stage_timings
            if self.cache_hits:
                doc["cache_hits"] = self.cache_hits
        if self.error is not None:
            doc["error"] = {
                "stage": self.error.stage,
                "kind": self.error.kind,
                "message": self.error.message,
            }
        doc["config_echo"] = self.config_echo
        return doc

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings=include_timings))

    @classmethod
    def from_dict(cls, doc: dict) -> "PredictionRecord":
        error = None
        if "error" in doc:
            error = StageError(**doc["error"])
        return cls(
            sample_id=doc["sample_id"],
            predicted_answer=doc.get("predicted_answer"),
            prompt=doc.get("prompt"),
            caption=doc.get("caption"),
            detections=[Detection.from_dict(d) for d in doc.get("detections", [])],
            stage_timings=doc.get("stage_timings", {}),
            cache_hits=doc.get("cache_hits", []),
            error=error,
            config_echo=doc.get("config_echo", {}),
        )


@dataclass
class RunSummary:
    processed: int
    skipped: int
    failed: int
    wall_time_s: float


class _ResponseCache:
    """Optional content-addressed cache of backend responses on disk."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, role: str, request: dict) -> Path:
        digest = hashlib.sha256(
            (role + "\0" + json.dumps(request, sort_keys=True)).encode()
        ).hexdigest()
        return self.root / f"{digest}.json"

    def get(self, role: str, request: dict):
        path = self._path(role, request)
        if path.is_file():
            return json.loads(path.read_text())
        return None

    def put(self, role: str, request: dict, response) -> None:
        self._path(role, request).write_text(json.dumps(response))


def _resolve_image(sample: Sample, dataset: Dataset, cfg: PipelineConfig) -> ImageRef:
    # mocks key scenes by the dataset-relative image name; real backends need
    # a resolvable absolute path
    if all(ep.is_mock for ep in cfg.endpoints.values()):
        return ImageRef(path=sample.image)
    return ImageRef(path=str((dataset.root / sample.image).resolve()))


def run_sample(cfg: PipelineConfig, sample: Sample, dataset: Dataset | None = None) -> PredictionRecord:
    """Run the configured stages for one sample, capturing every intermediate.

    Backend failures are recorded on the returned record (the failing stage's
    downstream fields stay absent) unless continue_on_error is off, in which
    case the error propagates.
    """
    if dataset is None:
        dataset = Dataset(Path("."), [sample])
    record = PredictionRecord(sample_id=sample.id, config_echo=cfg.config_echo())
    image = _resolve_image(sample, dataset, cfg)
    cache = _ResponseCache(cfg.cache_dir) if cfg.cache_dir else None

    def _stage(name: str, request: dict, call):
        start = time.perf_counter()
        if cache is not None:
            hit = cache.get(name, request)
            if hit is not None:
                record.cache_hits.append(name)
                record.stage_timings[name] = 0.0
                return hit
        result = call()
        record.stage_timings[name] = (time.perf_counter() - start) * 1000.0
        if cache is not None:
            cache.put(name, request, result)
        return result

    try:
        record.predicted_answer = _stage(
            "vqa",
            {"image": image.key, "question": sample.question},
            lambda: vqa_query(cfg.endpoints["vqa"], image, sample.question),
        )
        if cfg.mode == "full":
            record.prompt = build_prompt(
                sample.question, record.predicted_answer, cfg.prompt_template
            )
            record.caption = _stage(
                "llm",
                {"prompt": record.prompt},
                lambda: llm_query(cfg.endpoints["llm"], record.prompt),
            )
        else:
            record.caption = record.predicted_answer
        raw = _stage(
            "ovd",
            {
                "image": image.key,
                "caption": record.caption,
                "box_threshold": cfg.box_threshold,
                "text_threshold": cfg.text_threshold,
            },
            lambda: [
                d.to_dict()
                for d in ovd_query(
                    cfg.endpoints["ovd"],
                    image,
                    record.caption,
                    cfg.box_threshold,
                    cfg.text_threshold,
                )
            ],
        )
        record.detections = [Detection.from_dict(d) for d in raw]
    except (BackendError, VqaGroundError) as e:
        stage = _failing_stage(record, cfg)
        if not cfg.continue_on_error:
            raise
        record.error = StageError(stage=stage, kind=type(e).__name__, message=str(e))
        # error implies downstream fields absent; clear anything half-built
        if stage == "vqa":
            record.predicted_answer = None
        if stage in ("vqa", "llm"):
            record.prompt = record.prompt if stage == "llm" else None
            record.caption = None
        record.detections = []
    return record


def _failing_stage(record: PredictionRecord, cfg: PipelineConfig) -> str:
    if record.predicted_answer is None:
        return "vqa"
    if cfg.mode == "full" and record.caption is None:
        return "llm"
    return "ovd"


def _read_existing_ids(path: Path) -> set[str]:
    ids = set()
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                ids.add(json.loads(line)["sample_id"])
    return ids


def run_dataset(cfg: PipelineConfig, dataset: Dataset, out: str | Path) -> RunSummary:
    """Run the pipeline over a dataset, appending JSONL records to `out`.

    Sample ids already present in the output file are skipped (resume).  New
    records are appended sorted by sample id, so the file content does not
    depend on worker count or completion order.  Stage timings are kept out
    of the file for the same reason.
    """
    out = Path(out)
    start = time.perf_counter()
    existing: set[str] = set()
    if out.exists():
        existing = _read_existing_ids(out)
    else:
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.touch()
        except OSError as e:
            raise OutputNotWritable(f"cannot create {out}: {e}") from e

    todo = [s for s in dataset.samples if s.id not in existing]
    records: list[PredictionRecord] = []
    if todo:
        if cfg.parallelism == 1:
            records = [run_sample(cfg, s, dataset) for s in todo]
        else:
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                records = list(pool.map(lambda s: run_sample(cfg, s, dataset), todo))
    records.sort(key=lambda r: r.sample_id)

    try:
        with out.open("a") as fh:
            for record in records:
                fh.write(record.to_json() + "\n")
    except OSError as e:
        raise OutputNotWritable(f"cannot write {out}: {e}") from e

    return RunSummary(
        processed=len(records),
        skipped=len(existing & {s.id for s in dataset.samples}),
        failed=sum(1 for r in records if r.error is not None),
        wall_time_s=time.perf_counter() - start,
    )


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    """Read a predictions JSONL file back into records."""
    records = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(PredictionRecord.from_dict(json.loads(line)))
    return records
