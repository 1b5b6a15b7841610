"""Dataset loading, batch evaluation, and depth-stratified scoring.

Scoring follows one strict rule: an instance counts as incorrect unless the
pipeline produced exactly the gold label. Aborted runs, schema violations,
and wrong labels all land in the denominator, distinguished only by the
recorded failure kind.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FuturesTimeout
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .backends import Backend, BackendError
from .errors import SchemaError
from .pipeline import (
    InvalidEdit,
    PipelineConfig,
    Problem,
    StageParseError,
    normalize_label,
    run_pipeline,
    trace_to_doc,
)
from .plan import CycleError, MatrixShapeMismatch, ShapeError

__all__ = [
    "Instance",
    "InstanceRecord",
    "RunReport",
    "HarnessConfig",
    "MissingDepth",
    "compose_question",
    "load_dataset",
    "evaluate",
    "stratify_by_depth",
    "report_to_doc",
    "file_sha256",
]

class MissingDepth(Exception):
    pass


@dataclass(frozen=True)
class Instance:
    id: str
    premises: tuple[str, ...]
    question: str
    gold: str
    depth: int | None = None
    dataset: str = ""
    options: tuple[str, ...] = ()


@dataclass(frozen=True)
class InstanceRecord:
    id: str
    predicted: str | None
    gold: str
    correct: bool
    failure_kind: str | None
    rounds_used: int
    duration_s: float
    depth: int | None = None


@dataclass(frozen=True)
class HarnessConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    concurrency: int = 4
    timeout_s: float = 300.0
    seed: int = 0
    backend_label: str = ""
    dataset_hash: str = ""

    def fingerprint(self) -> str:
        doc = {
            "pipeline": asdict(self.pipeline),
            "concurrency": self.concurrency,
            "timeout_s": self.timeout_s,
            "seed": self.seed,
            "backend": self.backend_label,
            "dataset_hash": self.dataset_hash,
        }
        blob = json.dumps(doc, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class RunReport:
    records: tuple[InstanceRecord, ...]
    total: int
    correct: int
    accuracy: float
    fingerprint: str
    config: HarnessConfig
    traces: tuple[dict[str, Any], ...] = field(default=(), compare=False)


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def _as_premises(entry: dict[str, Any], pointer: str) -> tuple[str, ...]:
    if "premises" in entry:
        raw = entry["premises"]
        if not isinstance(raw, list) or not all(isinstance(p, str) for p in raw):
            raise SchemaError(f"{pointer}/premises", "expected array of strings")
        return tuple(raw)
    for key in ("context", "theory"):
        if key in entry:
            raw = entry[key]
            if not isinstance(raw, str):
                raise SchemaError(f"{pointer}/{key}", "expected string")
            parts = [p.strip() for p in _SENTENCE_SPLIT.split(raw) if p.strip()]
            return tuple(parts) if parts else (raw,)
    raise SchemaError(f"{pointer}/premises", "missing premises/context")


def _gold_label(entry: dict[str, Any], pointer: str, format: str) -> str:
    for key in ("answer", "label", "gold"):
        if key in entry:
            raw = entry[key]
            break
    else:
        raise SchemaError(f"{pointer}/answer", "missing gold answer")
    if isinstance(raw, bool):
        # some dataset dumps carry the label as a JSON boolean
        raw = "T" if raw else "F"
    label = normalize_label(raw if isinstance(raw, str) else None)
    if label is None:
        raise SchemaError(f"{pointer}/answer", f"unrecognized label {raw!r}")
    if format == "tfu-json" and label not in ("T", "F", "U"):
        raise SchemaError(f"{pointer}/answer", f"label {label} outside T/F/U")
    if format == "options-json" and label not in ("A", "B", "C", "D", "E"):
        raise SchemaError(f"{pointer}/answer", f"label {label} is not an option letter")
    return label


def load_dataset(path: str | Path, format: str = "tfu-json") -> list[Instance]:
    """Load instances from a JSON array; labels are normalized on the way in.

    Accepted per-instance keys: id, premises (array) or context/theory
    (sentence-split string), question or conclusion, answer/label/gold,
    optional depth and options.
    """
    if format not in ("tfu-json", "options-json"):
        raise ValueError(f"unknown dataset format {format!r}")
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SchemaError("", f"not valid JSON: {err}") from err
    if not isinstance(data, list):
        raise SchemaError("", "expected a top-level array of instances")
    instances: list[Instance] = []
    for index, entry in enumerate(data):
        pointer = f"/{index}"
        if not isinstance(entry, dict):
            raise SchemaError(pointer, "expected object")
        identifier = entry.get("id", entry.get("example_id", f"instance-{index}"))
        question = entry.get("question", entry.get("conclusion"))
        if not isinstance(question, str) or not question:
            raise SchemaError(f"{pointer}/question", "missing question")
        depth = entry.get("depth")
        if depth is not None and (isinstance(depth, bool) or not isinstance(depth, int) or depth < 0):
            raise SchemaError(f"{pointer}/depth", "expected integer >= 0")
        options = entry.get("options", [])
        if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
            raise SchemaError(f"{pointer}/options", "expected array of strings")
        instances.append(
            Instance(
                id=str(identifier),
                premises=_as_premises(entry, pointer),
                question=question,
                gold=_gold_label(entry, pointer, format),
                depth=depth,
                dataset=path.stem,
                options=tuple(options),
            )
        )
    return instances


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

_FAILURE_KINDS = {
    StageParseError: "format",
    SchemaError: "format",
    MatrixShapeMismatch: "format",
    ShapeError: "format",
    InvalidEdit: "format",
    CycleError: "cycle",
    BackendError: "backend",
}


def _classify_failure(err: Exception) -> str:
    for kind, name in _FAILURE_KINDS.items():
        if isinstance(err, kind):
            return name
    return "error"


def compose_question(instance: Instance) -> str:
    """Question text with lettered options appended when present."""
    if not instance.options:
        return instance.question
    letters = "ABCDE"
    lines = [instance.question, "Options:"]
    for i, option in enumerate(instance.options[:5]):
        lines.append(f"({letters[i]}) {option}")
    return "\n".join(lines)


def _run_one(instance: Instance, backend: Backend, config: HarnessConfig) -> tuple[InstanceRecord, list[dict]]:
    start = time.perf_counter()
    try:
        problem = Problem(id=instance.id, premises=instance.premises, question=compose_question(instance))
        result = run_pipeline(backend, problem, config.pipeline)
        predicted = result.final.label
        traces = [trace_to_doc(t, instance.id) for t in result.traces]
        correct = predicted == instance.gold
        record = InstanceRecord(
            id=instance.id,
            predicted=predicted,
            gold=instance.gold,
            correct=correct,
            failure_kind=None if correct else "wrong-label",
            rounds_used=result.rounds_used,
            duration_s=time.perf_counter() - start,
            depth=instance.depth,
        )
        return record, traces
    except Exception as err:
        record = InstanceRecord(
            id=instance.id,
            predicted=None,
            gold=instance.gold,
            correct=False,
            failure_kind=_classify_failure(err),
            rounds_used=0,
            duration_s=time.perf_counter() - start,
            depth=instance.depth,
        )
        return record, []


def evaluate(instances: Sequence[Instance], backend: Backend, config: HarnessConfig = HarnessConfig()) -> RunReport:
    """Run the pipeline over every instance with a bounded worker pool.

    Per-instance failures become records, never harness faults. Records and
    traces are assembled in the input order, so the report is independent of
    the concurrency level.
    """
    records: list[InstanceRecord] = []
    traces: list[dict[str, Any]] = []
    workers = max(1, config.concurrency)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, instance, backend, config) for instance in instances]
        for instance, future in zip(instances, futures):
            try:
                record, instance_traces = future.result(timeout=config.timeout_s)
            except FuturesTimeout:
                record = InstanceRecord(
                    id=instance.id,
                    predicted=None,
                    gold=instance.gold,
                    correct=False,
                    failure_kind="timeout",
                    rounds_used=0,
                    duration_s=config.timeout_s,
                    depth=instance.depth,
                )
                instance_traces = []
            records.append(record)
            traces.extend(instance_traces)
    correct = sum(1 for r in records if r.correct)
    total = len(records)
    return RunReport(
        records=tuple(records),
        total=total,
        correct=correct,
        accuracy=(correct / total) if total else 0.0,
        fingerprint=config.fingerprint(),
        config=config,
        traces=tuple(traces),
    )


def stratify_by_depth(report: RunReport) -> dict[int, float]:
    """Accuracy per reasoning depth; depths with no instances are omitted."""
    if all(record.depth is None for record in report.records):
        raise MissingDepth("no instance carries a depth annotation")
    totals: dict[int, int] = {}
    hits: dict[int, int] = {}
    for record in report.records:
        if record.depth is None:
            continue
        totals[record.depth] = totals.get(record.depth, 0) + 1
        hits[record.depth] = hits.get(record.depth, 0) + int(record.correct)
    return {depth: hits[depth] / totals[depth] for depth in sorted(totals)}


def report_to_doc(report: RunReport) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "fingerprint": report.fingerprint,
        "config": {
            "pipeline": asdict(report.config.pipeline),
            "concurrency": report.config.concurrency,
            "timeout_s": report.config.timeout_s,
            "seed": report.config.seed,
            "backend": report.config.backend_label,
            "dataset_hash": report.config.dataset_hash,
        },
        "total": report.total,
        "correct": report.correct,
        "accuracy": report.accuracy,
        "records": [
            {
                "id": r.id,
                "predicted": r.predicted,
                "gold": r.gold,
                "correct": r.correct,
                "failure_kind": r.failure_kind,
                "rounds_used": r.rounds_used,
                "duration_s": round(r.duration_s, 6),
                "depth": r.depth,
            }
            for r in report.records
        ],
    }
    try:
        doc["by_depth"] = {str(k): v for k, v in stratify_by_depth(report).items()}
    except MissingDepth:
        pass
    return doc
