"""Four-stage reasoning pipeline: translate, plan, solve, replan.

Each stage prompts the backend, extracts the first well-formed fenced JSON
block from the reply, and parses it strictly; formatting violations raise
StageParseError, which the harness scores as incorrect. The replan loop is
driven by `diagnose`, a deterministic engine-side audit of the previous
trace, and re-executes against the unchanged problem context.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Any, Mapping

from . import plan as planmod
from . import solver as solvermod
from .backends import Backend, GenerationParams, StageMeta
from .errors import SchemaError
from .plan import CycleError, MatrixShapeMismatch, Plan
from .solver import GroundRule, Literal, Verdict
from .structured import StructuredRepr, doc_to_repr, repr_to_doc, validate_static

__all__ = [
    "Problem",
    "RawContext",
    "StepRecord",
    "Trace",
    "Evidence",
    "Diagnosis",
    "PipelineConfig",
    "PipelineResult",
    "ReplanOutcome",
    "StageParseError",
    "InvalidEdit",
    "normalize_label",
    "extract_json",
    "render_prompt",
    "translate_stage",
    "plan_stage",
    "solve_stage",
    "diagnose",
    "replan_stage",
    "run_pipeline",
    "trace_to_doc",
]

DIAGNOSIS_LABELS = (
    "missing-prerequisites",
    "rule-misuse",
    "premature-termination",
    "redundancy",
)

STAGES = ("translate", "plan", "solve", "replan")


class StageParseError(Exception):
    """A stage reply violated its output contract; the raw text is retained."""

    def __init__(self, stage: str, message: str, raw: str = ""):
        self.stage = stage
        self.raw = raw
        super().__init__(f"{stage} stage: {message}")


class InvalidEdit(Exception):
    pass


@dataclass(frozen=True)
class Problem:
    id: str
    premises: tuple[str, ...]
    question: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "premises", tuple(self.premises))
        if not self.premises or not self.question:
            raise ValueError("a problem needs premises and a question")


@dataclass(frozen=True)
class RawContext:
    """Unvalidated stage-one text, used when structured management is ablated."""

    text: str


@dataclass(frozen=True)
class StepRecord:
    step_id: int
    text: str
    status: str = "ok"
    derived: tuple[Literal, ...] = ()
    derivations: tuple[GroundRule, ...] = ()


@dataclass(frozen=True)
class Trace:
    context: StructuredRepr | RawContext
    plan: Plan
    records: tuple[StepRecord, ...]
    provisional: Verdict
    raw: Mapping[str, str]
    round: int = 0
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class Evidence:
    label: str
    step_id: int | None = None
    edge: tuple[int, int] | None = None
    note: str = ""


@dataclass(frozen=True)
class Diagnosis:
    labels: frozenset[str]
    evidence: tuple[Evidence, ...]

    @property
    def clean(self) -> bool:
        return not self.labels


@dataclass(frozen=True)
class PipelineConfig:
    max_replan_rounds: int = 1
    strict_json: bool = True
    replan_on_clean: bool = True
    disable_matrix_plan: bool = False
    disable_structured_repr: bool = False
    disable_replanner: bool = False
    temperature: float = 0.0
    max_tokens: int = 4096
    cwa: bool = False

    def params(self, meta: StageMeta) -> GenerationParams:
        return GenerationParams(temperature=self.temperature, max_tokens=self.max_tokens, meta=meta)


@dataclass(frozen=True)
class ReplanOutcome:
    plan: Plan
    edits: tuple[planmod.EditOp, ...]
    rationale: str
    raw: str
    embedded_trace: tuple[Any, ...] | None = None  # (records_doc, label) when the reply re-executed


@dataclass(frozen=True)
class PipelineResult:
    final: Verdict
    traces: tuple[Trace, ...]
    plans: tuple[Plan, ...]
    diagnoses: tuple[Diagnosis, ...]
    context: StructuredRepr | RawContext
    rounds_used: int


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------

_PLACEHOLDER_RE = re.compile(r"\{(premises|question|repr|plan|trace|diagnosis|provisional)\}")


def load_template(stage: str) -> str:
    return resources.files("proofplan.prompts").joinpath(f"{stage}.txt").read_text(encoding="utf-8")


def render_prompt(template: str, values: Mapping[str, str]) -> str:
    """Substitute named placeholders; braces outside them are left alone."""
    return _PLACEHOLDER_RE.sub(lambda m: values.get(m.group(1), m.group(0)), template)


# ---------------------------------------------------------------------------
# Stage reply handling
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z]*\s*\n(.*?)```", re.DOTALL)


def extract_json(text: str, stage: str, strict: bool = True) -> Any:
    """First well-formed fenced JSON block, or the whole reply as JSON."""
    for match in _FENCE_RE.finditer(text):
        try:
            return json.loads(match.group(1))
        except json.JSONDecodeError:
            continue
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if not strict:
        start = text.find("{")
        while start != -1:
            depth = 0
            for end in range(start, len(text)):
                if text[end] == "{":
                    depth += 1
                elif text[end] == "}":
                    depth -= 1
                    if depth == 0:
                        try:
                            return json.loads(text[start : end + 1])
                        except json.JSONDecodeError:
                            break
            start = text.find("{", start + 1)
    raise StageParseError(stage, "no well-formed JSON object in the reply", raw=text)


_LABEL_WORDS = {
    "t": "T",
    "true": "T",
    "f": "F",
    "false": "F",
    "u": "U",
    "unknown": "U",
    "uncertain": "U",
}


def normalize_label(value: Any) -> str | None:
    """Map answer spellings onto {T, F, U} or an option letter A..E."""
    if not isinstance(value, str):
        return None
    token = value.strip()
    if not token:
        return None
    token = token.split("(")[0].strip().strip(")").strip()
    if not token:
        token = value.strip().strip("()").strip()
    head = token.split()[0].rstrip(".,:;") if token.split() else ""
    low = head.lower()
    if low in _LABEL_WORDS:
        return _LABEL_WORDS[low]
    if len(head) == 1 and head.upper() in "ABCDE":
        return head.upper()
    return None


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def _repr_text(context: StructuredRepr | RawContext) -> str:
    if isinstance(context, RawContext):
        return context.text
    return json.dumps(repr_to_doc(context), ensure_ascii=False, indent=2)


def _repr_payload(context: StructuredRepr | RawContext) -> dict[str, Any]:
    if isinstance(context, RawContext):
        return {"repr_doc": None, "repr_text": context.text}
    return {"repr_doc": repr_to_doc(context), "repr_text": _repr_text(context)}


def _plan_text(plan: Plan) -> str:
    doc = planmod.plan_to_json(plan)
    order = ", ".join(str(i) for i in planmod.execution_order(plan))
    return json.dumps(doc, ensure_ascii=False, indent=2) + f"\nExecution order: {order}"


def translate_stage(
    backend: Backend, problem: Problem, config: PipelineConfig = PipelineConfig()
) -> StructuredRepr | RawContext:
    context, _ = _translate(backend, problem, config)
    return context


def _translate(
    backend: Backend, problem: Problem, config: PipelineConfig
) -> tuple[StructuredRepr | RawContext, str]:
    prompt = render_prompt(
        load_template("translate"),
        {"premises": "\n".join(problem.premises), "question": problem.question},
    )
    meta = StageMeta(
        stage="translate",
        round=0,
        instance_id=problem.id,
        payload={"premises": list(problem.premises), "question": problem.question},
    )
    raw = backend.complete(prompt, config.params(meta))
    if config.disable_structured_repr:
        return RawContext(raw), raw
    doc = extract_json(raw, "translate", config.strict_json)
    try:
        context = doc_to_repr(doc)
    except SchemaError as err:
        raise StageParseError("translate", str(err), raw=raw) from err
    return context, raw


def plan_stage(
    backend: Backend,
    context: StructuredRepr | RawContext,
    config: PipelineConfig = PipelineConfig(),
    problem: Problem | None = None,
) -> Plan:
    result, _ = _plan(backend, context, config, problem)
    return result


def _plan(
    backend: Backend,
    context: StructuredRepr | RawContext,
    config: PipelineConfig,
    problem: Problem | None,
) -> tuple[Plan, str]:
    prompt = render_prompt(load_template("plan"), {"repr": _repr_text(context)})
    meta = StageMeta(
        stage="plan",
        round=0,
        instance_id=problem.id if problem else None,
        payload=_repr_payload(context),
    )
    raw = backend.complete(prompt, config.params(meta))
    doc = extract_json(raw, "plan", config.strict_json)
    try:
        parsed = planmod.plan_from_json(doc)
    except SchemaError as err:
        raise StageParseError("plan", str(err), raw=raw) from err
    if config.disable_matrix_plan:
        # Ablation: keep the steps, replace the dependency structure with the
        # linear chain 1 -> 2 -> ... -> N.
        n = parsed.size
        chain = tuple(tuple(1 if j == i + 1 else 0 for j in range(n)) for i in range(n))
        parsed = Plan(parsed.steps, chain)
    planmod.validate_dag(parsed)
    return parsed, raw


def _parse_log_entry(entry: Any, index: int, order: list[int]) -> StepRecord:
    if isinstance(entry, str):
        step_id = order[index] if index < len(order) else 0
        return StepRecord(step_id=step_id, text=entry)
    if not isinstance(entry, dict):
        raise SchemaError(f"/Execution log/{index}", "expected string or object")
    known = {"step", "note", "status", "derived", "derivations"}
    unknown = set(entry) - known
    if unknown:
        raise SchemaError(f"/Execution log/{index}/{sorted(unknown)[0]}", "unknown field")
    step_id = entry.get("step", order[index] if index < len(order) else 0)
    if isinstance(step_id, bool) or not isinstance(step_id, int):
        raise SchemaError(f"/Execution log/{index}/step", "expected integer")
    derived = []
    for i, text in enumerate(entry.get("derived", [])):
        if not isinstance(text, str):
            raise SchemaError(f"/Execution log/{index}/derived/{i}", "expected string")
        derived.append(_parse_literal(text, f"/Execution log/{index}/derived/{i}"))
    derivations = []
    for i, doc in enumerate(entry.get("derivations", [])):
        pointer = f"/Execution log/{index}/derivations/{i}"
        if not isinstance(doc, dict):
            raise SchemaError(pointer, "expected object")
        rule_id = doc.get("rule")
        if isinstance(rule_id, bool) or not isinstance(rule_id, int):
            raise SchemaError(f"{pointer}/rule", "expected integer")
        binding = doc.get("binding", {})
        if not isinstance(binding, dict):
            raise SchemaError(f"{pointer}/binding", "expected object")
        premises = tuple(
            _parse_literal(p, f"{pointer}/premises/{k}") for k, p in enumerate(doc.get("premises", []))
        )
        conclusion = _parse_literal(doc.get("literal", ""), f"{pointer}/literal")
        derivations.append(
            GroundRule(
                rule_id=rule_id,
                binding=tuple(sorted((str(k), str(v)) for k, v in binding.items())),
                premises=premises,
                conclusion=conclusion,
            )
        )
    return StepRecord(
        step_id=step_id,
        text=str(entry.get("note", "")),
        status=str(entry.get("status", "ok")),
        derived=tuple(derived),
        derivations=tuple(derivations),
    )


def _parse_literal(text: Any, pointer: str) -> Literal:
    if not isinstance(text, str):
        raise SchemaError(pointer, "expected string")
    try:
        from .fol import parse_formula

        return solvermod.literal_from_formula(parse_formula(text))
    except Exception as err:
        raise SchemaError(pointer, f"not a ground literal: {err}") from err


def _parse_solve_doc(doc: Any, plan: Plan, stage: str, raw: str) -> tuple[tuple[StepRecord, ...], str]:
    if not isinstance(doc, dict):
        raise StageParseError(stage, "expected a JSON object", raw=raw)
    if stage == "solve":
        unknown = set(doc) - {"Execution log", "Final answer"}
        if unknown:
            raise StageParseError(stage, f"unknown field {sorted(unknown)[0]!r}", raw=raw)
    if "Final answer" not in doc:
        raise StageParseError(stage, 'missing "Final answer" field', raw=raw)
    label = normalize_label(doc["Final answer"])
    if label is None:
        raise StageParseError(stage, f"unrecognized answer label {doc['Final answer']!r}", raw=raw)
    log = doc.get("Execution log", "")
    order = planmod.execution_order(plan)
    records: list[StepRecord] = []
    try:
        if isinstance(log, str):
            records.append(StepRecord(step_id=0, text=log))
        elif isinstance(log, list):
            for index, entry in enumerate(log):
                records.append(_parse_log_entry(entry, index, order))
        else:
            raise StageParseError(stage, '"Execution log" must be a string or array', raw=raw)
    except SchemaError as err:
        raise StageParseError(stage, str(err), raw=raw) from err
    return tuple(records), label


def solve_stage(
    backend: Backend,
    context: StructuredRepr | RawContext,
    plan: Plan,
    config: PipelineConfig = PipelineConfig(),
    problem: Problem | None = None,
    round: int = 0,
    extra_raw: Mapping[str, str] | None = None,
) -> Trace:
    planmod.validate_dag(plan)
    prompt = render_prompt(
        load_template("solve"), {"repr": _repr_text(context), "plan": _plan_text(plan)}
    )
    payload = _repr_payload(context)
    payload["plan_doc"] = planmod.plan_to_json(plan)
    meta = StageMeta(
        stage="solve",
        round=round,
        instance_id=problem.id if problem else None,
        payload=payload,
    )
    raw = backend.complete(prompt, config.params(meta))
    doc = extract_json(raw, "solve", config.strict_json)
    records, label = _parse_solve_doc(doc, plan, "solve", raw)
    raws = dict(extra_raw or {})
    raws["solve"] = raw
    return Trace(
        context=context,
        plan=plan,
        records=records,
        provisional=Verdict(label),
        raw=raws,
        round=round,
    )


# ---------------------------------------------------------------------------
# Diagnosis
# ---------------------------------------------------------------------------

_JUDGE_WORDS = ("judge", "judgment", "judgement", "decide", "final answer", "adjudicate")


def _is_judgment(content: str) -> bool:
    low = content.lower()
    return any(word in low for word in _JUDGE_WORDS)


def diagnose(trace: Trace, provisional: Verdict | None = None) -> Diagnosis:
    """Deterministic audit of a trace; every label carries evidence.

    Checks that need structured derivation records or a groundable context
    are skipped when that information is absent, so free-text traces can at
    most be flagged for structural redundancy.
    """
    evidence: list[Evidence] = []

    structured = isinstance(trace.context, StructuredRepr)
    kb = None
    grounded = None
    if structured:
        try:
            kb = solvermod.kb_from_repr(trace.context)
            grounded = solvermod.ground_rules(kb)
        except (solvermod.UnsupportedFragment, solvermod.DomainTooLarge):
            kb = None
            grounded = None

    has_structured_records = any(record.derived or record.derivations for record in trace.records)

    # missing prerequisites and rule misuse need per-derivation records
    if grounded is not None and has_structured_records:
        valid = {(g.rule_id, g.premises, g.conclusion) for g in grounded}
        available: set[Literal] = set(kb.literals)
        for record in trace.records:
            for derivation in record.derivations:
                key = (derivation.rule_id, derivation.premises, derivation.conclusion)
                if key not in valid:
                    evidence.append(
                        Evidence(
                            "rule-misuse",
                            step_id=record.step_id,
                            note=f"rule {derivation.rule_id} has no instantiation "
                            f"{[str(p) for p in derivation.premises]} -> {derivation.conclusion}",
                        )
                    )
                else:
                    for premise in derivation.premises:
                        if premise not in available:
                            evidence.append(
                                Evidence(
                                    "missing-prerequisites",
                                    step_id=record.step_id,
                                    note=f"consumed {premise} before any step derived it",
                                )
                            )
                available.add(derivation.conclusion)
            for lit in record.derived:
                available.add(lit)

    # premature termination: the judgment ran while rules could still fire
    if grounded is not None and has_structured_records:
        judgment_id = None
        cutoff = len(trace.records)
        for index, record in enumerate(trace.records):
            if 1 <= record.step_id <= trace.plan.size and _is_judgment(
                trace.plan.steps[record.step_id - 1].content
            ):
                judgment_id = record.step_id
                cutoff = index
                break
        if judgment_id is not None:
            # Premises are given, so they count as available from the start.
            available = set(kb.literals)
            for record in trace.records[:cutoff]:
                available.update(record.derived)
                available.update(d.conclusion for d in record.derivations)
            for ground in grounded:
                if ground.conclusion not in available and all(p in available for p in ground.premises):
                    evidence.append(
                        Evidence(
                            "premature-termination",
                            step_id=judgment_id,
                            note=f"{ground.conclusion} was still derivable at the final judgment",
                        )
                    )
                    break

    # redundancy: transitively implied edges, and steps that only re-derive
    try:
        reduced = planmod.transitive_reduce(trace.plan)
        removed = sorted(set(trace.plan.edges()) - set(reduced.edges()))
    except (CycleError, planmod.ShapeError):
        removed = []
    for edge in removed:
        evidence.append(Evidence("redundancy", edge=edge, note="edge implied by transitive reduction"))
    if has_structured_records:
        seen: set[Literal] = set()
        for record in trace.records:
            produced = set(record.derived) | {d.conclusion for d in record.derivations}
            if produced and produced <= seen:
                evidence.append(
                    Evidence("redundancy", step_id=record.step_id, note="step only re-derives known facts")
                )
            seen |= produced

    order = {label: i for i, label in enumerate(DIAGNOSIS_LABELS)}
    evidence.sort(key=lambda e: (order[e.label], e.step_id or 0, e.edge or (0, 0)))
    return Diagnosis(labels=frozenset(e.label for e in evidence), evidence=tuple(evidence))


def _diagnosis_text(diagnosis: Diagnosis) -> str:
    if not diagnosis.evidence:
        return "none"
    lines = []
    for item in diagnosis.evidence:
        where = f"step {item.step_id}" if item.step_id else (f"edge {item.edge}" if item.edge else "plan")
        lines.append(f"- {item.label} ({where}): {item.note}")
    return "\n".join(lines)


def _trace_text(trace: Trace) -> str:
    lines = []
    for record in trace.records:
        head = f"step {record.step_id}: " if record.step_id else ""
        line = f"{head}{record.text}"
        if record.derived:
            line += f" | derived: {', '.join(str(l) for l in record.derived)}"
        lines.append(line)
    return "\n".join(lines) if lines else "(empty)"


# ---------------------------------------------------------------------------
# Replanning
# ---------------------------------------------------------------------------

_EDIT_KINDS = {"AddEdge", "DelEdge", "Merge", "InsertGuard"}


def _parse_edit(doc: Any, pointer: str) -> planmod.EditOp:
    if not isinstance(doc, dict) or "op" not in doc:
        raise SchemaError(pointer, 'expected an object with an "op" field')
    op = doc["op"]
    if op not in _EDIT_KINDS:
        raise SchemaError(f"{pointer}/op", f"expected one of {sorted(_EDIT_KINDS)}")

    def int_field(name: str) -> int:
        value = doc.get(name)
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"{pointer}/{name}", "expected integer")
        return value

    if op == "AddEdge":
        return planmod.AddEdge(int_field("i"), int_field("j"))
    if op == "DelEdge":
        return planmod.DelEdge(int_field("i"), int_field("j"))
    if op == "Merge":
        return planmod.Merge(int_field("p"), int_field("q"))
    content = doc.get("content")
    if content is not None and not isinstance(content, str):
        raise SchemaError(f"{pointer}/content", "expected string")
    return planmod.InsertGuard(int_field("k"), content)


def replan_stage(
    backend: Backend,
    context: StructuredRepr | RawContext,
    plan: Plan,
    trace: Trace,
    provisional: Verdict,
    diagnosis: Diagnosis,
    config: PipelineConfig = PipelineConfig(),
    problem: Problem | None = None,
    round: int = 1,
) -> ReplanOutcome:
    """Ask the backend for a repaired plan and normalize whatever comes back.

    The reply may carry a corrected plan, an edit list, or both (the plan
    wins; edits are then informational). When it also embeds a re-execution
    (updated log plus final answer), that is surfaced so the caller can skip
    the separate solve call.
    """
    prompt = render_prompt(
        load_template("replan"),
        {
            "repr": _repr_text(context),
            "plan": _plan_text(plan),
            "trace": _trace_text(trace),
            "provisional": provisional.label,
            "diagnosis": _diagnosis_text(diagnosis),
        },
    )
    payload = _repr_payload(context)
    payload["plan_doc"] = planmod.plan_to_json(plan)
    payload["diagnosis"] = sorted(diagnosis.labels)
    payload["provisional"] = provisional.label
    meta = StageMeta(
        stage="replan",
        round=round,
        instance_id=problem.id if problem else None,
        payload=payload,
    )
    raw = backend.complete(prompt, config.params(meta))
    doc = extract_json(raw, "replan", config.strict_json)
    if not isinstance(doc, dict):
        raise StageParseError("replan", "expected a JSON object", raw=raw)
    unknown = set(doc) - {"Revised plan", "Edits", "Rationale", "Updated Execution log", "Final answer"}
    if unknown:
        raise StageParseError("replan", f"unknown field {sorted(unknown)[0]!r}", raw=raw)

    edits: tuple[planmod.EditOp, ...] = ()
    if "Edits" in doc:
        if not isinstance(doc["Edits"], list):
            raise StageParseError("replan", '"Edits" must be an array', raw=raw)
        try:
            edits = tuple(_parse_edit(e, f"/Edits/{i}") for i, e in enumerate(doc["Edits"]))
        except SchemaError as err:
            raise StageParseError("replan", str(err), raw=raw) from err

    rationale = doc.get("Rationale", "")
    if not isinstance(rationale, str):
        raise StageParseError("replan", '"Rationale" must be a string', raw=raw)

    if "Revised plan" in doc:
        revised_doc = doc["Revised plan"]
        if not isinstance(revised_doc, dict) or "Corrected_plan" not in revised_doc or "Matrix" not in revised_doc:
            raise StageParseError(
                "replan", '"Revised plan" needs "Corrected_plan" and "Matrix"', raw=raw
            )
        try:
            proposed = planmod.plan_from_json(
                {"Plan": revised_doc["Corrected_plan"], "Matrix": revised_doc["Matrix"]}
            )
        except (SchemaError, MatrixShapeMismatch) as err:
            raise StageParseError("replan", str(err), raw=raw) from err
        before = set(proposed.edges())
        revised = planmod.normalize(proposed)
        if set(revised.edges()) != before:
            rationale = (rationale + " " if rationale else "") + "(normalization adjusted the proposed matrix)"
    elif edits:
        try:
            revised = planmod.apply_edits(plan, edits)
        except (planmod.IndexOutOfRange, planmod.MergeSelf) as err:
            raise InvalidEdit(str(err)) from err
    else:
        raise StageParseError("replan", 'reply has neither "Revised plan" nor "Edits"', raw=raw)

    planmod.validate_dag(revised)

    embedded: tuple[Any, ...] | None = None
    if "Final answer" in doc:
        records, label = _parse_solve_doc(
            {"Execution log": doc.get("Updated Execution log", ""), "Final answer": doc["Final answer"]},
            revised,
            "replan",
            raw,
        )
        embedded = (records, label)
    return ReplanOutcome(plan=revised, edits=edits, rationale=rationale, raw=raw, embedded_trace=embedded)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def run_pipeline(backend: Backend, problem: Problem, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Translate, plan, solve, then diagnose/replan/re-solve up to the round cap.

    The problem context from translation is reused unchanged for every round;
    the final verdict is the last round's provisional one. Any stage error
    propagates and the caller decides how to score the instance.
    """
    context, translate_raw = _translate(backend, problem, config)
    warnings: tuple[str, ...] = ()
    if isinstance(context, StructuredRepr):
        # Static findings against the inferred table are surfaced, not fatal.
        findings = validate_static(context, context.table).findings
        warnings = tuple(f"{f.kind} (statement {f.statement_id}): {f.detail}" for f in findings)
    first_plan, plan_raw = _plan(backend, context, config, problem)
    trace = solve_stage(
        backend,
        context,
        first_plan,
        config,
        problem,
        round=0,
        extra_raw={"translate": translate_raw, "plan": plan_raw},
    )
    if warnings:
        trace = replace(trace, warnings=warnings)

    traces = [trace]
    plans = [first_plan]
    diagnoses: list[Diagnosis] = []
    rounds = 0 if config.disable_replanner else config.max_replan_rounds
    for round_index in range(1, rounds + 1):
        report = diagnose(traces[-1], traces[-1].provisional)
        diagnoses.append(report)
        if report.clean and not config.replan_on_clean:
            break
        outcome = replan_stage(
            backend,
            context,
            plans[-1],
            traces[-1],
            traces[-1].provisional,
            report,
            config,
            problem,
            round=round_index,
        )
        plans.append(outcome.plan)
        if outcome.embedded_trace is not None:
            records, label = outcome.embedded_trace
            new_trace = Trace(
                context=context,
                plan=outcome.plan,
                records=records,
                provisional=Verdict(label),
                raw={"replan": outcome.raw},
                round=round_index,
            )
        else:
            new_trace = solve_stage(
                backend,
                context,
                outcome.plan,
                config,
                problem,
                round=round_index,
                extra_raw={"replan": outcome.raw},
            )
        traces.append(new_trace)

    return PipelineResult(
        final=traces[-1].provisional,
        traces=tuple(traces),
        plans=tuple(plans),
        diagnoses=tuple(diagnoses),
        context=context,
        rounds_used=len(traces) - 1,
    )


# ---------------------------------------------------------------------------
# Trace persistence
# ---------------------------------------------------------------------------


def trace_to_doc(trace: Trace, instance_id: str) -> dict[str, Any]:
    """JSON-ready trace record; deterministic for a fixed backend transcript."""
    if isinstance(trace.context, RawContext):
        context_doc: Any = {"raw": trace.context.text}
    else:
        context_doc = repr_to_doc(trace.context)
    return {
        "instance": instance_id,
        "round": trace.round,
        "provisional": trace.provisional.label,
        "warnings": list(trace.warnings),
        "context": context_doc,
        "plan": planmod.plan_to_json(trace.plan),
        "records": [
            {
                "step": r.step_id,
                "note": r.text,
                "status": r.status,
                "derived": [str(l) for l in r.derived],
                "derivations": [
                    {
                        "literal": str(d.conclusion),
                        "rule": d.rule_id,
                        "binding": dict(d.binding),
                        "premises": [str(p) for p in d.premises],
                    }
                    for d in r.derivations
                ],
            }
            for r in trace.records
        ],
        "raw": dict(sorted(trace.raw.items())),
    }
