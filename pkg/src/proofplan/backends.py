"""Text-generation backends for the pipeline stages.

Three interchangeable implementations: a live HTTP chat-completions client,
a scripted replay backend that serves recorded stage outputs from fixture
files, and a deterministic stub that answers every stage by running the
symbolic solver. All of them return raw text; the pipeline parses stage
outputs the same way regardless of the backend.
"""

from __future__ import annotations

import json
import os
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Mapping

from . import plan as planmod
from . import solver as solvermod
from .fol import Exists
from .structured import StructuredRepr, doc_to_repr

__all__ = [
    "API_KEY_ENV",
    "Backend",
    "BackendError",
    "GenerationParams",
    "StageMeta",
    "LiveBackend",
    "ScriptedBackend",
    "SolverStubBackend",
]

API_KEY_ENV = "PROOFPLAN_API_KEY"


class BackendError(Exception):
    pass


@dataclass(frozen=True)
class StageMeta:
    """Routing metadata attached to a stage call.

    The scripted backend keys fixtures on (instance_id, stage, round); the
    solver stub reads its structured inputs from `payload`. The live backend
    ignores everything except the prompt.
    """

    stage: str
    round: int = 0
    instance_id: str | None = None
    payload: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 4096
    meta: StageMeta | None = None


class Backend(ABC):
    """A total text-completion function; failures raise, never return empty."""

    @abstractmethod
    def complete(self, prompt: str, params: GenerationParams) -> str:
        raise NotImplementedError


class LiveBackend(Backend):
    """Chat-completions HTTP backend.

    The API key comes from the environment only (never a config file). At
    most `max_inflight` requests run concurrently; transient failures retry
    with exponential backoff.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = API_KEY_ENV,
        timeout_s: float = 120.0,
        max_retries: int = 3,
        max_inflight: int = 4,
        session: Any = None,
    ):
        key = os.environ.get(api_key_env, "")
        if not key:
            raise BackendError(f"environment variable {api_key_env} is not set")
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self._key = key
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._model = model
        self._timeout = timeout_s
        self._retries = max_retries
        self._gate = threading.Semaphore(max_inflight)

    def complete(self, prompt: str, params: GenerationParams) -> str:
        body = {
            "model": self._model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self._key}", "Content-Type": "application/json"}
        last_error = "no attempts made"
        for attempt in range(self._retries):
            if attempt:
                time.sleep(2 ** (attempt - 1))
            with self._gate:
                try:
                    response = self._session.post(self._url, json=body, headers=headers, timeout=self._timeout)
                except Exception as err:  # requests.RequestException and injected fakes
                    last_error = str(err)
                    continue
            status = getattr(response, "status_code", 0)
            if status == 429 or status >= 500:
                last_error = f"HTTP {status}"
                continue
            if status != 200:
                raise BackendError(f"HTTP {status}: {getattr(response, 'text', '')[:200]}")
            try:
                content = response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as err:
                raise BackendError(f"malformed completion payload: {err}") from err
            if not isinstance(content, str) or not content:
                raise BackendError("backend returned an empty completion")
            return content
        raise BackendError(f"request failed after {self._retries} attempts: {last_error}")


class ScriptedBackend(Backend):
    """Replays recorded stage outputs from a fixture directory.

    Fixtures are text files named `<instance_id>__<stage>__<round>.txt`,
    with `<stage>__<round>.txt` as an instance-agnostic fallback.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise BackendError(f"fixture directory not found: {self.directory}")

    def complete(self, prompt: str, params: GenerationParams) -> str:
        meta = params.meta
        if meta is None:
            raise BackendError("scripted backend needs stage metadata to pick a fixture")
        names = [f"{meta.stage}__{meta.round}.txt"]
        if meta.instance_id is not None:
            names.insert(0, f"{meta.instance_id}__{meta.stage}__{meta.round}.txt")
        for name in names:
            path = self.directory / name
            if path.is_file():
                return path.read_text(encoding="utf-8")
        raise BackendError(f"no fixture for stage={meta.stage} round={meta.round} (tried {names})")


_STUB_FULL_PLAN = (
    "Collect the initial facts from the premises.",
    "Ground the rules over the declared constants.",
    "Run the ground rules to a fixpoint.",
    "Judge the question against the derived facts.",
)

_STUB_DEGRADED_PLAN = (
    "Collect the initial facts from the premises.",
    "Apply the ground rules once.",
    "Judge the question against the derived facts.",
)


def _chain_matrix(n: int) -> list[list[int]]:
    return [[1 if j == i + 1 else 0 for j in range(n)] for i in range(n)]


class SolverStubBackend(Backend):
    """Deterministic backend that answers every stage with solver output.

    Translation treats each premise and the question as formula text, so it
    only suits instances whose statements are already first-order formulas.
    The emitted plan is a four-step linear chain; with `degrade_initial_plan`
    the first plan skips the fixpoint step and applies the rules once, which
    reproduces the early-stop failure the replanner is meant to repair (its
    replan stage always returns the full plan).
    """

    def __init__(self, degrade_initial_plan: bool = False, cwa: bool = False):
        self.degrade_initial_plan = degrade_initial_plan
        self.cwa = cwa

    def complete(self, prompt: str, params: GenerationParams) -> str:
        meta = params.meta
        if meta is None:
            raise BackendError("solver stub needs stage metadata")
        if meta.stage == "translate":
            return self._translate(meta)
        if meta.stage == "plan":
            return self._plan(meta)
        if meta.stage == "solve":
            return self._solve(meta)
        if meta.stage == "replan":
            return self._replan(meta)
        raise BackendError(f"unknown stage {meta.stage!r}")

    def _translate(self, meta: StageMeta) -> str:
        premises = meta.payload.get("premises", ())
        question = meta.payload.get("question", "")
        doc = {
            "Premises": [{"statement": text, "symbol": text} for text in premises],
            "Proposition": [{"statement": question, "symbol": question}],
        }
        return json.dumps(doc, ensure_ascii=False, indent=2)

    def _plan(self, meta: StageMeta) -> str:
        contents = _STUB_DEGRADED_PLAN if self.degrade_initial_plan else _STUB_FULL_PLAN
        doc = {
            "Plan": {str(i + 1): {"content": text} for i, text in enumerate(contents)},
            "Matrix": _chain_matrix(len(contents)),
        }
        return json.dumps(doc, ensure_ascii=False, indent=2)

    def _replan(self, meta: StageMeta) -> str:
        doc = {
            "Revised plan": {
                "Corrected_plan": {str(i + 1): {"content": text} for i, text in enumerate(_STUB_FULL_PLAN)},
                "Matrix": _chain_matrix(len(_STUB_FULL_PLAN)),
            },
            "Rationale": "run rule application to a fixpoint before the judgment step",
        }
        return json.dumps(doc, ensure_ascii=False, indent=2)

    def _context(self, meta: StageMeta) -> StructuredRepr:
        doc = meta.payload.get("repr_doc")
        if doc is None:
            text = meta.payload.get("repr_text", "")
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as err:
                raise BackendError(f"solver stub cannot read the context: {err}") from err
        return doc_to_repr(doc)

    def _solve(self, meta: StageMeta) -> str:
        context = self._context(meta)
        plan_doc = meta.payload.get("plan_doc")
        if plan_doc is None:
            raise BackendError("solver stub solve call lacks a plan")
        plan = planmod.plan_from_json(plan_doc)
        order = planmod.execution_order(plan)

        kb = solvermod.kb_from_repr(context, cwa=self.cwa)
        grounded = solvermod.ground_rules(kb)
        literals: set[solvermod.Literal] = set()
        log: list[dict[str, Any]] = []
        answer: str | None = None

        def fire(single_pass: bool) -> list[solvermod.GroundRule]:
            fired: list[solvermod.GroundRule] = []
            while True:
                snapshot = set(literals)
                new: list[solvermod.GroundRule] = []
                for ground in grounded:
                    if ground.conclusion in literals or ground.conclusion in {g.conclusion for g in new}:
                        continue
                    if all(p in snapshot for p in ground.premises):
                        new.append(ground)
                for ground in new:
                    literals.add(ground.conclusion)
                fired.extend(new)
                if single_pass or not new:
                    return fired

        for step_id in order:
            step = plan.steps[step_id - 1]
            text = step.content.lower()
            entry: dict[str, Any] = {"step": step_id, "note": step.content, "status": "ok"}
            if "fixpoint" in text or "until no new" in text:
                fired = fire(single_pass=False)
                entry["derived"] = [str(g.conclusion) for g in fired]
                entry["derivations"] = [_derivation_doc(g) for g in fired]
            elif "once" in text:
                fired = fire(single_pass=True)
                entry["derived"] = [str(g.conclusion) for g in fired]
                entry["derivations"] = [_derivation_doc(g) for g in fired]
            elif "initial fact" in text or "establish" in text:
                literals.update(kb.literals)
                entry["derived"] = [str(lit) for lit in sorted(kb.literals)]
            elif "ground" in text:
                entry["note"] = f"{step.content} ({len(grounded)} ground instances)"
            elif "judge" in text or "judgment" in text or "decide" in text or "final answer" in text:
                answer = self._adjudicate(context, literals)
                entry["note"] = f"{step.content} -> {answer}"
            log.append(entry)

        if answer is None:
            answer = self._adjudicate(context, literals)
        doc = {"Execution log": log, "Final answer": answer}
        return json.dumps(doc, ensure_ascii=False, indent=2)

    def _adjudicate(self, context: StructuredRepr, literals: set[solvermod.Literal]) -> str:
        """Membership test against the literals the executed steps derived."""
        if not context.questions:
            raise BackendError("instance has no question to adjudicate")
        question = context.questions[0].symbol
        if isinstance(question, Exists):
            positive, predicate, args, variables = solvermod.existential_targets(question)
            domain = tuple(sorted(context.table.constants))
            for values in product(domain, repeat=len(variables)):
                binding = dict(zip(variables, values))
                witness = solvermod.Literal(
                    positive,
                    predicate,
                    tuple(binding[name] if is_var else name for is_var, name in args),
                )
                if witness in literals:
                    return solvermod.T
            return solvermod.U
        lit = solvermod.literal_from_formula(question)
        if lit in literals:
            return solvermod.T
        if lit.negated() in literals:
            return solvermod.F
        return solvermod.U


def _derivation_doc(ground: solvermod.GroundRule) -> dict[str, Any]:
    return {
        "literal": str(ground.conclusion),
        "rule": ground.rule_id,
        "binding": dict(ground.binding),
        "premises": [str(p) for p in ground.premises],
    }
