"""Command-line entry point.

Subcommands: prove (deterministic solver on a premises file), run (one
instance through the pipeline), eval (dataset sweep), plan-validate
(DAG checks and normalization), and trace (inspect a traces file).
Exit codes: 0 success, 1 logic or validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Any

from . import plan as planmod
from .backends import API_KEY_ENV, Backend, BackendError, LiveBackend, ScriptedBackend, SolverStubBackend
from .fol import parse_formula
from .harness import HarnessConfig, compose_question, evaluate, file_sha256, load_dataset, report_to_doc, stratify_by_depth
from .pipeline import PipelineConfig, Problem, run_pipeline, trace_to_doc
from .solver import Verdict, decide, forward_chain, kb_from_repr
from .structured import build_repr, deserialize_repr


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _load_premises(path: Path):
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return deserialize_repr(text)
    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            pairs.append((line, line))
    return build_repr(pairs)


def _print_support(verdict: Verdict) -> None:
    for note in verdict.notes:
        print(f"note: {note}")
    if not verdict.support:
        print("support: direct from the premises" if verdict.label in "TF" else "support: none")
        return
    for ground in verdict.support:
        binding = ", ".join(f"{var}={val}" for var, val in ground.binding)
        premises = ", ".join(str(p) for p in ground.premises)
        print(f"rule {ground.rule_id} [{binding}]: {premises} => {ground.conclusion}")


def cmd_prove(args: argparse.Namespace) -> int:
    try:
        context = _load_premises(Path(args.premises))
        question = parse_formula(args.question)
        kb = forward_chain(kb_from_repr(context, cwa=args.cwa))
        verdict = decide(kb, question)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(verdict.label)
    if args.explain:
        _print_support(verdict)
    return 0


def cmd_plan_validate(args: argparse.Namespace) -> int:
    try:
        doc = json.loads(Path(args.plan).read_text(encoding="utf-8"))
        parsed = planmod.plan_from_json(doc)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    try:
        planmod.validate_dag(parsed)
    except planmod.CycleError as err:
        print(f"cycle: {err.cycle}")
        return 1
    except planmod.ShapeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    order = planmod.execution_order(parsed)
    reduced = planmod.transitive_reduce(parsed)
    redundant = len(parsed.edges()) - len(reduced.edges())
    duplicates = planmod.duplicate_content(parsed)
    print(f"acyclic; order: {' '.join(str(i) for i in order)}; {redundant} redundant edges")
    for group in duplicates:
        print(f"duplicate content: steps {list(group)}")
    if args.normalize:
        normalized = planmod.normalize(parsed)
        _atomic_write(Path(args.normalize), json.dumps(planmod.plan_to_json(normalized), indent=2) + "\n")
        print(f"normalized plan written to {args.normalize}")
    return 0


def _make_backend(args: argparse.Namespace) -> Backend:
    spec = args.backend
    if spec == "solver-stub":
        return SolverStubBackend(cwa=getattr(args, "cwa", False))
    if spec.startswith("scripted:"):
        return ScriptedBackend(spec.split(":", 1)[1])
    if spec == "live":
        if not args.base_url or not args.model:
            raise BackendError("live backend needs --base-url and --model")
        return LiveBackend(
            base_url=args.base_url,
            model=args.model,
            timeout_s=args.timeout_s,
            max_inflight=args.concurrency,
        )
    raise BackendError(f"unknown backend {spec!r} (use live, scripted:<dir>, or solver-stub)")


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    ablate = {token.strip() for token in (args.ablate or "").split(",") if token.strip()}
    unknown = ablate - {"mp", "srm", "fdr"}
    if unknown:
        raise ValueError(f"unknown ablation {sorted(unknown)} (use mp, srm, fdr)")
    return PipelineConfig(
        max_replan_rounds=args.max_replan_rounds,
        temperature=args.temperature,
        disable_matrix_plan="mp" in ablate,
        disable_structured_repr="srm" in ablate,
        disable_replanner="fdr" in ablate,
        cwa=getattr(args, "cwa", False),
    )


def cmd_run(args: argparse.Namespace) -> int:
    try:
        instances = load_dataset(args.dataset, format=args.format)
        if args.id is not None:
            matches = [i for i in instances if i.id == args.id]
            if not matches:
                print(f"error: no instance with id {args.id!r}", file=sys.stderr)
                return 1
            instance = matches[0]
        else:
            instance = instances[args.index]
        backend = _make_backend(args)
        config = _pipeline_config(args)
        problem = Problem(id=instance.id, premises=instance.premises, question=compose_question(instance))
        result = run_pipeline(backend, problem, config)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"instance {instance.id}: predicted {result.final.label}, gold {instance.gold}")
    print(f"rounds used: {result.rounds_used}")
    if args.traces:
        lines = [json.dumps(trace_to_doc(t, instance.id), ensure_ascii=False) for t in result.traces]
        _atomic_write(Path(args.traces), "\n".join(lines) + "\n")
        print(f"traces written to {args.traces}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        instances = load_dataset(args.dataset, format=args.format)
        backend = _make_backend(args)
        config = HarnessConfig(
            pipeline=_pipeline_config(args),
            concurrency=args.concurrency,
            timeout_s=args.timeout_s,
            seed=args.seed,
            backend_label=args.backend,
            dataset_hash=file_sha256(args.dataset),
        )
        report = evaluate(instances, backend, config)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"instances: {report.total}  correct: {report.correct}  accuracy: {report.accuracy:.4f}")
    try:
        table = stratify_by_depth(report)
        print("depth  accuracy")
        for depth, accuracy in table.items():
            print(f"{depth:>5}  {accuracy:.4f}")
    except Exception:
        pass
    for record in report.records:
        status = "ok" if record.correct else f"fail ({record.failure_kind})"
        print(f"  {record.id}: {record.predicted or '-'} vs {record.gold} [{status}]")
    if args.out:
        _atomic_write(Path(args.out), json.dumps(report_to_doc(report), ensure_ascii=False, indent=2) + "\n")
    if args.traces:
        lines = [json.dumps(doc, ensure_ascii=False) for doc in report.traces]
        _atomic_write(Path(args.traces), "\n".join(lines) + ("\n" if lines else ""))
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    try:
        lines = Path(args.traces).read_text(encoding="utf-8").splitlines()
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    shown = 0
    for line in lines:
        if not line.strip():
            continue
        doc: dict[str, Any] = json.loads(line)
        if args.instance and doc.get("instance") != args.instance:
            continue
        shown += 1
        print(f"instance {doc.get('instance')} round {doc.get('round')}: provisional {doc.get('provisional')}")
        for record in doc.get("records", []):
            derived = record.get("derived") or []
            suffix = f" | derived: {', '.join(derived)}" if derived else ""
            print(f"  step {record.get('step')}: {record.get('note', '')[:100]}{suffix}")
    if not shown:
        print("no matching trace records")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proofplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    prove = sub.add_parser("prove", help="decide a question against a premises file")
    prove.add_argument("premises", help="premises file (document JSON or one formula per line)")
    prove.add_argument("--question", "-q", required=True, help="question formula")
    prove.add_argument("--explain", action="store_true", help="print the derivation chain")
    prove.add_argument("--cwa", action="store_true", help="closed-world antecedent matching")
    prove.set_defaults(func=cmd_prove)

    validate = sub.add_parser("plan-validate", help="check a plan file for cycles and redundancy")
    validate.add_argument("plan", help="plan JSON file")
    validate.add_argument("--normalize", metavar="OUT", help="write the normalized plan here")
    validate.set_defaults(func=cmd_plan_validate)

    def add_pipeline_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--backend", default="solver-stub", help="live, scripted:<dir>, or solver-stub")
        p.add_argument("--model", default="", help="model name for the live backend")
        p.add_argument("--base-url", default="", help=f"live endpoint base URL (key from ${API_KEY_ENV})")
        p.add_argument("--format", default="tfu-json", choices=["tfu-json", "options-json"])
        p.add_argument("--max-replan-rounds", type=int, default=1)
        p.add_argument("--temperature", type=float, default=0.0)
        p.add_argument("--concurrency", type=int, default=4)
        p.add_argument("--timeout-s", type=float, default=300.0)
        p.add_argument("--ablate", default="", help="comma-separated: mp, srm, fdr")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--cwa", action="store_true")
        p.add_argument("--traces", default="", help="write JSONL traces here")

    run = sub.add_parser("run", help="run one dataset instance through the pipeline")
    run.add_argument("dataset", help="dataset JSON file")
    group = run.add_mutually_exclusive_group()
    group.add_argument("--id", help="instance id to run")
    group.add_argument("--index", type=int, default=0, help="instance index to run")
    add_pipeline_args(run)
    run.set_defaults(func=cmd_run)

    evaluate_parser = sub.add_parser("eval", help="evaluate a dataset")
    evaluate_parser.add_argument("dataset", help="dataset JSON file")
    add_pipeline_args(evaluate_parser)
    evaluate_parser.add_argument("--out", default="", help="write the report JSON here")
    evaluate_parser.set_defaults(func=cmd_eval)

    trace = sub.add_parser("trace", help="inspect a JSONL traces file")
    trace.add_argument("traces", help="traces JSONL file")
    trace.add_argument("--instance", default="", help="only show this instance")
    trace.set_defaults(func=cmd_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
