"""Structured problem representation: aligned statements plus a symbol table.

A problem is held as natural-language/formula pairs split into ground facts,
closed rules, and the questions to adjudicate. The JSON document form pairs
each statement with its symbolic rendering so downstream stages can cite
either side; static validation reports namespace, arity, sort, and
groundedness violations without failing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .errors import SchemaError
from .fol import (
    Atom,
    Constant,
    Equality,
    FolError,
    Formula,
    Not,
    SymbolTable,
    free_vars,
    parse_formula,
    render_formula,
)

__all__ = [
    "AlignedStatement",
    "StructuredRepr",
    "Finding",
    "StaticReport",
    "BuildError",
    "EmptyNL",
    "ArityConflict",
    "build_repr",
    "validate_static",
    "serialize_repr",
    "deserialize_repr",
    "repr_to_doc",
    "doc_to_repr",
    "is_ground_literal",
]

FINDING_KINDS = (
    "undeclared-constant",
    "undeclared-predicate",
    "arity-mismatch",
    "sort-mismatch",
    "open-rule",
    "non-ground-fact",
)


class EmptyNL(Exception):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"empty natural-language statement at index {index}")


class BuildError(Exception):
    """A statement failed to parse; `index` locates the offending pair."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"statement {index}: {cause}")


class ArityConflict(Exception):
    def __init__(self, predicate: str, arities: set[int]):
        self.predicate = predicate
        self.arities = arities
        super().__init__(f"predicate {predicate} used with conflicting arities {sorted(arities)}")


@dataclass(frozen=True)
class AlignedStatement:
    id: int
    nl: str
    symbol: Formula


@dataclass(frozen=True)
class StructuredRepr:
    table: SymbolTable
    facts: tuple[AlignedStatement, ...]
    rules: tuple[AlignedStatement, ...]
    questions: tuple[AlignedStatement, ...]

    def statements(self) -> Iterator[AlignedStatement]:
        """All statements in id order."""
        return iter(sorted((*self.facts, *self.rules, *self.questions), key=lambda s: s.id))

    @property
    def premises(self) -> tuple[AlignedStatement, ...]:
        return tuple(s for s in self.statements() if s not in self.questions)


@dataclass(frozen=True)
class Finding:
    kind: str
    statement_id: int
    detail: str


@dataclass(frozen=True)
class StaticReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.findings


def is_ground_literal(f: Formula) -> bool:
    """Atom or negated atom over constants only."""
    if isinstance(f, Not):
        f = f.body
    return isinstance(f, Atom) and all(isinstance(t, Constant) for t in f.args)


def _walk_atoms(f: Formula) -> Iterator[Atom | Equality]:
    """Atoms and equalities in left-to-right order."""
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, (Atom, Equality)):
            yield node
        elif isinstance(node, Not):
            stack.append(node.body)
        else:
            kids = []
            if hasattr(node, "items"):
                kids = list(node.items)
            elif hasattr(node, "antecedent"):
                kids = [node.antecedent, node.consequent]
            elif hasattr(node, "left"):
                kids = [node.left, node.right]
            elif hasattr(node, "body"):
                kids = [node.body]
            stack.extend(reversed(kids))


def _infer_table(formulas: Iterable[Formula]) -> SymbolTable:
    predicates: dict[str, int] = {}
    constants: set[str] = set()
    for f in formulas:
        for node in _walk_atoms(f):
            if isinstance(node, Atom):
                arity = len(node.args)
                seen = predicates.get(node.predicate)
                if seen is not None and seen != arity:
                    raise ArityConflict(node.predicate, {seen, arity})
                predicates[node.predicate] = arity
                terms = node.args
            else:
                terms = (node.left, node.right)
            constants.update(t.name for t in terms if isinstance(t, Constant))
    return SymbolTable(predicates=predicates, constants=frozenset(constants))


def build_repr(
    pairs: Iterable[tuple[str, str]],
    questions: Iterable[tuple[str, str]] = (),
    declared: SymbolTable | None = None,
) -> StructuredRepr:
    """Parse (nl, formula-text) pairs into a structured representation.

    Premise statements are classified structurally: a ground literal becomes a
    fact, anything else a rule. Question pairs are kept separate. Without a
    declared table, one is inferred from the parsed symbols; conflicting
    inferred arities are a hard error.
    """
    pairs = list(pairs)
    questions = list(questions)
    parsed: list[AlignedStatement] = []
    for index, (nl, text) in enumerate([*pairs, *questions]):
        if not nl:
            raise EmptyNL(index)
        try:
            symbol = parse_formula(text, declared)
        except FolError as err:
            raise BuildError(index, err) from err
        parsed.append(AlignedStatement(id=index + 1, nl=nl, symbol=symbol))

    table = declared if declared is not None else _infer_table(s.symbol for s in parsed)
    premise_part = parsed[: len(pairs)]
    question_part = parsed[len(pairs) :]
    facts = tuple(s for s in premise_part if is_ground_literal(s.symbol))
    rules = tuple(s for s in premise_part if not is_ground_literal(s.symbol))
    return StructuredRepr(table=table, facts=facts, rules=rules, questions=tuple(question_part))


def validate_static(repr_: StructuredRepr, strict_table: SymbolTable) -> StaticReport:
    """Check every statement against `strict_table`; findings are data, not errors.

    Findings are ordered by statement id, then by the position of the
    offending occurrence inside the statement's formula.
    """
    findings: list[Finding] = []
    fact_ids = {s.id for s in repr_.facts}
    rule_ids = {s.id for s in repr_.rules}
    for stmt in repr_.statements():
        for node in _walk_atoms(stmt.symbol):
            if isinstance(node, Atom):
                declared_arity = strict_table.predicates.get(node.predicate)
                if declared_arity is None:
                    findings.append(Finding("undeclared-predicate", stmt.id, node.predicate))
                elif declared_arity != len(node.args):
                    findings.append(
                        Finding(
                            "arity-mismatch",
                            stmt.id,
                            f"{node.predicate} declared /{declared_arity}, used /{len(node.args)}",
                        )
                    )
                terms = node.args
            else:
                terms = (node.left, node.right)
            for position, term in enumerate(terms):
                if not isinstance(term, Constant):
                    continue
                if term.name not in strict_table.constants:
                    findings.append(Finding("undeclared-constant", stmt.id, term.name))
                elif isinstance(node, Atom):
                    arg_sorts = strict_table.predicate_sorts.get(node.predicate)
                    want = arg_sorts[position] if arg_sorts and position < len(arg_sorts) else None
                    have = strict_table.constant_sorts.get(term.name)
                    if want is not None and have is not None and want != have:
                        findings.append(
                            Finding(
                                "sort-mismatch",
                                stmt.id,
                                f"{node.predicate} arg {position + 1} wants {want}, {term.name} is {have}",
                            )
                        )
        if stmt.id in fact_ids and not is_ground_literal(stmt.symbol):
            findings.append(Finding("non-ground-fact", stmt.id, render_formula(stmt.symbol)))
        if stmt.id in rule_ids:
            open_vars = free_vars(stmt.symbol)
            if open_vars:
                findings.append(Finding("open-rule", stmt.id, ", ".join(sorted(open_vars))))
    return StaticReport(findings=tuple(findings))


# ---------------------------------------------------------------------------
# JSON document form
# ---------------------------------------------------------------------------

_TOP_KEYS = {"Predicates", "Constants", "Premises", "Proposition"}
_PAIR_KEYS = {"statement", "symbol"}


def repr_to_doc(repr_: StructuredRepr) -> dict[str, Any]:
    """Document form of a representation (premises merged in id order)."""
    predicates: dict[str, Any] = {}
    for name in sorted(repr_.table.predicates):
        entry: dict[str, Any] = {"arity": repr_.table.predicates[name]}
        sorts = repr_.table.predicate_sorts.get(name)
        if sorts:
            entry["sorts"] = [s if s is not None else "" for s in sorts]
        predicates[name] = entry
    constants: dict[str, Any] = {}
    for name in sorted(repr_.table.constants):
        entry = {}
        if name in repr_.table.constant_sorts:
            entry["sort"] = repr_.table.constant_sorts[name]
        constants[name] = entry
    question_ids = {s.id for s in repr_.questions}
    premises = [
        {"statement": s.nl, "symbol": render_formula(s.symbol)}
        for s in repr_.statements()
        if s.id not in question_ids
    ]
    proposition = [{"statement": s.nl, "symbol": render_formula(s.symbol)} for s in repr_.questions]
    return {
        "Predicates": predicates,
        "Constants": constants,
        "Premises": premises,
        "Proposition": proposition,
    }


def serialize_repr(repr_: StructuredRepr) -> bytes:
    return json.dumps(repr_to_doc(repr_), ensure_ascii=False, indent=2).encode("utf-8")


def _require(value: Any, kind: type, pointer: str, what: str) -> Any:
    if not isinstance(value, kind) or isinstance(value, bool) and kind is int:
        raise SchemaError(pointer, f"expected {what}")
    return value


def _parse_pair(item: Any, pointer: str) -> tuple[str, str]:
    _require(item, dict, pointer, "object")
    unknown = set(item) - _PAIR_KEYS
    if unknown:
        raise SchemaError(f"{pointer}/{sorted(unknown)[0]}", "unknown field")
    for key in ("statement", "symbol"):
        if key not in item:
            raise SchemaError(f"{pointer}/{key}", "missing field")
        _require(item[key], str, f"{pointer}/{key}", "string")
    return item["statement"], item["symbol"]


def _parse_declarations(doc: dict[str, Any]) -> SymbolTable | None:
    if "Predicates" not in doc and "Constants" not in doc:
        return None
    predicates: dict[str, int] = {}
    predicate_sorts: dict[str, tuple[str | None, ...]] = {}
    constants: set[str] = set()
    constant_sorts: dict[str, str] = {}
    preds = doc.get("Predicates", {})
    _require(preds, dict, "/Predicates", "object")
    for name, entry in preds.items():
        pointer = f"/Predicates/{name}"
        _require(entry, dict, pointer, "object")
        unknown = set(entry) - {"arity", "sorts"}
        if unknown:
            raise SchemaError(f"{pointer}/{sorted(unknown)[0]}", "unknown field")
        if "arity" not in entry:
            raise SchemaError(f"{pointer}/arity", "missing field")
        arity = entry["arity"]
        if isinstance(arity, bool) or not isinstance(arity, int) or arity < 1:
            raise SchemaError(f"{pointer}/arity", "expected integer >= 1")
        predicates[name] = arity
        if "sorts" in entry:
            sorts = _require(entry["sorts"], list, f"{pointer}/sorts", "array")
            predicate_sorts[name] = tuple(
                (None if s == "" else _require(s, str, f"{pointer}/sorts/{i}", "string"))
                for i, s in enumerate(sorts)
            )
    consts = doc.get("Constants", {})
    if isinstance(consts, list):
        for i, name in enumerate(consts):
            constants.add(_require(name, str, f"/Constants/{i}", "string"))
    else:
        _require(consts, dict, "/Constants", "object")
        for name, entry in consts.items():
            pointer = f"/Constants/{name}"
            _require(entry, dict, pointer, "object")
            unknown = set(entry) - {"sort"}
            if unknown:
                raise SchemaError(f"{pointer}/{sorted(unknown)[0]}", "unknown field")
            constants.add(name)
            if "sort" in entry:
                constant_sorts[name] = _require(entry["sort"], str, f"{pointer}/sort", "string")
    try:
        return SymbolTable(
            predicates=predicates,
            constants=frozenset(constants),
            predicate_sorts=predicate_sorts,
            constant_sorts=constant_sorts,
        )
    except ValueError as err:
        raise SchemaError("/Predicates", str(err)) from err


def doc_to_repr(doc: Any, strict: bool = True) -> StructuredRepr:
    _require(doc, dict, "", "object")
    if strict:
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise SchemaError(f"/{sorted(unknown)[0]}", "unknown field")
    if "Premises" not in doc:
        raise SchemaError("/Premises", "missing field")
    premises_raw = _require(doc["Premises"], list, "/Premises", "array")
    proposition_raw = doc.get("Proposition", [])
    if isinstance(proposition_raw, dict):
        proposition_raw = [proposition_raw]
    _require(proposition_raw, list, "/Proposition", "object or array")

    premises = [_parse_pair(item, f"/Premises/{i}") for i, item in enumerate(premises_raw)]
    questions = [_parse_pair(item, f"/Proposition/{i}") for i, item in enumerate(proposition_raw)]
    declared = _parse_declarations(doc)
    try:
        return build_repr(premises, questions, declared)
    except (BuildError, EmptyNL) as err:
        index = err.index
        section = "Premises" if index < len(premises) else "Proposition"
        local = index if index < len(premises) else index - len(premises)
        leaf = "statement" if isinstance(err, EmptyNL) else "symbol"
        raise SchemaError(f"/{section}/{local}/{leaf}", str(err)) from err
    except ArityConflict as err:
        raise SchemaError("/Premises", str(err)) from err


def deserialize_repr(data: bytes | str, strict: bool = True) -> StructuredRepr:
    """Parse the JSON document form; inverse of serialize_repr."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as err:
        raise SchemaError("", f"not valid JSON: {err}") from err
    return doc_to_repr(doc, strict=strict)
