"""Rule-driven eligibility evaluation.

The same engine serves the anonymous self-screen and the physician
validation; only the assessment kind and assessor differ. Rules combine by
conjunction: the overall verdict is ELIGIBLE iff every rule passes.

Thresholds are configuration, not clinical ground truth. The shipped
defaults encode the study's low-risk gate (non-palpable disease, no
aggressive histology, bounded Gleason score, bounded PSA, bounded
positive-core fraction) and can be replaced per protocol via a rule file.
"""

from __future__ import annotations

import json
import operator
from dataclasses import dataclass
from datetime import datetime
from importlib import resources
from typing import Callable

from .errors import ConfigError, PreconditionError, ValidationFailure
from .ids import new_id
from .model import (
    AssessmentKind,
    CriterionInputs,
    EligibilityAssessment,
    Overall,
    utc_now,
    validate,
)

# Fields a rule predicate may target: the raw criterion inputs plus the
# derived positive-core fraction.
RULE_FIELDS: dict[str, type] = {
    "dre_palpable": bool,
    "histology_aggressive": bool,
    "gleason_score": int,
    "psa_ng_ml": float,
    "positive_cores": int,
    "total_cores": int,
    "core_fraction": float,
}

OPERATORS: dict[str, Callable] = {
    "==": operator.eq,
    "<=": operator.le,
    "<": operator.lt,
    ">=": operator.ge,
    ">": operator.gt,
}


@dataclass(frozen=True)
class Rule:
    name: str
    field: str
    op: str
    constant: bool | int | float


@dataclass(frozen=True)
class RuleSet:
    version: str
    rules: tuple[Rule, ...]


def _check_rule(rule: Rule) -> None:
    if not rule.name:
        raise ConfigError("rule with empty name")
    if rule.field not in RULE_FIELDS:
        raise ConfigError(
            f"rule {rule.name!r}: unknown field {rule.field!r} "
            f"(known: {', '.join(sorted(RULE_FIELDS))})"
        )
    if rule.op not in OPERATORS:
        raise ConfigError(f"rule {rule.name!r}: unknown operator {rule.op!r}")
    expected = RULE_FIELDS[rule.field]
    if expected is bool:
        if not isinstance(rule.constant, bool):
            raise ConfigError(f"rule {rule.name!r}: constant must be boolean for {rule.field}")
        if rule.op != "==":
            raise ConfigError(f"rule {rule.name!r}: boolean fields support only ==")
    else:
        if isinstance(rule.constant, bool) or not isinstance(rule.constant, (int, float)):
            raise ConfigError(f"rule {rule.name!r}: constant must be numeric for {rule.field}")


def load_ruleset(document: str) -> RuleSet:
    """Parse and semantically check a rule-config document (JSON)."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"rule config parse error at line {exc.lineno} col {exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise ConfigError("rule config must be a JSON object")
    raw_rules = data.get("rules")
    if not isinstance(raw_rules, list) or not raw_rules:
        raise ConfigError("rule set must contain at least one rule")
    rules: list[Rule] = []
    seen: set[str] = set()
    for entry in raw_rules:
        rule = Rule(
            name=entry.get("name", ""),
            field=entry.get("field", ""),
            op=entry.get("operator", ""),
            constant=entry.get("constant"),
        )
        _check_rule(rule)
        if rule.name in seen:
            raise ConfigError(f"duplicate rule name {rule.name!r}")
        seen.add(rule.name)
        rules.append(rule)
    return RuleSet(version=str(data.get("version", "unversioned")), rules=tuple(rules))


def default_ruleset() -> RuleSet:
    text = resources.files("trialdcc.config").joinpath("rules.json").read_text()
    return load_ruleset(text)


def evaluate(
    inputs: CriterionInputs,
    rules: RuleSet,
    kind: AssessmentKind,
    assessor: str | None = None,
    *,
    now: datetime | None = None,
    id_fn: Callable[[], str] = new_id,
) -> EligibilityAssessment:
    """Evaluate inputs against the rule set; pure apart from id/timestamp.

    Verdict map holds one entry per rule; overall is the conjunction.
    """
    violations = validate(inputs)
    if violations:
        raise ValidationFailure("criterion inputs invalid", details=violations)
    if kind is AssessmentKind.PHYSICIAN_VALIDATION and not assessor:
        raise PreconditionError("physician validation requires an assessor")
    verdicts: dict[str, bool] = {}
    for rule in rules.rules:
        value = getattr(inputs, rule.field)
        verdicts[rule.name] = bool(OPERATORS[rule.op](value, rule.constant))
    overall = Overall.ELIGIBLE if all(verdicts.values()) else Overall.INELIGIBLE
    return EligibilityAssessment(
        assessment_id=id_fn(),
        kind=kind,
        inputs=inputs,
        verdicts=verdicts,
        overall=overall,
        assessed_at=now or utc_now(),
        assessor=assessor,
    )


def failed_criteria(assessment: EligibilityAssessment) -> list[str]:
    return [name for name, ok in assessment.verdicts.items() if not ok]
