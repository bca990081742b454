"""Eligibility engine against an independent all-rules-pass oracle."""

from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trialdcc.eligibility import (
    OPERATORS,
    RuleSet,
    default_ruleset,
    evaluate,
    failed_criteria,
    load_ruleset,
)
from trialdcc.errors import ConfigError, PreconditionError
from trialdcc.model import AssessmentKind, CriterionInputs, Overall

from conftest import eligible_inputs


def oracle_overall(inputs: CriterionInputs, rules: RuleSet) -> Overall:
    """Independent checker: re-derives each comparison and conjoins."""
    ok = True
    for rule in rules.rules:
        value = getattr(inputs, rule.field)
        ok = ok and OPERATORS[rule.op](value, rule.constant)
    return Overall.ELIGIBLE if ok else Overall.INELIGIBLE


# ---------------------------------------------------------------------------
# default rule set is reproduced exactly from the shipped fixture
# ---------------------------------------------------------------------------

def test_default_ruleset_contents():
    rules = default_ruleset()
    by_name = {r.name: r for r in rules.rules}
    assert set(by_name) == {
        "non_palpable_dre",
        "non_aggressive_histology",
        "gleason_max",
        "psa_max",
        "core_fraction_max",
    }
    assert by_name["non_palpable_dre"].op == "=="
    assert by_name["non_palpable_dre"].constant is False
    assert by_name["non_aggressive_histology"].constant is False
    assert by_name["gleason_max"].op == "<=" and by_name["gleason_max"].constant == 6
    assert by_name["psa_max"].op == "<=" and by_name["psa_max"].constant == 10.0
    assert by_name["core_fraction_max"].constant == 0.34


# ---------------------------------------------------------------------------
# single-criterion failures
# ---------------------------------------------------------------------------

def test_palpable_dre_is_ineligible():
    assessment = evaluate(
        eligible_inputs(dre_palpable=True), default_ruleset(), AssessmentKind.SELF_SCREEN
    )
    assert assessment.overall is Overall.INELIGIBLE
    assert assessment.verdicts["non_palpable_dre"] is False
    assert failed_criteria(assessment) == ["non_palpable_dre"]


def test_aggressive_histology_is_ineligible():
    assessment = evaluate(
        eligible_inputs(histology_aggressive=True),
        default_ruleset(),
        AssessmentKind.SELF_SCREEN,
    )
    assert assessment.overall is Overall.INELIGIBLE


def test_all_passing_is_eligible():
    assessment = evaluate(eligible_inputs(), default_ruleset(), AssessmentKind.SELF_SCREEN)
    assert assessment.overall is Overall.ELIGIBLE
    assert all(assessment.verdicts.values())
    assert len(assessment.verdicts) == len(default_ruleset().rules)


# ---------------------------------------------------------------------------
# exhaustive 2^k truth table over boolean-ized criteria
# ---------------------------------------------------------------------------

# Per-criterion (pass, fail) input values under the default rule set.
_FLIPS = {
    "dre_palpable": (False, True),
    "histology_aggressive": (False, True),
    "gleason_score": (6, 8),
    "psa_ng_ml": (4.0, 22.5),
    "positive_cores": (2, 9),  # 2/12 passes the fraction cap, 9/12 fails
}


def _inputs_for(combo: dict[str, bool]) -> CriterionInputs:
    return eligible_inputs(
        **{name: _FLIPS[name][0] if passes else _FLIPS[name][1] for name, passes in combo.items()}
    )


def test_truth_table_matches_all_pass_oracle():
    rules = default_ruleset()
    names = list(_FLIPS)
    for bits in itertools.product([True, False], repeat=len(names)):
        combo = dict(zip(names, bits))
        inputs = _inputs_for(combo)
        assessment = evaluate(inputs, rules, AssessmentKind.SELF_SCREEN)
        expected = Overall.ELIGIBLE if all(bits) else Overall.INELIGIBLE
        assert assessment.overall is expected, combo
        assert assessment.overall is oracle_overall(inputs, rules)


def test_monotonic_single_flip_never_breaks_eligibility():
    """Fixing one failing criterion never flips ELIGIBLE -> INELIGIBLE."""
    rules = default_ruleset()
    names = list(_FLIPS)
    for bits in itertools.product([True, False], repeat=len(names)):
        combo = dict(zip(names, bits))
        before = evaluate(_inputs_for(combo), rules, AssessmentKind.SELF_SCREEN)
        for name, passes in combo.items():
            if passes:
                continue
            flipped = dict(combo)
            flipped[name] = True
            after = evaluate(_inputs_for(flipped), rules, AssessmentKind.SELF_SCREEN)
            if before.overall is Overall.ELIGIBLE:
                assert after.overall is Overall.ELIGIBLE


# ---------------------------------------------------------------------------
# randomized conjunction law (hypothesis)
# ---------------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(
    dre=st.booleans(),
    histology=st.booleans(),
    gleason=st.integers(min_value=2, max_value=10),
    psa=st.floats(min_value=0, max_value=60, allow_nan=False),
    positive=st.integers(min_value=0, max_value=24),
    total=st.integers(min_value=1, max_value=24),
)
def test_conjunction_law_random(dre, histology, gleason, psa, positive, total):
    if positive > total:
        positive = total
    inputs = CriterionInputs(
        dre_palpable=dre,
        histology_aggressive=histology,
        gleason_score=gleason,
        psa_ng_ml=psa,
        positive_cores=positive,
        total_cores=total,
    )
    rules = default_ruleset()
    assessment = evaluate(inputs, rules, AssessmentKind.SELF_SCREEN)
    assert (assessment.overall is Overall.ELIGIBLE) == all(assessment.verdicts.values())
    assert assessment.overall is oracle_overall(inputs, rules)


# ---------------------------------------------------------------------------
# purity and kind symmetry
# ---------------------------------------------------------------------------

def test_deterministic_verdicts_excluding_id_and_timestamp():
    rules = default_ruleset()
    a = evaluate(eligible_inputs(), rules, AssessmentKind.SELF_SCREEN)
    b = evaluate(eligible_inputs(), rules, AssessmentKind.SELF_SCREEN)
    assert a.verdicts == b.verdicts and a.overall == b.overall


def test_self_screen_and_validation_verdicts_identical():
    rules = default_ruleset()
    screen = evaluate(eligible_inputs(psa_ng_ml=11.0), rules, AssessmentKind.SELF_SCREEN)
    validation = evaluate(
        eligible_inputs(psa_ng_ml=11.0),
        rules,
        AssessmentKind.PHYSICIAN_VALIDATION,
        assessor="acct-1",
    )
    assert screen.verdicts == validation.verdicts
    assert screen.overall == validation.overall
    assert validation.assessor == "acct-1"


def test_physician_validation_requires_assessor():
    with pytest.raises(PreconditionError):
        evaluate(eligible_inputs(), default_ruleset(), AssessmentKind.PHYSICIAN_VALIDATION)


# ---------------------------------------------------------------------------
# rule config loading
# ---------------------------------------------------------------------------

def test_load_rejects_empty_rules():
    with pytest.raises(ConfigError, match="at least one rule"):
        load_ruleset(json.dumps({"version": "x", "rules": []}))


def test_load_rejects_unknown_field():
    doc = {
        "version": "x",
        "rules": [{"name": "density", "field": "psa_density", "operator": "<=", "constant": 0.15}],
    }
    with pytest.raises(ConfigError, match="psa_density"):
        load_ruleset(json.dumps(doc))


def test_load_rejects_unknown_operator_and_duplicate_names():
    bad_op = {
        "version": "x",
        "rules": [{"name": "r", "field": "psa_ng_ml", "operator": "!=", "constant": 1}],
    }
    with pytest.raises(ConfigError, match="operator"):
        load_ruleset(json.dumps(bad_op))
    dup = {
        "version": "x",
        "rules": [
            {"name": "r", "field": "psa_ng_ml", "operator": "<=", "constant": 1},
            {"name": "r", "field": "gleason_score", "operator": "<=", "constant": 6},
        ],
    }
    with pytest.raises(ConfigError, match="duplicate"):
        load_ruleset(json.dumps(dup))


def test_load_reports_parse_position():
    with pytest.raises(ConfigError, match=r"line \d+"):
        load_ruleset('{"version": "x", "rules": [}')


def test_load_rejects_type_mismatched_constant():
    doc = {
        "version": "x",
        "rules": [{"name": "r", "field": "dre_palpable", "operator": "==", "constant": 3}],
    }
    with pytest.raises(ConfigError, match="boolean"):
        load_ruleset(json.dumps(doc))
