"""Rule discovery and the verify-refine loop.

Discovery turns labeled feature digests into candidate rules through a
backend completion. Verification then measures each rule's empirical
confidence on a labeled validation set, promotes rules that clear the
library threshold, and sends the rest back to the backend for reflection.
The loop ends when everything active is verified, when confidences stop
moving, or when the iteration budget runs out; in the last two cases the
remaining sub-threshold rules are retired rather than left in limbo.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .errors import EmptyValidationSetError
from .llm import (
    Backend,
    RefinementSuggestion,
    RejectedBlock,
    parse_refinement_response,
    parse_rule_response,
)
from .prompts import (
    PROMPT_CHAR_BUDGET,
    build_discovery_prompt,
    build_reflection_prompt,
    digest_sample,
)
from . import dsl
from .rules import (
    MATCHED,
    NOT_APPLICABLE,
    ContextConstraint,
    Rule,
    RuleLibrary,
    evaluate_rule,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERATIONS = 5
DEFAULT_STALL_EPSILON = 0.01
MAX_FAILURES_PER_RULE = 20


@dataclass(frozen=True)
class ValSample:
    """One labeled vehicle: feature mapping plus ground truth."""

    vehicle_id: str
    features: Mapping[str, float]
    label: str  # "AV" or "HDV"
    context: str = "any"
    unit_system: str | None = None


@dataclass(frozen=True)
class RuleStats:
    rule_id: str
    n_applicable: int
    n_correct: int
    confidence: float


@dataclass(frozen=True)
class FailureCase:
    sample: ValSample
    verdict: str
    judged: str  # label the rule's verdict implied


@dataclass(frozen=True)
class VerificationResult:
    library: RuleLibrary
    stats: dict[str, RuleStats]
    iterations: int
    reason: str  # "all_verified" | "stalled" | "max_iterations"


def implied_label(rule: Rule, verdict: str) -> str | None:
    """Label a rule's verdict votes for, or None when not applicable."""
    if verdict == NOT_APPLICABLE:
        return None
    hit = verdict == MATCHED
    if rule.polarity == "AV_indicative":
        return "AV" if hit else "HDV"
    return "HDV" if hit else "AV"


def compute_confidence(
    rule: Rule,
    samples: Sequence[ValSample],
    *,
    library_units: str | None = None,
    strict_denominator: bool = False,
) -> RuleStats:
    """Fraction of validation samples the rule judges correctly.

    A matched rule votes for its polarity's label, a non-match votes for
    the opposite label, and not-applicable samples stay out of both counts.
    With strict_denominator the divisor is the whole sample set, so poor
    coverage drags confidence down instead of being ignored. Zero applicable
    samples yield confidence 0 either way.
    """
    if not samples:
        raise EmptyValidationSetError("confidence needs at least one labeled sample")
    n_applicable = 0
    n_correct = 0
    for sample in samples:
        verdict = evaluate_rule(
            rule, sample.features, sample.context,
            feature_units=sample.unit_system, library_units=library_units,
        )
        judged = implied_label(rule, verdict)
        if judged is None:
            continue
        n_applicable += 1
        if judged == sample.label:
            n_correct += 1
    denom = len(samples) if strict_denominator else n_applicable
    confidence = n_correct / denom if denom else 0.0
    return RuleStats(rule.id, n_applicable, n_correct, confidence)


def collect_failures(
    rule: Rule,
    samples: Sequence[ValSample],
    *,
    library_units: str | None = None,
    limit: int = MAX_FAILURES_PER_RULE,
) -> list[FailureCase]:
    """Applicable samples the rule judged wrongly, in input order."""
    failures: list[FailureCase] = []
    for sample in samples:
        verdict = evaluate_rule(
            rule, sample.features, sample.context,
            feature_units=sample.unit_system, library_units=library_units,
        )
        judged = implied_label(rule, verdict)
        if judged is not None and judged != sample.label:
            failures.append(FailureCase(sample, verdict, judged))
            if len(failures) >= limit:
                break
    return failures


def apply_suggestion(rule: Rule, suggestion: RefinementSuggestion) -> Rule:
    """Produce the revised rule a suggestion describes.

    Content changes reset the rule to candidate with no confidence and bump
    its revision; a retire suggestion only flips the state.
    """
    if suggestion.action == "retire":
        return replace(rule, state="retired")
    if suggestion.action == "add_context":
        assert suggestion.new_contexts is not None
        context = ContextConstraint(suggestion.new_contexts, rule.context.applicable_tasks)
        return replace(rule, context=context, state="candidate",
                       confidence=None, revision=rule.revision + 1)
    # adjust_threshold / combine_features both carry a new predicate
    assert suggestion.new_predicate is not None
    return replace(rule, predicate=dsl.parse_predicate(suggestion.new_predicate),
                   state="candidate", confidence=None, revision=rule.revision + 1)


def _failure_digests(failures: Sequence[FailureCase]) -> list[dict]:
    digests = []
    for f in failures:
        d = digest_sample(f.sample.vehicle_id, f.sample.features, label=f.sample.label)
        d["rule_verdict"] = f.verdict
        d["rule_judged"] = f.judged
        digests.append(d)
    return digests


def discover_rules(
    backend: Backend,
    av_samples: Sequence[dict],
    hdv_samples: Sequence[dict],
    *,
    budget: int = PROMPT_CHAR_BUDGET,
) -> tuple[list[Rule], list[RejectedBlock]]:
    """One discovery round: digests in, compiled candidate rules out."""
    messages = build_discovery_prompt(av_samples, hdv_samples, budget=budget)
    return parse_rule_response(backend.complete(messages))


def run_verification_loop(
    library: RuleLibrary,
    samples: Sequence[ValSample],
    backend: Backend,
    *,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    stall_epsilon: float = DEFAULT_STALL_EPSILON,
    strict_denominator: bool = False,
) -> VerificationResult:
    """Measure, promote, reflect, and refine until the library settles.

    Each iteration re-measures every non-retired rule's confidence and
    flips its state against the library threshold. Rules with zero coverage
    are retired on the spot (there are no failure cases to reflect on).
    Exit paths, checked in order: every active rule verified; confidences
    moved at most stall_epsilon since the previous iteration (remaining
    candidates are retired); the iteration budget ran out (same retirement).
    Between iterations every sub-threshold rule gets one reflection round
    and at most one applied suggestion. The library is mutated in place and
    also returned.
    """
    if not samples:
        raise EmptyValidationSetError("verification needs at least one labeled sample")
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")

    stats: dict[str, RuleStats] = {}
    prev_conf: dict[str, float] | None = None
    iterations = 0
    reason = "max_iterations"

    for iteration in range(1, max_iterations + 1):
        iterations = iteration
        active = [r for r in library.rules if r.state != "retired"]
        conf: dict[str, float] = {}
        for rule in active:
            st = compute_confidence(
                rule, samples,
                library_units=library.units, strict_denominator=strict_denominator,
            )
            stats[rule.id] = st
            conf[rule.id] = st.confidence
            rule.confidence = st.confidence
            if st.n_applicable == 0:
                rule.state = "retired"
                library.record("retired", rule.id,
                               "no coverage on the validation set", iteration)
            else:
                rule.state = "verified" if st.confidence >= library.theta else "candidate"
        library.version += 1

        candidates = [r for r in library.rules if r.state == "candidate"]
        if not candidates:
            reason = "all_verified"
            break

        stalled = prev_conf is not None and all(
            abs(conf[rid] - prev_conf[rid]) <= stall_epsilon
            for rid in conf if rid in prev_conf
        )
        if stalled or iteration == max_iterations:
            reason = "stalled" if stalled else "max_iterations"
            for rule in candidates:
                rule.state = "retired"
                library.record(
                    "retired", rule.id,
                    f"confidence {rule.confidence:.3f} below threshold "
                    f"{library.theta} at loop exit ({reason})",
                    iteration,
                )
            library.version += 1
            break
        prev_conf = conf

        for rule in candidates:
            failures = collect_failures(rule, samples, library_units=library.units)
            if not failures:
                # sub-threshold without failures can only mean strict
                # denominator + thin coverage; reflection has nothing to chew on
                rule.state = "retired"
                library.record("retired", rule.id,
                               "no failure cases to reflect on", iteration)
                library.version += 1
                continue
            st = stats[rule.id]
            messages = build_reflection_prompt(
                rule,
                {"confidence": st.confidence, "n_applicable": st.n_applicable,
                 "n_correct": st.n_correct},
                _failure_digests(failures),
            )
            suggestions = parse_refinement_response(backend.complete(messages))
            chosen = next((s for s in suggestions if s.rule_id == rule.id), None)
            if chosen is None:
                log.info("no suggestion for rule %s at iteration %d", rule.id, iteration)
                continue
            revised = apply_suggestion(rule, chosen)
            library.replace_rule(revised)
            event = "retired" if chosen.action == "retire" else "refined"
            detail = f"{chosen.action}"
            if chosen.new_predicate:
                detail += f": {rule.predicate_text} -> {revised.predicate_text}"
            if chosen.new_contexts:
                detail += f": contexts -> {sorted(chosen.new_contexts)}"
            if chosen.rationale:
                detail += f" ({chosen.rationale})"
            library.record(event, rule.id, detail, iteration)

    return VerificationResult(library, stats, iterations, reason)
