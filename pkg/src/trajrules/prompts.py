"""Prompt templates for discovery, verification, reflection, and identification.

Each builder is a pure function from data to a message list: same inputs,
same bytes. Sample digests are compact JSON lines; when a prompt would
exceed the character budget, whole digests are dropped oldest-first (list
order is age order) and the omission is noted in the prompt itself.
"""
from __future__ import annotations

import json
from typing import Mapping, Sequence

from .errors import EmptySampleSetError
from .kinematics import ATOMS
from .llm import KIND_MARKERS, ChatMessage, format_rule_block
from .rules import Rule

PROMPT_CHAR_BUDGET = 60_000

_ANALYSIS_DIMENSIONS = """\
Compare the two groups along these four dimensions:
1. Speed control: how steadily speed is held, and the size and cadence of corrections.
2. Acceleration and smoothness: acceleration spread, braking strength, jerk statistics.
3. Lane changing: frequency, preparation (pre-maneuver deceleration), and execution.
4. Interaction: how the vehicle responds to surrounding traffic when that is visible."""

_DSL_HELP = f"""\
Write each condition in this predicate language (AND binds tighter than OR):
  atom < number | atom <= number | atom > number | atom >= number | atom = number
  atom IN low..high
  NOT clause, clauses joined with AND / OR
Feature atoms: {", ".join(ATOMS)}."""

_RULE_FORMAT = """\
Return every rule as its own fenced block, nothing else in the fences:
```rule
id: <short unique id>
description: <one sentence>
condition: <predicate>
contexts: <any | free_flow | congested, comma separated>
tasks: <identification | speed | lane_change, comma separated>
category: <speed | lane_change | following | smoothness>
polarity: <AV_indicative | HDV_indicative>
direction: <optional: accelerate | decelerate | maintain | left_LC | right_LC | keep_lane>
```"""

_REFINEMENT_FORMAT = """\
Return one fenced block per suggestion:
```refinement
rule_id: <id of the rule being revised>
action: <adjust_threshold | add_context | combine_features | retire>
condition: <new predicate, required for adjust_threshold / combine_features>
contexts: <required for add_context>
rationale: <one sentence>
```
Suggest at most one action per rule."""

_PREDICTION_FORMAT = """\
Return one fenced block per vehicle:
```prediction
vehicle_id: <id>
label: <AV | HDV>
score: <0..1, strength of AV evidence>
rationale: <one sentence>
```"""

DISCOVERY_ROLE = (
    "You are a senior driving-behavior analyst with a background in "
    "transportation engineering and vehicle dynamics. You study trajectory "
    "statistics to tell automated vehicles (AV) from human-driven vehicles "
    "(HDV) and state your findings as precise, testable rules."
)

VERIFICATION_ROLE = (
    "You are a driving-behavior analyst who classifies unknown vehicles by "
    "applying an established library of behavioral rules to their trajectory "
    "statistics."
)

REFLECTION_ROLE = (
    "You are a driving-behavior analyst reviewing the performance of one of "
    "your own classification rules. You diagnose why it misjudged specific "
    "vehicles and propose the smallest revision that fixes the failures."
)

IDENTIFICATION_ROLE = (
    "You are a driving-behavior analyst with a verified, high-confidence "
    "library of rules separating automated from human driving. You weigh the "
    "rules by their confidence when judging unknown vehicles."
)


def digest_sample(
    vehicle_id: str,
    features: Mapping[str, float],
    *,
    label: str | None = None,
    duration: float | None = None,
    n_points: int | None = None,
) -> dict:
    """Compact, JSON-ready summary of one vehicle for prompt embedding."""
    digest: dict = {"vehicle_id": vehicle_id}
    if label is not None:
        digest["label"] = label
    if duration is not None:
        digest["duration_s"] = round(duration, 2)
    if n_points is not None:
        digest["n_points"] = n_points
    digest["features"] = {k: round(float(v), 4) for k, v in sorted(features.items())}
    return digest


def _digest_lines(digests: Sequence[dict]) -> list[str]:
    return [json.dumps(d, sort_keys=True, separators=(",", ":")) for d in digests]


def _fit_to_budget(
    fixed_len: int,
    av_lines: list[str],
    hdv_lines: list[str],
    budget: int,
) -> tuple[list[str], list[str], int, int]:
    """Drop digest lines oldest-first until the assembled prompt fits."""
    a, h = 0, 0  # number of leading lines dropped per group
    total = fixed_len + sum(len(s) + 1 for s in av_lines) + sum(len(s) + 1 for s in hdv_lines)
    while total > budget and (a < len(av_lines) or h < len(hdv_lines)):
        # drop from whichever side still has more digests, HDV on ties
        if len(av_lines) - a > len(hdv_lines) - h:
            total -= len(av_lines[a]) + 1
            a += 1
        else:
            total -= len(hdv_lines[h]) + 1
            h += 1
    return av_lines[a:], hdv_lines[h:], a, h


def build_discovery_prompt(
    av_samples: Sequence[dict],
    hdv_samples: Sequence[dict],
    budget: int = PROMPT_CHAR_BUDGET,
) -> list[ChatMessage]:
    """Prompt asking the model to discover rules separating AVs from HDVs.

    Samples are digest dicts (see digest_sample), oldest first. Raises
    EmptySampleSetError when either group is empty.
    """
    if not av_samples or not hdv_samples:
        raise EmptySampleSetError("discovery needs samples from both groups")
    av_lines = _digest_lines(av_samples)
    hdv_lines = _digest_lines(hdv_samples)

    def assemble(av: list[str], hdv: list[str], note: str) -> list[ChatMessage]:
        user = "\n".join([
            "## Trajectory Data",
            note,
            "### Automated vehicles (one JSON digest per line)",
            *av,
            "",
            "### Human-driven vehicles (one JSON digest per line)",
            *hdv,
            "",
            KIND_MARKERS["discovery"],
            _ANALYSIS_DIMENSIONS,
            "",
            "## Output Requirements",
            "State every behavioral difference you find as a standalone rule.",
            _DSL_HELP,
            _RULE_FORMAT,
        ])
        return [ChatMessage("system", DISCOVERY_ROLE), ChatMessage("user", user)]

    full = assemble(av_lines, hdv_lines, "")
    overhead = sum(len(m.content) for m in full) - sum(len(s) + 1 for s in av_lines + hdv_lines)
    kept_av, kept_hdv, dropped_av, dropped_hdv = _fit_to_budget(
        overhead + 120, av_lines, hdv_lines, budget
    )
    if dropped_av or dropped_hdv:
        note = (f"[{dropped_av} AV and {dropped_hdv} HDV digests omitted "
                "to fit the prompt budget; oldest dropped first]")
        return assemble(kept_av, kept_hdv, note)
    return full


def build_verification_prompt(
    rules: Sequence[Rule],
    samples: Sequence[dict],
    budget: int = PROMPT_CHAR_BUDGET,
) -> list[ChatMessage]:
    """Prompt asking the model to classify validation vehicles with given rules."""
    if not rules:
        raise EmptySampleSetError("verification needs at least one rule")
    if not samples:
        raise EmptySampleSetError("verification needs at least one sample")
    lines = _digest_lines(samples)
    rule_text = "\n\n".join(format_rule_block(r) for r in rules)

    def assemble(kept: list[str], note: str) -> list[ChatMessage]:
        user = "\n".join([
            "## Rule Library",
            rule_text,
            "",
            "## Vehicles To Judge",
            note,
            *kept,
            "",
            KIND_MARKERS["verification"],
            "Apply the rules to every vehicle and judge whether it is AV or HDV.",
            "",
            "## Output Requirements",
            _PREDICTION_FORMAT,
        ])
        return [ChatMessage("system", VERIFICATION_ROLE), ChatMessage("user", user)]

    full = assemble(lines, "")
    overhead = sum(len(m.content) for m in full) - sum(len(s) + 1 for s in lines)
    kept, _, dropped, _ = _fit_to_budget(overhead + 120, lines, [], budget)
    if dropped:
        return assemble(kept, f"[{dropped} digests omitted to fit the prompt budget]")
    return full


def build_reflection_prompt(
    rule: Rule,
    stats: Mapping[str, float],
    failures: Sequence[dict],
    budget: int = PROMPT_CHAR_BUDGET,
) -> list[ChatMessage]:
    """Prompt asking the model to revise one underperforming rule.

    stats carries at least {"confidence", "n_applicable", "n_correct"};
    failures are digest dicts with true/predicted labels and the rule's
    verdict attached.
    """
    if not failures:
        raise EmptySampleSetError("reflection needs at least one failure case")
    lines = _digest_lines(failures)
    header = "\n".join([
        "## Rule Under Review",
        format_rule_block(rule),
        "",
        "## Validation Performance",
        f"confidence: {stats.get('confidence', 0.0):.3f}",
        f"applicable samples: {int(stats.get('n_applicable', 0))}",
        f"correct judgments: {int(stats.get('n_correct', 0))}",
    ])

    def assemble(kept: list[str], note: str) -> list[ChatMessage]:
        user = "\n".join([
            header,
            "",
            "## Failure Cases (one JSON digest per line)",
            note,
            *kept,
            "",
            KIND_MARKERS["reflection"],
            "Work through, in order:",
            "1. Is the numeric threshold reasonable given the failures?",
            "2. Does the rule need a scenario constraint (context restriction)?",
            "3. Would combining features make the condition more selective?",
            "4. Should the rule be kept, revised, or retired?",
            "",
            "## Output Requirements",
            _REFINEMENT_FORMAT,
        ])
        return [ChatMessage("system", REFLECTION_ROLE), ChatMessage("user", user)]

    full = assemble(lines, "")
    overhead = sum(len(m.content) for m in full) - sum(len(s) + 1 for s in lines)
    kept, _, dropped, _ = _fit_to_budget(overhead + 120, lines, [], budget)
    if dropped:
        return assemble(kept, f"[{dropped} failure digests omitted to fit the prompt budget]")
    return full


def build_identification_prompt(
    rules: Sequence[Rule],
    samples: Sequence[dict],
    budget: int = PROMPT_CHAR_BUDGET,
) -> list[ChatMessage]:
    """Prompt asking the model to identify unknown vehicles.

    Rules are presented in descending confidence order so the strongest
    evidence leads.
    """
    if not rules:
        raise EmptySampleSetError("identification needs at least one rule")
    if not samples:
        raise EmptySampleSetError("identification needs at least one sample")
    ordered = sorted(rules, key=lambda r: (-(r.confidence or 0.0), r.id))
    lines = _digest_lines(samples)
    rule_lines = []
    for r in ordered:
        conf = f"{r.confidence:.3f}" if r.confidence is not None else "unverified"
        rule_lines.append(f"[confidence {conf}] {format_rule_block(r)}")
    rule_text = "\n\n".join(rule_lines)

    def assemble(kept: list[str], note: str) -> list[ChatMessage]:
        user = "\n".join([
            "## Verified Rule Library (strongest first)",
            rule_text,
            "",
            "## Unknown Vehicles",
            note,
            *kept,
            "",
            KIND_MARKERS["identification"],
            "Judge every vehicle, weighing matched rules by their confidence.",
            "",
            "## Output Requirements",
            _PREDICTION_FORMAT,
        ])
        return [ChatMessage("system", IDENTIFICATION_ROLE), ChatMessage("user", user)]

    full = assemble(lines, "")
    overhead = sum(len(m.content) for m in full) - sum(len(s) + 1 for s in lines)
    kept, _, dropped, _ = _fit_to_budget(overhead + 120, lines, [], budget)
    if dropped:
        return assemble(kept, f"[{dropped} digests omitted to fit the prompt budget]")
    return full
