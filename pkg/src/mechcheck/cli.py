"""Scenario file ingestion, command-line driver, and report emission.

Scenario files are JSON documents whose rational values are written as
exact strings ("1/2", "3") so nothing is silently truncated to floating
point; reports are emitted the same way.  JSON report output is
machine-stable: the same scenario, seed, and tool version produce
byte-identical bytes regardless of worker count.

Exit codes: 0 every check passed, 1 a violation was found, 2 usage or
scenario errors, 3 the exact-mode enumeration budget was exceeded.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import sys
import time
from fractions import Fraction
from typing import Optional

import click

from . import __version__
from .checker import (
    BudgetExceededError,
    CheckConfig,
    CheckReport,
    MatchingGrid,
    SingleItemGrid,
    check_bic,
    check_dist_preservation,
    check_stage_chain,
    check_vcg_perm,
    check_vcg_truth,
    enumeration_size,
    estimate_utility,
    random_rational_matrices,
)
from .core import (
    AgentType,
    Constant,
    DeterministicTable,
    Outcome,
    RandomizedTable,
    Scenario,
    Valuation,
    WelfareMax,
)
from .exactdist import ExactDist
from .rsm import my_util


class ParseError(Exception):
    """The scenario file is unreadable or not well-formed."""


class ValidationError(Exception):
    """The scenario file parses but describes an invalid scenario."""


_RATIONAL_RE = re.compile(r"^[+-]?\d+(/\d+)?$")


def _parse_rational(raw, where: str) -> Fraction:
    if isinstance(raw, bool):
        raise ValidationError(f"{where}: expected a rational string, got a boolean")
    if isinstance(raw, int):
        return Fraction(raw)
    if isinstance(raw, str) and _RATIONAL_RE.match(raw):
        return Fraction(raw)
    raise ValidationError(
        f'{where}: expected an integer or "p/q" string, got {raw!r}'
    )


def _require(document: dict, key: str, kind, where: str):
    if key not in document:
        raise ValidationError(f"{where}: missing key {key!r}")
    value = document[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ValidationError(f"{where}.{key}: expected {kind.__name__}")
    return value


def parse_scenario(path: str) -> Scenario:
    """Load and validate a scenario file, or raise a diagnostic naming
    the offending key."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = handle.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        document = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ParseError(f"{path}: top level must be an object")
    return scenario_from_document(document)


def scenario_from_document(document: dict) -> Scenario:
    where = "scenario"
    n = _require(document, "agents", int, where)
    m = _require(document, "replicas", int, where)
    type_labels = _require(document, "types", list, where)
    outcome_labels = _require(document, "outcomes", list, where)
    prior_doc = _require(document, "prior", dict, where)
    valuation_doc = _require(document, "valuation", dict, where)
    algorithm_doc = _require(document, "algorithm", dict, where)

    if len(set(type_labels)) != len(type_labels) or not type_labels:
        raise ValidationError("types: labels must be non-empty and unique")
    if len(set(outcome_labels)) != len(outcome_labels) or not outcome_labels:
        raise ValidationError("outcomes: labels must be non-empty and unique")
    types = tuple(AgentType(i, str(label)) for i, label in enumerate(type_labels))
    outcomes = tuple(Outcome(i, str(label)) for i, label in enumerate(outcome_labels))
    by_type = {t.label: t for t in types}
    by_outcome = {o.label: o for o in outcomes}

    for label in prior_doc:
        if label not in by_type:
            raise ValidationError(f"prior: unknown type label {label!r}")
    prior_entries = [
        (by_type[label], _parse_rational(mass, f"prior.{label}"))
        for label, mass in prior_doc.items()
    ]
    total = sum(mass for _, mass in prior_entries)
    if total != 1:
        raise ValidationError(f"prior: masses sum to {total}, expected exactly 1")
    try:
        prior = ExactDist(prior_entries)
    except ValueError as exc:
        raise ValidationError(f"prior: {exc}") from exc

    table = []
    for t in types:
        row = []
        for o in outcomes:
            key = f"{t.label},{o.label}"
            if key not in valuation_doc:
                raise ValidationError(f"valuation: missing cell {key!r}")
            row.append(_parse_rational(valuation_doc[key], f"valuation.{key}"))
        table.append(row)
    for key in valuation_doc:
        t_label, _, o_label = key.partition(",")
        if t_label not in by_type or o_label not in by_outcome:
            raise ValidationError(f"valuation: unknown cell {key!r}")

    algorithm = _algorithm_from_document(algorithm_doc, types, by_type, by_outcome, n)

    try:
        return Scenario(
            n=n,
            m=m,
            types=types,
            outcomes=outcomes,
            prior=prior,
            valuation=Valuation(table),
            algorithm=algorithm,
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _algorithm_from_document(document, types, by_type, by_outcome, n):
    kind = _require(document, "kind", str, "algorithm")
    if kind == "builtin":
        name = _require(document, "name", str, "algorithm")
        if name == "welfare-max":
            return WelfareMax()
        if name == "constant":
            outcome_label = _require(document, "outcome", str, "algorithm")
            if outcome_label not in by_outcome:
                raise ValidationError(f"algorithm.outcome: unknown label {outcome_label!r}")
            return Constant(by_outcome[outcome_label])
        raise ValidationError(f"algorithm.name: unknown builtin {name!r}")
    if kind in ("table-deterministic", "table-randomized"):
        table_doc = _require(document, "table", dict, "algorithm")
        rows = {}
        for key, value in table_doc.items():
            labels = key.split(",")
            if len(labels) != n or any(label not in by_type for label in labels):
                raise ValidationError(f"algorithm.table: bad profile key {key!r}")
            profile = tuple(by_type[label] for label in labels)
            if kind == "table-deterministic":
                if not isinstance(value, str) or value not in by_outcome:
                    raise ValidationError(
                        f"algorithm.table.{key}: expected an outcome label"
                    )
                rows[profile] = by_outcome[value]
            else:
                if not isinstance(value, dict):
                    raise ValidationError(
                        f"algorithm.table.{key}: expected an outcome-to-mass object"
                    )
                entries = []
                for outcome_label, mass in value.items():
                    if outcome_label not in by_outcome:
                        raise ValidationError(
                            f"algorithm.table.{key}: unknown outcome {outcome_label!r}"
                        )
                    entries.append(
                        (
                            by_outcome[outcome_label],
                            _parse_rational(mass, f"algorithm.table.{key}.{outcome_label}"),
                        )
                    )
                try:
                    rows[profile] = ExactDist(entries)
                except ValueError as exc:
                    raise ValidationError(f"algorithm.table.{key}: {exc}") from exc
        if kind == "table-deterministic":
            return DeterministicTable(rows)
        return RandomizedTable(rows)
    raise ValidationError(f"algorithm.kind: unknown kind {kind!r}")


def scenario_document(scenario: Scenario) -> dict:
    """Canonical JSON-ready form of a scenario (input formatting independent)."""
    prior = {t.label: str(scenario.prior.prob(t)) for t in scenario.prior.support()}
    valuation = {
        f"{t.label},{o.label}": str(scenario.valuation.value(t, o))
        for t in scenario.types
        for o in scenario.outcomes
    }
    algorithm = _algorithm_document(scenario.algorithm)
    return {
        "agents": scenario.n,
        "replicas": scenario.m,
        "types": [t.label for t in scenario.types],
        "outcomes": [o.label for o in scenario.outcomes],
        "prior": prior,
        "valuation": valuation,
        "algorithm": algorithm,
    }


def _algorithm_document(algorithm) -> dict:
    if isinstance(algorithm, WelfareMax):
        return {"kind": "builtin", "name": "welfare-max"}
    if isinstance(algorithm, Constant):
        return {"kind": "builtin", "name": "constant", "outcome": algorithm.outcome.label}
    if isinstance(algorithm, DeterministicTable):
        return {
            "kind": "table-deterministic",
            "table": {
                ",".join(t.label for t in profile): outcome.label
                for profile, outcome in sorted(algorithm.rows.items())
            },
        }
    if isinstance(algorithm, RandomizedTable):
        return {
            "kind": "table-randomized",
            "table": {
                ",".join(t.label for t in profile): {
                    o.label: str(p) for o, p in dist.entries
                }
                for profile, dist in sorted(algorithm.rows.items())
            },
        }
    raise ValidationError(f"algorithm {algorithm!r} has no file representation")


def scenario_digest(scenario: Scenario) -> str:
    canonical = json.dumps(
        scenario_document(scenario), sort_keys=True, separators=(",", ":")
    )
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def report_document(report: CheckReport, digest: Optional[str]) -> dict:
    return {
        "tool": "mechcheck",
        "version": __version__,
        "property": report.property_name,
        "verdict": report.verdict,
        "scenario_digest": digest,
        "witnesses": [
            {
                "inputs": dict(w.inputs),
                "left": str(w.left),
                "right": str(w.right),
                "margin": str(w.margin),
            }
            for w in report.witnesses
        ],
        "stats": report.stats,
    }


def render_json(document: dict) -> str:
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def render_text(document: dict) -> str:
    lines = [f"{document['property']}: {document['verdict']}"]
    if document.get("scenario_digest"):
        lines.append(f"  scenario: {document['scenario_digest']}")
    for key, value in sorted(document["stats"].items()):
        if isinstance(value, dict):
            lines.append(f"  {key}:")
            for inner_key, inner_value in sorted(value.items()):
                lines.append(f"    {inner_key}: {inner_value}")
        else:
            lines.append(f"  {key}: {value}")
    for witness in document["witnesses"]:
        inputs = " ".join(f"{k}={v}" for k, v in sorted(witness["inputs"].items()))
        lines.append(
            f"  witness: {inputs} left={witness['left']} "
            f"right={witness['right']} margin={witness['margin']}"
        )
    return "\n".join(lines) + "\n"


def _emit(document: dict, output: str, out_path: Optional[str]) -> None:
    text = render_json(document) if output == "json" else render_text(document)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _exit_code(report: CheckReport) -> int:
    if report.verdict == "pass":
        return 0
    if report.verdict == "fail":
        return 1
    breached = report.stats.get("within_tolerance") is False or report.stats.get(
        "suspected_violations"
    )
    return 1 if breached else 0


def _effective_jobs(jobs: int) -> int:
    env = os.environ.get("MECHCHECK_JOBS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.UsageError(f"MECHCHECK_JOBS must be an integer, got {env!r}")
    return jobs


def _build_config(mode, samples, seed, jobs, budget) -> CheckConfig:
    return CheckConfig(
        mode=mode,
        samples=samples,
        seed=seed,
        jobs=_effective_jobs(jobs),
        budget=budget,
    )


def _common_options(f):
    options = [
        click.option("--mode", type=click.Choice(["exact", "mc"]), default="exact",
                     show_default=True, help="Exact enumeration or Monte Carlo."),
        click.option("--samples", type=int, default=100_000, show_default=True,
                     help="Sample count in mc mode."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--jobs", type=int, default=1, show_default=True,
                     help="Worker processes (MECHCHECK_JOBS overrides)."),
        click.option("--budget", type=int, default=10_000_000, show_default=True,
                     help="Max distribution entries an exact run may materialize."),
        click.option("--output", type=click.Choice(["text", "json"]), default="text",
                     show_default=True),
        click.option("--out", "out_path", type=click.Path(), default=None,
                     help="Write the report here instead of stdout."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _run_scenario_check(check_fn, scenario_path, mode, samples, seed, jobs, budget,
                        output, out_path):
    try:
        scenario = parse_scenario(scenario_path)
        cfg = _build_config(mode, samples, seed, jobs, budget)
        started = time.monotonic()
        report = check_fn(scenario, cfg)
        elapsed = time.monotonic() - started
    except (ParseError, ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except BudgetExceededError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"elapsed: {elapsed:.3f}s", err=True)
    _emit(report_document(report, scenario_digest(scenario)), output, out_path)
    sys.exit(_exit_code(report))


@click.group()
@click.version_option(__version__, prog_name="mechcheck")
def main():
    """Exact incentive-property checks for finite mechanism-design scenarios."""


@main.group()
def check():
    """Run a property check and emit a report."""


@check.command("vcg-truth")
@click.option("--form", type=click.Choice(["single-item", "matching"]),
              default="single-item", show_default=True)
@click.option("--rule", type=click.Choice(["vcg", "first-price"]), default="vcg",
              show_default=True, help="Payment rule (first-price is a negative control).")
@click.option("--bidders", default="2,3", show_default=True,
              help="Bidder counts for the single-item grid.")
@click.option("--values", default="0,1,2,3", show_default=True,
              help="Bid set for the single-item grid.")
@click.option("--sizes", default="2,3", show_default=True,
              help="Matrix sizes for the matching grid.")
@click.option("--entries", default="0,1/2,1,2", show_default=True,
              help="Entry set for the matching grid.")
@_common_options
def check_vcg_truth_cmd(form, rule, bidders, values, sizes, entries, mode, samples,
                        seed, jobs, budget, output, out_path):
    """Truthfulness of VCG on an exhaustive grid of markets."""
    if mode != "exact":
        raise click.UsageError("vcg-truth is an exhaustive grid check; only --mode exact is supported")
    try:
        if form == "single-item":
            grid = SingleItemGrid(
                bidders=_parse_int_list(bidders, "--bidders"),
                values=_parse_rational_list(values, "--values"),
            )
        else:
            grid = MatchingGrid(
                sizes=_parse_int_list(sizes, "--sizes"),
                entries=_parse_rational_list(entries, "--entries"),
            )
        cfg = _build_config("exact", samples, seed, jobs, budget)
        started = time.monotonic()
        report = check_vcg_truth(grid, cfg, rule=rule)
        elapsed = time.monotonic() - started
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"elapsed: {elapsed:.3f}s", err=True)
    _emit(report_document(report, None), output, out_path)
    sys.exit(_exit_code(report))


@check.command("vcg-perm")
@click.option("--count", type=int, default=1000, show_default=True,
              help="Number of random matrices.")
@click.option("--sizes", default="1,2,3,4,5,6", show_default=True)
@_common_options
def check_vcg_perm_cmd(count, sizes, mode, samples, seed, jobs, budget, output, out_path):
    """Permutation property of the matching solver on random matrices."""
    if mode != "exact":
        raise click.UsageError("vcg-perm checks each instance exactly; only --mode exact is supported")
    try:
        matrices = random_rational_matrices(count, _parse_int_list(sizes, "--sizes"), seed)
        cfg = _build_config("exact", samples, seed, jobs, budget)
        started = time.monotonic()
        report = check_vcg_perm(matrices, cfg)
        elapsed = time.monotonic() - started
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"elapsed: {elapsed:.3f}s", err=True)
    _emit(report_document(report, None), output, out_path)
    sys.exit(_exit_code(report))


@check.command("dist-preserve")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@_common_options
def check_dist_preserve_cmd(scenario_path, **kwargs):
    """Surrogates of prior-distributed types are prior-distributed."""
    _run_scenario_check(check_dist_preservation, scenario_path, **kwargs)


@check.command("stage-chain")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@_common_options
def check_stage_chain_cmd(scenario_path, **kwargs):
    """Equality of the four simplified surrogate samplers."""
    _run_scenario_check(check_stage_chain, scenario_path, **kwargs)


@check.command("bic")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@_common_options
def check_bic_cmd(scenario_path, **kwargs):
    """Truth-telling maximizes expected utility at every position."""
    _run_scenario_check(check_bic, scenario_path, **kwargs)


@main.group("eval")
def eval_group():
    """Evaluate mechanism quantities directly."""


@eval_group.command("util")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--true-type", "true_label", required=True,
              help="Label of the agent's true type.")
@click.option("--bid", "bid_label", required=True, help="Label of the reported type.")
@_common_options
def eval_util_cmd(scenario_path, true_label, bid_label, mode, samples, seed, jobs,
                  budget, output, out_path):
    """Expected utility of agent 1 with a given true type and report."""
    try:
        scenario = parse_scenario(scenario_path)
        by_label = {t.label: t for t in scenario.types}
        for label in (true_label, bid_label):
            if label not in by_label:
                raise ValidationError(f"unknown type label {label!r}")
        cfg = _build_config(mode, samples, seed, jobs, budget)
        document = {
            "tool": "mechcheck",
            "version": __version__,
            "property": "util",
            "scenario_digest": scenario_digest(scenario),
            "true_type": true_label,
            "bid": bid_label,
        }
        if cfg.mode == "exact":
            estimate = enumeration_size(scenario)
            if estimate > cfg.budget:
                raise BudgetExceededError(estimate, cfg.budget)
            value = my_util(scenario, by_label[true_label], by_label[bid_label])
            document["utility"] = str(value)
        else:
            value, radius = estimate_utility(
                scenario, by_label[true_label], by_label[bid_label], cfg
            )
            document["utility"] = str(value)
            document["radius"] = str(radius)
    except (ParseError, ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except BudgetExceededError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    if output == "json":
        _emit(document, "json", out_path)
    else:
        parts = [f"my_util({true_label}, {bid_label}) = {document['utility']}"]
        if "radius" in document:
            parts.append(f"radius = {document['radius']}")
        text = "\n".join(parts) + "\n"
        if out_path:
            with open(out_path, "w", encoding="utf-8") as handle:
                handle.write(text)
        else:
            sys.stdout.write(text)
    sys.exit(0)


@main.command("validate")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
def validate_cmd(scenario_path):
    """Parse and validate a scenario file without running any check."""
    try:
        scenario = parse_scenario(scenario_path)
    except (ParseError, ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"ok: {scenario_path} ({scenario_digest(scenario)})")
    sys.exit(0)


def _parse_int_list(raw: str, where: str) -> tuple:
    try:
        values = tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise click.UsageError(f"{where}: expected comma-separated integers, got {raw!r}")
    if not values or any(v < 1 for v in values):
        raise click.UsageError(f"{where}: values must be positive")
    return values


def _parse_rational_list(raw: str, where: str) -> tuple:
    parts = raw.split(",")
    values = []
    for part in parts:
        if not _RATIONAL_RE.match(part.strip()):
            raise click.UsageError(f'{where}: expected comma-separated rationals, got {part!r}')
        values.append(Fraction(part.strip()))
    return tuple(values)


if __name__ == "__main__":
    main()
