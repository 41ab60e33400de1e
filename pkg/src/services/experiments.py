import csv
import io
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from src.conf.config import settings
from src.core.engine import (
    classify_outcome,
    enumerate_executions,
    enumeration_size,
    project,
    sample_executions,
    same_transcript,
)
from src.core.export import export_trace_jsonl, jsonable, rational
from src.core.models import ProtocolSpec, Trace
from src.errors import AmbiguousDecoding, ConfigInvalid, DecodingMismatch
from src.protocols.registry import build_protocol
from src.schemas import EquilibriumResponse, ExperimentConfig, RunSummary, VerifyResponse
from src.services.epistemics import (
    decode_inputs,
    detect_informative_silences,
    rewrite_with_empty,
    ris_transform,
    silence_document,
    strip_buffers,
    verify_input_encoding,
    verify_ris_resilience,
)
from src.services.game import (
    Verdict,
    best_split_leader_success,
    find_profitable_deviation,
    make_preference_utility,
    require_solution_preference,
    sweep_coalition_sizes,
)

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    document: dict
    met: bool
    files: dict[str, str] = field(default_factory=dict)


def load_config(path: str | Path) -> ExperimentConfig:
    """
    The load_config function reads and validates an experiment file.

    :param path: str | Path: A JSON experiment file
    :return: The validated ExperimentConfig
    """

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigInvalid(f"cannot read {path}: {err}") from err
    return parse_config(text, Path(path).parent)


def parse_config(text: str | bytes, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate an experiment document; relative topology paths resolve against base_dir."""

    try:
        return ExperimentConfig.model_validate_json(text, context={"base_dir": base_dir or Path(".")})
    except ValidationError as err:
        raise ConfigInvalid(str(err)) from err


def build_from_config(config: ExperimentConfig) -> ProtocolSpec:
    topology = config.topology.build()
    return build_protocol(
        config.protocol, topology, config.r, tuple(config.distribution or ()), config.randomized
    )


def _write(out_dir: Optional[Path], name: str, content: str, files: dict) -> None:
    if out_dir is None:
        return
    target = out_dir / name
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(content, encoding="utf-8")
    files[name] = str(target)
    logger.info("wrote %s", target)


def _dump(document: dict) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def _decision_key(decisions) -> str:
    return json.dumps(jsonable(decisions[0]))


def cmd_run(
    config: ExperimentConfig,
    out_dir: Optional[Path] = None,
    cap: Optional[int] = None,
    seed: Optional[int] = None,
) -> CommandResult:
    """
    Enumerate every run of the configured protocol (or sample when the enumeration
    is over the cap) and summarize outcomes with exact probabilities.
    """

    protocol = build_from_config(config)
    cap = cap or config.cap or settings.enumeration_cap
    agents = list(protocol.topology.agents)
    size = enumeration_size(protocol, agents, agents)
    sampled = size > cap
    if sampled:
        executions = sample_executions(protocol, seed=seed, distribution=config.distribution)
    else:
        executions = enumerate_executions(protocol, distribution=config.distribution, cap=cap)

    legal = 0
    reasons: dict[str, int] = {}
    distribution: dict[str, Fraction] = {}
    rows = io.StringIO()
    writer = csv.writer(rows, lineterminator="\n")
    writer.writerow(["run", "inputs", "randomness", "decisions", "outcome", "probability"])
    traces = []
    for index, execution in enumerate(executions):
        outcome = classify_outcome(execution.trace)
        if outcome.legal:
            legal += 1
            key = _decision_key(execution.trace.decisions)
        else:
            reasons[outcome.reason] = reasons.get(outcome.reason, 0) + 1
            key = "erroneous"
        distribution[key] = distribution.get(key, Fraction(0)) + execution.probability
        writer.writerow(
            [
                index,
                json.dumps(list(execution.inputs)),
                json.dumps(jsonable(execution.randomness.selections)),
                json.dumps(jsonable(execution.trace.decisions)),
                str(outcome),
                rational(execution.probability),
            ]
        )
        traces.extend(export_trace_jsonl(execution.trace))

    erroneous = len(executions) - legal
    met = True
    if config.expect == "legal":
        met = erroneous == 0
    elif config.expect == "erroneous":
        met = erroneous > 0
    summary = RunSummary(
        name=config.name,
        protocol=protocol.name,
        topology=protocol.topology.to_document(),
        runs=len(executions),
        sampled=sampled,
        legal=legal,
        erroneous=erroneous,
        reasons=dict(sorted(reasons.items())),
        decision_distribution={k: rational(p) for k, p in sorted(distribution.items())},
        expect=config.expect,
        met=met,
    )
    result = CommandResult(document=summary.model_dump(), met=met)
    _write(out_dir, config.outputs.traces, "\n".join(traces) + "\n", result.files)
    _write(out_dir, config.outputs.summary, _dump(result.document), result.files)
    _write(out_dir, config.outputs.outcomes, rows.getvalue(), result.files)
    return result


def cmd_equilibrium(
    config: ExperimentConfig, out_dir: Optional[Path] = None, cap: Optional[int] = None
) -> CommandResult:
    """Search the configured strategy space for a profitable coalition deviation."""

    protocol = build_from_config(config)
    cap = cap or config.cap or settings.enumeration_cap
    if not config.coalition and not config.sweep_sizes and not config.split_leader:
        raise ConfigInvalid("equilibrium needs a coalition, sweep_sizes or split_leader")
    space = config.strategy_space.build()
    utilities = [
        require_solution_preference(make_preference_utility(v, protocol.r), protocol.topology.n)
        for v in config.prefer
    ]
    reports = []
    if config.coalition:
        reports = [
            find_profitable_deviation(protocol, config.coalition, space, u, config.distribution, cap)
            for u in utilities
        ]
    sweep = []
    for u in utilities if config.sweep_sizes else ():
        sweep.extend(
            sweep_coalition_sizes(protocol, config.sweep_sizes, u, space, config.distribution, cap)
        )

    split = None
    if config.split_leader:
        i, j = config.split_leader
        n = protocol.topology.n
        bound = Fraction(n + 1, 2 * n) ** 2
        best = {}
        for v in config.prefer:
            value, strategy = best_split_leader_success(protocol, v, i, j, config.distribution, cap)
            best[str(v)] = {"value": rational(value), "strategy": strategy.describe()}
        split = {
            "honest": [i, j],
            "bound": rational(bound),
            "best": best,
            "within_bound": all(Fraction(b["value"]) <= bound for b in best.values()),
        }

    found = any(r.verdict is Verdict.deviation for r in [*reports, *sweep])
    verdict = Verdict.deviation if found else Verdict.equilibrium
    met = True
    if config.expect == "equilibrium":
        met = not found and (split is None or split["within_bound"])
    elif config.expect == "deviation":
        met = found
    response = EquilibriumResponse(
        name=config.name,
        protocol=protocol.name,
        reports=[r.to_document() for r in reports],
        verdict=verdict.value,
        split_leader=split,
        sweep=[r.to_document() for r in sweep],
        expect=config.expect,
        met=met,
    )
    result = CommandResult(document=response.model_dump(), met=met)
    _write(out_dir, config.outputs.report, _dump(result.document), result.files)
    return result


def _transform_document(protocol: ProtocolSpec, config: ExperimentConfig, cap: int) -> dict:
    transformed = ris_transform(protocol)
    original = enumerate_executions(protocol, distribution=config.distribution, cap=cap)
    wrapped = enumerate_executions(transformed, distribution=config.distribution, cap=cap)
    conservative = all(
        same_transcript(strip_buffers(w.trace), o.trace) for w, o in zip(wrapped, original)
    )
    decoded = 0
    failures = []
    for execution in wrapped:
        trace = execution.trace
        for agent in protocol.topology.agents:
            run = project(trace, agent)
            try:
                inputs = decode_inputs(
                    run.rounds[0].input,
                    trace.decisions[agent],
                    trace.final_states[agent].buffer,
                    protocol,
                    protocol.topology,
                    agent,
                )
            except (AmbiguousDecoding, DecodingMismatch) as err:
                failures.append({"inputs": list(execution.inputs), "agent": agent, "error": str(err)})
                continue
            if inputs == execution.inputs:
                decoded += 1
            else:
                failures.append({"inputs": list(execution.inputs), "agent": agent, "decoded": list(inputs)})
    passed = conservative and not failures
    return {
        "check": "transform",
        "protocol": transformed.name,
        "runs": len(wrapped),
        "stripped_matches_original": conservative,
        "decoded": decoded,
        "failures": failures,
        "result": "PASS" if passed else "FAIL",
    }


def cmd_verify(
    config: ExperimentConfig,
    check: Optional[str] = None,
    out_dir: Optional[Path] = None,
    cap: Optional[int] = None,
) -> CommandResult:
    """Run one epistemic verifier and compare its PASS/FAIL result with the expectation."""

    check = check or config.check
    if check is None:
        raise ConfigInvalid("verify needs a check: encoding, ris-resilience, silences or transform")
    protocol = build_from_config(config)
    cap = cap or config.cap or settings.enumeration_cap
    witnesses: dict[str, Trace] = {}

    if check == "encoding":
        report = verify_input_encoding(protocol, distribution=config.distribution, cap=cap)
        document = report.to_document()
        if report.witness is not None:
            witnesses["encoding-a"] = report.witness.trace_a
            witnesses["encoding-b"] = report.witness.trace_b
    elif check == "ris-resilience":
        report = verify_ris_resilience(
            protocol, distribution=config.distribution, cap=cap, sharing=config.sharing
        )
        document = report.to_document()
    elif check == "silences":
        flags = detect_informative_silences(protocol, distribution=config.distribution, cap=cap)
        document = silence_document(protocol, flags)
        for flag in flags:
            stem = f"silence-{flag.receiver}-{flag.sender}-{flag.round}"
            if flag.silent_trace is not None:
                witnesses[f"{stem}-silent"] = flag.silent_trace
            if flag.other_trace is not None:
                witnesses[f"{stem}-other"] = flag.other_trace
        if config.rewrite:
            rewritten = rewrite_with_empty(protocol)
            remaining = detect_informative_silences(rewritten, distribution=config.distribution, cap=cap)
            before = enumerate_executions(protocol, distribution=config.distribution, cap=cap)
            after = enumerate_executions(rewritten, distribution=config.distribution, cap=cap)
            preserved = all(a.trace.decisions == b.trace.decisions for a, b in zip(before, after))
            document["rewritten"] = silence_document(rewritten, remaining)
            document["decisions_preserved"] = preserved
            document["result"] = "PASS" if not remaining and preserved else "FAIL"
    elif check == "transform":
        document = _transform_document(protocol, config, cap)
    else:
        raise ConfigInvalid(f"unknown check {check!r}")

    passed = document["result"] == "PASS"
    met = True
    if config.expect == "pass":
        met = passed
    elif config.expect == "fail":
        met = not passed
    response = VerifyResponse(name=config.name, check=check, report=document, expect=config.expect, met=met)
    result = CommandResult(document=response.model_dump(), met=met)
    _write(out_dir, config.outputs.report, _dump(result.document), result.files)
    for name, trace in witnesses.items():
        lines = "\n".join(export_trace_jsonl(trace)) + "\n"
        _write(out_dir, f"{config.outputs.witnesses}/{name}.jsonl", lines, result.files)
    return result
