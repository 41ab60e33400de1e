import json
from dataclasses import fields, is_dataclass
from enum import Enum
from fractions import Fraction
from typing import Any

from src.core.models import BOTTOM, EMPTY, Trace


def rational(value: Fraction) -> str:
    """Render an exact probability as a "p/q" string (integers stay "p/1")."""
    return f"{value.numerator}/{value.denominator}"


def jsonable(value: Any) -> Any:
    """
    The jsonable function converts payloads, decisions and reports to JSON values.

    EMPTY and BOTTOM become their names, silence and undecided become null,
    rationals become "p/q" strings and dataclass payloads become objects tagged
    with their type name.

    :param value: Any: A payload, decision or report fragment
    :return: A value json.dumps accepts
    """

    if value is None:
        return None
    if value is EMPTY or value is BOTTOM:
        return value.name
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Fraction):
        return rational(value)
    if isinstance(value, (bool, int, float, str)):
        return value
    if is_dataclass(value):
        document = {"type": type(value).__name__}
        document.update({f.name: jsonable(getattr(value, f.name)) for f in fields(value)})
        return document
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (frozenset, set)):
        return [jsonable(v) for v in sorted(value, key=repr)]
    if isinstance(value, (tuple, list)):
        return [jsonable(v) for v in value]
    return repr(value)


def trace_rows(trace: Trace) -> list[dict]:
    rows = []
    for t, by_agent in enumerate(trace.rounds):
        for agent in sorted(by_agent):
            record = by_agent[agent]
            rows.append(
                {
                    "agent": agent,
                    "round": t,
                    "input": record.input,
                    "in": [{"from": b, "payload": jsonable(m)} for b, m in record.incoming],
                    "out": [{"to": b, "payload": jsonable(m)} for b, m in record.outgoing],
                    "decision": jsonable(record.decision),
                }
            )
    return rows


def export_trace_jsonl(trace: Trace) -> list[str]:
    """One JSON line per (agent, round) in round-major, agent-minor order."""
    return [json.dumps(row, sort_keys=True) for row in trace_rows(trace)]
