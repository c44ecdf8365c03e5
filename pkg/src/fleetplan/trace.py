"""Trace files: line-delimited JSON records, one per simulation step, plus
offline replay validation of the safety and accounting invariants."""

from __future__ import annotations

import json
from pathlib import Path


class TraceError(ValueError):
    """Corrupted trace file or invariant violation during replay."""


def write_trace(records: list[dict], path: str | Path) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_trace(path: str | Path) -> list[dict]:
    records = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.endswith("\n"):
                    raise TraceError(f"line {lineno}: truncated record")
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise TraceError(f"line {lineno}: {exc}") from exc
    except FileNotFoundError:
        raise TraceError(f"trace file not found: {path}")
    return records

REQUIRED_KEYS = frozenset({
    "t", "states", "pre_states", "env_state", "belief", "assignment",
    "actions", "observations", "subgraphs", "maxsum_rounds",
    "maxsum_converged", "expected_pure_reward", "step_cost", "arrivals",
    "events", "cum_reward", "cum_cost"})


def validate_trace(records: list[dict]) -> list[str]:
    """Offline invariant checks from the trace alone.

    Verifies the no-collision invariant at every step, belief normalization,
    and accounting conservation (cumulative totals recomputable from per-step
    costs and reward events). Returns a list of violations.
    """
    problems: list[str] = []
    reward_sum = 0.0
    cost_sum = 0.0
    for idx, record in enumerate(records):
        missing = REQUIRED_KEYS - record.keys()
        if missing:
            problems.append(f"record {idx}: missing keys {sorted(missing)}")
            continue
        t = record["t"]
        states = record["states"]
        if len(set(states)) != len(states):
            problems.append(f"step t={t}: collision, agent states {states}")
        if len(set(record["pre_states"])) != len(record["pre_states"]):
            problems.append(f"step t={t}: collision in pre-move states")
        belief = record["belief"]
        if abs(sum(belief) - 1.0) > 1e-6 or any(p < -1e-12 or p > 1 + 1e-12
                                                for p in belief):
            problems.append(f"step t={t}: belief not a probability vector")
        cost_sum += record["step_cost"]
        for event in record["events"]:
            if event.get("event") == "task_expired":
                reward_sum += event["reward"]
        if abs(record["cum_cost"] - cost_sum) > 1e-9:
            problems.append(f"step t={t}: cumulative cost {record['cum_cost']} "
                            f"!= recomputed {cost_sum}")
        if abs(record["cum_reward"] - reward_sum) > 1e-9:
            problems.append(f"step t={t}: cumulative reward {record['cum_reward']} "
                            f"!= recomputed {reward_sum}")
    ts = [record.get("t") for record in records]
    if ts != sorted(ts) or len(set(ts)) != len(ts):
        problems.append("step indices are not strictly increasing")
    return problems
