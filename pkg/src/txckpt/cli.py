"""Command-line interface.

Subcommands: analyze, check, extend, simulate, verify.  Every command prints
one JSON report to stdout (schema_version 1, stable key order) and exits with
0 when the queried property holds, 1 when it does not, 2 on input errors.
"""

from __future__ import annotations

import argparse
import itertools
import json
import random
import sys
from pathlib import Path
from typing import Any, Sequence

from .dependence import CheckpointAnalysis, DependenceEdge, ExecutionAnalysis
from .model import ExecutionError
from .protocol import checkpoint_counts, trace_pattern, verify_protocol_guarantees
from .scenario import (
    Scenario,
    ScenarioError,
    WorkloadSpec,
    generate_random,
    load_scenario,
    load_workload,
)
from .sim import SimConfig, SimulationError, Trace, run_simulation
from .theory import (
    ConditionViolated,
    OracleBoundExceeded,
    enumerate_consistent_globals,
    extend_to_global,
    is_consistent_global_state,
    theorem_condition,
)

SCHEMA_VERSION = 1


class InputError(ValueError):
    pass


def _state_str(names: Sequence[str], obj: int, version: int) -> str:
    return f"{names[obj]}:{version}"


def _edge_dict(edge: DependenceEdge, names: Sequence[str]) -> dict[str, Any]:
    return {
        "source": _state_str(names, edge.source.obj, edge.source.version),
        "target": _state_str(names, edge.target.obj, edge.target.version),
        "kind": edge.kind,
        "via": list(edge.via),
    }


def _parse_members(scenario: Scenario, tokens: Sequence[str]) -> dict[int, int]:
    members: dict[int, int] = {}
    for token in tokens:
        if ":" not in token:
            raise InputError(f"candidate member {token!r} is not of the form object:rank")
        name, _, rank_text = token.partition(":")
        obj = scenario.object_index(name)
        try:
            rank = int(rank_text)
        except ValueError:
            raise InputError(f"candidate member {token!r}: rank must be an integer") from None
        if obj in members:
            raise InputError(f"object {name!r} appears twice in the candidate set")
        members[obj] = rank
    if not members:
        raise InputError("candidate set must contain at least one member")
    return members


def _scenario_analysis(scenario: Scenario) -> CheckpointAnalysis:
    return CheckpointAnalysis(ExecutionAnalysis(scenario.execution), scenario.pattern)


def cmd_analyze(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    scenario = load_scenario(args.scenario)
    analysis = _scenario_analysis(scenario)
    base = analysis.base
    names = scenario.object_names
    counts = {"black": 0, "dashed": 0}
    for edge in base.edges:
        counts[edge.kind] += 1
    intervals = {
        names[obj]: [
            [iv.start, iv.end]
            for iv in sorted(
                {analysis.intervals[s] for s in base.timeline.states(obj)},
                key=lambda iv: iv.rank,
            )
        ]
        for obj in range(scenario.execution.num_objects)
    }
    results: dict[str, Any] = {
        "objects": {names[o]: base.timeline.max_version(o) + 1 for o in range(len(names))},
        "serialization_edges": sorted([list(e) for e in base.graph.direct_edges]),
        "edge_counts": counts,
        "black_edges_per_txn": {
            str(t.id): len(t.write_set) ** 2 for t in scenario.execution.transactions
        },
        "intervals": intervals,
    }
    total_states = sum(base.timeline.max_version(o) + 1 for o in range(len(names)))
    if total_states <= args.max_states:
        matrix = []
        states = base.timeline.all_states()
        for a in states:
            for b in states:
                if a != b and base.happened_before(a, b):
                    matrix.append(
                        [_state_str(names, a.obj, a.version), _state_str(names, b.obj, b.version)]
                    )
        results["happened_before"] = matrix
    else:
        results["happened_before_omitted"] = total_states
    return {"results": results, "ok": True}, 0


def cmd_check(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    scenario = load_scenario(args.scenario)
    analysis = _scenario_analysis(scenario)
    members = _parse_members(scenario, args.members)
    names = scenario.object_names
    resolved = {
        names[obj]: {"rank": rank, "version": analysis.pattern.version_of(obj, rank)}
        for obj, rank in sorted(members.items())
    }
    holds = theorem_condition(members, analysis)
    results: dict[str, Any] = {"members": resolved, "condition_holds": holds}
    if not holds:
        witness = None
        for obj_a, rank_a in sorted(members.items()):
            for obj_b, rank_b in sorted(members.items()):
                a = analysis.checkpoint(obj_a, rank_a)
                b = analysis.checkpoint(obj_b, rank_b)
                if analysis.dp_reachable(a, b):
                    witness = (a, b, analysis.dp_witness(a, b) or [])
                    break
            if witness:
                break
        assert witness is not None
        results["violation"] = {
            "from": _state_str(names, witness[0].obj, witness[0].state.version),
            "to": _state_str(names, witness[1].obj, witness[1].state.version),
            "witness": [_edge_dict(e, names) for e in witness[2]],
        }
    oracle: dict[str, Any] = {"checked": False}
    try:
        globals_ = enumerate_consistent_globals(analysis, bound=args.oracle_bound)
        extendable = any(gc.contains(members) for gc in globals_)
        oracle = {"checked": True, "extendable": extendable, "agrees": extendable == holds}
    except OracleBoundExceeded:
        pass
    results["oracle"] = oracle
    ok = holds and oracle.get("agrees", True)
    return {"results": results, "ok": ok}, 0 if holds else 1


def cmd_extend(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    scenario = load_scenario(args.scenario)
    analysis = _scenario_analysis(scenario)
    members = _parse_members(scenario, args.members)
    names = scenario.object_names
    try:
        extension = extend_to_global(members, analysis)
    except ConditionViolated as exc:
        results = {
            "condition_holds": False,
            "violation": {
                "from": _state_str(names, exc.source.obj, exc.source.state.version),
                "to": _state_str(names, exc.target.obj, exc.target.state.version),
                "witness": [_edge_dict(e, names) for e in exc.witness],
            },
        }
        return {"results": results, "ok": False}, 1
    gc = extension.global_checkpoint
    consistent = is_consistent_global_state(gc.states(), analysis.base)
    results = {
        "condition_holds": True,
        "global_checkpoint": {
            names[c.obj]: {"rank": c.rank, "version": c.state.version} for c in gc.members
        },
        "min_safe_ranks": {
            names[obj]: {names[m]: rank for m, rank in sorted(table.items())}
            for obj, table in sorted(extension.min_safe_ranks.items())
        },
        "consistent": consistent,
    }
    return {"results": results, "ok": consistent}, 0 if consistent else 1


def _config_from_args(args: argparse.Namespace, num_objects: int) -> SimConfig:
    return SimConfig(
        seed=args.seed,
        num_objects=num_objects,
        protocol=args.protocol,
        z_param=args.z,
        message_delay_range=(args.delay[0], args.delay[1]),
        timer_period=args.timer,
        timer_jitter=args.jitter,
    )


def _workload_from_args(args: argparse.Namespace) -> WorkloadSpec:
    if args.workload:
        return load_workload(args.workload)
    return WorkloadSpec(
        num_objects=args.objects,
        num_txns=args.txns,
        ops_per_txn=(args.ops[0], args.ops[1]),
        write_probability=args.write_prob,
        access_skew=args.skew,
        seed=args.wseed,
    )


def _trace_summary(trace: Trace) -> dict[str, Any]:
    per_obj = checkpoint_counts(trace.checkpoint_log)
    totals = {"initial": 0, "basic": 0, "forced": 0}
    for counts in per_obj.values():
        for kind, n in counts.items():
            totals[kind] += n
    return {
        "transactions": len(trace.execution.transactions),
        "events": len(trace.events),
        "checkpoints_per_object": {str(obj): counts for obj, counts in sorted(per_obj.items())},
        "checkpoint_totals": totals,
    }


def cmd_simulate(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    workload = _workload_from_args(args)
    config = _config_from_args(args, workload.num_objects)
    trace = run_simulation(workload, config)
    if args.out:
        Path(args.out).write_text(trace.to_json())
    results = _trace_summary(trace)
    results["trace_file"] = args.out or ""
    return {"results": results, "ok": True}, 0


def _theorem_spot_checks(trace: Trace, bound: int, samples: int) -> dict[str, Any]:
    base, analysis = trace_pattern(trace)
    space = 1
    for versions in analysis.pattern.versions:
        space *= len(versions)
    if space > bound:
        return {"checked": False, "reason": "candidate space beyond bound"}
    globals_ = enumerate_consistent_globals(analysis, bound=bound)
    rng = random.Random(trace.config.seed)
    num_objects = analysis.pattern.num_objects
    candidates: list[dict[int, int]] = []
    for obj in range(num_objects):
        for rank in analysis.pattern.ranks(obj):
            candidates.append({obj: rank})
    for _ in range(samples):
        if num_objects < 2:
            break
        a, b = rng.sample(range(num_objects), 2)
        candidates.append(
            {
                a: rng.randrange(len(analysis.pattern.versions[a])),
                b: rng.randrange(len(analysis.pattern.versions[b])),
            }
        )
    disagreements = 0
    for candidate in candidates:
        holds = theorem_condition(candidate, analysis)
        extendable = any(gc.contains(candidate) for gc in globals_)
        if holds != extendable:
            disagreements += 1
    return {"checked": True, "candidates": len(candidates), "disagreements": disagreements}


def cmd_verify(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    if args.trace:
        try:
            trace = Trace.from_json(Path(args.trace).read_text())
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"cannot load trace {args.trace}: {exc}") from exc
        report = verify_protocol_guarantees(trace)
        spot = _theorem_spot_checks(trace, args.oracle_bound, args.spot_samples)
        ok = report.ok and spot.get("disagreements", 0) == 0
        results = {
            "protocol": report.protocol,
            "z": report.z,
            "checkpoints": report.num_checkpoints,
            "violations": list(report.violations),
            "theorem_spot_checks": spot,
        }
        return {"results": results, "ok": ok}, 0 if ok else 1
    if args.sim_batch:
        violations: list[str] = []
        forced_total = 0
        for i in range(args.sim_batch):
            workload = WorkloadSpec(
                num_objects=args.objects,
                num_txns=args.txns,
                ops_per_txn=(args.ops[0], args.ops[1]),
                write_probability=args.write_prob,
                access_skew=args.skew,
                seed=args.wseed + i,
            )
            config = SimConfig(
                seed=args.seed + i,
                num_objects=args.objects,
                protocol=args.protocol,
                z_param=args.z,
                message_delay_range=(args.delay[0], args.delay[1]),
                timer_period=args.timer,
                timer_jitter=args.jitter,
            )
            report = verify_protocol_guarantees(run_simulation(workload, config))
            forced_total += report.counts_by_kind["forced"]
            violations.extend(f"run {i}: {v}" for v in report.violations)
        results = {
            "runs": args.sim_batch,
            "violations": violations,
            "forced_total": forced_total,
        }
        return {"results": results, "ok": not violations}, 0 if not violations else 1
    # theorem batch over random instances
    disagreements = []
    for i in range(args.theorem_batch):
        workload = WorkloadSpec(
            num_objects=args.objects,
            num_txns=args.txns,
            ops_per_txn=(args.ops[0], args.ops[1]),
            write_probability=args.write_prob,
            access_skew=args.skew,
            seed=args.wseed + i,
        )
        execution, pattern = generate_random(workload)
        analysis = CheckpointAnalysis(ExecutionAnalysis(execution), pattern)
        globals_ = enumerate_consistent_globals(analysis, bound=args.oracle_bound)
        num_objects = analysis.pattern.num_objects
        singles = [(obj, rank) for obj in range(num_objects) for rank in analysis.pattern.ranks(obj)]
        sets = [dict([s]) for s in singles]
        sets.extend(
            {a[0]: a[1], b[0]: b[1]}
            for a, b in itertools.combinations(singles, 2)
            if a[0] != b[0]
        )
        for candidate in sets:
            holds = theorem_condition(candidate, analysis)
            extendable = any(gc.contains(candidate) for gc in globals_)
            if holds != extendable:
                disagreements.append({"instance": i, "candidate": {str(k): v for k, v in candidate.items()}})
    results = {"instances": args.theorem_batch, "disagreements": disagreements}
    return {"results": results, "ok": not disagreements}, 0 if not disagreements else 1


def _add_workload_args(parser: argparse.ArgumentParser, with_file: bool = True) -> None:
    if with_file:
        parser.add_argument("--workload", help="workload JSON file (overrides inline parameters)")
    parser.add_argument("--objects", type=int, default=4)
    parser.add_argument("--txns", type=int, default=12)
    parser.add_argument("--ops", type=int, nargs=2, default=[1, 3], metavar=("LO", "HI"))
    parser.add_argument("--write-prob", type=float, default=0.6)
    parser.add_argument("--skew", type=float, default=0.0)
    parser.add_argument("--wseed", type=int, default=0, help="workload generation seed")


def _add_sim_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--protocol", choices=["A", "B"], default="A")
    parser.add_argument("--z", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0, help="simulation seed")
    parser.add_argument("--timer", type=int, default=25, help="basic checkpoint timer period")
    parser.add_argument("--jitter", type=int, default=0, help="timer jitter upper bound")
    parser.add_argument("--delay", type=int, nargs=2, default=[1, 10], metavar=("LO", "HI"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="txckpt")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="derived relations of a scenario")
    p.add_argument("scenario")
    p.add_argument("--max-states", type=int, default=40,
                   help="emit the happened-before matrix only up to this many states")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("check", help="can these checkpoints join one consistent global checkpoint?")
    p.add_argument("scenario")
    p.add_argument("members", nargs="+", metavar="OBJ:RANK")
    p.add_argument("--oracle-bound", type=int, default=10**6)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("extend", help="build a consistent global checkpoint around the candidates")
    p.add_argument("scenario")
    p.add_argument("members", nargs="+", metavar="OBJ:RANK")
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("simulate", help="run one seeded simulation")
    _add_workload_args(p)
    _add_sim_args(p)
    p.add_argument("--out", help="write the trace JSON here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check protocol guarantees on traces or random batches")
    p.add_argument("trace", nargs="?", help="trace JSON file")
    p.add_argument("--sim-batch", type=int, default=0, help="simulate and verify this many seeded runs")
    p.add_argument("--theorem-batch", type=int, default=0,
                   help="check condition/oracle agreement on this many random instances")
    _add_workload_args(p, with_file=False)
    _add_sim_args(p)
    p.add_argument("--oracle-bound", type=int, default=10**5)
    p.add_argument("--spot-samples", type=int, default=50)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify" and not (args.trace or args.sim_batch or args.theorem_batch):
        parser.error("verify needs a trace file, --sim-batch, or --theorem-batch")
    report: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
    }
    try:
        body, code = args.func(args)
    except (ScenarioError, ExecutionError, SimulationError, InputError, OracleBoundExceeded) as exc:
        report["error"] = str(exc)
        report["ok"] = False
        print(json.dumps(report, indent=2, sort_keys=True))
        return 2
    report.update(body)
    print(json.dumps(report, indent=2, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
