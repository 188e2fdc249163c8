"""Scenario and workload files, bundled example scenarios, seeded generators.

Scenario files are JSON with integer fields only:

    {
      "objects": 3,
      "object_names": ["x", "y", "z"],          # optional
      "transactions": [
        {"id": 1, "reads": [0], "writes": [1, 2]},
        {"id": 2, "reads": [1], "writes": [0]}
      ],
      "commit_order": [1, 2],
      "checkpoints": {"x": [0, 1], "y": [0, 1], "z": [0, 1]}   # optional
    }

Checkpoint keys may be object names or decimal indices; version 0 is implied
for every object and added on load.  Unknown fields are rejected.

Workload files describe random-workload parameters for the generator and the
simulator: num_objects, num_txns, ops_per_txn [lo, hi], write_probability,
access_skew, seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .dependence import CheckpointPattern, PatternError
from .model import (
    Execution,
    ExecutionError,
    Transaction,
    ValidatedExecution,
    assign_versions,
    validate_execution,
)


class ScenarioError(ValueError):
    """Scenario or workload file failed to parse or validate."""


@dataclass(frozen=True)
class Scenario:
    name: str
    execution: ValidatedExecution
    pattern: CheckpointPattern
    object_names: tuple[str, ...]

    def object_index(self, token: str) -> int:
        """Resolve an object name or decimal index."""
        if token in self.object_names:
            return self.object_names.index(token)
        try:
            idx = int(token)
        except ValueError:
            raise ScenarioError(f"unknown object {token!r}") from None
        if not 0 <= idx < self.execution.num_objects:
            raise ScenarioError(f"object index {idx} out of range")
        return idx


def _expect(data: Mapping[str, Any], field: str, kind: type, where: str) -> Any:
    if field not in data:
        raise ScenarioError(f"{where}: missing field {field!r}")
    value = data[field]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ScenarioError(f"{where}.{field}: expected {kind.__name__}")
    return value


def _int_list(value: Any, where: str) -> list[int]:
    if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
        raise ScenarioError(f"{where}: expected a list of integers")
    return list(value)


def scenario_from_dict(data: Mapping[str, Any], name: str = "scenario") -> Scenario:
    allowed = {"objects", "object_names", "transactions", "commit_order", "checkpoints"}
    unknown = set(data) - allowed
    if unknown:
        raise ScenarioError(f"{name}: unknown fields {sorted(unknown)}")
    num_objects = _expect(data, "objects", int, name)
    names = data.get("object_names", [str(i) for i in range(num_objects)])
    if not isinstance(names, list) or len(names) != num_objects or not all(isinstance(s, str) for s in names):
        raise ScenarioError(f"{name}.object_names: expected {num_objects} strings")
    if len(set(names)) != num_objects:
        raise ScenarioError(f"{name}.object_names: names must be unique")
    txns = []
    raw_txns = data.get("transactions", [])
    if not isinstance(raw_txns, list):
        raise ScenarioError(f"{name}.transactions: expected a list")
    for i, raw in enumerate(raw_txns):
        where = f"{name}.transactions[{i}]"
        if not isinstance(raw, Mapping):
            raise ScenarioError(f"{where}: expected an object")
        extra = set(raw) - {"id", "reads", "writes"}
        if extra:
            raise ScenarioError(f"{where}: unknown fields {sorted(extra)}")
        txns.append(
            Transaction.make(
                _expect(raw, "id", int, where),
                _int_list(raw.get("reads", []), f"{where}.reads"),
                _int_list(raw.get("writes", []), f"{where}.writes"),
            )
        )
    order = _int_list(data.get("commit_order", []), f"{name}.commit_order")
    try:
        execution = validate_execution(Execution(num_objects, tuple(txns), tuple(order)))
    except ExecutionError as exc:
        raise ScenarioError(f"{name}: {exc}") from exc
    timeline = assign_versions(execution)
    raw_ckpt = data.get("checkpoints", {})
    if not isinstance(raw_ckpt, Mapping):
        raise ScenarioError(f"{name}.checkpoints: expected a mapping")
    by_obj: dict[int, list[int]] = {}
    for key, versions in raw_ckpt.items():
        if key in names:
            obj = names.index(key)
        else:
            try:
                obj = int(key)
            except ValueError:
                raise ScenarioError(f"{name}.checkpoints: unknown object {key!r}") from None
        if not 0 <= obj < num_objects:
            raise ScenarioError(f"{name}.checkpoints: object index {obj} out of range")
        by_obj[obj] = _int_list(versions, f"{name}.checkpoints[{key!r}]")
    try:
        pattern = CheckpointPattern.make(by_obj, timeline)
    except PatternError as exc:
        raise ScenarioError(f"{name}.checkpoints: {exc}") from exc
    return Scenario(name, execution, pattern, tuple(names))


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    txn_by_id = {t.id: t for t in scenario.execution.transactions}
    return {
        "objects": scenario.execution.num_objects,
        "object_names": list(scenario.object_names),
        "transactions": [
            {
                "id": txn_id,
                "reads": sorted(txn_by_id[txn_id].read_set),
                "writes": sorted(txn_by_id[txn_id].write_set),
            }
            for txn_id in sorted(txn_by_id)
        ],
        "commit_order": list(scenario.execution.commit_order),
        "checkpoints": {
            scenario.object_names[obj]: list(versions)
            for obj, versions in enumerate(scenario.pattern.versions)
        },
    }


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    name = str(path)
    if name.startswith("builtin:"):
        return builtin_scenario(name.split(":", 1)[1])
    p = Path(path)
    if not p.exists() and name in BUILTIN_SCENARIOS:
        return builtin_scenario(name)
    try:
        data = json.loads(p.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: parse error: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ScenarioError(f"{p}: expected a JSON object")
    return scenario_from_dict(data, name=p.stem)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n")


# Bundled scenarios.  fig1a/fig1b: two transactions with a read-write conflict
# on x, under the two possible serialization orders, every state checkpointed.
# fig3: seven transactions over u, z, y, x whose checkpoint pattern exhibits a
# dependence path between checkpoints with no happened-before relation.
BUILTIN_SCENARIOS: dict[str, dict[str, Any]] = {
    "fig1a": {
        "objects": 3,
        "object_names": ["x", "y", "z"],
        "transactions": [
            {"id": 1, "reads": [0], "writes": [1, 2]},
            {"id": 2, "reads": [1], "writes": [0]},
        ],
        "commit_order": [1, 2],
        "checkpoints": {"x": [0, 1], "y": [0, 1], "z": [0, 1]},
    },
    "fig1b": {
        "objects": 3,
        "object_names": ["x", "y", "z"],
        "transactions": [
            {"id": 1, "reads": [0], "writes": [1, 2]},
            {"id": 2, "reads": [1], "writes": [0]},
        ],
        "commit_order": [2, 1],
        "checkpoints": {"x": [0, 1], "y": [0, 1], "z": [0, 1]},
    },
    "fig3": {
        "objects": 4,
        "object_names": ["u", "z", "y", "x"],
        "transactions": [
            {"id": 1, "reads": [0], "writes": [0]},
            {"id": 2, "reads": [1], "writes": [1]},
            {"id": 3, "reads": [1], "writes": [1, 3]},
            {"id": 4, "reads": [0, 1], "writes": [1]},
            {"id": 5, "reads": [1], "writes": [1, 2]},
            {"id": 6, "reads": [2], "writes": [2]},
            {"id": 7, "reads": [3], "writes": [3]},
        ],
        "commit_order": [1, 2, 3, 7, 4, 5, 6],
        "checkpoints": {"u": [0], "z": [0, 4], "y": [0, 2], "x": [0, 2]},
    },
}


def builtin_scenario(name: str) -> Scenario:
    try:
        data = BUILTIN_SCENARIOS[name]
    except KeyError:
        raise ScenarioError(
            f"unknown builtin scenario {name!r}; available: {sorted(BUILTIN_SCENARIOS)}"
        ) from None
    return scenario_from_dict(data, name=name)


def fig3_reconstruction_facts(scenario: Scenario) -> dict[str, bool]:
    """The three facts the fig3 commit order must reproduce.

    Downstream fig3 tests assert these before trusting anything else:
    transaction 1 precedes transaction 6 in the serialization order,
    transactions 1 and 7 are unrelated in it, and object z has exactly four
    states before its second checkpoint.
    """
    from .dependence import ExecutionAnalysis  # local import to keep scenario loading light

    analysis = ExecutionAnalysis(scenario.execution)
    z = scenario.object_index("z")
    z_versions = scenario.pattern.versions[z]
    return {
        "t1_precedes_t6": analysis.graph.reaches(1, 6),
        "t1_t7_unrelated": not analysis.graph.reaches(1, 7) and not analysis.graph.reaches(7, 1),
        "first_z_interval_has_4_states": len(z_versions) >= 2 and z_versions[1] - z_versions[0] == 4,
    }


@dataclass(frozen=True)
class WorkloadSpec:
    num_objects: int
    num_txns: int
    ops_per_txn: tuple[int, int] = (1, 3)
    write_probability: float = 0.5
    access_skew: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_objects < 1:
            raise ScenarioError("num_objects must be at least 1")
        if self.num_txns < 0:
            raise ScenarioError("num_txns must be non-negative")
        lo, hi = self.ops_per_txn
        if not 1 <= lo <= hi:
            raise ScenarioError("ops_per_txn range must satisfy 1 <= lo <= hi")
        if not 0.0 <= self.write_probability <= 1.0:
            raise ScenarioError("write_probability must lie in [0, 1]")
        if self.access_skew < 0.0:
            raise ScenarioError("access_skew must be non-negative")


def workload_from_dict(data: Mapping[str, Any], where: str = "workload") -> WorkloadSpec:
    allowed = {"num_objects", "num_txns", "ops_per_txn", "write_probability", "access_skew", "seed"}
    unknown = set(data) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown fields {sorted(unknown)}")
    ops = data.get("ops_per_txn", [1, 3])
    if not isinstance(ops, (list, tuple)) or len(ops) != 2:
        raise ScenarioError(f"{where}.ops_per_txn: expected [lo, hi]")
    return WorkloadSpec(
        num_objects=_expect(data, "num_objects", int, where),
        num_txns=_expect(data, "num_txns", int, where),
        ops_per_txn=(int(ops[0]), int(ops[1])),
        write_probability=float(data.get("write_probability", 0.5)),
        access_skew=float(data.get("access_skew", 0.0)),
        seed=int(data.get("seed", 0)),
    )


def load_workload(path: str | Path) -> WorkloadSpec:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: parse error: {exc}") from exc
    return workload_from_dict(data, where=p.stem)


def _skew_weights(spec: WorkloadSpec) -> list[float]:
    return [1.0 / (i + 1) ** spec.access_skew for i in range(spec.num_objects)]


def _weighted_distinct(rng: random.Random, weights: list[float], k: int) -> list[int]:
    pool = list(range(len(weights)))
    live = list(weights)
    chosen: list[int] = []
    for _ in range(min(k, len(pool))):
        total = sum(live)
        r = rng.random() * total
        acc = 0.0
        pick = len(live) - 1
        for idx, w in enumerate(live):
            acc += w
            if r <= acc:
                pick = idx
                break
        chosen.append(pool.pop(pick))
        live.pop(pick)
    return chosen


def workload_transactions(spec: WorkloadSpec) -> list[Transaction]:
    """Seeded access sets for the workload; ids are 0..num_txns-1."""
    rng = random.Random(spec.seed)
    weights = _skew_weights(spec)
    lo, hi = spec.ops_per_txn
    txns = []
    for txn_id in range(spec.num_txns):
        k = rng.randint(lo, hi)
        objs = _weighted_distinct(rng, weights, k)
        reads, writes = set(), set()
        for obj in objs:
            if rng.random() < spec.write_probability:
                writes.add(obj)
                if rng.random() < 0.5:
                    reads.add(obj)
            else:
                reads.add(obj)
        txns.append(Transaction.make(txn_id, reads, writes))
    return txns


def generate_random(
    spec: WorkloadSpec, max_checkpoints_per_object: int = 3
) -> tuple[ValidatedExecution, CheckpointPattern]:
    """Seeded random execution plus checkpoint pattern.

    The pattern holds version 0 plus up to max_checkpoints_per_object - 1
    further versions per object, sampled from the object's version range.
    """
    rng = random.Random(spec.seed ^ 0x5CE9A210)
    txns = workload_transactions(spec)
    order = [t.id for t in txns]
    rng.shuffle(order)
    execution = validate_execution(Execution(spec.num_objects, tuple(txns), tuple(order)))
    timeline = assign_versions(execution)
    raw: dict[int, list[int]] = {}
    for obj in range(spec.num_objects):
        top = timeline.max_version(obj)
        extra = rng.randint(0, max(0, max_checkpoints_per_object - 1))
        raw[obj] = sorted(rng.sample(range(1, top + 1), min(extra, top)))
    return execution, CheckpointPattern.make(raw, timeline)
