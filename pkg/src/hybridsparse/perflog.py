"""Per-rank operation recording and the aggregated performance log.

Kernels and communication routines report to the :class:`Recorder`
installed for the calling thread. Only the outermost operation of a nested
call is recorded, so a distributed matrix multiply counts once rather than
once per constituent sequential multiply.
"""

from __future__ import annotations

import csv
import io
import json
import threading
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

__all__ = [
    "OpStats",
    "Recorder",
    "PerfLog",
    "current_recorder",
    "recording",
    "record_op",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1

_local = threading.local()


@dataclass
class OpStats:
    calls: int = 0
    time: float = 0.0
    flops: int = 0


class Recorder:
    """Collects operation counts for one rank.

    Parameters
    ----------
    check_isolation : bool
        Instrumented mode: every chunked kernel runs its workers against
        private copies of the destination and reports writes that land
        outside the worker's own chunk.
    """

    def __init__(self, check_isolation: bool = False):
        self.check_isolation = check_isolation
        self.ops: dict[str, OpStats] = {}
        self.messages = 0
        self.ghost_elements = 0
        self.reductions = 0
        self.isolation_checks = 0
        self.violations: list[tuple[str, int, int]] = []  # (op, chunk, index)
        self.op_sequence: list[str] = []
        self._depth = 0

    def add(self, name: str, seconds: float, flops: int):
        st = self.ops.setdefault(name, OpStats())
        st.calls += 1
        st.time += seconds
        st.flops += flops
        self.op_sequence.append(name)


def current_recorder() -> Recorder | None:
    return getattr(_local, "recorder", None)


@contextmanager
def recording(rec: Recorder | None):
    """Install ``rec`` for the calling thread for the duration of the block."""
    prev = current_recorder()
    _local.recorder = rec
    try:
        yield rec
    finally:
        _local.recorder = prev


@contextmanager
def record_op(name: str, flops: int = 0):
    rec = current_recorder()
    if rec is None:
        yield
        return
    outer = rec._depth == 0
    rec._depth += 1
    t0 = time.perf_counter()
    try:
        yield
    finally:
        rec._depth -= 1
        if outer:
            rec.add(name, time.perf_counter() - t0, flops)


@dataclass
class PerfLog:
    """Aggregated log of a run.

    ``ops`` maps an operation name to ``{"calls", "time", "flops"}``: calls
    per rank, wall time as the maximum over ranks, flops summed over ranks.
    """

    environment: dict = field(default_factory=dict)
    ops: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    comm: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    @classmethod
    def from_recorders(cls, recorders, environment=None, solver=None, comm=None) -> "PerfLog":
        ops = {}
        for rec in recorders:
            for name, st in rec.ops.items():
                agg = ops.setdefault(name, {"calls": 0, "time": 0.0, "flops": 0})
                agg["calls"] = max(agg["calls"], st.calls)
                agg["time"] = max(agg["time"], st.time)
                agg["flops"] += st.flops
        comm_rec = {
            "messages": sum(r.messages for r in recorders),
            "ghost_elements": sum(r.ghost_elements for r in recorders),
            "reductions": max((r.reductions for r in recorders), default=0),
        }
        comm_rec.update(comm or {})
        return cls(dict(environment or {}), dict(sorted(ops.items())), dict(solver or {}), comm_rec)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PerfLog":
        schema = d.get("schema", SCHEMA_VERSION)
        if schema > SCHEMA_VERSION:
            raise ValueError(f"log schema {schema} is newer than supported {SCHEMA_VERSION}")
        return cls(dict(d["environment"]), dict(d["ops"]), dict(d["solver"]), dict(d["comm"]), schema)

    @classmethod
    def from_json(cls, text: str) -> "PerfLog":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        """Flat ``section,key,field,value`` rows."""
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["section", "key", "field", "value"])
        w.writerow(["meta", "schema", "", self.schema])
        for k, v in self.environment.items():
            w.writerow(["environment", k, "", v])
        for name, st in self.ops.items():
            for f, v in st.items():
                w.writerow(["op", name, f, v])
        for k, v in self.solver.items():
            w.writerow(["solver", k, "", v])
        for k, v in self.comm.items():
            w.writerow(["comm", k, "", v])
        return buf.getvalue()

    def write(self, path, fmt: str = "json"):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_json() if fmt == "json" else self.to_csv())
