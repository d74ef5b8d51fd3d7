"""Problem instances: identity of operations, parsing, generation, serialization.

Two text layouts are supported. The "standard" layout starts with a ``J M``
header followed by one line per job holding ``machine time`` pairs
(machines 0-based). The "taillard" layout holds the same header, then a
J x M matrix of processing times, then a J x M matrix of 1-based machine
indices. Lines starting with ``#`` are treated as comments in both layouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np


class OpId(NamedTuple):
    """Identity of one operation: position ``pos`` within job ``job``'s route."""

    job: int
    pos: int

    def token(self) -> str:
        return f"{self.job}.{self.pos}"


#: Dummy start/end nodes of the precedence graph; both have processing time 0.
SOURCE = OpId(-1, -1)
SINK = OpId(-2, -2)


class ParseError(ValueError):
    """Raised on malformed instance text; the message carries the line number."""


@dataclass(frozen=True, eq=True)
class Instance:
    """A job-shop instance: per-job routes of (machine, processing time) pairs.

    Every job visits each machine exactly once, so ``len(route[j]) ==
    num_machines`` and the machine indices of a route form a permutation of
    ``0..num_machines-1``.
    """

    num_jobs: int
    num_machines: int
    route: tuple[tuple[tuple[int, int], ...], ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        if self.num_jobs < 1 or self.num_machines < 1:
            raise ValueError("instance needs at least one job and one machine")
        if len(self.route) != self.num_jobs:
            raise ValueError("route count does not match num_jobs")
        for j, ops in enumerate(self.route):
            if len(ops) != self.num_machines:
                raise ValueError(f"job {j} route has {len(ops)} operations, "
                                 f"expected {self.num_machines}")
            machines = [m for m, _ in ops]
            if sorted(machines) != list(range(self.num_machines)):
                raise ValueError(f"job {j} machine sequence is not a permutation")
            for m, p in ops:
                if p < 0:
                    raise ValueError(f"job {j}: negative processing time {p}")

    # -- node indexing -----------------------------------------------------
    # Nodes are numbered row-major over (job, pos); the two dummies take the
    # last two indices. This flattening is shared by the graph, the evaluator
    # and the policy's action mask.

    @property
    def node_count(self) -> int:
        return self.num_jobs * self.num_machines + 2

    @property
    def source_id(self) -> int:
        return self.num_jobs * self.num_machines

    @property
    def sink_id(self) -> int:
        return self.num_jobs * self.num_machines + 1

    def node_id(self, op: OpId) -> int:
        if op == SOURCE:
            return self.source_id
        if op == SINK:
            return self.sink_id
        return op.job * self.num_machines + op.pos

    def op_of(self, node: int) -> OpId:
        if node == self.source_id:
            return SOURCE
        if node == self.sink_id:
            return SINK
        return OpId(node // self.num_machines, node % self.num_machines)

    @property
    def proc_by_node(self) -> np.ndarray:
        """Processing time per node id; the dummies carry 0."""
        arr = self._cache.get("proc")
        if arr is None:
            arr = np.zeros(self.node_count, dtype=np.int64)
            for j, ops in enumerate(self.route):
                for i, (_, p) in enumerate(ops):
                    arr[j * self.num_machines + i] = p
            arr.setflags(write=False)
            self._cache["proc"] = arr
        return arr

    @property
    def machine_by_node(self) -> np.ndarray:
        """Machine per node id; the dummies carry -1."""
        arr = self._cache.get("machine")
        if arr is None:
            arr = np.full(self.node_count, -1, dtype=np.int64)
            for j, ops in enumerate(self.route):
                for i, (m, _) in enumerate(ops):
                    arr[j * self.num_machines + i] = m
            arr.setflags(write=False)
            self._cache["machine"] = arr
        return arr

    def proc_of(self, op: OpId) -> int:
        if op in (SOURCE, SINK):
            return 0
        return self.route[op.job][op.pos][1]

    def machine_of(self, op: OpId) -> int:
        return self.route[op.job][op.pos][0]

    def job_work(self, job: int) -> int:
        return sum(p for _, p in self.route[job])


def _content_lines(text: str) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, stripped line) skipping blanks and comments."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _int_token(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"line {lineno}: malformed token {tok!r}") from None


def parse_standard(text: str) -> Instance:
    """Parse the standard layout: header then one machine/time pair line per job."""
    lines = _content_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError("line 1: empty input") from None
    toks = header.split()
    if len(toks) != 2:
        raise ParseError(f"line {lineno}: header must hold exactly 'jobs machines'")
    num_jobs = _int_token(toks[0], lineno)
    num_machines = _int_token(toks[1], lineno)
    if num_jobs < 1 or num_machines < 1:
        raise ParseError(f"line {lineno}: jobs and machines must be positive")

    route: list[tuple[tuple[int, int], ...]] = []
    for j in range(num_jobs):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise ParseError(f"job {j}: missing route line") from None
        toks = line.split()
        if len(toks) != 2 * num_machines:
            raise ParseError(f"line {lineno}: expected {num_machines} "
                             f"machine/time pairs, found {len(toks)} tokens")
        ops: list[tuple[int, int]] = []
        seen: set[int] = set()
        for i in range(num_machines):
            m = _int_token(toks[2 * i], lineno)
            p = _int_token(toks[2 * i + 1], lineno)
            if not 0 <= m < num_machines:
                raise ParseError(f"line {lineno}: machine index {m} out of range "
                                 f"for job {j}")
            if m in seen:
                raise ParseError(f"line {lineno}: duplicate machine {m} in job {j}")
            if p < 0:
                raise ParseError(f"line {lineno}: negative processing time {p}")
            seen.add(m)
            ops.append((m, p))
        route.append(tuple(ops))
    for lineno, line in lines:
        raise ParseError(f"line {lineno}: unexpected trailing content {line!r}")
    return Instance(num_jobs, num_machines, tuple(route))


def serialize_standard(inst: Instance) -> str:
    rows = [f"{inst.num_jobs} {inst.num_machines}"]
    for ops in inst.route:
        rows.append(" ".join(f"{m} {p}" for m, p in ops))
    return "\n".join(rows) + "\n"


def parse_taillard(text: str) -> Instance:
    """Parse the taillard layout: header, times matrix, then 1-based machine matrix."""
    toks: list[tuple[int, str]] = []
    for lineno, line in _content_lines(text):
        toks.extend((lineno, t) for t in line.split())
    if len(toks) < 2:
        raise ParseError("line 1: missing 'jobs machines' header")
    num_jobs = _int_token(toks[0][1], toks[0][0])
    num_machines = _int_token(toks[1][1], toks[1][0])
    if num_jobs < 1 or num_machines < 1:
        raise ParseError(f"line {toks[0][0]}: jobs and machines must be positive")
    need = 2 + 2 * num_jobs * num_machines
    if len(toks) != need:
        raise ParseError(f"dimension mismatch: expected {need} values for a "
                         f"{num_jobs}x{num_machines} instance, found {len(toks)}")
    values = [(_int_token(t, ln), ln) for ln, t in toks[2:]]
    times = values[: num_jobs * num_machines]
    machines = values[num_jobs * num_machines:]

    route: list[tuple[tuple[int, int], ...]] = []
    for j in range(num_jobs):
        row_t = times[j * num_machines:(j + 1) * num_machines]
        row_m = machines[j * num_machines:(j + 1) * num_machines]
        ms = [m for m, _ in row_m]
        if sorted(ms) != list(range(1, num_machines + 1)):
            lineno = row_m[0][1]
            raise ParseError(f"line {lineno}: machine row is not a permutation "
                             f"of 1..{num_machines} for job {j}")
        for p, lineno in row_t:
            if p < 0:
                raise ParseError(f"line {lineno}: negative processing time {p}")
        route.append(tuple((m - 1, p) for (m, _), (p, _) in zip(row_m, row_t)))
    return Instance(num_jobs, num_machines, tuple(route))


def serialize_taillard(inst: Instance) -> str:
    rows = [f"{inst.num_jobs} {inst.num_machines}"]
    for ops in inst.route:
        rows.append(" ".join(str(p) for _, p in ops))
    for ops in inst.route:
        rows.append(" ".join(str(m + 1) for m, _ in ops))
    return "\n".join(rows) + "\n"


def generate_taillard(num_jobs: int, num_machines: int, seed: int) -> Instance:
    """Random instance: times uniform on {1..99}, routes uniform random permutations."""
    if num_jobs < 1 or num_machines < 1:
        raise ValueError("num_jobs and num_machines must be positive")
    rng = np.random.default_rng(seed)
    times = rng.integers(1, 100, size=(num_jobs, num_machines))
    route = []
    for j in range(num_jobs):
        order = rng.permutation(num_machines)
        route.append(tuple((int(order[i]), int(times[j, i]))
                           for i in range(num_machines)))
    return Instance(num_jobs, num_machines, tuple(route))
