"""Three-party choreography as deterministic state machines.

Each party prepares, measures its own detector pair, forwards the two
counts around the ring Alice -> Bob -> Charlie -> Alice, and corrects the
receiving mode it owns from the counts it was sent. Delivery runs on a
single-threaded scheduler with logical time, so a run is a pure function
of (params, seed).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .protocol import (
    CASE_OF_CODE,
    CASES,
    LEG_NAMES,
    LEGS,
    CaseId,
    CorrectionPlan,
    DetectionEvent,
    HeraldedOutcome,
    OutcomeTable,
    ProtocolParams,
    apply_correction,
    classify_event,
    enumerate_outcomes,
    herald,
    leg_ops,
    plan_correction,
    post_mix_state,
)


class Phase(enum.IntEnum):
    PREPARE = 0
    MEASURE = 1
    AWAIT_COUNTS = 2
    CORRECT = 3
    DONE = 4


class ProtocolError(RuntimeError):
    """Raised on an illegal phase transition or an undelivered message."""


@dataclass(frozen=True)
class ClassicalMessage:
    sender: str
    recipient: str
    counts: tuple[int, int]
    seq: int


@dataclass
class PartyNode:
    name: str
    modes: tuple
    pair: int          # index of the detector pair this party reads
    receives: int      # leg whose receiving mode this party owns
    phase: Phase = Phase.PREPARE
    inbox: deque = field(default_factory=deque)
    outbox: deque = field(default_factory=deque)
    counts: tuple[int, int] | None = None
    received: ClassicalMessage | None = None
    ops: tuple[str, ...] = ()

    @property
    def receiver_mode(self) -> int:
        return LEGS[self.receives].receiver

    def advance(self, to: Phase) -> None:
        if to != self.phase + 1:
            raise ProtocolError(f"{self.name}: {self.phase.name} -> {to.name} skips a phase")
        self.phase = to


# Mode ownership and the fixed classical ring.
PARTY_LAYOUT = (
    ("Alice", ("a", 1, 6), 0, 2),
    ("Bob", ("b", 2, 4), 1, 0),
    ("Charlie", ("c", 3, 5), 2, 1),
)
ROUTES = {"Alice": "Bob", "Bob": "Charlie", "Charlie": "Alice"}


def make_parties() -> dict[str, PartyNode]:
    return {name: PartyNode(name, modes, pair, recv) for name, modes, pair, recv in PARTY_LAYOUT}


@dataclass
class RunTrace:
    seed: int | None
    index: int
    event: DetectionEvent
    case: CaseId
    parities: tuple[int, int, int] | None
    messages: list[ClassicalMessage]
    corrections: dict[str, str]
    fidelities: dict[str, float]
    failed: bool
    steps: list[dict]

    @property
    def bits(self) -> tuple[int, int, int] | None:
        """One parity bit per detector pair, the steering information sent."""
        return self.parities

    def to_jsonl(self) -> str:
        return "".join(json.dumps(s, sort_keys=True) + "\n" for s in self.steps)

    def to_json(self) -> dict:
        return {"seed": self.seed, "index": self.index, "event": list(self.event.counts),
                "case": self.case.value, "failed": self.failed,
                "corrections": self.corrections, "fidelities": self.fidelities,
                "messages": [m.__dict__ for m in self.messages]}


class EmptyDistributionError(ValueError):
    pass


def event_cdf(table: OutcomeTable) -> np.ndarray:
    cdf = np.cumsum(table.probability)
    if cdf.size == 0 or cdf[-1] <= 0:
        raise EmptyDistributionError("no enumerated events to sample from")
    return cdf


def sample_index(cdf: np.ndarray, u) -> np.ndarray:
    """Inverse CDF over the lexicographic event order; u in [0, 1)."""
    # the enumerated mass falls short of 1 by at most the tail budget;
    # rescale so every draw lands on an enumerated event
    return np.minimum(np.searchsorted(cdf, np.asarray(u) * cdf[-1], side="right"), cdf.size - 1)


def sample_event(table: OutcomeTable, seed) -> DetectionEvent:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return table.event(int(sample_index(event_cdf(table), rng.random())))


class StateFidelities:
    """Per-event fidelities from the full nine-mode state, memoized."""

    def __init__(self, params: ProtocolParams):
        self.params = params
        self._herald: dict[tuple, tuple[float, object]] = {}

    def __call__(self, event: DetectionEvent, ops: tuple[tuple[str, ...], ...],
                 index: int | None = None) -> tuple[float, float, float]:
        key = event.counts
        if key not in self._herald:
            self._herald[key] = herald(post_mix_state(self.params), event)
        prob, raw = self._herald[key]
        case, parities = classify_event(event)
        out = HeraldedOutcome(event, case, parities, prob, raw)
        plan = CorrectionPlan(case, parities or (0, 0, 0), ops, faithful=False)
        return apply_correction(out, self.params, plan).fidelities


class TableFidelities:
    """Per-event fidelities from the pair tables (same values, no state algebra)."""

    def __init__(self, table: OutcomeTable):
        self.table = table

    def __call__(self, event, ops, index: int | None = None):
        return tuple(float(f) for f in self.table.fidelity[index])


class Scheduler:
    """Single-threaded event loop; one logical tick per recorded step."""

    def __init__(self):
        self.t = 0
        self.steps: list[dict] = []
        self.queue: deque[ClassicalMessage] = deque()
        self.seq = 0

    def log(self, actor: str, action: str, payload) -> None:
        self.steps.append({"t": self.t, "actor": actor, "action": action, "payload": payload})
        self.t += 1

    def send(self, node: PartyNode, to: str) -> ClassicalMessage:
        msg = ClassicalMessage(node.name, to, node.counts, self.seq)
        self.seq += 1
        node.outbox.append(msg)
        self.queue.append(msg)
        self.log(node.name, "send", {"to": to, "counts": list(msg.counts), "seq": msg.seq})
        return msg

    def deliver(self, parties: dict[str, PartyNode]) -> None:
        while self.queue:
            msg = self.queue.popleft()
            parties[msg.recipient].inbox.append(msg)
            self.log(msg.recipient, "receive", {"from": msg.sender, "counts": list(msg.counts),
                                                "seq": msg.seq})


def execute(params: ProtocolParams, event: DetectionEvent, fidelity_source,
            seed=None, index: int = -1) -> RunTrace:
    """Drive the three parties through one run for a given detection event."""
    parties = make_parties()
    sched = Scheduler()
    case, parities = classify_event(event)
    for node in parties.values():
        sched.log(node.name, "prepare", {"modes": [str(m) for m in node.modes],
                                         "mix": [str(node.modes[0]), str(node.modes[1])]})
        node.advance(Phase.MEASURE)
    for node in parties.values():
        node.counts = event.pairs[node.pair]
        sched.log(node.name, "measure", {"counts": list(node.counts)})
        node.advance(Phase.AWAIT_COUNTS)
    messages = [sched.send(node, ROUTES[node.name]) for node in parties.values()]
    sched.deliver(parties)
    for node in parties.values():
        if len(node.inbox) != 1:
            raise ProtocolError(f"{node.name} received {len(node.inbox)} messages")
        node.received = node.inbox.popleft()
        node.advance(Phase.CORRECT)
    failed = not case.is_heralded
    ops = [()] * 3
    for node in parties.values():
        k = node.receives
        # the message a receiver gets comes from the pair steering its mode
        if node.received.counts != event.pairs[k]:
            raise ProtocolError(f"{node.name} was routed the wrong counts")
        node.ops = leg_ops(event, k)
        ops[k] = node.ops
        label = "I" if not node.ops else "".join(reversed(node.ops))
        sched.log(node.name, "correct", {"mode": node.receiver_mode, "ops": label,
                                         "heralded": sum(node.received.counts) > 0})
    ops = tuple(ops)
    if not failed and plan_correction(case, parities).ops != ops:
        raise ProtocolError("local corrections disagree with the case plan")
    fids = fidelity_source(event, ops, index)
    for node in parties.values():
        node.advance(Phase.DONE)
        leg = LEG_NAMES[node.receives]
        sched.log(node.name, "done", {"leg": leg, "fidelity": fids[node.receives]})
    sched.log("scheduler", "result", {"case": case.value, "failed": failed,
                                      "event": list(event.counts)})
    corrections = {n.name: ("I" if not n.ops else "".join(reversed(n.ops))) for n in parties.values()}
    return RunTrace(seed, index, event, case, parities, messages, corrections,
                    dict(zip(LEG_NAMES, fids)), failed, sched.steps)


def run_protocol(params: ProtocolParams, seed: int, fidelity: str = "state") -> RunTrace:
    """One seeded run: sample an event, then play out the choreography."""
    table = enumerate_outcomes(params)
    cdf = event_cdf(table)
    i = int(sample_index(cdf, np.random.default_rng(seed).random()))
    source = StateFidelities(params) if fidelity == "state" else TableFidelities(table)
    return execute(params, table.event(i), source, seed=seed, index=i)


@dataclass
class Campaign:
    params: ProtocolParams
    seed: int
    indices: np.ndarray
    case_counts: dict[str, int]
    failures: int
    digest: str

    @property
    def runs(self) -> int:
        return int(self.indices.size)

    def frequency_check(self, table: OutcomeTable, sigmas: float = 3.0) -> dict[str, dict]:
        """Per case class: count, expectation and multinomial z-score."""
        n = self.runs
        probs = {c.value: table.case_mass(c) / table.total_mass for c in CASES}
        probs[CaseId.AMBIGUOUS.value] = table.ambiguous_mass / table.total_mass
        out = {}
        for name, p in probs.items():
            k = self.case_counts.get(name, 0)
            sd = math.sqrt(n * p * (1 - p))
            z = (k - n * p) / sd if sd > 0 else 0.0
            out[name] = {"count": k, "expected": n * p, "z": z, "ok": abs(z) <= sigmas}
        return out


def run_campaign(params: ProtocolParams, runs: int, seed: int,
                 traces: bool = True) -> Campaign:
    """Many runs from one seeded stream.

    Every run is played through the party machines and its JSON-lines trace
    is folded into a SHA-256 digest, so replay can be checked bit for bit.
    """
    table = enumerate_outcomes(params)
    cdf = event_cdf(table)
    idx = sample_index(cdf, np.random.default_rng(seed).random(runs))
    codes = table.case_code[idx]
    counts = np.bincount(codes, minlength=len(CASE_OF_CODE))
    h = hashlib.sha256()
    if traces:
        source = TableFidelities(table)
        for i in idx:
            trace = execute(params, table.event(int(i)), source, seed=seed, index=int(i))
            h.update(json.dumps(trace.steps, sort_keys=True).encode())
    else:
        h.update(idx.tobytes())
    case_counts = {CASE_OF_CODE[c].value: int(counts[c]) for c in range(len(CASE_OF_CODE))}
    return Campaign(params, seed, idx, case_counts, case_counts[CaseId.AMBIGUOUS.value],
                    h.hexdigest())
