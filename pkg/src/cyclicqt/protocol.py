"""Cyclic teleportation of three cat states over three Bell coherent pairs.

Mode layout::

    Alice  holds a, 1, 6   mixes (a, 1) -> detectors 7 (sum), 8 (difference)
    Bob    holds b, 2, 4   mixes (b, 2) -> detectors 9, 10
    Charlie holds c, 3, 5  mixes (c, 3) -> detectors 11, 12

Channel pairs are (1, 4), (2, 5), (3, 6), so Alice's state lands on mode 4
(Bob), Bob's on 5 (Charlie) and Charlie's on 6 (Alice).
"""

from __future__ import annotations

import csv
import enum
import functools
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .coherent import (
    SuperposedState,
    apply_bps,
    displace,
    factor,
    normalize,
    norm_squared,
    overlap_matrix,
    phase_shift,
    project_fock,
    prune,
    reduced_weight_matrix,
    split_modes,
    tensor,
)

DETECTOR_MODES = (7, 8, 9, 10, 11, 12)
RECEIVER_MODES = (4, 5, 6)
SUM, DIFF, SILENT = 0, 1, 2


@dataclass(frozen=True)
class Leg:
    name: str
    info: str
    channel: int
    sum_port: int
    diff_port: int
    receiver: int
    sender: str
    recipient: str


LEGS = (
    Leg("A->B", "a", 1, 7, 8, 4, "Alice", "Bob"),
    Leg("B->C", "b", 2, 9, 10, 5, "Bob", "Charlie"),
    Leg("C->A", "c", 3, 11, 12, 6, "Charlie", "Alice"),
)
LEG_NAMES = tuple(leg.name for leg in LEGS)


class CaseId(enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    VI = "VI"
    VII = "VII"
    VIII = "VIII"
    AMBIGUOUS = "Ambiguous"
    IMPOSSIBLE = "Impossible"

    @property
    def is_heralded(self) -> bool:
        return self in CASES


CASES = (CaseId.I, CaseId.II, CaseId.III, CaseId.IV,
         CaseId.V, CaseId.VI, CaseId.VII, CaseId.VIII)

# lit port (sum or difference) of each detector pair
CASE_PORTS = {
    CaseId.I: (SUM, SUM, SUM),
    CaseId.II: (DIFF, DIFF, DIFF),
    CaseId.III: (SUM, SUM, DIFF),
    CaseId.IV: (SUM, DIFF, SUM),
    CaseId.V: (SUM, DIFF, DIFF),
    CaseId.VI: (DIFF, SUM, SUM),
    CaseId.VII: (DIFF, SUM, DIFF),
    CaseId.VIII: (DIFF, DIFF, SUM),
}
PORTS_CASE = {v: k for k, v in CASE_PORTS.items()}

# printed-table row order of parity triples (1 = odd)
PARITY_ROWS = ((1, 1, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1),
               (0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0))


def default_cutoff(alpha: float) -> int:
    return math.ceil(2 * alpha ** 2 + 8 * alpha + 10)


@dataclass(frozen=True)
class ProtocolParams:
    alpha: float
    thetas: tuple[float, float, float] = (math.pi / 4,) * 3
    cutoff: int | None = None
    tail: float = 1e-9

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be a positive finite real, got {self.alpha}")
        thetas = tuple(float(t) for t in self.thetas)
        if len(thetas) != 3 or not all(map(math.isfinite, thetas)):
            raise ValueError("need three finite theta values")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "thetas", thetas)
        if self.cutoff is not None and self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        if not self.tail > 0:
            raise ValueError("tail budget must be positive")

    @property
    def photon_cutoff(self) -> int:
        return self.cutoff if self.cutoff is not None else default_cutoff(self.alpha)

    @property
    def coefficients(self) -> tuple[tuple[float, float], ...]:
        return tuple((math.cos(t), math.sin(t)) for t in self.thetas)

    @property
    def recovery_shift(self) -> complex:
        return 1j * math.pi / (2 * self.alpha)


@dataclass(frozen=True)
class DetectionEvent:
    counts: tuple[int, int, int, int, int, int]

    def __post_init__(self):
        counts = tuple(int(n) for n in self.counts)
        if len(counts) != 6 or any(n < 0 for n in counts):
            raise ValueError(f"need six non-negative counts, got {self.counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        n = self.counts
        return (n[0], n[1]), (n[2], n[3]), (n[4], n[5])

    def as_mapping(self) -> dict[int, int]:
        return dict(zip(DETECTOR_MODES, self.counts))


def pair_port(n_sum: int, n_diff: int) -> int | None:
    """SUM / DIFF for a single lit port, SILENT for (0, 0), None if both lit."""
    if n_sum and n_diff:
        return None
    if n_sum:
        return SUM
    if n_diff:
        return DIFF
    return SILENT


def classify_event(event: DetectionEvent) -> tuple[CaseId, tuple[int, int, int] | None]:
    ports = [pair_port(*p) for p in event.pairs]
    if any(p is None for p in ports):
        return CaseId.IMPOSSIBLE, None
    if SILENT in ports:
        return CaseId.AMBIGUOUS, None
    parities = tuple((ns + nd) % 2 for ns, nd in event.pairs)
    return PORTS_CASE[tuple(ports)], parities


@dataclass(frozen=True)
class CorrectionPlan:
    """Per receiving mode (4, 5, 6), operations in application order.

    ``"P"`` is a pi phase shift and ``"D"`` the displacement by i*pi/(2 alpha).
    """

    case: CaseId
    parities: tuple[int, int, int]
    ops: tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]
    faithful: bool

    def label(self, k: int) -> str:
        ops = self.ops[k]
        # written as an operator product, last-applied first
        return "I" if not ops else "".join(reversed(ops))


def port_ops(port: int, parity: int) -> tuple[str, ...]:
    ops = []
    if port == DIFF:
        ops.append("P")
    if parity:
        ops.append("D")
    return tuple(ops)


def plan_correction(case: CaseId, parities: Sequence[int]) -> CorrectionPlan:
    if case not in CASE_PORTS:
        raise ValueError(f"no correction for {case}")
    parities = tuple(int(p) % 2 for p in parities)
    ops = tuple(port_ops(port, par) for port, par in zip(CASE_PORTS[case], parities))
    return CorrectionPlan(case, parities, ops, faithful=not any(parities))


# ---------------------------------------------------------------- preparation

def prepare_bell_pair(alpha: float, i, j) -> SuperposedState:
    """Bell coherent pair on (i, j), built as BPS(even cat at alpha*sqrt2 (x) vacuum)."""
    cat = SuperposedState.cat("u", alpha * math.sqrt(2), 1.0, 1.0)
    vac = SuperposedState.coherent("v", 0.0)
    return normalize(apply_bps(tensor(cat, vac), "u", "v", i, j))


def prepare_channel(alpha: float) -> SuperposedState:
    pairs = [prepare_bell_pair(alpha, leg.channel, leg.receiver) for leg in LEGS]
    return normalize(tensor(*pairs).reorder((1, 2, 3, 4, 5, 6)))


def info_state(mode, theta: float, alpha: float) -> SuperposedState:
    return normalize(SuperposedState.cat(mode, alpha, math.cos(theta), math.sin(theta)))


def prepare_info_states(thetas: Sequence[float], alpha: float) -> tuple[SuperposedState, ...]:
    return tuple(info_state(leg.info, th, alpha) for leg, th in zip(LEGS, thetas))


def mix_network(state: SuperposedState) -> SuperposedState:
    for leg in LEGS:
        state = apply_bps(state, leg.info, leg.channel, leg.sum_port, leg.diff_port)
    return state.reorder(DETECTOR_MODES + RECEIVER_MODES)


def global_state(params: ProtocolParams) -> SuperposedState:
    return tensor(*prepare_info_states(params.thetas, params.alpha), prepare_channel(params.alpha))


@functools.lru_cache(maxsize=32)
def post_mix_state(params: ProtocolParams) -> SuperposedState:
    return mix_network(global_state(params))


# ---------------------------------------------------------------- heralding

def project_counts(state: SuperposedState, counts: Mapping) -> SuperposedState:
    for mode, n in counts.items():
        state = project_fock(state, mode, n)
    return prune(state)


def herald(state: SuperposedState, event: DetectionEvent) -> tuple[float, SuperposedState]:
    """Unnormalized heralded state on the receiving modes and its probability."""
    raw = project_counts(state, event.as_mapping())
    return norm_squared(raw) if raw.n_terms else 0.0, raw


def apply_ops(state: SuperposedState, mode, ops: Sequence[str], alpha: float) -> SuperposedState:
    for op in ops:
        if op == "P":
            state = phase_shift(state, mode, math.pi)
        elif op == "D":
            state = displace(state, mode, 1j * math.pi / (2 * alpha))
        else:
            raise ValueError(f"unknown operation {op!r}")
    return state


def mode_fidelity(state: SuperposedState, mode, target: SuperposedState) -> float:
    """<target|rho_mode|target> / Tr(rho_mode) for the reduced state on ``mode``."""
    if state.n_terms == 0:
        return 0.0
    a = reduced_weight_matrix(state, [mode])
    sel, _ = split_modes(state, [mode])
    s = overlap_matrix(sel, sel)
    v = np.conj(target.weights) @ overlap_matrix(target.amplitudes, sel)
    f = (v @ a @ np.conj(v)) / np.trace(a @ s) / np.vdot(target.weights, overlap_matrix(
        target.amplitudes, target.amplitudes) @ target.weights)
    return float(min(max(f.real, 0.0), 1.0))


@dataclass
class HeraldedOutcome:
    event: DetectionEvent
    case: CaseId
    parities: tuple[int, int, int] | None
    probability: float
    raw_state: SuperposedState
    plan: CorrectionPlan | None = None
    corrected: tuple[SuperposedState, ...] | None = None
    fidelities: tuple[float, float, float] | None = None


def leg_ops(event: DetectionEvent, k: int) -> tuple[str, ...]:
    """Correction for receiving mode ``k`` from its own detector pair only."""
    port = pair_port(*event.pairs[k])
    if port in (SUM, DIFF):
        return port_ops(port, sum(event.pairs[k]) % 2)
    return ()


def apply_correction(outcome: HeraldedOutcome, params: ProtocolParams,
                     plan: CorrectionPlan | None = None) -> HeraldedOutcome:
    """Correct each receiving mode and score it against the sender's input.

    Without a plan (silent pair) a mode is left as heralded.
    """
    if outcome.probability <= 0 or outcome.raw_state.n_terms == 0:
        outcome.fidelities = (0.0, 0.0, 0.0)
        return outcome
    plan = plan if plan is not None else outcome.plan
    targets = prepare_info_states(params.thetas, params.alpha)
    state = outcome.raw_state
    fids, factors = [], []
    for k, leg in enumerate(LEGS):
        ops = plan.ops[k] if plan is not None else leg_ops(outcome.event, k)
        state = apply_ops(state, leg.receiver, ops, params.alpha)
    for k, leg in enumerate(LEGS):
        target = targets[k].replace(modes=(leg.receiver,))
        fids.append(mode_fidelity(state, leg.receiver, target))
        factors.append(factor(state, leg.receiver))
    outcome.plan = plan
    outcome.corrected = tuple(factors)
    outcome.fidelities = tuple(fids)
    return outcome


def resolve(params: ProtocolParams, event: DetectionEvent) -> HeraldedOutcome:
    """Full single-event pipeline on the nine-mode state."""
    case, parities = classify_event(event)
    prob, raw = herald(post_mix_state(params), event)
    out = HeraldedOutcome(event, case, parities, prob, raw)
    plan = plan_correction(case, parities) if case.is_heralded else None
    return apply_correction(out, params, plan)


# ---------------------------------------------------------------- enumeration

class TailBudgetError(RuntimeError):
    pass


def pair_events(cutoff: int) -> list[tuple[int, int]]:
    """Possible (sum, diff) readings of one detector pair, lexicographic."""
    return [(0, n) for n in range(cutoff + 1)] + [(n, 0) for n in range(1, cutoff + 1)]


@dataclass
class PairTable:
    """Per-leg heralding data; joint outcomes are products of three of these."""

    leg: Leg
    counts: np.ndarray       # (K, 2)
    port: np.ndarray         # (K,) SUM / DIFF / SILENT
    parity: np.ndarray       # (K,) 0/1, -1 when silent
    probability: np.ndarray  # (K,)
    fidelity: np.ndarray     # (K,)


def pair_subsystem(params: ProtocolParams, k: int) -> SuperposedState:
    leg = LEGS[k]
    info = info_state(leg.info, params.thetas[k], params.alpha)
    bell = prepare_bell_pair(params.alpha, leg.channel, leg.receiver)
    return apply_bps(tensor(info, bell), leg.info, leg.channel, leg.sum_port, leg.diff_port)


def pair_table(params: ProtocolParams, k: int) -> PairTable:
    leg = LEGS[k]
    mixed = pair_subsystem(params, k)
    target = info_state(leg.receiver, params.thetas[k], params.alpha)
    evs = pair_events(params.photon_cutoff)
    port = np.empty(len(evs), np.int8)
    parity = np.empty(len(evs), np.int8)
    prob = np.empty(len(evs))
    fid = np.empty(len(evs))
    for r, (ns, nd) in enumerate(evs):
        raw = project_counts(mixed, {leg.sum_port: ns, leg.diff_port: nd})
        port[r] = pair_port(ns, nd)
        parity[r] = -1 if port[r] == SILENT else (ns + nd) % 2
        prob[r] = norm_squared(raw)
        ops = port_ops(port[r], parity[r]) if port[r] != SILENT else ()
        fid[r] = mode_fidelity(apply_ops(raw, leg.receiver, ops, params.alpha), leg.receiver, target)
    return PairTable(leg, np.array(evs, np.int16), port, parity, prob, fid)


_CASE_CODE = np.full((3, 3, 3), 8, np.int8)
for _case, _ports in CASE_PORTS.items():
    _CASE_CODE[_ports] = CASES.index(_case)
CASE_OF_CODE = CASES + (CaseId.AMBIGUOUS,)

CSV_COLUMNS = ("n7", "n8", "n9", "n10", "n11", "n12", "case", "parities",
               "probability", "F_A->B", "F_B->C", "F_C->A", "faithful")


@dataclass
class OutcomeTable:
    """All non-impossible detection events up to the per-detector cutoff.

    Events with both detectors of a pair lit are left out: every coherent
    term leaves one port of each pair in vacuum, so their mass is exactly 0.
    Rows are ordered lexicographically on (n7, ..., n12).
    """

    params: ProtocolParams
    pairs: tuple[PairTable, PairTable, PairTable]
    _joint: dict = field(default_factory=dict, repr=False)

    def _grid(self, name: str) -> list[np.ndarray]:
        return [getattr(p, name) for p in self.pairs]

    @staticmethod
    def _outer(a, b, c, op=np.multiply):
        return op(op(a[:, None, None], b[None, :, None]), c[None, None, :]).reshape(-1)

    def _cached(self, key, fn):
        if key not in self._joint:
            self._joint[key] = fn()
        return self._joint[key]

    def __len__(self) -> int:
        return int(np.prod([len(p.probability) for p in self.pairs]))

    @property
    def index(self) -> np.ndarray:
        """(E, 3) row index into each pair table."""
        def build():
            sizes = [len(p.probability) for p in self.pairs]
            return np.stack([g.reshape(-1) for g in np.meshgrid(*map(np.arange, sizes), indexing="ij")], axis=1)
        return self._cached("index", build)

    @property
    def counts(self) -> np.ndarray:
        return self._cached("counts", lambda: np.concatenate(
            [p.counts[self.index[:, k]] for k, p in enumerate(self.pairs)], axis=1))

    @property
    def probability(self) -> np.ndarray:
        return self._cached("probability", lambda: self._outer(*self._grid("probability")))

    @property
    def case_code(self) -> np.ndarray:
        return self._cached("case", lambda: _CASE_CODE[
            tuple(p.port[self.index[:, k]] for k, p in enumerate(self.pairs))])

    @property
    def parities(self) -> np.ndarray:
        return self._cached("parities", lambda: np.stack(
            [p.parity[self.index[:, k]] for k, p in enumerate(self.pairs)], axis=1))

    @property
    def fidelity(self) -> np.ndarray:
        return self._cached("fidelity", lambda: np.stack(
            [p.fidelity[self.index[:, k]] for k, p in enumerate(self.pairs)], axis=1))

    @property
    def faithful(self) -> np.ndarray:
        return (self.case_code < 8) & np.all(self.parities == 0, axis=1)

    @property
    def total_mass(self) -> float:
        return float(np.prod([p.probability.sum() for p in self.pairs]))

    @property
    def ambiguous_mass(self) -> float:
        return self.total_mass - sum(self.case_mass(c) for c in CASES)

    def case_mass(self, case: CaseId) -> float:
        """Class probability from the pair marginals (no joint arrays needed)."""
        if case is CaseId.AMBIGUOUS:
            return self.ambiguous_mass
        ports = CASE_PORTS[case]
        return float(np.prod([p.probability[(p.port == port)].sum() for p, port in zip(self.pairs, ports)]))

    def branch_mass(self, case: CaseId, parities: Sequence[int]) -> float:
        ports = CASE_PORTS[case]
        return float(np.prod([p.probability[(p.port == port) & (p.parity == par)].sum()
                              for p, port, par in zip(self.pairs, ports, parities)]))

    def branch_fidelity(self, case: CaseId, parities: Sequence[int]) -> tuple[float, ...]:
        """Per-leg fidelity of a (case, parity) branch; constant within the branch."""
        out = []
        for p, port, par in zip(self.pairs, CASE_PORTS[case], parities):
            sel = (p.port == port) & (p.parity == par)
            out.append(float(p.fidelity[sel][0]) if sel.any() else math.nan)
        return tuple(out)

    def event(self, i: int) -> DetectionEvent:
        return DetectionEvent(tuple(int(n) for n in self.counts[i]))

    def events(self) -> Iterator[DetectionEvent]:
        for row in self.counts:
            yield DetectionEvent(tuple(int(n) for n in row))

    def rows(self) -> Iterator[list]:
        counts, case, par = self.counts, self.case_code, self.parities
        prob, fid, faithful = self.probability, self.fidelity, self.faithful
        for i in range(len(prob)):
            code = int(case[i])
            ptxt = "".join("EO"[p] for p in par[i]) if code < 8 else ""
            yield [*map(int, counts[i]), CASE_OF_CODE[code].value, ptxt,
                   repr(float(prob[i])), *(repr(float(f)) for f in fid[i]), int(faithful[i])]

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow(row)
        w.writerow(["", "", "", "", "", "", "TOTAL", "", repr(self.total_mass), "", "", "", ""])
        w.writerow(["", "", "", "", "", "", "AMBIGUOUS_TOTAL", "", repr(self.ambiguous_mass), "", "", "", ""])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "params": params_json(self.params),
            "columns": list(CSV_COLUMNS),
            "outcomes": list(self.rows()),
            "totals": {"mass": self.total_mass, "ambiguous": self.ambiguous_mass,
                       "cases": {c.value: self.case_mass(c) for c in CASES}},
        }


def params_json(params: ProtocolParams) -> dict:
    return {"alpha": params.alpha, "thetas": list(params.thetas),
            "cutoff": params.photon_cutoff, "tail": params.tail}


@functools.lru_cache(maxsize=8)
def enumerate_outcomes(params: ProtocolParams) -> OutcomeTable:
    table = OutcomeTable(params, tuple(pair_table(params, k) for k in range(3)))
    missing = 1.0 - table.total_mass
    if missing > params.tail:
        raise TailBudgetError(
            f"cutoff {params.photon_cutoff} leaves {missing:.3e} probability unaccounted "
            f"(budget {params.tail:g}); raise the cutoff")
    return table


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True)
