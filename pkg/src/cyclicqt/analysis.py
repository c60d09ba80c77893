"""Branch fidelities, their printed closed forms, equality chains, average
fidelities and parameter sweeps built on the pair-factorized enumeration."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .protocol import (
    CASES,
    LEG_NAMES,
    PARITY_ROWS,
    CaseId,
    OutcomeTable,
    ProtocolParams,
    enumerate_outcomes,
    params_json,
)

CONVENTIONS = ("inverse_square", "verbatim")


# ------------------------------------------------------------ closed forms

def _printed_pieces(coefficients, alpha: float):
    c0, c1 = coefficients
    e2 = math.exp(-2 * alpha**2)
    na_poly = c0**2 + c1**2 + 2 * math.exp(-4 * alpha**2) * c0 * c1
    n1_poly = c0**2 + c1**2 - 2 * e2 * c0 * c1
    s = c0 + c1 + 2 * e2 * c0 * c1
    return na_poly, n1_poly, s


def closed_form_fidelity(coefficients, alpha: float, convention: str = "inverse_square") -> float:
    """Printed odd-branch fidelity (N1 N)^2 exp(-pi^2/8a^2) (x0 + x1 + 2e^{-2a^2} x0 x1)^2.

    ``inverse_square`` reads each printed normalization polynomial as N^-2,
    so N = poly^-1/2 and N1 = n1_poly^-1/2 (the extra outer square on the
    N1 polynomial is dropped). ``verbatim`` takes N = poly and
    N1^-2 = n1_poly^2 literally, which gives N1 = 1/n1_poly.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    na_poly, n1_poly, s = _printed_pieces(coefficients, alpha)
    env = math.exp(-math.pi**2 / (8 * alpha**2))
    if convention == "inverse_square":
        return env * s**2 / (na_poly * n1_poly)
    if convention == "verbatim":
        return (na_poly / n1_poly) ** 2 * env * s**2
    raise ValueError(f"unknown convention {convention!r}")


def exact_odd_fidelity(coefficients, alpha: float) -> float:
    """Fidelity of the displaced odd-parity state with the input cat.

    Independent of the enumeration: direct overlap of x0|a> - x1|-a>,
    displaced by i pi/(2a), with x0|a> + x1|-a> (both normalized).
    """
    c0, c1 = coefficients
    e2 = math.exp(-2 * alpha**2)
    num = math.exp(-math.pi**2 / (4 * alpha**2)) * (c0**2 - c1**2) ** 2
    return num / ((1 + 2 * c0 * c1 * e2) * (1 - 2 * c0 * c1 * e2))


# ------------------------------------------------------------ branch report

@dataclass(frozen=True)
class BranchFidelity:
    case: CaseId
    row: int             # 1..8 in the printed parity order
    parities: tuple[int, int, int]
    leg: str
    probability: float   # branch mass (joint over the three pairs)
    direct: float
    closed_form: float
    deviation: float

    @property
    def parity_label(self) -> str:
        return "".join("O" if p else "E" for p in self.parities)


@dataclass
class FidelityReport:
    params: ProtocolParams
    convention: str
    entries: list[BranchFidelity]
    ambiguous_mass: float
    total_mass: float

    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {(e.case, e.row, e.leg): e for e in self.entries}

    def get(self, case: CaseId, row: int, leg: str) -> BranchFidelity:
        return self._index[(case, row, leg)]

    @property
    def heralded_mass(self) -> float:
        # each branch appears once per leg
        return sum(e.probability for e in self.entries if e.leg == LEG_NAMES[0])

    @property
    def max_deviation(self) -> float:
        return max(abs(e.deviation) for e in self.entries)

    def worst(self) -> BranchFidelity:
        return max(self.entries, key=lambda e: abs(e.deviation))


def fidelity_report(params: ProtocolParams, convention: str = "inverse_square",
                    table: OutcomeTable | None = None) -> FidelityReport:
    """Per (case, parity row, leg): mass, direct fidelity and printed closed form.

    Even-parity legs are compared with 1, the claimed exact replica.
    """
    table = table if table is not None else enumerate_outcomes(params)
    coeffs = params.coefficients
    odd_cf = [closed_form_fidelity(coeffs[k], params.alpha, convention) for k in range(3)]
    entries = []
    for case in CASES:
        for row, par in enumerate(PARITY_ROWS, start=1):
            mass = table.branch_mass(case, par)
            fids = table.branch_fidelity(case, par)
            for k, leg in enumerate(LEG_NAMES):
                cf = odd_cf[k] if par[k] else 1.0
                entries.append(BranchFidelity(case, row, par, leg, mass, fids[k], cf, fids[k] - cf))
    return FidelityReport(params, convention, entries, table.ambiguous_mass, table.total_mass)


# ------------------------------------------------------------ equality chains

_ALL_BUT_I = ("II", "III", "IV", "V", "VI", "VII", "VIII")


@dataclass(frozen=True)
class Chain:
    name: str
    leg: str
    members: tuple[tuple[str, int], ...]  # (case, row) exactly as printed

    def distinct(self) -> tuple[tuple[CaseId, int], ...]:
        seen = dict.fromkeys((CaseId(c), r) for c, r in self.members)
        return tuple(seen)


def _within_i(leg: str, rows: Sequence[int]) -> Chain:
    return Chain(f"I {leg} {{{','.join(map(str, rows))}}}", leg, tuple(("I", r) for r in rows))


def _cross(leg: str, groups: Sequence[tuple[int, Sequence[str]]]) -> Chain:
    rows = ",".join(str(r) for r, _ in groups)
    members = tuple((c, r) for r, cases in groups for c in cases)
    return Chain(f"II-VIII {leg} {{{rows}}}", leg, members)


# Transcribed as printed, including repeated or missing terms.
PRINTED_CHAINS = (
    _within_i("A->B", (1, 2, 3, 8)),
    _within_i("A->B", (4, 5, 6, 7)),
    _within_i("B->C", (1, 2, 4, 6, 7)),
    _within_i("B->C", (3, 5, 8)),
    _within_i("C->A", (1, 3, 4, 6)),
    _within_i("C->A", (2, 5, 7, 8)),
    _cross("A->B", ((1, _ALL_BUT_I), (2, ("II", "III", "VI", "V", "VI", "VII", "VIII")),
                    (3, _ALL_BUT_I), (8, _ALL_BUT_I))),
    _cross("A->B", ((4, _ALL_BUT_I), (5, _ALL_BUT_I), (6, _ALL_BUT_I), (7, _ALL_BUT_I))),
    _cross("B->C", ((1, _ALL_BUT_I), (2, _ALL_BUT_I), (4, _ALL_BUT_I), (6, _ALL_BUT_I),
                    (7, _ALL_BUT_I))),
    _cross("B->C", ((3, _ALL_BUT_I), (3, _ALL_BUT_I), (5, _ALL_BUT_I), (8, _ALL_BUT_I))),
    _cross("C->A", ((1, _ALL_BUT_I), (3, _ALL_BUT_I), (4, _ALL_BUT_I), (6, _ALL_BUT_I))),
    _cross("C->A", ((2, _ALL_BUT_I), (5, _ALL_BUT_I), (7, _ALL_BUT_I), (8, _ALL_BUT_I))),
)


@dataclass
class ChainVerdict:
    chain: Chain
    passed: bool
    spread: float
    reference: float
    offenders: list[tuple[str, int, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"name": self.chain.name, "pass": self.passed, "spread": self.spread,
                "offenders": [{"case": c, "row": r, "fidelity": f} for c, r, f in self.offenders]}


def fidelity_grouping_check(report: FidelityReport, chains=PRINTED_CHAINS,
                            atol: float = 1e-10) -> list[ChainVerdict]:
    """Check each printed equality chain on the direct fidelities.

    Offenders are the members farther than ``atol`` from the chain's
    majority value.
    """
    out = []
    for chain in chains:
        vals = [(c, r, report.get(c, r, chain.leg).direct) for c, r in chain.distinct()]
        f = np.array([v for _, _, v in vals])
        # majority value: the member with the most neighbours within atol
        close = np.abs(f[:, None] - f[None, :]) <= atol
        ref = float(f[int(np.argmax(close.sum(axis=1)))])
        bad = [(c.value, r, v) for c, r, v in vals if abs(v - ref) > atol]
        out.append(ChainVerdict(chain, not bad, float(f.max() - f.min()), ref, bad))
    return out


# ------------------------------------------------------------ averages

def branch_average(table: OutcomeTable, k: int, conditioning: str = "heralded",
                   parity: int | None = None) -> float:
    """Probability-weighted fidelity of leg ``k`` over the eight cases.

    ``conditioning="heralded"`` divides by the mass of cases I-VIII (the
    ambiguous events are excluded); ``"total"`` divides by the whole
    enumerated mass. ``parity`` restricts to branches where leg ``k`` has
    that parity.
    """
    num = den = 0.0
    for case in CASES:
        for par in PARITY_ROWS:
            if parity is not None and par[k] != parity:
                continue
            w = table.branch_mass(case, par)
            num += w * table.branch_fidelity(case, par)[k]
            den += w
    if conditioning == "total":
        den = table.total_mass
    elif conditioning != "heralded":
        raise ValueError(f"unknown conditioning {conditioning!r}")
    return num / den


def average_fidelity(leg: str | int, params: ProtocolParams,
                     conditioning: str = "heralded") -> float:
    k = LEG_NAMES.index(leg) if isinstance(leg, str) else int(leg)
    return branch_average(enumerate_outcomes(params), k, conditioning)


# ------------------------------------------------------------ sweeps

SWEEP_COLUMNS = ("alpha", "theta1", "theta2", "theta3", "leg", "case", "parity_class",
                 "probability", "fidelity", "closed_form", "deviation")


@dataclass(frozen=True)
class SweepSpec:
    alphas: tuple[float, ...]
    theta1: tuple[float, ...]
    theta2: tuple[float, ...] = (math.pi / 4,)
    theta3: tuple[float, ...] = (math.pi / 4,)
    branches: bool = True
    class_probabilities: bool = True
    average: bool = True
    convention: str = "inverse_square"
    tail: float = 1e-9

    def __post_init__(self):
        for name in ("alphas", "theta1", "theta2", "theta3"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} grid is empty")
            object.__setattr__(self, name, vals)
        if any(a <= 0 for a in self.alphas):
            raise ValueError("alpha grid entries must be positive")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")

    def points(self):
        for a, t1, t2, t3 in itertools.product(self.alphas, self.theta1, self.theta2, self.theta3):
            yield ProtocolParams(alpha=a, thetas=(t1, t2, t3), tail=self.tail)

    def to_json(self) -> dict:
        return {"alphas": list(self.alphas), "theta1": list(self.theta1),
                "theta2": list(self.theta2), "theta3": list(self.theta3),
                "branches": self.branches, "class_probabilities": self.class_probabilities,
                "average": self.average, "convention": self.convention, "tail": self.tail}


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[list]
    summary: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, csv_path, json_path=None) -> None:
        from .protocol import dumps_json
        try:
            with open(csv_path, "w", newline="") as fh:
                fh.write(self.to_csv())
            if json_path is not None:
                with open(json_path, "w") as fh:
                    fh.write(dumps_json(self.summary) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write sweep output to {exc.filename}: {exc.strerror}") from exc


def _num(x: float) -> str:
    return repr(float(x))


def sweep_point_rows(params: ProtocolParams, spec: SweepSpec) -> tuple[list[list], FidelityReport]:
    table = enumerate_outcomes(params)
    report = fidelity_report(params, spec.convention, table)
    head = [_num(params.alpha), *(_num(t) for t in params.thetas)]
    rows = []
    for k, leg in enumerate(LEG_NAMES):
        if spec.branches:
            for e in report.entries:
                if e.leg == leg:
                    rows.append(head + [leg, e.case.value, e.parity_label, _num(e.probability),
                                        _num(e.direct), _num(e.closed_form), _num(e.deviation)])
        if spec.class_probabilities:
            for case in CASES:
                rows.append(head + [leg, case.value, "", _num(table.case_mass(case)), "", "", ""])
            rows.append(head + [leg, CaseId.AMBIGUOUS.value, "", _num(table.ambiguous_mass),
                                "", "", ""])
        if spec.average:
            rows.append(head + [leg, "ALL", "", _num(report.heralded_mass),
                                _num(branch_average(table, k)), "", ""])
    return rows, report


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Deterministic dataset over the cartesian product of the grids."""
    rows, totals, chains = [], [], []
    worst = 0.0
    for params in spec.points():
        point_rows, report = sweep_point_rows(params, spec)
        rows += point_rows
        totals.append({**params_json(params), "mass": report.total_mass,
                       "ambiguous": report.ambiguous_mass, "heralded": report.heralded_mass,
                       "max_closed_form_deviation": report.max_deviation})
        worst = max(worst, report.max_deviation)
        tag = f"alpha={params.alpha!r} thetas={list(params.thetas)!r}"
        for v in fidelity_grouping_check(report):
            chains.append({"name": f"{tag} {v.chain.name}", "pass": v.passed})
    notes = [
        "average fidelity is conditioned on cases I-VIII (ambiguous mass excluded)",
        f"closed forms evaluated with the {spec.convention} normalization reading; "
        "even-parity legs are compared with 1",
        f"largest |direct - closed form| over the sweep: {worst!r}",
    ]
    summary = {"params": spec.to_json(), "totals": totals, "chains": chains, "notes": notes}
    return SweepResult(spec, rows, summary)


# ------------------------------------------------------------ probes

@dataclass
class FlatnessProbe:
    alphas: tuple[float, ...]
    theta1: tuple[float, ...]
    values: np.ndarray        # (n_alpha, n_theta) average A->B fidelity
    spread_per_alpha: np.ndarray
    spread: float

    def to_json(self) -> dict:
        return {"alphas": list(self.alphas), "theta1": list(self.theta1),
                "values": self.values.tolist(), "spread_per_alpha": self.spread_per_alpha.tolist(),
                "spread": self.spread}


def flatness_probe(alphas=(0.5, 1.0, 1.5, 2.0, 2.5), theta1=None,
                   rest=(math.pi / 4, math.pi / 4)) -> FlatnessProbe:
    """Average A->B fidelity on an (alpha, theta1) grid and its theta1 spread."""
    theta1 = tuple(np.linspace(0.0, math.pi, 5)) if theta1 is None else tuple(theta1)
    vals = np.array([[average_fidelity(0, ProtocolParams(alpha=a, thetas=(t, *rest)))
                      for t in theta1] for a in alphas])
    per_alpha = vals.max(axis=1) - vals.min(axis=1)
    return FlatnessProbe(tuple(alphas), theta1, vals, per_alpha, float(per_alpha.max()))


def odd_fidelity_trend(alphas=(0.5, 1.0, 1.5, 2.0, 2.5, 3.0), theta: float = math.pi / 4):
    """Odd-branch direct fidelity of leg A->B versus alpha; (values, non-decreasing)."""
    vals = []
    for a in alphas:
        table = enumerate_outcomes(ProtocolParams(alpha=a, thetas=(theta,) * 3))
        vals.append(table.branch_fidelity(CaseId.I, (1, 1, 1))[0])
    vals = np.array(vals)
    return vals, bool(np.all(np.diff(vals) >= -1e-12))


def default_sweep_spec() -> SweepSpec:
    return SweepSpec(alphas=(0.5, 1.0, 1.5, 2.0, 2.5),
                     theta1=tuple(np.linspace(0.0, math.pi, 5)))

