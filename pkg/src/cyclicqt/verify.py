"""Cross-check of the coherent-state algebra against the truncated Fock oracle."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .fock import oracle_dim, oracle_pair_table, oracle_run
from .protocol import (
    LEG_NAMES,
    DetectionEvent,
    ProtocolParams,
    enumerate_outcomes,
    resolve,
)

MAX_ALPHA = 2.5
TOLERANCE = 1e-6
DEFAULT_ALPHAS = (0.3, 0.7, 1.0, 1.5, 2.0)


@dataclass
class PointCheck:
    alpha: float
    thetas: tuple[float, float, float]
    dim: int
    events: int
    prob_deviation: float
    prob_location: tuple[int, ...]
    fid_deviation: float
    fid_location: tuple[str, tuple[int, int]]
    sampled: int = 0
    sample_deviation: float = 0.0
    sample_location: tuple[int, ...] | None = None

    @property
    def max_deviation(self) -> float:
        return max(self.prob_deviation, self.fid_deviation, self.sample_deviation)

    def passed(self, tol: float = TOLERANCE) -> bool:
        return self.max_deviation <= tol

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "thetas": list(self.thetas), "dim": self.dim,
                "events": self.events, "prob_deviation": self.prob_deviation,
                "prob_location": list(self.prob_location),
                "fid_deviation": self.fid_deviation,
                "fid_location": {"leg": self.fid_location[0], "counts": list(self.fid_location[1])},
                "sampled": self.sampled, "sample_deviation": self.sample_deviation,
                "sample_location": None if self.sample_location is None else list(self.sample_location)}


def _outer3(a, b, c):
    return a[:, None, None] * b[None, :, None] * c[None, None, :]


def check_point(params: ProtocolParams, samples: int = 0, seed: int = 0,
                perturb: float = 0.0) -> PointCheck:
    """Compare every enumerated event, plus ``samples`` full nine-mode events.

    ``perturb`` scales the oracle's coherent amplitude by (1 + perturb) at a
    fixed photon cutoff; it exists to show the check can fail.
    """
    if params.alpha > MAX_ALPHA:
        raise ValueError(f"oracle cross-check limited to alpha <= {MAX_ALPHA}")
    oparams = params
    if perturb:
        oparams = dataclasses.replace(params, alpha=params.alpha * (1 + perturb),
                                      cutoff=params.photon_cutoff)
    table = enumerate_outcomes(params)
    oracle = [oracle_pair_table(oparams, k) for k in range(3)]
    # joint probabilities are products of pair marginals on both sides
    diff = np.abs(_outer3(*(p.probability for p in table.pairs))
                  - _outer3(*(o.probability for o in oracle)))
    i, j, k = np.unravel_index(int(np.argmax(diff)), diff.shape)
    prob_loc = tuple(int(n) for n in np.concatenate(
        [table.pairs[0].counts[i], table.pairs[1].counts[j], table.pairs[2].counts[k]]))
    fid_dev, fid_loc = -1.0, None
    for leg, (p, o) in enumerate(zip(table.pairs, oracle)):
        d = np.abs(p.fidelity - o.fidelity)
        r = int(np.argmax(d))
        if d[r] > fid_dev:
            fid_dev, fid_loc = float(d[r]), (LEG_NAMES[leg], tuple(int(n) for n in p.counts[r]))
    out = PointCheck(params.alpha, params.thetas, oracle_dim(oparams.alpha), len(table),
                     float(diff.max()), prob_loc, fid_dev, fid_loc)
    if samples:
        rng = np.random.default_rng(seed)
        cdf = np.cumsum(table.probability)
        picks = np.searchsorted(cdf, rng.random(samples) * cdf[-1], side="right")
        worst = -1.0
        for idx in np.minimum(picks, cdf.size - 1):
            ev = table.event(int(idx))
            alg = resolve(params, ev)
            orc = oracle_run(oparams, ev)
            dev = max(abs(alg.probability - orc.probability),
                      *(abs(a - b) for a, b in zip(alg.fidelities, orc.fidelities)))
            if dev > worst:
                worst, out.sample_location = dev, ev.counts
        out.sampled, out.sample_deviation = samples, worst
    return out


def default_thetas(seed: int, n: int = 5) -> list[tuple[float, float, float]]:
    rng = np.random.default_rng(seed)
    return [tuple(float(t) for t in row) for row in rng.uniform(0.0, math.pi, (n, 3))]


def run_checks(alphas=DEFAULT_ALPHAS, thetas=None, seed: int = 42, samples: int = 0,
               perturb: float = 0.0, tail: float = 1e-9) -> list[PointCheck]:
    thetas = default_thetas(seed) if thetas is None else thetas
    return [check_point(ProtocolParams(alpha=a, thetas=t, tail=tail), samples, seed, perturb)
            for a in alphas for t in thetas]


def worst_check(checks: list[PointCheck]) -> PointCheck:
    return max(checks, key=lambda c: c.max_deviation)


def single_event_check(params: ProtocolParams, event: DetectionEvent) -> float:
    alg = resolve(params, event)
    orc = oracle_run(params, event)
    return max(abs(alg.probability - orc.probability),
               *(abs(a - b) for a, b in zip(alg.fidelities, orc.fidelities)))
