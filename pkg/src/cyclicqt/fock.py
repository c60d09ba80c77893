"""Truncated Fock-space oracle.

Everything here works on photon-number amplitudes and never calls the
coherent-state overlap formula, so it is an independent check of
:mod:`cyclicqt.coherent` and :mod:`cyclicqt.protocol`.

The nine-mode state is held as a sum of products: per term, one two-mode
vector for each (info, channel) block that meets a beam splitter and one
single-mode vector for each receiving mode.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.special import gammaln
from scipy.stats import poisson

from .protocol import (
    LEGS,
    SILENT,
    DetectionEvent,
    ProtocolParams,
    classify_event,
    leg_ops,
    pair_events,
    pair_port,
    plan_correction,
    port_ops,
)

TAIL_BUDGET = 1e-12


class TruncationError(ValueError):
    def __init__(self, msg: str, suggested_dim: int):
        super().__init__(f"{msg}; try d >= {suggested_dim}")
        self.suggested_dim = suggested_dim


def truncation_dim(beta_max: float) -> int:
    b = abs(beta_max)
    return math.ceil(b * b + 8 * b + 12)


def poisson_tail(beta: complex, d: int) -> float:
    """Probability mass of |beta> above photon number d-1."""
    return float(poisson.sf(d - 1, abs(beta) ** 2))


def coherent_to_fock(beta: complex, d: int, tail_budget: float = TAIL_BUDGET) -> np.ndarray:
    tail = poisson_tail(beta, d)
    if tail >= tail_budget:
        raise TruncationError(f"|{beta}> loses {tail:.2e} above n={d - 1}", truncation_dim(abs(beta)))
    n = np.arange(d)
    beta = complex(beta)
    if beta == 0:
        out = np.zeros(d, complex)
        out[0] = 1.0
        return out
    logmag = -0.5 * abs(beta) ** 2 + n * math.log(abs(beta)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(beta))


def number_ops(d: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)
    return a, a.conj().T


# Mode map of the beam splitter with built-in phase shifter, amplitude
# (b_u, b_v) -> (b_u + b_v, b_u - b_v)/sqrt2. It is Hermitian with
# eigenvalues +-1, so H = exp(-i h) with h = (pi/2)(1 - H).
_BPS = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
_BPS_GENERATOR = 0.5 * math.pi * (np.eye(2) - _BPS)


@functools.lru_cache(maxsize=8)
def bs_unitary(d: int) -> scipy.sparse.csr_array:
    """exp(-i sum_ij h_ij a_i^dag a_j) on two modes truncated at d photons each.

    Basis index is n_first * d + n_second. The generator conserves total
    photon number, so the matrix is exponentiated one number sector at a time.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    h = _BPS_GENERATOR
    rows, cols, vals = [], [], []
    for total in range(2 * d - 1):
        n1 = np.arange(max(0, total - d + 1), min(total, d - 1) + 1)
        n2 = total - n1
        k = len(n1)
        gen = np.zeros((k, k), complex)
        gen[np.arange(k), np.arange(k)] = h[0, 0] * n1 + h[1, 1] * n2
        # a1^dag a2 |n1, n2> = sqrt((n1+1) n2) |n1+1, n2-1>
        for r in range(k - 1):
            amp = math.sqrt((n1[r] + 1) * n2[r])
            gen[r + 1, r] += h[0, 1] * amp
            gen[r, r + 1] += h[1, 0] * amp
        block = scipy.linalg.expm(-1j * gen)
        idx = n1 * d + n2
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(block.ravel())
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    keep = np.abs(vals) > 0
    return scipy.sparse.csr_array((vals[keep], (rows[keep], cols[keep])), shape=(d * d, d * d))


def apply_bs(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Beam-split a product input; returns the (d, d) output amplitude grid."""
    d = len(first)
    return (bs_unitary(d) @ np.kron(first, second)).reshape(d, d)


def phase_matrix(theta: float, d: int) -> np.ndarray:
    return np.diag(np.exp(-1j * theta * np.arange(d)))


@functools.lru_cache(maxsize=32)
def displacement_matrix(delta: complex, d: int, pad: int = 60) -> np.ndarray:
    """Top-left d x d block of expm(delta a^dag - conj(delta) a) built at d + pad."""
    a, ad = number_ops(d + pad)
    big = scipy.linalg.expm(delta * ad - np.conj(delta) * a)
    return big[:d, :d]


def correction_matrix(ops: Sequence[str], alpha: float, d: int) -> np.ndarray:
    u = np.eye(d, dtype=complex)
    for op in ops:
        if op == "P":
            u = phase_matrix(math.pi, d) @ u
        elif op == "D":
            u = displacement_matrix(1j * math.pi / (2 * alpha), d) @ u
        else:
            raise ValueError(op)
    return u


def oracle_dim(alpha: float) -> int:
    """Cutoff covering the post-mix amplitude sqrt2*alpha, the 2*alpha worst case and
    the recovery displacement |alpha + i pi/(2 alpha)|."""
    shifted = math.hypot(alpha, math.pi / (2 * alpha))
    return truncation_dim(max(2 * alpha, shifted))


def info_vector(c0: float, c1: float, alpha: float, d: int) -> np.ndarray:
    v = c0 * coherent_to_fock(alpha, d) + c1 * coherent_to_fock(-alpha, d)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------- sum of products

@dataclass
class ProductTerm:
    weight: complex
    blocks: tuple[np.ndarray, ...]     # two-mode (d, d) grids, one per leg
    receivers: tuple[np.ndarray, ...]  # single-mode vectors for modes 4, 5, 6


@dataclass
class ProductFockState:
    """Sum over terms of weight * (x) blocks (x) receivers; modes partitioned the same way in every term."""

    groups: tuple
    terms: list[ProductTerm]

    @property
    def n_terms(self) -> int:
        return len(self.terms)


def _pair_terms(alpha: float, c0: float, c1: float, d: int):
    """(weight, info amplitude sign, channel sign) for one leg, normalized in Fock space."""
    plus, minus = coherent_to_fock(alpha, d), coherent_to_fock(-alpha, d)
    info = c0 * plus + c1 * minus
    n_info = np.linalg.norm(info)
    bell_sq = 2 * np.vdot(plus, plus).real ** 2 + 2 * (np.vdot(plus, minus).real ** 2)
    n_bell = math.sqrt(bell_sq)
    return [(c / (n_info * n_bell), s, r) for c, s in ((c0, 1), (c1, -1)) for r in (1, -1)]


def oracle_state(params: ProtocolParams, d: int) -> ProductFockState:
    """The 64-term global state after the three beam splitters."""
    alpha = params.alpha
    vec = {1: coherent_to_fock(alpha, d), -1: coherent_to_fock(-alpha, d)}
    per_leg = []
    for (c0, c1) in params.coefficients:
        items = []
        for w, s, r in _pair_terms(alpha, c0, c1, d):
            items.append((w, apply_bs(vec[s], vec[r]), vec[r]))
        per_leg.append(items)
    terms = []
    for ta in per_leg[0]:
        for tb in per_leg[1]:
            for tc in per_leg[2]:
                terms.append(ProductTerm(
                    ta[0] * tb[0] * tc[0],
                    (ta[1], tb[1], tc[1]),
                    (ta[2], tb[2], tc[2]),
                ))
    groups = tuple((leg.sum_port, leg.diff_port) for leg in LEGS) + tuple(leg.receiver for leg in LEGS)
    return ProductFockState(groups, terms)


@dataclass
class OracleResult:
    probability: float
    fidelities: tuple[float, float, float]
    residuals: list[tuple[complex, tuple[np.ndarray, ...]]]


def oracle_run(params: ProtocolParams, event: DetectionEvent, d: int | None = None) -> OracleResult:
    """Probability and corrected per-leg fidelities of one event, all in Fock space."""
    d = d or oracle_dim(params.alpha)
    state = oracle_state(params, d)
    counts = event.pairs
    for n in event.counts:
        if n >= d:
            raise TruncationError(f"count {n} beyond oracle dimension", n + 1)
    residuals = []
    for t in state.terms:
        c = t.weight
        for blk, (ns, nd) in zip(t.blocks, counts):
            c = c * blk[ns, nd]
        if c != 0:
            residuals.append((c, t.receivers))
    if not residuals:
        return OracleResult(0.0, (0.0, 0.0, 0.0), [])
    coef = np.array([c for c, _ in residuals])
    vecs = [np.array([r[k] for _, r in residuals]) for k in range(3)]  # (T, d) each
    grams = [v.conj() @ v.T for v in vecs]  # grams[k][s, t] = <v_s|v_t>
    prob = float((coef.conj() @ (grams[0] * grams[1] * grams[2]) @ coef).real)
    if prob < 1e-30:
        # both ports of a pair lit: only round-off survives the contraction
        return OracleResult(prob, (0.0, 0.0, 0.0), residuals)

    case, parities = classify_event(event)
    plan = plan_correction(case, parities) if case.is_heralded else None
    fids = []
    for k, ((c0, c1), leg) in enumerate(zip(params.coefficients, LEGS)):
        others = np.ones_like(grams[0])
        for j in range(3):
            if j != k:
                others = others * grams[j]
        ops = plan.ops[k] if plan else leg_ops(event, k)
        u = correction_matrix(ops, params.alpha, d)
        target = info_vector(c0, c1, params.alpha, d)
        amp = (target.conj() @ u @ vecs[k].T)  # <target|U|v_t>
        # rho = sum_{s,t} c_s conj(c_t) <v'_t|v'_s> |v_s><v_t| over the other legs
        weights = np.outer(coef, coef.conj()) * others.T
        num = amp @ weights @ amp.conj()
        fids.append(float((num / prob).real))
    return OracleResult(prob, tuple(fids), residuals)


# ---------------------------------------------------------------- per-leg tables

@dataclass
class OraclePairTable:
    counts: np.ndarray
    probability: np.ndarray
    fidelity: np.ndarray


def oracle_pair_table(params: ProtocolParams, k: int, d: int | None = None) -> OraclePairTable:
    """Every (sum, diff) reading of one detector pair, same order as the algebra's table."""
    d = d or oracle_dim(params.alpha)
    alpha = params.alpha
    c0, c1 = params.coefficients[k]
    cutoff = params.photon_cutoff
    if cutoff >= d:
        raise TruncationError(f"photon cutoff {cutoff} beyond oracle dimension {d}", cutoff + 1)
    vec = {1: coherent_to_fock(alpha, d), -1: coherent_to_fock(-alpha, d)}
    heralded = np.zeros((d, d, d), complex)  # [n_sum, n_diff, receiver photon number]
    for w, s, r in _pair_terms(alpha, c0, c1, d):
        heralded += w * apply_bs(vec[s], vec[r])[:, :, None] * vec[r][None, None, :]
    target = info_vector(c0, c1, alpha, d)
    evs = pair_events(cutoff)
    prob = np.empty(len(evs))
    fid = np.empty(len(evs))
    for i, (ns, nd) in enumerate(evs):
        v = heralded[ns, nd]
        prob[i] = np.vdot(v, v).real
        port = pair_port(ns, nd)
        ops = port_ops(port, (ns + nd) % 2) if port != SILENT else ()
        corrected = correction_matrix(ops, alpha, d) @ v
        fid[i] = abs(np.vdot(target, corrected)) ** 2 / prob[i] if prob[i] > 0 else 0.0
    return OraclePairTable(np.array(evs), prob, fid)
