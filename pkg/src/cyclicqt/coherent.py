"""Finite superpositions of multimode coherent states.

A state is stored as a weight vector ``w`` of length T and an amplitude
matrix ``beta`` of shape (T, M), one row per term and one column per mode:

    |psi> = sum_t w[t] |beta[t, 0]>_{m0} |beta[t, 1]>_{m1} ...

Coherent states are not orthogonal, so norms and inner products always go
through the term Gram matrix. All operations return new states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

ModeLabel = Hashable

ZERO_NORM_SQ = 1e-14
MERGE_ATOL = 1e-12


class ModeError(ValueError):
    """Raised when mode labels are missing, duplicated or mismatched."""


class ZeroNormError(ValueError):
    """Raised when normalizing a state whose squared norm is below threshold."""


@dataclass(frozen=True)
class CoherentTerm:
    weight: complex
    amplitudes: Mapping[ModeLabel, complex]


@dataclass(frozen=True, eq=False)
class SuperposedState:
    modes: tuple
    weights: np.ndarray
    amplitudes: np.ndarray
    normalized: bool = False
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        modes = tuple(self.modes)
        if len(set(modes)) != len(modes):
            raise ModeError(f"duplicate mode labels in {modes}")
        w = np.array(self.weights, dtype=complex).reshape(-1)
        amps = np.array(self.amplitudes, dtype=complex).reshape(len(w), len(modes))
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(amps))):
            raise ValueError("weights and amplitudes must be finite")
        w.setflags(write=False)
        amps.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "_index", {m: k for k, m in enumerate(modes)})
        if self.normalized and abs(norm(self) - 1.0) >= 1e-12:
            raise ValueError("state flagged normalized but its norm is not 1")

    @classmethod
    def from_terms(cls, modes: Sequence[ModeLabel], terms: Iterable[CoherentTerm]) -> "SuperposedState":
        modes = tuple(modes)
        terms = list(terms)
        for t in terms:
            if set(t.amplitudes) != set(modes):
                raise ModeError(f"term modes {sorted(map(str, t.amplitudes))} != state modes")
        w = [t.weight for t in terms]
        amps = [[t.amplitudes[m] for m in modes] for t in terms]
        return cls(modes, np.array(w, dtype=complex), np.array(amps, dtype=complex).reshape(len(terms), len(modes)))

    @classmethod
    def coherent(cls, mode: ModeLabel, beta: complex, weight: complex = 1.0) -> "SuperposedState":
        return cls((mode,), np.array([weight]), np.array([[beta]]))

    @classmethod
    def cat(cls, mode: ModeLabel, alpha: complex, c0: complex, c1: complex) -> "SuperposedState":
        """Unnormalized ``c0|alpha> + c1|-alpha>`` on one mode."""
        return cls((mode,), np.array([c0, c1]), np.array([[alpha], [-alpha]]))

    @property
    def n_terms(self) -> int:
        return len(self.weights)

    @property
    def terms(self) -> list[CoherentTerm]:
        return [CoherentTerm(complex(w), dict(zip(self.modes, map(complex, row))))
                for w, row in zip(self.weights, self.amplitudes)]

    def column(self, mode: ModeLabel) -> int:
        try:
            return self._index[mode]
        except KeyError:
            raise ModeError(f"mode {mode!r} not in {self.modes}") from None

    def replace(self, *, modes=None, weights=None, amplitudes=None, normalized=False) -> "SuperposedState":
        return SuperposedState(
            self.modes if modes is None else modes,
            self.weights if weights is None else weights,
            self.amplitudes if amplitudes is None else amplitudes,
            normalized,
        )

    def reorder(self, modes: Sequence[ModeLabel]) -> "SuperposedState":
        modes = tuple(modes)
        if set(modes) != set(self.modes) or len(modes) != len(self.modes):
            raise ModeError(f"cannot reorder {self.modes} to {modes}")
        cols = [self.column(m) for m in modes]
        return self.replace(modes=modes, amplitudes=self.amplitudes[:, cols], normalized=self.normalized)

    def to_json(self) -> dict:
        return {
            "modes": list(self.modes),
            "terms": [
                {"w": [float(w.real), float(w.imag)],
                 "beta": [[float(b.real), float(b.imag)] for b in row]}
                for w, row in zip(self.weights, self.amplitudes)
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "SuperposedState":
        terms = data["terms"]
        w = np.array([complex(*t["w"]) for t in terms], dtype=complex)
        amps = np.array([[complex(*b) for b in t["beta"]] for t in terms], dtype=complex)
        return cls(tuple(data["modes"]), w, amps.reshape(len(terms), len(data["modes"])))


def coherent_overlap(beta, delta):
    """<beta|delta> = exp[-(|beta|^2 + |delta|^2 - 2 conj(beta) delta) / 2]. Broadcasts."""
    beta = np.asarray(beta, dtype=complex)
    delta = np.asarray(delta, dtype=complex)
    out = np.exp(-0.5 * (np.abs(beta) ** 2 + np.abs(delta) ** 2 - 2 * np.conj(beta) * delta))
    return out[()] if out.ndim == 0 else out


def _log_overlap_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a: (T, M), b: (S, M) -> (T, S) log of prod_m <a_tm|b_sm>
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=complex)
    x = a[:, None, :]
    y = b[None, :, :]
    return np.sum(-0.5 * (np.abs(x) ** 2 + np.abs(y) ** 2) + np.conj(x) * y, axis=2)


def overlap_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of product-coherent overlaps between the rows of ``a`` and ``b``."""
    return np.exp(_log_overlap_matrix(np.asarray(a, complex), np.asarray(b, complex)))


def gram_matrix(state: SuperposedState) -> np.ndarray:
    """Overlaps of the unit-norm term kets, G[s, t] = <term_s|term_t>."""
    return overlap_matrix(state.amplitudes, state.amplitudes)


def _aligned(lhs: SuperposedState, rhs: SuperposedState) -> SuperposedState:
    if set(lhs.modes) != set(rhs.modes):
        raise ModeError(f"mode sets differ: {lhs.modes} vs {rhs.modes}")
    return rhs if rhs.modes == lhs.modes else rhs.reorder(lhs.modes)


def state_inner_product(lhs: SuperposedState, rhs: SuperposedState) -> complex:
    rhs = _aligned(lhs, rhs)
    ov = overlap_matrix(lhs.amplitudes, rhs.amplitudes)
    return complex(np.conj(lhs.weights) @ ov @ rhs.weights)


def norm_squared(state: SuperposedState) -> float:
    return float(state_inner_product(state, state).real)


def norm(state: SuperposedState) -> float:
    return math.sqrt(max(norm_squared(state), 0.0))


def scale(state: SuperposedState, factor: complex) -> SuperposedState:
    return state.replace(weights=state.weights * factor)


def normalize(state: SuperposedState) -> SuperposedState:
    nsq = norm_squared(state)
    if nsq <= ZERO_NORM_SQ:
        raise ZeroNormError(f"squared norm {nsq:.3e} is below {ZERO_NORM_SQ:g}")
    return state.replace(weights=state.weights / math.sqrt(nsq), normalized=True)


def tensor(*states: SuperposedState) -> SuperposedState:
    out = states[0]
    for rhs in states[1:]:
        clash = set(out.modes) & set(rhs.modes)
        if clash:
            raise ModeError(f"overlapping mode labels {clash}")
        t, s = out.n_terms, rhs.n_terms
        w = np.outer(out.weights, rhs.weights).reshape(-1)
        amps = np.concatenate(
            [np.repeat(out.amplitudes, s, axis=0), np.tile(rhs.amplitudes, (t, 1))], axis=1
        )
        out = SuperposedState(out.modes + rhs.modes, w, amps)
    return out


def apply_bps(state: SuperposedState, u: ModeLabel, v: ModeLabel,
              i: ModeLabel | None = None, j: ModeLabel | None = None) -> SuperposedState:
    """Symmetric beam splitter with phase shifter on modes (u, v).

    Output mode ``i`` carries (beta_u + beta_v)/sqrt2 and ``j`` carries
    (beta_u - beta_v)/sqrt2. The outputs replace u and v in place.
    """
    i = u if i is None else i
    j = v if j is None else j
    cu, cv = state.column(u), state.column(v)
    if u == v or i == j:
        raise ModeError("beam splitter needs two distinct modes")
    for new in (i, j):
        if new in state._index and new not in (u, v):
            raise ModeError(f"output label {new!r} collides with an existing mode")
    amps = np.array(state.amplitudes)
    bu, bv = amps[:, cu].copy(), amps[:, cv].copy()
    amps[:, cu] = (bu + bv) / math.sqrt(2)
    amps[:, cv] = (bu - bv) / math.sqrt(2)
    modes = list(state.modes)
    modes[cu], modes[cv] = i, j
    return state.replace(modes=tuple(modes), amplitudes=amps, normalized=state.normalized)


def phase_shift(state: SuperposedState, mode: ModeLabel, theta: float) -> SuperposedState:
    """exp(-i theta n) on ``mode``: beta -> exp(-i theta) beta."""
    c = state.column(mode)
    amps = np.array(state.amplitudes)
    k = theta / math.pi
    if k == int(k):
        # exact sign flip keeps +-alpha labels bit-identical
        amps[:, c] *= -1 if int(k) % 2 else 1
    else:
        amps[:, c] *= np.exp(-1j * theta)
    return state.replace(amplitudes=amps, normalized=state.normalized)


def displace(state: SuperposedState, mode: ModeLabel, delta: complex) -> SuperposedState:
    """D(delta)|beta> = exp[(delta conj(beta) - conj(delta) beta)/2] |beta + delta>."""
    c = state.column(mode)
    beta = state.amplitudes[:, c]
    phase = np.exp(0.5 * (delta * np.conj(beta) - np.conj(delta) * beta))
    amps = np.array(state.amplitudes)
    amps[:, c] = beta + delta
    return state.replace(weights=state.weights * phase, amplitudes=amps, normalized=state.normalized)


def fock_kernel(beta, n: int):
    """<n|beta> = exp(-|beta|^2/2) beta^n / sqrt(n!). Broadcasts over ``beta``."""
    if n < 0:
        raise ValueError(f"photon number must be non-negative, got {n}")
    beta = np.asarray(beta, dtype=complex)
    mag = np.exp(-0.5 * np.abs(beta) ** 2 - 0.5 * gammaln(n + 1))
    out = mag * (np.ones_like(beta) if n == 0 else beta ** n)
    return out[()] if out.ndim == 0 else out


def project_fock(state: SuperposedState, mode: ModeLabel, n: int) -> SuperposedState:
    """Contract ``mode`` with <n|; the mode is removed and the result is unnormalized."""
    c = state.column(mode)
    w = state.weights * fock_kernel(state.amplitudes[:, c], n)
    modes = state.modes[:c] + state.modes[c + 1:]
    amps = np.delete(state.amplitudes, c, axis=1)
    return SuperposedState(modes, w, amps)


def prune(state: SuperposedState, tol: float = 0.0) -> SuperposedState:
    """Merge terms with equal amplitude vectors, then drop negligible terms.

    Amplitudes closer than 1e-12 per component count as equal. A term is
    kept when |w| * exp(max_m |beta_m|^2 / 2) > tol, so ``tol=0`` only drops
    exact zeros.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    nz = state.weights != 0
    amps = state.amplitudes[nz]
    w = state.weights[nz]
    if not len(w):
        return SuperposedState(state.modes, w, amps)
    d = amps[:, None, :] - amps[None, :, :]
    close = np.all((np.abs(d.real) <= MERGE_ATOL) & (np.abs(d.imag) <= MERGE_ATOL), axis=2)
    rep = np.argmax(close, axis=1)  # first close term is the representative
    keep_rows, inverse = np.unique(rep, return_inverse=True)
    new_w = np.zeros(len(keep_rows), dtype=complex)
    np.add.at(new_w, inverse, w)
    new_amps = amps[keep_rows] if len(keep_rows) else np.zeros((0, len(state.modes)), complex)
    if new_amps.shape[1]:
        bound = np.abs(new_w) * np.exp(0.5 * np.max(np.abs(new_amps) ** 2, axis=1))
    else:
        bound = np.abs(new_w)
    mask = bound > tol
    return SuperposedState(state.modes, new_w[mask], new_amps[mask])


def split_modes(state: SuperposedState, modes: Sequence[ModeLabel]) -> tuple[np.ndarray, np.ndarray]:
    """Column blocks (selected, rest) of the amplitude matrix."""
    sel = [state.column(m) for m in modes]
    rest = [k for k in range(len(state.modes)) if k not in sel]
    return state.amplitudes[:, sel], state.amplitudes[:, rest]


def reduced_weight_matrix(state: SuperposedState, modes: Sequence[ModeLabel]) -> np.ndarray:
    """Coefficients A of the reduced density operator on ``modes``.

    rho = sum_{s,t} A[s, t] |sel_s><sel_t| with the traced-out modes folded in
    through their Gram matrix. Not divided by the trace.
    """
    _, rest = split_modes(state, modes)
    r = overlap_matrix(rest, rest)  # r[t, s] = <rest_t|rest_s>
    return np.outer(state.weights, np.conj(state.weights)) * r.T


def purity(state: SuperposedState, modes: Sequence[ModeLabel]) -> float:
    """Tr(rho^2)/Tr(rho)^2 of the reduced state on ``modes``; 1 iff product across the cut."""
    sel, _ = split_modes(state, modes)
    a = reduced_weight_matrix(state, modes)
    s = overlap_matrix(sel, sel)
    tr = np.trace(a @ s)
    tr2 = np.trace(a @ s @ a @ s)
    return float((tr2 / tr ** 2).real)


def factor(state: SuperposedState, mode: ModeLabel) -> SuperposedState:
    """Single-mode factor of a product state, normalized.

    The other modes are contracted with the coherent product of the heaviest
    term, which has non-zero overlap with the rest-factor. Only meaningful
    when the state factorizes across ``mode | rest``.
    """
    sel, rest = split_modes(state, [mode])
    top = int(np.argmax(np.abs(state.weights)))
    ref = rest[top][None, :]
    # rescale first: heralded states of rare events carry tiny weights
    w = state.weights / abs(state.weights[top]) * overlap_matrix(ref, rest)[0]
    single = prune(SuperposedState((mode,), w, sel))
    return normalize(single)
