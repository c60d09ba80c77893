import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclicqt.coherent import SuperposedState, displace, fock_kernel
from cyclicqt.fock import (
    TruncationError,
    apply_bs,
    bs_unitary,
    coherent_to_fock,
    correction_matrix,
    displacement_matrix,
    oracle_dim,
    oracle_pair_table,
    oracle_run,
    truncation_dim,
)
from cyclicqt.protocol import DetectionEvent, ProtocolParams, enumerate_outcomes, resolve


def bs_infidelity(b1, b2):
    outs = ((b1 + b2) / math.sqrt(2), (b1 - b2) / math.sqrt(2))
    d = truncation_dim(max(abs(b1), abs(b2), *map(abs, outs)))
    got = apply_bs(coherent_to_fock(b1, d), coherent_to_fock(b2, d))
    want = np.outer(coherent_to_fock(outs[0], d), coherent_to_fock(outs[1], d))
    return 1 - abs(np.vdot(want, got)) ** 2 / (np.vdot(got, got).real * np.vdot(want, want).real)


@pytest.mark.parametrize("d", [2, 5, 12])
def test_bs_unitary_is_unitary(d):
    u = bs_unitary(d).toarray()
    assert np.allclose(u.conj().T @ u, np.eye(d * d), atol=1e-12)


def test_bs_conserves_photon_number():
    d = 6
    u = bs_unitary(d).toarray()
    n = np.add.outer(np.arange(d), np.arange(d)).ravel()
    rows, cols = np.nonzero(np.abs(u) > 1e-14)
    assert np.all(n[rows] == n[cols])


def test_bs_single_photon():
    d = 3
    one = np.zeros(d)
    one[1] = 1
    vac = np.zeros(d)
    vac[0] = 1
    out = apply_bs(one, vac)
    assert abs(out[1, 0]) ** 2 == pytest.approx(0.5)
    assert abs(out[0, 1]) ** 2 == pytest.approx(0.5)


@settings(max_examples=15, deadline=None)
@given(st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False))
def test_bs_matches_coherent_map(b1, b2):
    assert bs_infidelity(b1, b2) < 1e-9


def test_coherent_vector_matches_kernel_and_budget():
    beta = 1.3 + 0.5j
    d = truncation_dim(abs(beta))
    v = coherent_to_fock(beta, d)
    assert np.allclose(v[:10], [fock_kernel(beta, n) for n in range(10)])
    assert np.vdot(v, v).real == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(TruncationError) as err:
        coherent_to_fock(3.0, 10)
    assert err.value.suggested_dim == truncation_dim(3.0)


def test_displacement_matrix_on_coherent_state():
    alpha = 1.2
    delta = 1j * math.pi / (2 * alpha)
    d = oracle_dim(alpha)
    got = displacement_matrix(delta, d) @ coherent_to_fock(alpha, d)
    s = displace(SuperposedState.coherent(0, alpha), 0, delta)
    want = s.weights[0] * coherent_to_fock(s.amplitudes[0, 0], d)
    assert np.allclose(got, want, atol=1e-10)


def test_correction_matrix_rejects_unknown():
    with pytest.raises(ValueError):
        correction_matrix(["X"], 1.0, 5)


@pytest.mark.parametrize("counts", [(1, 0, 0, 2, 3, 0), (0, 2, 0, 4, 0, 1), (2, 0, 0, 0, 1, 0)])
def test_oracle_event_matches_algebra(counts):
    params = ProtocolParams(alpha=0.9, thetas=(0.3, 1.0, 2.2))
    ev = DetectionEvent(counts)
    alg, orc = resolve(params, ev), oracle_run(params, ev)
    assert orc.probability == pytest.approx(alg.probability, abs=1e-12)
    assert np.allclose(orc.fidelities, alg.fidelities, atol=1e-10)


def test_oracle_impossible_event_is_empty():
    params = ProtocolParams(alpha=0.9)
    orc = oracle_run(params, DetectionEvent((1, 1, 0, 2, 0, 2)))
    assert orc.probability < 1e-25
    assert orc.fidelities == (0.0, 0.0, 0.0)


def test_oracle_pair_tables_match():
    params = ProtocolParams(alpha=1.3, thetas=(0.2, 0.9, 1.7))
    table = enumerate_outcomes(params)
    for k in range(3):
        o = oracle_pair_table(params, k)
        assert np.array_equal(o.counts, table.pairs[k].counts)
        assert np.allclose(o.probability, table.pairs[k].probability, atol=1e-12)
        assert np.allclose(o.fidelity, table.pairs[k].fidelity, atol=1e-10)


def test_oracle_dim_grows_with_alpha():
    assert oracle_dim(2.0) > oracle_dim(1.0)
    with pytest.raises(TruncationError):
        oracle_pair_table(ProtocolParams(alpha=1.0, cutoff=200), 0)
