import json
from types import SimpleNamespace

import numpy as np
import pytest

from cyclicqt.harness import (
    EmptyDistributionError,
    Phase,
    ProtocolError,
    StateFidelities,
    TableFidelities,
    event_cdf,
    execute,
    make_parties,
    run_campaign,
    run_protocol,
    sample_index,
)
from cyclicqt.protocol import CaseId, DetectionEvent, ProtocolParams, enumerate_outcomes, plan_correction

PARAMS = ProtocolParams(alpha=1.0, thetas=(0.4, 1.1, 2.0))


def test_phase_cannot_skip():
    node = make_parties()["Alice"]
    with pytest.raises(ProtocolError):
        node.advance(Phase.CORRECT)
    node.advance(Phase.MEASURE)
    assert node.phase is Phase.MEASURE


def test_three_messages_follow_the_cycle():
    trace = run_protocol(PARAMS, seed=1)
    assert [(m.sender, m.recipient) for m in trace.messages] == [
        ("Alice", "Bob"), ("Bob", "Charlie"), ("Charlie", "Alice")]
    assert [s["t"] for s in trace.steps] == list(range(len(trace.steps)))
    assert all(json.loads(line) for line in trace.to_jsonl().splitlines())


def test_same_seed_same_trace():
    assert run_protocol(PARAMS, 7).to_jsonl() == run_protocol(PARAMS, 7).to_jsonl()


def test_harness_matches_batch():
    table = enumerate_outcomes(PARAMS)
    for seed in range(6):
        trace = run_protocol(PARAMS, seed)
        got = list(trace.fidelities.values())
        assert np.allclose(got, table.fidelity[trace.index], atol=1e-12)


def test_bits_reconstruct_plan():
    ev = DetectionEvent((0, 3, 2, 0, 0, 1))
    trace = execute(PARAMS, ev, StateFidelities(PARAMS))
    plan = plan_correction(trace.case, trace.bits)
    assert trace.case is CaseId.VII and trace.bits == (1, 0, 1)
    assert trace.corrections == {"Alice": plan.label(2), "Bob": plan.label(0),
                                 "Charlie": plan.label(1)}


def test_ambiguous_run_is_flagged():
    ev = DetectionEvent((1, 0, 0, 0, 0, 2))
    trace = execute(PARAMS, ev, StateFidelities(PARAMS))
    assert trace.failed and trace.case is CaseId.AMBIGUOUS
    assert trace.corrections["Charlie"] == "I"
    assert trace.steps[-1]["payload"]["failed"]


def test_sampler_stays_on_enumerated_events():
    table = enumerate_outcomes(PARAMS)
    cdf = event_cdf(table)
    idx = sample_index(cdf, np.array([0.0, 0.5, np.nextafter(1.0, 0)]))
    assert idx.min() >= 0 and idx.max() < len(table)
    assert np.all(table.probability[idx] > 0)
    with pytest.raises(EmptyDistributionError):
        event_cdf(SimpleNamespace(probability=np.zeros(3)))


def test_small_campaign():
    camp = run_campaign(PARAMS, 2000, seed=3)
    table = enumerate_outcomes(PARAMS)
    assert camp.runs == 2000 and sum(camp.case_counts.values()) == 2000
    assert camp.failures == camp.case_counts["Ambiguous"]
    assert all(v["ok"] for v in camp.frequency_check(table).values())
    assert run_campaign(PARAMS, 2000, seed=3).digest == camp.digest
    assert run_campaign(PARAMS, 2000, seed=4).digest != camp.digest


def test_table_source_agrees_with_state_source():
    table = enumerate_outcomes(PARAMS)
    i = int(np.argmax(table.probability))
    ev = table.event(i)
    a = execute(PARAMS, ev, StateFidelities(PARAMS), index=i)
    b = execute(PARAMS, ev, TableFidelities(table), index=i)
    assert np.allclose(list(a.fidelities.values()), list(b.fidelities.values()), atol=1e-12)
