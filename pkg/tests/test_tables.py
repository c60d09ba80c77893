from collections import Counter

import pytest

from cyclicqt.protocol import CASES, PARITY_ROWS, CaseId, ProtocolParams
from cyclicqt.tables import (
    PRINTED_ROWS,
    ModeState,
    derive_row,
    derived_table,
    diff_tables,
    format_table,
    mismatches_json,
    printed_table,
    representative_event,
    required_ops,
)


@pytest.fixture(scope="module")
def derived():
    return derived_table()


@pytest.fixture(scope="module")
def diffs(derived):
    return diff_tables(printed_table(), derived)


def test_fixture_covers_every_row():
    printed = printed_table()
    assert len(PRINTED_ROWS) == 64
    assert {(r.case, r.parities) for r in printed} == {(c, p) for c in CASES for p in PARITY_ROWS}


def test_derived_shape_and_faithful_rows(derived):
    assert len(derived) == 64
    faithful = [r for r in derived if r.faithful]
    assert Counter(r.case for r in faithful) == Counter(CASES)
    assert all(r.parities == (0, 0, 0) for r in faithful)
    assert all("D" not in op for r in faithful for op in r.ops)


def test_case_i_matches_printed_where_consistent(derived):
    row = next(r for r in derived if r.case is CaseId.I and r.parities == (1, 1, 1))
    assert row.states == ("a0+ - a1-", "b0+ - b1-", "c0+ - c1-")
    assert row.ops == ("D", "D", "D")
    row = next(r for r in derived if r.case is CaseId.II and r.parities == (1, 1, 1))
    assert row.states == ("a0- - a1+", "b0- - b1+", "c0- - c1+")
    assert row.ops == ("DP", "DP", "DP")


def test_derivation_independent_of_coefficients():
    a = derive_row(CaseId.V, (1, 0, 1))
    b = derive_row(CaseId.V, (1, 0, 1), ProtocolParams(alpha=1.7, thetas=(1.3, 0.2, 2.5)))
    assert a == b


def test_state_implies_ops(derived):
    # the correction each derived state calls for is the one planned
    for r in derived:
        for j, k in enumerate((2, 0, 1)):
            assert required_ops(ModeState.parse(r.states[k])) == r.ops[j]


def test_representative_event():
    ev = representative_event(CaseId.III, (1, 0, 1))
    assert ev.counts == (1, 0, 2, 0, 0, 1)


def test_all_mismatches_classified(diffs):
    assert diffs
    assert {m.kind for m in diffs} <= {"paper-typo", "spec-divergence"}
    assert all(m.reason for m in diffs)
    assert len(mismatches_json(diffs)) == len(diffs)


def test_known_typos_reported(diffs):
    keyed = {(m.case, m.parities, m.field): m for m in diffs}
    # coefficient letters repeated from the a-slot in the last table
    m = keyed[(CaseId.VIII, "OOO", "state5")]
    assert m.printed == "b0- - a1+" and "coefficient" in m.reason
    m = keyed[(CaseId.VIII, "EEE", "state6")]
    assert m.printed == "a0+ + a1-"
    # row EEO of the first table carries the odd sign on Bob's mode
    m = keyed[(CaseId.I, "EEO", "state5")]
    assert m.derived == "b0+ + b1-"
    assert (CaseId.I, "EEO", "op_Charlie") in keyed
    # faithful tags all agree
    assert not any(m.field == "tag" for m in diffs)


def test_printed_faithful_rows_match_derivation(diffs):
    ok = {CaseId.I, CaseId.II, CaseId.VII}
    bad = {m.case for m in diffs if m.parities == "EEE"}
    assert not (ok & bad)


def test_parse_and_format():
    s = ModeState.parse("b0- + b1+")
    assert s.port == 1 and s.parity == 0
    assert ModeState.parse("a0+ - a1+").port is None
    with pytest.raises(ValueError):
        ModeState.parse("nonsense")
    assert format_table(derived_table()[:1]).count("\n") == 1
