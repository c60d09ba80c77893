import csv
import io
import json
import math

import numpy as np
import pytest

from cyclicqt.analysis import (
    PRINTED_CHAINS,
    Chain,
    SweepSpec,
    average_fidelity,
    branch_average,
    closed_form_fidelity,
    exact_odd_fidelity,
    fidelity_grouping_check,
    fidelity_report,
    flatness_probe,
    odd_fidelity_trend,
    run_sweep,
)
from cyclicqt.protocol import CASES, CaseId, ProtocolParams, enumerate_outcomes

PARAMS = ProtocolParams(alpha=1.0, thetas=(math.pi / 4, math.pi / 3, math.pi / 6))


def test_closed_form_conventions():
    c = (math.cos(0.4), math.sin(0.4))
    a = 1.0
    e2, e4 = math.exp(-2), math.exp(-4)
    na = c[0] ** 2 + c[1] ** 2 + 2 * e4 * c[0] * c[1]
    n1 = c[0] ** 2 + c[1] ** 2 - 2 * e2 * c[0] * c[1]
    s = c[0] + c[1] + 2 * e2 * c[0] * c[1]
    env = math.exp(-math.pi**2 / 8)
    assert closed_form_fidelity(c, a) == pytest.approx(env * s**2 / (na * n1))
    assert closed_form_fidelity(c, a, "verbatim") == pytest.approx((na / n1) ** 2 * env * s**2)
    with pytest.raises(ValueError):
        closed_form_fidelity(c, a, "other")
    with pytest.raises(ValueError):
        closed_form_fidelity(c, 0.0)


def test_closed_form_large_alpha_limit():
    # the printed expression tends to (x0 + x1)^2, which is 2 at theta = pi/4
    c = (math.cos(math.pi / 4), math.sin(math.pi / 4))
    assert closed_form_fidelity(c, 50.0) == pytest.approx(2.0, rel=1e-3)


def test_closed_form_symmetry():
    assert closed_form_fidelity((0.6, 0.8), 1.3) == pytest.approx(closed_form_fidelity((0.8, 0.6), 1.3))


def test_theta_zero_against_direct():
    p = ProtocolParams(alpha=1.2, thetas=(0.0, 0.5, 1.0))
    direct = enumerate_outcomes(p).branch_fidelity(CaseId.I, (1, 1, 1))[0]
    assert direct == pytest.approx(exact_odd_fidelity((1.0, 0.0), 1.2), abs=1e-12)
    assert direct == pytest.approx(math.exp(-math.pi**2 / (4 * 1.44)), abs=1e-12)
    assert closed_form_fidelity((1.0, 0.0), 1.2) == pytest.approx(math.exp(-math.pi**2 / (8 * 1.44)))


def test_report_structure():
    rep = fidelity_report(PARAMS)
    assert len(rep.entries) == 8 * 8 * 3
    assert all(0 <= e.direct <= 1 for e in rep.entries)
    assert rep.heralded_mass + rep.ambiguous_mass == pytest.approx(rep.total_mass)
    even = [e for e in rep.entries if not e.parities[["A->B", "B->C", "C->A"].index(e.leg)]]
    assert all(abs(e.deviation) < 1e-10 for e in even)
    assert rep.worst().parities != (0, 0, 0)


def test_chain_verdicts():
    verdicts = {v.chain.name: v for v in fidelity_grouping_check(fidelity_report(PARAMS))}
    assert len(verdicts) == len(PRINTED_CHAINS) == 12
    assert verdicts["I A->B {1,2,3,8}"].passed
    assert verdicts["I C->A {2,5,7,8}"].passed
    # row 6 is even for Bob, so it cannot share the odd-branch value
    bad = verdicts["I B->C {1,2,4,6,7}"]
    assert not bad.passed
    assert [(c, r) for c, r, _ in bad.offenders] == [("I", 6)]


def test_corrected_chain_holds():
    chain = Chain("B->C odd", "B->C", tuple(("I", r) for r in (1, 2, 4, 7)))
    (v,) = fidelity_grouping_check(fidelity_report(PARAMS), [chain])
    assert v.passed


def test_printed_chain_duplicates_collapse():
    cross = [c for c in PRINTED_CHAINS if c.name.startswith("II-VIII A->B {1,2")][0]
    assert len(cross.members) == 28
    assert (CaseId.IV, 2) not in cross.distinct()


def test_average_bounds_and_even_restriction():
    table = enumerate_outcomes(PARAMS)
    for k in range(3):
        fids = [table.branch_fidelity(c, p)[k] for c in CASES for p in [(1, 1, 1), (0, 0, 0)]]
        avg = branch_average(table, k)
        assert min(fids) - 1e-12 <= avg <= max(fids) + 1e-12
        assert branch_average(table, k, parity=0) == pytest.approx(1.0, abs=1e-10)
    assert average_fidelity("A->B", PARAMS) == average_fidelity(0, PARAMS)
    assert branch_average(table, 0, "total") < branch_average(table, 0)
    with pytest.raises(ValueError):
        branch_average(table, 0, "other")


def test_sweep_cardinality_and_determinism():
    spec = SweepSpec(alphas=(0.5, 1.0, 1.5), theta1=(0.0, 1.0, 2.0))
    a, b = run_sweep(spec), run_sweep(spec)
    assert a.to_csv() == b.to_csv()
    rows = list(csv.reader(io.StringIO(a.to_csv())))
    assert sum(r[5] == "ALL" for r in rows[1:]) == 27
    assert json.loads(json.dumps(a.summary))["params"]["alphas"] == [0.5, 1.0, 1.5]


def test_sweep_spot_row_matches_single_point():
    spec = SweepSpec(alphas=(1.3,), theta1=(0.7,), theta2=(0.2,), theta3=(1.9,))
    rows = list(csv.reader(io.StringIO(run_sweep(spec).to_csv())))[1:]
    row = next(r for r in rows if r[4] == "B->C" and r[5] == "IV" and r[6] == "OOE")
    table = enumerate_outcomes(ProtocolParams(alpha=1.3, thetas=(0.7, 0.2, 1.9)))
    assert float(row[7]) == table.branch_mass(CaseId.IV, (1, 1, 0))
    assert float(row[8]) == table.branch_fidelity(CaseId.IV, (1, 1, 0))[1]
    avg = next(r for r in rows if r[4] == "C->A" and r[5] == "ALL")
    assert float(avg[8]) == branch_average(table, 2)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(alphas=(), theta1=(0.1,))
    with pytest.raises(ValueError):
        SweepSpec(alphas=(-1.0,), theta1=(0.1,))


def test_sweep_write_reports_path(tmp_path):
    res = run_sweep(SweepSpec(alphas=(0.5,), theta1=(0.1,), branches=False))
    with pytest.raises(OSError, match="missing"):
        res.write(tmp_path / "missing" / "x.csv")


def test_flatness_probe_shape():
    probe = flatness_probe(alphas=(0.5, 1.5), theta1=(0.0, 1.0, 2.0))
    assert probe.values.shape == (2, 3)
    assert probe.spread == pytest.approx(probe.spread_per_alpha.max())
    assert np.all((probe.values >= 0) & (probe.values <= 1))


def test_odd_trend_at_quarter_pi():
    vals, ok = odd_fidelity_trend()
    assert ok
    # the odd cat is orthogonal to the even cat it should reproduce
    assert np.all(vals < 1e-12)
