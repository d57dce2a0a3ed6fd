import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from evanscompat import dist, gpt, lp as lpmod, witness

GOLDEN = Path(__file__).parent / "golden"


def test_column_counts():
    assert gpt.column_count((2, 2, 2)) == 128
    assert gpt.column_count((3, 2, 2)) == 288
    g = gpt.build_gpt_lp(dist.pr_box((Fraction(1, 3),) * 3))
    assert g.n_columns == 288
    s, e = g.group_rows["diagonal"]
    assert e - s == 3 * 3 * 2 * 2 * 2


def test_binary_rows_match_golden():
    gold = json.loads((GOLDEN / "gpt_binary.json").read_text())
    g = gpt.build_gpt_lp(dist.gpt_unfeasible())
    assert g.n_columns == gold["n_columns"]
    assert {k: list(v) for k, v in g.group_rows.items()} == gold["row_groups"]
    A = g.lp.A
    for i, row in enumerate(gold["rows"]):
        s, e = A.indptr[i], A.indptr[i + 1]
        got = [[int(j), float(v)] for j, v in zip(A.indices[s:e], A.data[s:e])]
        assert (g.lp.tags[i], str(g.lp.rhs[i]), got) == (row["tag"], row["rhs"], row["coefs"])


def test_row_groups_cover_all_rows():
    g = gpt.build_gpt_lp(dist.gpt_unfeasible())
    spans = sorted(g.group_rows.values())
    assert spans[0][0] == 0 and spans[-1][1] == g.lp.n_rows
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
    assert set(g.group_rows) == set(gpt.GROUPS)


def test_rejects_non_tripartite():
    p = dist.JointDistribution((("A", 2), ("B", 2)), [Fraction(1, 4)] * 4)
    with pytest.raises(gpt.GptError):
        gpt.build_gpt_lp(p)


def test_unfeasible_point_is_refuted_with_exact_certificate():
    p = dist.gpt_unfeasible()
    g = gpt.build_gpt_lp(p)
    r = gpt.check_gpt(p, gpt_lp=g)
    assert not r.feasible
    assert lpmod.validate_certificate(g.lp, r.certificate)


@pytest.mark.parametrize("method", ["simplex", "exact"])
def test_other_solvers_agree(method):
    assert not gpt.check_gpt(dist.gpt_unfeasible(), method=method).feasible


def test_uniform_and_classical_feasible(rng):
    u = dist.JointDistribution((("A", 2), ("B", 2), ("C", 2)), [Fraction(1, 8)] * 8)
    assert gpt.check_gpt(u).feasible
    for _ in range(20):
        for cards in ((2, 2, 2), (3, 2, 2)):
            p = dist.evaluate_evans_model(dist.random_evans_model(rng, cards=cards))
            assert gpt.check_gpt(p).feasible


def test_dual_witness_separates():
    p = dist.gpt_unfeasible()
    w = gpt.gpt_dual_witness(p)
    assert w.degree == 2
    assert witness.evaluate_witness(w, p)[1]
    u = dist.JointDistribution(p.variables, np.full((2, 2, 2), 1 / 8))
    assert not witness.evaluate_witness(w, u)[1]


def test_dual_witness_needs_infeasible_input():
    u = dist.JointDistribution((("A", 2), ("B", 2), ("C", 2)), [Fraction(1, 8)] * 8)
    with pytest.raises(gpt.GptError):
        gpt.gpt_dual_witness(u)


def test_visibility_scan_is_monotone_and_bracketed():
    scan = gpt.gpt_visibility(dist.gpt_unfeasible(), tol=1e-3)
    assert 0 < scan.v_crit < 1
    oks = [ok for _, ok in scan.probes]
    assert oks == sorted(oks, reverse=True)


def test_inequality_threshold():
    v = gpt.topology_inequality_threshold(dist.gpt_unfeasible())
    assert abs(v - 0.73982) <= 5e-5


def test_monotonicity_error_reports_probes():
    err = gpt.MonotonicityError([(0.5, True), (0.2, False)])
    assert "0.200000:I" in str(err) and "0.500000:F" in str(err)
