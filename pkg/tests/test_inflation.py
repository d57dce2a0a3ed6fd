import hashlib
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from evanscompat import dist, inflation, lp as lpmod, witness
from evanscompat.inflation import InflationError

GOLDEN = Path(__file__).parent / "golden"


def pr():
    return dist.pr_box((Fraction(10, 21), Fraction(1, 21), Fraction(10, 21)))


def test_column_counts():
    assert inflation.column_count(1) == 24
    assert inflation.column_count(2) == 2304
    assert inflation.column_count(3) == 884736


def test_order2_structure_matches_golden():
    g = json.loads((GOLDEN / "inflation_order2.json").read_text())
    lp, meta = inflation.build(pr(), 2)
    assert (meta.n_columns, lp.n_rows, lp.nnz) == (g["n_columns"], g["n_rows"], g["nnz"])
    assert {k: list(v) for k, v in meta.group_rows.items()} == g["row_groups"]
    assert len(np.unique(meta.orbit_rep)) == g["n_orbits"]
    assert hashlib.sha256(meta.orbit_rep.astype("<i8").tobytes()).hexdigest() == g["orbit_rep_sha256"]


def test_column_encoding_round_trip():
    _, meta = inflation.build(pr(), 2)
    for col in (0, 1, 777, meta.n_columns - 1):
        d = meta.digits(col)
        assert meta.column(d["ctx"], d["a"], d["b"], d["c"]) == col


def test_orbit_representative_is_minimal_member():
    _, meta = inflation.build(pr(), 2)
    rep = meta.orbit_rep
    assert np.all(rep <= np.arange(meta.n_columns))
    assert np.all(rep[rep] == rep)


def test_symmetry_swaps_both_sources_in_context():
    # (pi, sigma) = (swap, swap) is admissible in every context
    _, meta = inflation.build(pr(), 2)
    col = meta.column((0, 1), (2, 0), ((1, 0), (0, 1)), (1, 0))
    img = meta.column((1, 0), (0, 2), ((1, 0), (0, 1)), (0, 1))
    assert meta.orbit_rep[col] == meta.orbit_rep[img]


def test_column_cap_and_bad_order():
    with pytest.raises(InflationError):
        inflation.build(pr(), 3, column_cap=1000)
    with pytest.raises(InflationError):
        inflation.build(pr(), 0)


def test_pr_box_order2_feasible():
    r = inflation.check(pr(), 2)
    assert r.feasible
    lp, _ = inflation.build(pr(), 2)
    assert lp.residual(r.x) <= 1e-8 and r.x.min() >= -1e-12


def test_marginal_mode_is_weaker():
    lp_full, _ = inflation.build(pr(), 2)
    lp_marg, _ = inflation.build(pr(), 2, no_signaling="marginal")
    assert lp_marg.n_rows < lp_full.n_rows


def test_point_mass_order1_feasible():
    assert inflation.check(dist.point_mass((3, 2, 2), (0, 1, 0)), 1).feasible


def test_lifted_certificate_validates_on_full_lp():
    p = dist.gpt_unfeasible()
    lp, meta = inflation.build(p, 2)
    r = inflation.check(p, 2, lp_meta=(lp, meta))
    assert not r.feasible and r.validated
    assert lpmod.validate_certificate(lp, r.certificate)
    s, e = meta.group_rows["symmetry"]
    assert any(r.certificate.y[s:e])
    w = inflation.dual_witness(p, 2, result=r, lp_meta=(lp, meta))
    assert witness.evaluate_witness(w, p)[1]
    u = dist.JointDistribution(p.variables, np.full((2, 2, 2), 1 / 8))
    assert not witness.evaluate_witness(w, u)[1]


def test_hand_edited_rhs_gives_certificate():
    lp, meta = inflation.build(pr(), 1)
    rhs = list(lp.rhs)
    s, _ = meta.group_rows["normalization"]
    rhs[s] = Fraction(2)
    bad = lpmod.LinearProgram.from_matrix(lp.A, rhs, tags=lp.tags)
    res = lpmod.solve(bad)
    assert not res.feasible and lpmod.validate_certificate(bad, res.certificate)


def test_cubic_regression_requires_support():
    assert abs(float(inflation.cubic_witness_regression(pr())) - 3.2e-3) <= 2e-4
    with pytest.raises(witness.WitnessError):
        inflation.cubic_witness_regression(dist.mix_with_uniform(pr(), Fraction(1, 2)))


def test_random_classical_models_pass(rng):
    for _ in range(10):
        p = dist.evaluate_evans_model(dist.random_evans_model(rng))
        for n in (1, 2):
            assert inflation.check(p, n).feasible


def test_export_writes_lp_and_meta(tmp_path):
    inflation.export(pr(), 1, tmp_path / "i.lp", tmp_path / "i.json")
    meta = json.loads((tmp_path / "i.json").read_text())
    assert meta["n_columns"] == 24 and meta["column_digits"] == ["Bs_1", "A_1", "B_11", "C_1"]
    assert (tmp_path / "i.lp").read_text().startswith("Minimize")


@pytest.mark.extended
def test_pr_box_order3_infeasible_with_validated_certificate():
    r = inflation.check(pr(), 3)
    assert not r.feasible and r.validated
    w = inflation.dual_witness(pr(), 3, result=r)
    assert witness.evaluate_witness(w, pr())[1]
