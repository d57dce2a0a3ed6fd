from fractions import Fraction

import numpy as np
import pytest

from evanscompat import lp as lpmod
from evanscompat.lp import FarkasCertificate, LinearProgram, LPError

METHODS = ("highs", "simplex", "exact")


def infeasible_lp():
    # x0 + x1 = 1 and x0 + x1 = 2
    return LinearProgram(2, [{0: 1, 1: 1}, {0: 1, 1: 1}], [1, 2])


def test_rejects_duplicate_and_out_of_range():
    with pytest.raises(LPError):
        LinearProgram(2, [[(0, 1), (0, 2)]], [1])
    with pytest.raises(LPError):
        LinearProgram(2, [{5: 1}], [1])
    with pytest.raises(LPError):
        LinearProgram(2, [{0: 1}], [1, 2])


@pytest.mark.parametrize("method", METHODS)
def test_feasible(method):
    lp = LinearProgram(3, [{0: 1, 1: 1, 2: 1}, {0: 1, 1: -1}], [1, Fraction(1, 3)])
    res = lpmod.solve(lp, method=method)
    assert res.feasible
    assert lp.residual(res.x) <= 1e-9 and np.min(res.x) >= -1e-12


@pytest.mark.parametrize("method", METHODS)
def test_infeasible_certificate_convention(method):
    lp = infeasible_lp()
    res = lpmod.solve(lp, method=method)
    assert not res.feasible
    y = res.certificate.y
    assert all(isinstance(v, Fraction) for v in y)
    yA, yb = lpmod.certificate_products(lp, y)
    assert all(v <= 0 for v in yA.values()) and yb > 0
    assert lpmod.validate_certificate(lp, res.certificate)


def test_tampered_certificate_rejected():
    lp = infeasible_lp()
    assert lpmod.validate_certificate(lp, [Fraction(-1), Fraction(1)])
    assert not lpmod.validate_certificate(lp, [Fraction(1), Fraction(-1)])
    assert not lpmod.validate_certificate(lp, [Fraction(0), Fraction(0)])


def test_certificate_json_round_trip():
    c = FarkasCertificate([Fraction(-1, 3), Fraction(2)])
    assert FarkasCertificate.from_json(c.to_json()) == c


def test_methods_agree_on_random_programs(rng):
    for _ in range(40):
        m, n = int(rng.integers(2, 6)), int(rng.integers(2, 8))
        A = rng.integers(-2, 3, size=(m, n))
        if rng.random() < 0.5:
            x = rng.integers(0, 3, size=n)
            b = A @ x
        else:
            b = rng.integers(-3, 4, size=m)
        lp = LinearProgram.from_matrix(A.astype(float), [int(v) for v in b])
        verdicts = {meth: lpmod.solve(lp, method=meth).feasible for meth in METHODS}
        assert len(set(verdicts.values())) == 1, verdicts


def test_from_matrix_rejects_duplicates():
    import scipy.sparse as sp
    A = sp.coo_matrix(([1.0, 2.0], ([0, 0], [0, 0])), shape=(1, 1))
    with pytest.raises(LPError):
        LinearProgram.from_matrix(A, [1])


def test_export_text_golden():
    lp = LinearProgram(3, [{0: 1, 2: -0.5}, {1: 2, 2: 1}], [1, Fraction(1, 4)], objective=[0, 1, 0])
    assert lpmod.export_lp_text(lp) == (
        "Minimize\n obj: x1\nSubject To\n r0: x0 - 0.5 x2 = 1\n r1: 2 x1 + x2 = 0.25\n"
        "Bounds\n x0 >= 0\n x1 >= 0\n x2 >= 0\nEnd\n")


def test_export_is_readable_by_highs(tmp_path):
    import highspy
    lp = LinearProgram(2, [{0: 1, 1: 1}], [1])
    path = tmp_path / "m.lp"
    lpmod.export_lp_text(lp, path)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(path)) == highspy.HighsStatus.kOk
    assert h.getNumRow() == 1 and h.getNumCol() == 2


def test_unknown_method():
    with pytest.raises(LPError):
        lpmod.solve(infeasible_lp(), method="magic")
