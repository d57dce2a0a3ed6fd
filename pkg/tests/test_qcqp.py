from fractions import Fraction

import numpy as np
import pytest

from evanscompat import dist, qcqp, witness
from evanscompat.witness import Poly, PolynomialWitness


def test_model_point_satisfies_program(rng):
    for cards in ((2, 2, 2), (3, 2, 2), (2, 3, 2)):
        for det in (False, True):
            m = dist.random_evans_model(rng, cards=cards, deterministic=det)
            prog = qcqp.build_evans_feasibility(dist.evaluate_evans_model(m))
            x = qcqp.model_point(prog, m)
            assert prog.violation(x) <= 1e-9
            assert prog.objective(x) == pytest.approx(1.0)


def test_program_shape():
    prog = qcqp.build_evans_feasibility(dist.pr_box((Fraction(1, 3),) * 3))
    na, nb, nc = 3, 2, 2
    assert prog.meta["n_q"] == na ** nb * nb * nc ** nb
    assert len(prog.triples) == na ** nb * nc ** nb
    assert set(prog.pin_vars) <= set(prog.meta["s"])


def test_split_point_stays_inside():
    assert qcqp._split_point(0.0, 0.0, 1.0) == pytest.approx(0.25)
    assert qcqp._split_point(1.0, 0.0, 1.0) == pytest.approx(0.75)
    assert qcqp._split_point(0.0, 0.0, 0.01) == pytest.approx(0.0025)
    assert qcqp._split_point(0.5, 0.0, 1.0) == pytest.approx(0.5)


def test_tighten_detects_empty_box():
    prog = qcqp.build_evans_feasibility(dist.pr_box((Fraction(1, 3),) * 3))
    lo, hi = prog.lower.copy(), prog.upper.copy()
    hi[prog.meta["r"]] = 0.0  # r must sum to one
    assert not qcqp._tighten(prog, lo, hi)


def test_tighten_keeps_feasible_points(rng):
    m = dist.random_evans_model(rng)
    prog = qcqp.build_evans_feasibility(dist.evaluate_evans_model(m))
    x = qcqp.model_point(prog, m)
    lo, hi = prog.lower.copy(), prog.upper.copy()
    assert qcqp._tighten(prog, lo, hi)
    assert np.all(lo <= x + 1e-9) and np.all(x <= hi + 1e-9)


def test_deterministic_point_is_feasible():
    rep = qcqp.solve_global(qcqp.build_evans_feasibility(dist.point_mass((2, 2, 2), (1, 0, 1))),
                            time_limit=120)
    assert rep.status == "Feasible"
    assert rep.point is not None


def test_perfect_correlation_at_constant_b_is_infeasible():
    # B is constant, so A and C must be independent
    rep = qcqp.solve_global(qcqp.build_evans_feasibility(dist.gpt_unfeasible()), time_limit=300)
    assert rep.status == "InfeasibleCertifiedByBound"
    assert rep.upper < 1


def test_random_classical_point_found(rng):
    m = dist.random_evans_model(rng, cards=(2, 2, 2), card_lambda=2, card_mu=2)
    rep = qcqp.solve_global(qcqp.build_evans_feasibility(dist.evaluate_evans_model(m)), time_limit=300)
    assert rep.status == "Feasible"


def test_linear_functional_reaches_one():
    w = PolynomialWitness.from_poly(Poly.var(0, 1, 0), (2, 2, 2), 0, "<=")
    r = qcqp.max_functional(w)
    assert r.value == pytest.approx(1.0) and r.upper == pytest.approx(1.0, abs=1e-3)
    assert r.point.probs[0, 1, 0] == pytest.approx(1.0)


def test_implied_distribution_of_model_point(rng):
    m = dist.random_evans_model(rng)
    p = dist.evaluate_evans_model(m)
    prog = qcqp.build_evans_feasibility(p)
    q = qcqp.implied_distribution(prog, qcqp.model_point(prog, m))
    assert np.allclose(q.probs, np.asarray(p.to_float().probs, float), atol=1e-12)


def test_gap_limit_bounds_bracket_pearl():
    with pytest.raises(qcqp.GapLimitError) as info:
        qcqp.max_functional(witness.pearl(), time_limit=3)
    rep = info.value.report
    assert rep.lower <= 1 / 16 + 1e-9
    assert rep.upper >= 1 / 16 - 1e-9


def test_factored_terms_expand_back():
    w = witness.bonet()
    total = Poly()
    for coef, factors in qcqp.factored_terms(w):
        term = Poly.const(coef)
        for f in factors:
            term = term * sum((Poly.const(c) * Poly.var(*idx) for idx, c in f.items()), Poly())
        total = total + term
    assert PolynomialWitness.from_poly(total, w.shape, w.bound, w.direction).terms == w.terms


def test_unknown_visibility_mode():
    with pytest.raises(qcqp.QcqpError):
        qcqp.visibility(dist.gpt_unfeasible(), mode="nope")


def test_ball_at_classical_point_is_degenerate(rng):
    p = dist.evaluate_evans_model(dist.random_evans_model(rng, deterministic=True))
    r = qcqp.ball_witness(p, time_limit=300)
    assert r.degenerate and r.bound == 0


@pytest.mark.slow
def test_ball_witness_holds_on_classical_points(rng):
    p = dist.pr_box((Fraction(10, 21), Fraction(1, 21), Fraction(10, 21)))
    r = qcqp.ball_witness(p, gap_tol=1e-4)
    assert not r.degenerate
    assert witness.evaluate_witness(r.witness, p)[1]
    assert r.point is not None and r.upper >= r.bound
    for _ in range(1000):
        q = dist.evaluate_evans_model(dist.random_evans_model(rng)).to_float()
        val, _ = witness.evaluate_witness(r.witness, q)
        assert val >= -1e-6
