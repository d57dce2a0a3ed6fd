from fractions import Fraction

import numpy as np
import pytest

from evanscompat import dist, witness
from evanscompat.witness import Poly, PolynomialWitness, WitnessError


def pr():
    return dist.pr_box((Fraction(10, 21), Fraction(1, 21), Fraction(10, 21)))


def test_poly_arithmetic_merges_terms():
    x = Poly.var(0, 0, 0)
    poly = x * x + 2 * x - x * x + 3
    w = PolynomialWitness.from_poly(poly, (2, 2, 2), 0, "<=")
    assert w.degree == 1
    p = dist.point_mass((2, 2, 2))
    assert witness.evaluate_witness(w, p) == (Fraction(5), True)


def test_shape_mismatch_rejected():
    with pytest.raises(WitnessError):
        witness.evaluate_witness(witness.pearl(), pr())


def test_json_round_trip_every_preset():
    for name in witness.PRESETS:
        w = witness.preset(name)
        assert PolynomialWitness.from_json(w.to_json()) == w


def test_unknown_preset():
    with pytest.raises(WitnessError):
        witness.preset("nope")


def test_cubic_witness_at_pr_box():
    val, violated = witness.evaluate_witness(witness.cubic_inflation(), pr())
    assert violated
    assert abs(float(val) - Fraction(1, 3) - 3.2e-3) <= 2e-4


def test_printed_orientation_matches_relabelled_input():
    q = dist.pr_box((Fraction(10, 21), Fraction(10, 21), Fraction(1, 21)))
    a = witness.evaluate_witness(witness.cubic_inflation_printed(), q)[0]
    b = witness.evaluate_witness(witness.cubic_inflation(), pr())[0]
    assert a == b


def test_relabel_rejects_non_permutation():
    with pytest.raises(WitnessError):
        witness.relabel(witness.pearl(), ((0, 0), (0, 1), (0, 1)))


def test_gpt_inequality_value():
    assert witness.evaluate_witness(witness.gpt_topology(), dist.gpt_unfeasible()) == (Fraction(3, 2), True)


def test_gpt_inequality_holds_for_classical_models(rng):
    for _ in range(200):
        p = dist.evaluate_evans_model(dist.random_evans_model(rng, cards=(2, 2, 2)))
        assert not witness.evaluate_witness(witness.gpt_topology(), p)[1]


def test_gw_witness_sign_at_pr_box():
    val, violated = witness.evaluate_witness(witness.gw(), pr())
    assert violated
    assert abs(float(val) + 0.00061) <= 1e-4


def test_pr_support_assumption():
    assert witness.pr_support_assumption(pr())
    assert not witness.pr_support_assumption(dist.mix_with_uniform(pr(), Fraction(1, 2)))


def test_noise_threshold_inside_unit_interval():
    v = witness.noise_threshold(witness.gpt_topology(), dist.gpt_unfeasible())
    assert 0 < v < 1
    q = dist.mix_with_uniform(dist.gpt_unfeasible().to_float(), v)
    val, _ = witness.evaluate_witness(witness.gpt_topology(), q)
    assert abs(val - 1) < 1e-8
    assert witness.noise_threshold(witness.gpt_topology(), dist.point_mass((2, 2, 2))) is None
