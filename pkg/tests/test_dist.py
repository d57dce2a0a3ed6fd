from fractions import Fraction

import numpy as np
import pytest

from evanscompat import dist
from evanscompat.dist import JointDistribution


def test_pr_box_exact_entries():
    p = dist.pr_box((Fraction(10, 21), Fraction(1, 21), Fraction(10, 21)))
    assert p.exact
    assert p.probs[0, 0, 0] == Fraction(5, 21)
    assert p.probs[1, 0, 0] == Fraction(1, 42)
    assert p.probs[1, 0, 1] == 0
    assert sum(p.probs.ravel()) == 1


def test_pr_box_rejects_bad_marginal():
    with pytest.raises(dist.DistributionError):
        dist.pr_box((Fraction(1, 2), Fraction(1, 2), Fraction(1, 2)))


def test_bonet_wiring_table():
    assert [dist.bonet_wiring(a, b) for a in range(3) for b in range(2)] == [0, 0, 0, 1, 1, 0]


def test_negative_entries_rejected():
    with pytest.raises(dist.DistributionError):
        JointDistribution((("A", 2),), [1.5, -0.5])


def test_marginalize_and_reorder():
    p = dist.pr_box((Fraction(1, 3),) * 3)
    pa = dist.marginalize(p, ["A"])
    assert list(pa.probs) == [Fraction(1, 3)] * 3
    pcb = dist.marginalize(p, ["C", "B"])
    assert pcb.names == ["C", "B"]
    assert pcb.probs[0, 1] == Fraction(1, 6)


def test_mix_with_uniform_exact():
    p = dist.pr_box((Fraction(1, 3),) * 3)
    q = dist.mix_with_uniform(p, Fraction(4, 5))
    assert q.probs[0, 0, 0] == Fraction(4, 5) * Fraction(1, 6) + Fraction(1, 5) * Fraction(1, 12)
    with pytest.raises(dist.DistributionError):
        dist.mix_with_uniform(p, 1.5)


def test_json_round_trip_exact_and_float():
    p = dist.pr_box((Fraction(10, 21), Fraction(1, 21), Fraction(10, 21)))
    assert JointDistribution.from_json(p.to_json()) == p
    f = p.to_float()
    g = JointDistribution.from_json(f.to_json())
    assert np.allclose(np.asarray(g.to_float().probs, float), f.probs)


def test_malformed_json():
    with pytest.raises(dist.DistributionError):
        JointDistribution.from_json({"variables": [{"name": "A"}], "probs": ["1"]})


def test_explicit_pr_model_is_pr_box():
    p = dist.evaluate_evans_model(dist.explicit_pr_model())
    assert p == dist.pr_box((Fraction(1, 3),) * 3)
    assert dist.explicit_pr_model_unique()


def test_lift_then_project_recovers_model(rng):
    m = dist.random_evans_model(rng)
    p = dist.evaluate_evans_model(m)
    back = dist.project_bilocal(dist.evaluate_bilocal_model(dist.lift_evans_model(m)))
    assert np.allclose(back.to_float().probs, p.to_float().probs, atol=1e-12)


def test_bilocal_inputs_uniform_in_joint(rng):
    m = dist.lift_evans_model(dist.random_evans_model(rng))
    pb = dist.evaluate_bilocal_model(m)
    slices = np.asarray(pb.probs, float).sum(axis=(0, 1, 2))
    assert np.allclose(slices, 1 / slices.size)


def test_conditional_independences_of_pr_box():
    p = dist.pr_box((Fraction(1, 3),) * 3)
    assert dist.check_conditional_independence(p, ["A"], ["B"])
    assert not dist.check_conditional_independence(p, ["B"], ["C"])
    assert not dist.check_conditional_independence(p, ["A"], ["C"], ["B"])


def test_random_models_are_normalized(rng):
    for det in (False, True):
        p = dist.evaluate_evans_model(dist.random_evans_model(rng, deterministic=det))
        assert abs(float(np.asarray(p.probs, float).sum()) - 1) < 1e-12


def test_gpt_unfeasible_point():
    p = dist.gpt_unfeasible()
    assert p.probs[0, 0, 0] == p.probs[1, 0, 1] == Fraction(1, 2)
