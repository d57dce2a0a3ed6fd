"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line with the
measured values; tolerances live in :mod:`evanscompat.acceptance`."""
import pytest

from evanscompat import acceptance


def report(outcome, capsys):
    with capsys.disabled():
        print("\n" + outcome.line())
    assert outcome.passed, outcome.line()


def test_criterion_1_explicit_pr_model(capsys):
    report(acceptance.explicit_model(), capsys)


def test_criterion_2_swap_simulation(capsys):
    report(acceptance.swap_simulation(), capsys)


@pytest.mark.slow
def test_criterion_3_instrumental_maxima(capsys):
    report(acceptance.instrumental_bounds(), capsys)


@pytest.mark.slow
def test_criterion_4_pr_box_visibility(capsys):
    report(acceptance.pr_visibility(), capsys)


@pytest.mark.slow
def test_criterion_5_ball_witness(capsys):
    report(acceptance.ball(), capsys)


def test_criterion_6_inflation_column_counts(capsys):
    report(acceptance.inflation_counts(), capsys)


def test_criterion_7_inflation_detection(capsys):
    report(acceptance.inflation_detection(), capsys)


@pytest.mark.extended
def test_criterion_7_order3_refutation(capsys):
    out = acceptance.inflation_detection(extended=True)
    report(out, capsys)
    assert out.parts and out.parts[0]["passed"], out.line()


def test_criterion_8_topology_constraints(capsys):
    report(acceptance.gpt_topology(), capsys)


@pytest.mark.slow
def test_criterion_9_property_suites(capsys):
    report(acceptance.property_suites(seed=0), capsys)
