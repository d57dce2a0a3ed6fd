import numpy as np
import pytest

from evanscompat import dist, quantum
from evanscompat.quantum import PovmError, SwapSetup


@pytest.mark.parametrize("d", [2, 3, 4])
def test_bell_basis_orthonormal(d):
    B = np.array(quantum.bell_basis(d))
    assert np.allclose(B @ B.conj().T, np.eye(d * d))


def test_weyl_commutation():
    d = 3
    X, Z = quantum.weyl_ops(d)
    w = np.exp(2j * np.pi / d)
    assert np.allclose(Z @ X, w * X @ Z)


def test_validate_povm_errors():
    with pytest.raises(PovmError):
        quantum.validate_povm([], 2)
    with pytest.raises(PovmError):
        quantum.validate_povm([np.eye(2)] * 2, 2)
    with pytest.raises(PovmError):
        quantum.validate_povm([np.array([[0, 1], [0, 0]]), np.eye(2)], 2)
    with pytest.raises(PovmError):
        quantum.validate_povm([np.diag([1.5, 0]), np.diag([-0.5, 1])], 2)


def test_setup_rejects_wrong_family_size():
    with pytest.raises(PovmError):
        SwapSetup(2, (quantum.basis_povm(2),), (quantum.basis_povm(2),))


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("bases", [("computational", "computational"), ("fourier", "fourier"),
                                   ("computational", "fourier")])
def test_classical_model_reproduces_swap(d, bases):
    s = SwapSetup.uniform_basis(d, *bases)
    q = quantum.swap_distribution(s)
    m = quantum.build_classical_swap_model(s)
    p = dist.evaluate_evans_model(m)
    assert np.max(np.abs(np.asarray(p.to_float().probs) - q.probs)) <= 1e-9
    assert quantum.shift_invariants(m)


@pytest.mark.parametrize("d", [2, 3])
def test_trace_formula_matches_born_rule(d, rng):
    # random projective bases per context
    fams = []
    for _ in range(2):
        fam = []
        for _ in range(d * d):
            U, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
            fam.append([np.outer(U[:, i], U[:, i].conj()) for i in range(d)])
        fams.append(tuple(fam))
    s = SwapSetup(d, *fams)
    q = quantum.swap_distribution(s).probs
    for b in range(d * d):
        assert np.allclose(quantum.conditional_ac(s, b) / (d * d), q[:, b, :], atol=1e-12)


def test_bell_outcome_uniform():
    s = SwapSetup.uniform_basis(3)
    q = quantum.swap_distribution(s).probs
    assert np.allclose(q.sum(axis=(0, 2)), 1 / 9)


def test_conjugate_povm_is_povm():
    c = quantum.basis_povm(3, "fourier")
    quantum.validate_povm(quantum.conjugate_povm(c, 1, 2, 3), 3)


def test_json_round_trip():
    s = SwapSetup.uniform_basis(2, "fourier", "computational")
    t = SwapSetup.from_json(s.to_json())
    assert np.allclose(quantum.swap_distribution(s).probs, quantum.swap_distribution(t).probs)
    with pytest.raises(PovmError):
        quantum.povm_family_from_json([[["x"]]])


def test_decomposition_failure_is_reported(rng):
    d = 2
    fam = []
    for _ in range(d * d):
        U, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
        fam.append([np.outer(U[:, i], U[:, i].conj()) for i in range(d)])
    s = SwapSetup(d, tuple(fam), SwapSetup.uniform_basis(d).c_povms)
    with pytest.raises(quantum.DecompositionNotFound):
        quantum.build_classical_swap_model(s)
