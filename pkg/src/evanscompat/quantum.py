"""Entanglement swapping in the Evans scenario and its classical simulation.

Two maximally entangled pairs ``A-B1`` and ``B2-C`` are prepared; B performs
the generalized Bell measurement on ``B1 B2`` and announces ``b = (n, m)``
(flattened to ``n * d + m``); A and C then measure POVMs that may depend on b.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .dist import EvansModel, JointDistribution

TOL = 1e-10


class PovmError(ValueError):
    pass


class DecompositionNotFound(RuntimeError):
    pass


def bell_basis(d: int) -> list[np.ndarray]:
    """``|Phi^{n,m}> = d^-1/2 sum_k w^{nk} |k, k+m>``, ordered by ``n * d + m``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    w = np.exp(2j * np.pi / d)
    out = []
    for n, m in itertools.product(range(d), repeat=2):
        v = np.zeros(d * d, complex)
        for k in range(d):
            v[k * d + (k + m) % d] = w ** (n * k)
        out.append(v / np.sqrt(d))
    return out


def weyl_ops(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Shift ``X|k> = |k+1>`` and clock ``Z|k> = w^k |k>``."""
    X = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    Z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return X, Z


def validate_povm(povm, d: int) -> None:
    if len(povm) == 0:
        raise PovmError("empty POVM")
    total = np.zeros((d, d), complex)
    for i, E in enumerate(povm):
        E = np.asarray(E, complex)
        if E.shape != (d, d):
            raise PovmError(f"element {i} has shape {E.shape}, expected {(d, d)}")
        if np.max(np.abs(E - E.conj().T)) > TOL:
            raise PovmError(f"element {i} is not Hermitian")
        if np.min(np.linalg.eigvalsh(E)) < -TOL:
            raise PovmError(f"element {i} is not positive semidefinite")
        total += E
    if np.max(np.abs(total - np.eye(d))) > TOL:
        raise PovmError("elements do not sum to the identity")


def basis_povm(d: int, basis: str = "computational") -> list[np.ndarray]:
    """Projective measurement in the computational or Fourier basis."""
    if basis == "computational":
        vecs = np.eye(d, dtype=complex)
    elif basis == "fourier":
        k = np.arange(d)
        vecs = np.exp(2j * np.pi * np.outer(k, k) / d) / np.sqrt(d)
    else:
        raise PovmError(f"unknown basis {basis!r}")
    return [np.outer(vecs[:, i], vecs[:, i].conj()) for i in range(d)]


def conjugate_povm(c_povm, n: int, m: int, d: int) -> list[np.ndarray]:
    """``Z^-n X^-m C X^m Z^n`` applied elementwise."""
    X, Z = weyl_ops(d)
    U = np.linalg.matrix_power(X, m) @ np.linalg.matrix_power(Z, n)
    return [U.conj().T @ np.asarray(E, complex) @ U for E in c_povm]


@dataclass(frozen=True)
class SwapSetup:
    d: int
    a_povms: tuple  # one POVM per b-context
    c_povms: tuple

    def __post_init__(self):
        for name, fam in (("A", self.a_povms), ("C", self.c_povms)):
            if len(fam) != self.d ** 2:
                raise PovmError(f"{name} needs one POVM per Bell outcome ({self.d ** 2})")
            sizes = {len(p) for p in fam}
            if len(sizes) != 1:
                raise PovmError(f"{name} outcome alphabet differs across contexts")
            for b, povm in enumerate(fam):
                try:
                    validate_povm(povm, self.d)
                except PovmError as exc:
                    raise PovmError(f"{name} context {b}: {exc}") from None

    @property
    def cards(self) -> tuple[int, int, int]:
        return len(self.a_povms[0]), self.d ** 2, len(self.c_povms[0])

    @classmethod
    def uniform_basis(cls, d: int, a_basis="computational", c_basis="computational") -> "SwapSetup":
        a = basis_povm(d, a_basis)
        c = basis_povm(d, c_basis)
        return cls(d, tuple(a for _ in range(d * d)), tuple(c for _ in range(d * d)))

    def to_json(self) -> dict:
        return {"d": self.d, "a_povms": povm_family_to_json(self.a_povms),
                "c_povms": povm_family_to_json(self.c_povms)}

    @classmethod
    def from_json(cls, data) -> "SwapSetup":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(int(data["d"]), povm_family_from_json(data["a_povms"]),
                   povm_family_from_json(data["c_povms"]))


def povm_family_to_json(family) -> list:
    return [[[[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(E, complex)]
             for E in povm] for povm in family]


def povm_family_from_json(data) -> tuple:
    try:
        return tuple(tuple(np.array([[complex(re, im) for re, im in row] for row in E])
                           for E in povm) for povm in data)
    except (TypeError, ValueError) as exc:
        raise PovmError(f"malformed POVM JSON: {exc}") from exc


def swap_distribution(s: SwapSetup) -> JointDistribution:
    d = s.d
    phi = np.eye(d, dtype=complex).reshape(d * d) / np.sqrt(d)
    psi = np.kron(phi, phi).reshape(d, d, d, d)  # A, B1, B2, C
    na, nb, nc = s.cards
    probs = np.zeros((na, nb, nc))
    for b, v in enumerate(bell_basis(d)):
        # unnormalized post-measurement state of A and C
        chi = np.einsum("xy,axyc->ac", v.conj().reshape(d, d), psi)
        for a, Ea in enumerate(s.a_povms[b]):
            for c, Ec in enumerate(s.c_povms[b]):
                probs[a, b, c] = np.real(np.vdot(chi, Ea @ chi @ Ec.T))
    total = probs.sum()
    if abs(total - 1) > TOL or probs.min() < -TOL:
        raise PovmError(f"Born-rule output is not a distribution (sum {total})")
    probs = np.clip(probs, 0, None)
    probs /= probs.sum()
    return JointDistribution((("A", na), ("B", nb), ("C", nc)), probs)


def conditional_ac(s: SwapSetup, b: int) -> np.ndarray:
    """``p(a, c | b) = tr(A_b^a^T C~_b^c) / d``.

    With the phase ``w^{nk}`` in :func:`bell_basis` the conjugating shift
    carries ``-n``.
    """
    d = s.d
    n, m = divmod(b, d)
    ct = conjugate_povm(s.c_povms[b], (-n) % d, m, d)
    return np.array([[np.real(np.trace(Ea.T @ Ec)) / d for Ec in ct] for Ea in s.a_povms[b]])


def _functions(dom: int, cod: int):
    return itertools.product(range(cod), repeat=dom)


def _pushforward(N, f, g, na, nc):
    out = np.zeros((na, nc))
    for i, j in zip(*np.nonzero(N)):
        out[f[i], g[j]] += N[i, j]
    return out


def _decompose(P: list[np.ndarray], d: int, tol: float):
    """Common weights N over nu = (nu_A, nu_C) in [d]^2 and per-context tables
    f_b, g_b : [d] -> outcomes with ``P_b = push(N, f_b, g_b)``.

    Candidate weights are the context distributions themselves (padded to
    d x d); each remaining context is matched by exhaustive table search.
    """
    na, nc = P[0].shape
    if na > d or nc > d:
        return None
    tables = [(f, g) for f in _functions(d, na) for g in _functions(d, nc)]
    for ref in range(len(P)):
        N = np.zeros((d, d))
        N[:na, :nc] = P[ref]
        found = []
        for Pb in P:
            hit = next(((f, g) for f, g in tables
                        if np.max(np.abs(_pushforward(N, f, g, na, nc) - Pb)) <= tol), None)
            if hit is None:
                break
            found.append(hit)
        else:
            return N, found
    return None


def build_classical_swap_model(s: SwapSetup, tol: float = 1e-9) -> EvansModel:
    """Evans model reproducing :func:`swap_distribution`.

    Hidden values ``lambda, mu`` are uniform on [d]. With ``b = (b1, b2)``:
    ``p(b | lambda, mu) = N(lambda + b1, mu + b2)``, ``a = f_b(lambda + b1)``
    and ``c = g_b(mu + b2)``, all shifts mod d.
    """
    d = s.d
    na, nb, nc = s.cards
    P = [conditional_ac(s, b) for b in range(nb)]
    found = _decompose(P, d, tol)
    if found is None:
        raise DecompositionNotFound(
            f"no decomposition over nu in [{d}]^2 with deterministic tables for this setup")
    N, tables = found
    p_b = np.zeros((nb, d, d))
    p_a = np.zeros((na, nb, d))
    p_c = np.zeros((nc, nb, d))
    for b in range(nb):
        b1, b2 = divmod(b, d)
        f, g = tables[b]
        for lam in range(d):
            p_a[f[(lam + b1) % d], b, lam] = 1.0
        for mu in range(d):
            p_c[g[(mu + b2) % d], b, mu] = 1.0
        for lam, mu in itertools.product(range(d), repeat=2):
            p_b[b, lam, mu] = N[(lam + b1) % d, (mu + b2) % d]
    u = np.full(d, 1.0 / d)
    return EvansModel(u, u.copy(), p_a, p_b, p_c)


def shift_invariants(m: EvansModel, tol: float = 1e-9) -> bool:
    """Rows of p(b | lambda, mu) sum to one and, with p(b) from the model,
    ``sum_b p(lambda, mu | b) p(b) = p(lambda) p(mu)``."""
    pb_lm = np.asarray(m.p_b_given_lambda_mu, float)
    pl, pm = np.asarray(m.p_lambda, float), np.asarray(m.p_mu, float)
    if np.max(np.abs(pb_lm.sum(axis=0) - 1)) > tol:
        return False
    joint = pb_lm * pl[None, :, None] * pm[None, None, :]  # p(b, lambda, mu)
    return bool(np.max(np.abs(joint.sum(axis=0) - np.outer(pl, pm))) <= tol)
