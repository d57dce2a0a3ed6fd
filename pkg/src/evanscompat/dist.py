"""Discrete joint distributions, latent-variable models of the Evans and
bilocal scenarios, and the explicit distributions used throughout the package.

Entries are either exact (``fractions.Fraction`` in an object array) or float.
Exact is the default for anything built from rational inputs.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

FLOAT_TOL = 1e-12


class DistributionError(ValueError):
    pass


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(x).limit_denominator(10**12) if isinstance(x, float) else Fraction(x)


def _is_exact(arr: np.ndarray) -> bool:
    return arr.dtype == object


def exact_array(values, shape=None) -> np.ndarray:
    flat = [to_fraction(v) for v in np.asarray(values, dtype=object).ravel()]
    out = np.empty(len(flat), dtype=object)
    out[:] = flat
    return out.reshape(shape if shape is not None else np.shape(values))


@dataclass(frozen=True, eq=False)
class JointDistribution:
    variables: tuple[tuple[str, int], ...]
    probs: np.ndarray

    def __post_init__(self):
        variables = tuple((str(n), int(k)) for n, k in self.variables)
        object.__setattr__(self, "variables", variables)
        names = [n for n, _ in variables]
        if len(set(names)) != len(names):
            raise DistributionError("duplicate variable names")
        shape = tuple(k for _, k in variables)
        if any(k < 1 for k in shape):
            raise DistributionError("cardinalities must be positive")
        probs = self.probs
        if not isinstance(probs, np.ndarray):
            probs = np.asarray(probs)
        if probs.dtype != object:
            probs = probs.astype(float)
        if probs.size != int(np.prod(shape, dtype=int)):
            raise DistributionError(f"expected {int(np.prod(shape))} entries, got {probs.size}")
        probs = probs.reshape(shape)
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        if self.exact:
            if any(v < 0 for v in probs.ravel()):
                raise DistributionError("negative probability")
            if sum(probs.ravel(), Fraction(0)) != 1:
                raise DistributionError("probabilities do not sum to 1")
        else:
            if np.any(probs < -FLOAT_TOL):
                raise DistributionError("negative probability")
            if abs(probs.sum() - 1.0) > FLOAT_TOL:
                raise DistributionError(f"probabilities sum to {probs.sum()!r}, not 1")

    # -- construction --------------------------------------------------------
    @classmethod
    def from_array(cls, names: Sequence[str], probs, exact: bool | None = None) -> "JointDistribution":
        arr = np.asarray(probs, dtype=object if exact else None)
        if exact is None:
            exact = arr.dtype == object or np.issubdtype(arr.dtype, np.integer)
        if exact:
            arr = exact_array(arr)
        else:
            arr = np.asarray(arr, dtype=float)
        return cls(tuple(zip(names, arr.shape)), arr)

    @classmethod
    def uniform(cls, variables: Sequence[tuple[str, int]], exact: bool = True) -> "JointDistribution":
        shape = tuple(k for _, k in variables)
        n = int(np.prod(shape))
        if exact:
            arr = exact_array([Fraction(1, n)] * n, shape)
        else:
            arr = np.full(shape, 1.0 / n)
        return cls(tuple(variables), arr)

    # -- accessors -----------------------------------------------------------
    @property
    def exact(self) -> bool:
        return _is_exact(self.probs)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.variables]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(k for _, k in self.variables)

    def __getitem__(self, index):
        return self.probs[index]

    def to_float(self) -> "JointDistribution":
        if not self.exact:
            return self
        return JointDistribution(self.variables, np.vectorize(float, otypes=[float])(self.probs))

    def to_exact(self, max_denominator: int = 10**12) -> "JointDistribution":
        if self.exact:
            return self
        flat = [Fraction(float(v)).limit_denominator(max_denominator) for v in self.probs.ravel()]
        # push the rounding residue onto the largest entry
        k = int(np.argmax(self.probs.ravel()))
        flat[k] += 1 - sum(flat, Fraction(0))
        return JointDistribution(self.variables, exact_array(flat, self.shape))

    def reorder(self, names: Sequence[str]) -> "JointDistribution":
        if sorted(names) != sorted(self.names):
            raise DistributionError("reorder must name every variable exactly once")
        perm = [self.names.index(n) for n in names]
        return JointDistribution(tuple(self.variables[i] for i in perm),
                                 np.transpose(self.probs, perm).copy())

    def allclose(self, other: "JointDistribution", atol: float = 1e-9) -> bool:
        if self.variables != other.variables:
            return False
        a = np.asarray(self.to_float().probs, dtype=float)
        b = np.asarray(other.to_float().probs, dtype=float)
        return bool(np.all(np.abs(a - b) <= atol))

    def __eq__(self, other):
        if not isinstance(other, JointDistribution):
            return NotImplemented
        if self.variables != other.variables:
            return False
        return bool(np.all(self.probs == other.probs))

    __hash__ = None

    # -- serialization -------------------------------------------------------
    def to_json(self) -> dict:
        if self.exact:
            probs = [str(v) for v in self.probs.ravel()]
        else:
            probs = [repr(float(v)) for v in self.probs.ravel()]
        return {"variables": [{"name": n, "card": k} for n, k in self.variables],
                "probs": probs}

    @classmethod
    def from_json(cls, data: dict | str) -> "JointDistribution":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            variables = tuple((v["name"], int(v["card"])) for v in data["variables"])
            raw = list(data["probs"])
        except (KeyError, TypeError) as exc:
            raise DistributionError(f"malformed distribution JSON: missing {exc}") from exc
        vals = []
        for i, r in enumerate(raw):
            try:
                vals.append(to_fraction(r) if isinstance(r, (str, int)) else Fraction(str(r)))
            except (ValueError, ZeroDivisionError) as exc:
                raise DistributionError(f"probs[{i}]: cannot parse {r!r}") from exc
        shape = tuple(k for _, k in variables)
        if len(vals) != int(np.prod(shape)):
            raise DistributionError(f"probs has {len(vals)} entries, expected {int(np.prod(shape))}")
        if sum(vals) != 1 and abs(float(sum(vals)) - 1) <= FLOAT_TOL * len(vals):
            # decimal output of a float distribution
            return cls(variables, np.array([float(v) for v in vals]).reshape(shape))
        return cls(variables, exact_array(vals, shape))


# -- basic operations ------------------------------------------------------------

def marginalize(p: JointDistribution, keep: Iterable[str]) -> JointDistribution:
    keep = list(keep)
    for k in keep:
        if k not in p.names:
            raise DistributionError(f"unknown variable {k!r}")
    kept = [n for n in p.names if n in keep]
    axes = tuple(i for i, n in enumerate(p.names) if n not in keep)
    arr = p.probs.sum(axis=axes) if axes else p.probs.copy()
    arr = np.asarray(arr, dtype=object if p.exact else float)
    if not kept:
        arr = arr.reshape(())
    variables = tuple(v for v in p.variables if v[0] in kept)
    return JointDistribution(variables, arr).reorder([n for n in keep]) if kept else \
        JointDistribution((), arr)


def mix_with_uniform(p: JointDistribution, v) -> JointDistribution:
    """``v * p + (1 - v) * uniform``."""
    if not 0 <= v <= 1:
        raise DistributionError(f"visibility {v} outside [0, 1]")
    n = p.probs.size
    if p.exact and not isinstance(v, float):
        v = to_fraction(v)
        flat = [v * x + (1 - v) * Fraction(1, n) for x in p.probs.ravel()]
        arr = exact_array(flat, p.shape)
    else:
        arr = float(v) * np.asarray(p.to_float().probs, dtype=float) + (1 - float(v)) / n
    return JointDistribution(p.variables, arr)


def bonet_wiring(a: int, b: int) -> int:
    """f(0,b)=0, f(1,b)=b, f(2,b)=b+1 (mod 2)."""
    return (0, b, b + 1)[a] % 2


def pr_box(p_a: Sequence) -> JointDistribution:
    """PR-box wired by a ternary instrument: p(a,b,c) = p_a(a)/2 if
    c = b + f(a,b) mod 2 and 0 otherwise."""
    if len(p_a) != 3:
        raise DistributionError("p_a must have three entries")
    exact = all(not isinstance(x, float) for x in p_a)
    pa = [to_fraction(x) for x in p_a] if exact else [float(x) for x in p_a]
    if any(x < 0 for x in pa) or (sum(pa) != 1 if exact else abs(sum(pa) - 1) > FLOAT_TOL):
        raise DistributionError("p_a is not a probability vector")
    zero = Fraction(0) if exact else 0.0
    vals = [pa[a] / 2 if c == (b + bonet_wiring(a, b)) % 2 else zero
            for a, b, c in itertools.product(range(3), range(2), range(2))]
    arr = exact_array(vals, (3, 2, 2)) if exact else np.array(vals).reshape(3, 2, 2)
    return JointDistribution((("A", 3), ("B", 2), ("C", 2)), arr)


def point_mass(shape=(3, 2, 2), at=(0, 0, 0), names=("A", "B", "C")) -> JointDistribution:
    vals = [Fraction(1) if idx == tuple(at) else Fraction(0) for idx in np.ndindex(*shape)]
    return JointDistribution(tuple(zip(names, shape)), exact_array(vals, shape))


def gpt_unfeasible() -> JointDistribution:
    """Binary p with p(0,0,0) = p(1,0,1) = 1/2."""
    vals = [Fraction(0)] * 8
    vals[0] = vals[5] = Fraction(1, 2)
    return JointDistribution((("A", 2), ("B", 2), ("C", 2)), exact_array(vals, (2, 2, 2)))


def check_conditional_independence(p: JointDistribution, X, Y, Z=(), tol: float = 1e-9) -> bool:
    """p(X,Y|Z) = p(X|Z) p(Y|Z) on every Z-context of positive probability.
    Exact comparison when ``p`` is exact."""
    X, Y, Z = list(X), list(Y), list(Z)
    if set(X) & set(Y) or set(X) & set(Z) or set(Y) & set(Z):
        raise DistributionError("variable sets must be disjoint")
    pxyz = marginalize(p, X + Y + Z).probs
    nx, ny = len(X), len(Y)
    # p(x,y,z) p(z) == p(x,z) p(y,z), via keepdims sums so shapes broadcast
    pxz = pxyz.sum(axis=tuple(range(nx, nx + ny)), keepdims=True) if ny else pxyz
    pyz = pxyz.sum(axis=tuple(range(nx)), keepdims=True) if nx else pxyz
    pz = pxz.sum(axis=tuple(range(nx)), keepdims=True) if nx else pxz
    for idx in np.ndindex(*pxyz.shape):
        x, y, z = idx[:nx], idx[nx:nx + ny], idx[nx + ny:]
        lhs = pxyz[idx] * pz[(0,) * (nx + ny) + z]
        rhs = pxz[x + (0,) * ny + z] * pyz[(0,) * nx + y + z]
        if p.exact:
            if lhs != rhs:
                return False
        elif abs(float(lhs) - float(rhs)) > tol:
            return False
    return True


# -- latent variable models -----------------------------------------------------

def _stochastic(table: np.ndarray, name: str, exact: bool) -> None:
    sums = table.sum(axis=0)
    if exact:
        ok = all(s == 1 for s in np.ravel(sums)) and all(v >= 0 for v in table.ravel())
    else:
        ok = np.allclose(np.asarray(sums, float), 1.0, atol=1e-9) and np.all(table >= -1e-12)
    if not ok:
        raise DistributionError(f"{name} is not stochastic in its first axis")


@dataclass(frozen=True, eq=False)
class EvansModel:
    """Classical Evans model.

    Tables are indexed output-first:
    ``p_a_given_b_lambda[a, b, l]``, ``p_c_given_b_mu[c, b, m]``,
    ``p_b_given_lambda_mu[b, l, m]``.
    """
    p_lambda: np.ndarray
    p_mu: np.ndarray
    p_a_given_b_lambda: np.ndarray
    p_b_given_lambda_mu: np.ndarray
    p_c_given_b_mu: np.ndarray

    def __post_init__(self):
        exact = self.exact
        nl, nm = len(self.p_lambda), len(self.p_mu)
        _stochastic(self.p_lambda, "p_lambda", exact)
        _stochastic(self.p_mu, "p_mu", exact)
        _stochastic(self.p_a_given_b_lambda, "p(a|b,lambda)", exact)
        _stochastic(self.p_b_given_lambda_mu, "p(b|lambda,mu)", exact)
        _stochastic(self.p_c_given_b_mu, "p(c|b,mu)", exact)
        nb = self.p_b_given_lambda_mu.shape[0]
        if self.p_b_given_lambda_mu.shape != (nb, nl, nm):
            raise DistributionError("p(b|lambda,mu) has the wrong shape")
        if self.p_a_given_b_lambda.shape[1:] != (nb, nl):
            raise DistributionError("p(a|b,lambda) has the wrong shape")
        if self.p_c_given_b_mu.shape[1:] != (nb, nm):
            raise DistributionError("p(c|b,mu) has the wrong shape")

    @property
    def exact(self) -> bool:
        return self.p_lambda.dtype == object

    @property
    def card_lambda(self) -> int:
        return len(self.p_lambda)

    @property
    def card_mu(self) -> int:
        return len(self.p_mu)

    @property
    def cards(self) -> tuple[int, int, int]:
        return (self.p_a_given_b_lambda.shape[0], self.p_b_given_lambda_mu.shape[0],
                self.p_c_given_b_mu.shape[0])


def evaluate_evans_model(m: EvansModel, names=("A", "B", "C")) -> JointDistribution:
    """p(a,b,c) = sum_{l,m} p(l) p(m) p(a|b,l) p(b|l,m) p(c|b,m)."""
    arr = np.einsum("l,m,abl,blm,cbm->abc", m.p_lambda, m.p_mu, m.p_a_given_b_lambda,
                    m.p_b_given_lambda_mu, m.p_c_given_b_mu,
                    optimize=not m.exact)
    if not m.exact:
        arr = np.clip(arr, 0.0, None)
        arr = arr / arr.sum()
    return JointDistribution(tuple(zip(names, arr.shape)), arr)


def deterministic_table(func, out_card: int, *in_cards: int, exact: bool = True) -> np.ndarray:
    """Table T[out, *inputs] = 1 iff out == func(*inputs)."""
    one, zero = (Fraction(1), Fraction(0)) if exact else (1.0, 0.0)
    t = np.empty((out_card,) + in_cards, dtype=object if exact else float)
    t[...] = zero
    for idx in np.ndindex(*in_cards):
        t[(func(*idx),) + idx] = one
    return t


def explicit_pr_model() -> EvansModel:
    """Classical model reproducing pr_box with a uniform instrument.

    lambda = (l0, l1) in {0,1,2}^2 uniform on {01, 11, 20, 22};
    mu = (m0, m1) in {0,1}^2 with p(10) = 1/3, p(01) = 2/3;
    a = l_b, c = m_b and b is the unique solution of b = m_b + f(l_b, b).
    """
    lams = list(itertools.product(range(3), repeat=2))
    mus = list(itertools.product(range(2), repeat=2))
    p_lambda = exact_array([Fraction(1, 4) if l in {(0, 1), (1, 1), (2, 0), (2, 2)} else 0
                            for l in lams])
    p_mu = exact_array([{(1, 0): Fraction(1, 3), (0, 1): Fraction(2, 3)}.get(m, 0) for m in mus])

    def bob(li, mi):
        lam, mu = lams[li], mus[mi]
        sols = [b for b in range(2) if b == (mu[b] + bonet_wiring(lam[b], b)) % 2]
        # outside the prior support the rule may be ambiguous; pick the smallest solution
        return sols[0] if sols else 0

    p_a = deterministic_table(lambda b, li: lams[li][b], 3, 2, len(lams))
    p_c = deterministic_table(lambda b, mi: mus[mi][b], 2, 2, len(mus))
    p_b = deterministic_table(bob, 2, len(lams), len(mus))
    return EvansModel(p_lambda, p_mu, p_a, p_b, p_c)


def explicit_pr_model_unique() -> bool:
    """Every (lambda, mu) in the prior support has exactly one consistent b."""
    m = explicit_pr_model()
    lams = list(itertools.product(range(3), repeat=2))
    mus = list(itertools.product(range(2), repeat=2))
    for li, lam in enumerate(lams):
        for mi, mu in enumerate(mus):
            if m.p_lambda[li] == 0 or m.p_mu[mi] == 0:
                continue
            sols = [b for b in range(2) if b == (mu[b] + bonet_wiring(lam[b], b)) % 2]
            if len(sols) != 1:
                return False
    return True


def random_evans_model(rng: np.random.Generator, cards=(3, 2, 2), card_lambda: int = 3,
                       card_mu: int = 3, deterministic: bool = False,
                       instrumental: bool = False) -> EvansModel:
    """Random float model. ``instrumental`` makes A a function of lambda only
    (card_lambda is then forced to |A|, a = lambda)."""
    na, nb, nc = cards

    def stoch(shape):
        if deterministic:
            out = np.zeros(shape)
            idx = rng.integers(0, shape[0], size=shape[1:])
            for pos in np.ndindex(*shape[1:]):
                out[(idx[pos],) + pos] = 1.0
            return out
        return np.moveaxis(rng.dirichlet(np.full(shape[0], 0.5), size=shape[1:]), -1, 0)

    if instrumental:
        card_lambda = na
        p_a = np.zeros((na, nb, na))
        for l in range(na):
            p_a[l, :, l] = 1.0
    else:
        p_a = stoch((na, nb, card_lambda))
    return EvansModel(rng.dirichlet(np.ones(card_lambda)), rng.dirichlet(np.ones(card_mu)),
                      p_a, stoch((nb, card_lambda, card_mu)), stoch((nc, nb, card_mu)))


# -- bilocal scenario -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BilocalModel:
    """Bilocal model; ``p_a_given_x_lambda[a, x, l]`` and ``p_c_given_z_mu[c, z, m]``."""
    p_lambda: np.ndarray
    p_mu: np.ndarray
    p_a_given_x_lambda: np.ndarray
    p_b_given_lambda_mu: np.ndarray
    p_c_given_z_mu: np.ndarray

    def __post_init__(self):
        exact = self.p_lambda.dtype == object
        _stochastic(self.p_lambda, "p_lambda", exact)
        _stochastic(self.p_mu, "p_mu", exact)
        _stochastic(self.p_a_given_x_lambda, "p(a|x,lambda)", exact)
        _stochastic(self.p_b_given_lambda_mu, "p(b|lambda,mu)", exact)
        _stochastic(self.p_c_given_z_mu, "p(c|z,mu)", exact)


def evaluate_bilocal_model(m: BilocalModel) -> JointDistribution:
    """Conditional family p(a,b,c|x,z) stored as a joint over (A,B,C,X,Z)
    with entries p(a,b,c|x,z) (each (x,z) slice sums to one)."""
    arr = np.einsum("l,m,axl,blm,czm->abcxz", m.p_lambda, m.p_mu, m.p_a_given_x_lambda,
                    m.p_b_given_lambda_mu, m.p_c_given_z_mu,
                    optimize=m.p_lambda.dtype != object)
    nx, nz = arr.shape[3], arr.shape[4]
    # stored as the joint with uniform inputs so the tensor is a distribution
    if arr.dtype == object:
        arr = arr * Fraction(1, nx * nz)
    else:
        arr = arr / (nx * nz)
    return JointDistribution(tuple(zip(("A", "B", "C", "X", "Z"), arr.shape)), arr)


def project_bilocal(p_b: JointDistribution) -> JointDistribution:
    """p_E(a,b,c) = p_B(a,b,c | x=b, z=b).

    ``p_b`` is the joint over (A,B,C,X,Z) with uniform inputs as produced by
    :func:`evaluate_bilocal_model`; the conditional is recovered by scaling
    with |X||Z|.
    """
    if p_b.names != ["A", "B", "C", "X", "Z"]:
        p_b = p_b.reorder(["A", "B", "C", "X", "Z"])
    na, nb, nc, nx, nz = p_b.shape
    if not nx == nz == nb:
        raise DistributionError("projection needs |X| = |Z| = |B|")
    arr = np.empty((na, nb, nc), dtype=p_b.probs.dtype)
    scale = Fraction(nx * nz) if p_b.exact else float(nx * nz)
    for b in range(nb):
        arr[:, b, :] = p_b.probs[:, b, :, b, b] * scale
    return JointDistribution((("A", na), ("B", nb), ("C", nc)), arr)


def lift_evans_model(m: EvansModel) -> BilocalModel:
    """Bilocal model with p(a|x,lambda) := p(a|b=x,lambda) and likewise for C."""
    return BilocalModel(m.p_lambda, m.p_mu, m.p_a_given_b_lambda, m.p_b_given_lambda_mu,
                        m.p_c_given_b_mu)
