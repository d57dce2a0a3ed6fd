"""Polynomial inequalities in the entries of p(a,b,c).

A witness is ``sum_k coef_k * prod_{idx in mono_k} p[idx]  (<= | >=)  bound``.
The constant term is the monomial ``()``.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dist import JointDistribution, to_fraction

Index = tuple[int, ...]
Monomial = tuple[Index, ...]


class WitnessError(ValueError):
    pass


class Poly:
    """Tiny sparse polynomial over p-entries, used to assemble presets."""

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        self.terms: dict[Monomial, Fraction] = {}
        for m, c in (terms or {}).items():
            if c != 0:
                self.terms[tuple(sorted(m))] = self.terms.get(tuple(sorted(m)), 0) + c

    @classmethod
    def var(cls, *idx: int) -> "Poly":
        return cls({(tuple(idx),): Fraction(1)})

    @classmethod
    def const(cls, c) -> "Poly":
        return cls({(): to_fraction(c)})

    def _coerce(self, other) -> "Poly":
        return other if isinstance(other, Poly) else Poly.const(other)

    def __add__(self, other):
        out = defaultdict(Fraction, self.terms)
        for m, c in self._coerce(other).terms.items():
            out[m] += c
        return Poly({m: c for m, c in out.items() if c != 0})

    __radd__ = __add__

    def __neg__(self):
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out: dict[Monomial, Fraction] = defaultdict(Fraction)
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                out[tuple(sorted(m1 + m2))] += c1 * c2
        return Poly({m: c for m, c in out.items() if c != 0})

    __rmul__ = __mul__


def marginal_poly(shape: Sequence[int], axis: int, value: int) -> Poly:
    """p_X(value) for the variable at ``axis`` as a sum of entries."""
    total = Poly()
    for idx in np.ndindex(*shape):
        if idx[axis] == value:
            total = total + Poly.var(*idx)
    return total


@dataclass(frozen=True)
class PolynomialWitness:
    shape: tuple[int, ...]
    terms: tuple[tuple[Fraction, Monomial], ...]
    bound: Fraction
    direction: str = "<="
    name: str = ""

    def __post_init__(self):
        if self.direction not in ("<=", ">="):
            raise WitnessError(f"direction must be '<=' or '>=', got {self.direction!r}")
        object.__setattr__(self, "shape", tuple(int(k) for k in self.shape))
        object.__setattr__(self, "bound", to_fraction(self.bound))
        clean = []
        for coef, mono in self.terms:
            mono = tuple(sorted(tuple(int(i) for i in idx) for idx in mono))
            for idx in mono:
                if len(idx) != len(self.shape) or any(not 0 <= i < k for i, k in zip(idx, self.shape)):
                    raise WitnessError(f"index {idx} invalid for shape {self.shape}")
            clean.append((to_fraction(coef), mono))
        object.__setattr__(self, "terms", tuple(sorted(clean, key=lambda t: (len(t[1]), t[1]))))

    @classmethod
    def from_poly(cls, poly: Poly, shape, bound, direction="<=", name="") -> "PolynomialWitness":
        return cls(tuple(shape), tuple((c, m) for m, c in poly.terms.items()), bound, direction, name)

    @property
    def degree(self) -> int:
        return max((len(m) for _, m in self.terms), default=0)

    def to_poly(self) -> Poly:
        return Poly({m: c for c, m in self.terms})

    def to_json(self) -> dict:
        return {"name": self.name, "shape": list(self.shape), "direction": self.direction,
                "bound": str(self.bound),
                "terms": [{"coef": str(c), "monomial": [list(i) for i in m]} for c, m in self.terms]}

    @classmethod
    def from_json(cls, data: dict | str) -> "PolynomialWitness":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            terms = tuple((to_fraction(t["coef"]), tuple(tuple(i) for i in t["monomial"]))
                          for t in data["terms"])
            return cls(tuple(data["shape"]), terms, to_fraction(data["bound"]),
                       data.get("direction", "<="), data.get("name", ""))
        except (KeyError, TypeError) as exc:
            raise WitnessError(f"malformed witness JSON: {exc}") from exc


def evaluate_witness(w: PolynomialWitness, p: JointDistribution):
    """Return ``(value, violated)``; exact when ``p`` is exact."""
    if tuple(p.shape) != w.shape:
        raise WitnessError(f"witness shape {w.shape} does not match distribution shape {p.shape}")
    arr = p.probs
    if p.exact:
        value = Fraction(0)
        for coef, mono in w.terms:
            term = coef
            for idx in mono:
                term *= arr[idx]
            value += term
    else:
        value = 0.0
        for coef, mono in w.terms:
            term = float(coef)
            for idx in mono:
                term *= float(arr[idx])
            value += term
    bound = w.bound if p.exact else float(w.bound)
    violated = value > bound if w.direction == "<=" else value < bound
    return value, bool(violated)


def relabel(w: PolynomialWitness, perms: Sequence[Sequence[int]], name: str | None = None) -> PolynomialWitness:
    """Apply outcome relabelings ``x -> perms[axis][x]`` to every index."""
    if len(perms) != len(w.shape):
        raise WitnessError("one permutation per variable required")
    for perm, k in zip(perms, w.shape):
        if sorted(perm) != list(range(k)):
            raise WitnessError(f"{perm} is not a permutation of range({k})")
    terms = tuple((c, tuple(tuple(perms[ax][i] for ax, i in enumerate(idx)) for idx in m))
                  for c, m in w.terms)
    return PolynomialWitness(w.shape, terms, w.bound, w.direction, w.name if name is None else name)


# -- presets ---------------------------------------------------------------------

def pearl() -> PolynomialWitness:
    """Binary instrumental inequality; A is the instrument, (B, C) the
    treatment/outcome pair. ``P = p(0,1,0) pA(1) + p(1,1,1) pA(0) - pA(0) pA(1) <= 0``."""
    shape = (2, 2, 2)
    pa = [marginal_poly(shape, 0, a) for a in range(2)]
    poly = Poly.var(0, 1, 0) * pa[1] + Poly.var(1, 1, 1) * pa[0] - pa[0] * pa[1]
    return PolynomialWitness.from_poly(poly, shape, 0, "<=", "pearl")


def bonet() -> PolynomialWitness:
    """Ternary-instrument inequality, cubic in p."""
    shape = (3, 2, 2)
    pa = [marginal_poly(shape, 0, a) for a in range(3)]
    v = Poly.var
    poly = (v(0, 1, 0) * pa[1] * pa[2] - v(1, 1, 0) * pa[0] * pa[2] - v(1, 1, 1) * pa[0] * pa[2]
            - v(2, 0, 1) * pa[0] * pa[1] - v(2, 1, 0) * pa[0] * pa[1])
    return PolynomialWitness.from_poly(poly, shape, 0, "<=", "bonet")


# constant kept as the reported decimal
GW_CONSTANT = Fraction("0.22728")


def gw() -> PolynomialWitness:
    """Quadratic ball witness around the PR-box with p_A = (10/21, 1/21, 10/21)."""
    shape = (3, 2, 2)
    poly = Poly.const(GW_CONSTANT)
    linear = {(0, 0, 0): Fraction(10, 21), (0, 1, 1): Fraction(10, 21),
              (1, 0, 0): Fraction(1, 21), (1, 1, 0): Fraction(1, 21),
              (2, 0, 1): Fraction(10, 21), (2, 1, 1): Fraction(10, 21)}
    for idx in np.ndindex(*shape):
        poly = poly + Poly.var(*idx) * Poly.var(*idx) - linear.get(idx, 0) * Poly.var(*idx)
    return PolynomialWitness.from_poly(poly, shape, 0, ">=", "gw")


_CUBIC_TERMS = (
    ("1/3", "000 000 000"), ("1", "000 000 011"), ("1", "000 000 100"), ("1", "000 000 110"),
    ("1", "000 000 201"), ("1", "000 000 211"), ("1", "000 011 011"), ("2", "000 011 100"),
    ("2", "000 011 110"), ("2", "000 011 201"), ("2", "000 011 211"), ("1", "000 100 100"),
    ("2", "000 100 110"), ("2", "000 100 201"), ("2", "000 100 211"), ("1", "000 110 110"),
    ("2", "000 110 201"), ("2", "000 110 211"), ("-5/3", "000 201 201"), ("2", "000 201 211"),
    ("1", "000 211 211"), ("1/3", "011 011 011"), ("1", "011 011 100"), ("1", "011 011 110"),
    ("1", "011 011 201"), ("1", "011 011 211"), ("1", "011 100 100"), ("2", "011 100 110"),
    ("2", "011 100 201"), ("2", "011 100 211"), ("1", "011 110 110"), ("14/3", "011 110 201"),
    ("2", "011 110 211"), ("1", "011 201 201"), ("2", "011 201 211"), ("1", "011 211 211"),
    ("1/3", "100 100 100"), ("1", "100 100 110"), ("1", "100 100 201"), ("1", "100 100 211"),
    ("1", "100 110 110"), ("2", "100 110 201"), ("2", "100 110 211"), ("-5/3", "100 201 201"),
    ("2", "100 201 211"), ("1", "100 211 211"), ("1/3", "110 110 110"), ("1", "110 110 201"),
    ("1", "110 110 211"), ("1", "110 201 201"), ("14/3", "110 201 211"), ("1", "110 211 211"),
    ("-1", "201 201 201"), ("1", "201 201 211"), ("1", "201 211 211"), ("1/3", "211 211 211"),
)

# (a, b, c) -> (swap of a=1 and a=2, 1-b, 1-c); maps the PR-box support onto itself
CUBIC_RELABEL = ((0, 2, 1), (1, 0), (1, 0))


def cubic_inflation_printed() -> PolynomialWitness:
    """Order-3 inflation witness with the support-only terms, in the orientation
    where it is violated by the PR-box with p_A = (10/21, 10/21, 1/21)."""
    terms = tuple((Fraction(c), tuple(tuple(int(ch) for ch in tok) for tok in m.split()))
                  for c, m in _CUBIC_TERMS)
    return PolynomialWitness((3, 2, 2), terms, Fraction(1, 3), "<=", "cubic_inflation_printed")


def cubic_inflation() -> PolynomialWitness:
    """Order-3 inflation witness violated by the PR-box with p_A = (10/21, 1/21, 10/21)."""
    return relabel(cubic_inflation_printed(), CUBIC_RELABEL, name="cubic_inflation")


def gpt_topology() -> PolynomialWitness:
    """Binary quadratic topology inequality (valid for any theory)."""
    v = Poly.var
    poly = (v(0, 0, 0) * v(0, 0, 0) + v(0, 0, 1) * v(0, 0, 0) + v(0, 0, 1) * v(0, 0, 1)
            + 4 * v(1, 0, 1) * v(0, 0, 0) + v(1, 0, 0) * v(1, 0, 0) + v(1, 0, 1) * v(1, 0, 0)
            + v(1, 0, 1) * v(1, 0, 1))
    return PolynomialWitness.from_poly(poly, (2, 2, 2), 1, "<=", "gpt_topology")


PRESETS = {
    "pearl": pearl,
    "bonet": bonet,
    "gw": gw,
    "cubic_inflation": cubic_inflation,
    "cubic_inflation_printed": cubic_inflation_printed,
    "gpt_topology": gpt_topology,
}


def preset(name: str) -> PolynomialWitness:
    try:
        return PRESETS[name]()
    except KeyError:
        raise WitnessError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def pr_support_assumption(p: JointDistribution, tol: float = 1e-12) -> bool:
    """All mass on c = b + f(a,b) mod 2."""
    from .dist import bonet_wiring
    off = 0
    for a, b, c in np.ndindex(*p.shape):
        if c != (b + bonet_wiring(a, b)) % 2:
            off += p.probs[a, b, c]
    return float(off) <= tol


def noise_threshold(w: PolynomialWitness, p: JointDistribution, family: str = "uniform",
                    tol: float = 1e-10) -> float | None:
    """Smallest v in [0,1] at which ``w`` is still violated along the noise line
    ``v p + (1-v) noise``; ``family='support'`` uses noise uniform on the
    support of ``p`` so a support assumption is preserved. ``None`` if ``p``
    itself is not violated."""
    from scipy.optimize import brentq
    base = np.asarray(p.to_float().probs, float)
    if family == "uniform":
        noise = np.full(base.shape, 1.0 / base.size)
    elif family == "support":
        mask = base > 0
        noise = mask / mask.sum()
    else:
        raise WitnessError(f"unknown noise family {family!r}")

    def margin(v):
        q = JointDistribution(p.variables, v * base + (1 - v) * noise)
        val, _ = evaluate_witness(w, q)
        return (val - float(w.bound)) * (1 if w.direction == "<=" else -1)

    if margin(1.0) <= 0:
        return None
    if margin(0.0) > 0:
        return 0.0
    return float(brentq(margin, 0.0, 1.0, xtol=tol))
