"""Theory-independent test for the Evans topology.

The inflation keeps two copies of every party sharing one classical copy
``B#`` of B's output, which is broadcast to both A-copies and both C-copies.
Columns are ``q(a, a', b, b', c, c' | b#)``, mixed-radix in that order.

Row groups:

* ``diagonal``         q(a,a',b,b'=b,c,c' | b#=b) = p(a,b,c) p(a',b,c')
* ``context``          q(b,b' | b#) = q(b,b' | b#=0)
* ``e-separation``     A and C are independent given B# once B is removed;
                       across copies this reads q(a,c|b#) = q(a,c'|b#) and
                       q(a',c'|b#) = q(a',c|b#)
* ``normalization``    one per b#
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dist import JointDistribution, mix_with_uniform
from .lp import Feasible, LinearProgram, NumericalFailure, solve
from .witness import Poly, PolynomialWitness, evaluate_witness, gpt_topology, noise_threshold

GROUPS = ("diagonal", "context", "e-separation", "normalization")


class GptError(ValueError):
    pass


class MonotonicityError(RuntimeError):
    """Feasibility along the noise line was not a prefix of [0, 1]."""

    def __init__(self, probes):
        self.probes = sorted(probes)
        log = ", ".join(f"{v:.6f}:{'F' if ok else 'I'}" for v, ok in self.probes)
        super().__init__(f"non-monotone feasibility along the noise line: {log}")


@dataclass
class GptLp:
    cards: tuple[int, int, int]
    lp: LinearProgram
    group_rows: dict[str, tuple[int, int]]
    diagonal: list[tuple[tuple[int, int, int], tuple[int, int, int]]] = field(repr=False)

    @property
    def n_columns(self) -> int:
        return self.lp.n_vars


def column_count(cards) -> int:
    na, nb, nc = cards
    return (na * nb * nc) ** 2 * nb


def build_gpt_lp(p: JointDistribution) -> GptLp:
    if len(p.shape) != 3:
        raise GptError("p must be over three variables (A, B, C)")
    cards = tuple(int(k) for k in p.shape)
    na, nb, nc = cards
    radices = (na, na, nb, nb, nc, nc, nb)
    n = int(np.prod(radices))
    col = np.arange(n).reshape(radices)
    probs = p.probs if p.exact else np.asarray(p.probs, float)

    rows, rhs, tags = [], [], []
    ranges = {}

    def add(coefs, value, tag):
        rows.append(coefs)
        rhs.append(value)
        tags.append(tag)

    diagonal = []
    start = len(rows)
    for a, a2, c, c2, b in itertools.product(range(na), range(na), range(nc), range(nc), range(nb)):
        add({int(col[a, a2, b, b, c, c2, b]): 1.0}, probs[a, b, c] * probs[a2, b, c2],
            f"diag[{a}{a2}{b}{c}{c2}]")
        diagonal.append(((a, b, c), (a2, b, c2)))
    ranges["diagonal"] = (start, len(rows))

    start = len(rows)
    for s in range(1, nb):
        for b, b2 in itertools.product(range(nb), repeat=2):
            coefs = {int(j): 1.0 for j in col[:, :, b, b2, :, :, s].ravel()}
            coefs.update({int(j): -1.0 for j in col[:, :, b, b2, :, :, 0].ravel()})
            add(coefs, 0, f"ctx[{b}{b2}|{s}]")
    ranges["context"] = (start, len(rows))

    start = len(rows)
    for s in range(nb):
        block = col[..., s]  # axes a, a', b, b', c, c'
        for x, y in itertools.product(range(na), range(nc)):
            # (A, C) against (A, C'), then (A', C') against (A', C)
            for lhs, rhs_ in (((0, 4), (0, 5)), ((1, 5), (1, 4))):
                coefs = {}
                for sign, axes in ((1.0, lhs), (-1.0, rhs_)):
                    idx = [slice(None)] * 6
                    idx[axes[0]], idx[axes[1]] = x, y
                    for j in block[tuple(idx)].ravel():
                        coefs[int(j)] = coefs.get(int(j), 0.0) + sign
                add({j: v for j, v in coefs.items() if v}, 0,
                    f"esep[{x}{y}|{s}|{'AC' if lhs == (0, 4) else 'A2C2'}]")
    ranges["e-separation"] = (start, len(rows))

    start = len(rows)
    for s in range(nb):
        add({int(j): 1.0 for j in col[..., s].ravel()}, 1, f"norm[{s}]")
    ranges["normalization"] = (start, len(rows))

    return GptLp(cards, LinearProgram(n, rows, rhs, tags=tags), ranges, diagonal)


@dataclass
class GptResult:
    feasible: bool
    certificate: object | None = None
    x: np.ndarray | None = None


def check_gpt(p: JointDistribution, method: str = "highs", threads=None,
              gpt_lp: GptLp | None = None) -> GptResult:
    g = gpt_lp if gpt_lp is not None else build_gpt_lp(p)
    res = solve(g.lp, method=method, threads=threads)
    if isinstance(res, Feasible):
        return GptResult(True, x=res.x)
    return GptResult(False, res.certificate)


@dataclass
class VisibilityScan:
    v_crit: float
    probes: list[tuple[float, bool]]


def gpt_visibility(p: JointDistribution, tol: float = 1e-4, grid: int = 10,
                   threads=None) -> VisibilityScan:
    """Largest v with ``v p + (1-v) u`` passing :func:`check_gpt`.

    A coarse grid is probed first; every probe (grid and bisection) must agree
    with a single threshold, otherwise :class:`MonotonicityError` carries the
    full probe log.
    """
    probes: list[tuple[float, bool]] = []

    def feasible(v):
        ok = check_gpt(mix_with_uniform(p.to_float(), v), threads=threads).feasible
        probes.append((v, ok))
        return ok

    for k in range(grid + 1):
        feasible(k / grid)

    def assert_monotone():
        seen_infeasible = False
        for _, ok in sorted(probes):
            if not ok:
                seen_infeasible = True
            elif seen_infeasible:
                raise MonotonicityError(probes)

    assert_monotone()
    if probes[0][1] is False:
        raise MonotonicityError(probes)  # uniform noise itself fails
    if all(ok for _, ok in probes):
        return VisibilityScan(1.0, sorted(probes))
    lo = max(v for v, ok in probes if ok)
    hi = min(v for v, ok in probes if not ok)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    assert_monotone()
    return VisibilityScan(lo, sorted(probes))


def gpt_dual_witness(p: JointDistribution, result: GptResult | None = None,
                     gpt_lp: GptLp | None = None) -> PolynomialWitness:
    """Quadratic witness ``y^T b(p) <= 0`` read off a Farkas certificate.

    Diagonal rows contribute monomials p(a,b,c) p(a',b,c'); the other rows have
    constant right-hand sides.
    """
    g = gpt_lp if gpt_lp is not None else build_gpt_lp(p)
    if result is None:
        result = check_gpt(p, gpt_lp=g)
    if result.feasible:
        raise GptError("gpt_dual_witness needs an infeasible input")
    y = result.certificate.y
    s, e = g.group_rows["diagonal"]
    poly = Poly()
    for i, yi in enumerate(y):
        if yi == 0:
            continue
        if s <= i < e:
            u, w = g.diagonal[i - s]
            poly = poly + yi * Poly.var(*u) * Poly.var(*w)
        else:
            poly = poly + Poly.const(yi * g.lp.rhs[i])
    w = PolynomialWitness.from_poly(poly, g.cards, Fraction(0), "<=", "gpt_dual")
    if not evaluate_witness(w, p)[1]:
        raise NumericalFailure("extracted witness is not violated by its input")
    return w


def topology_inequality_threshold(p: JointDistribution) -> float | None:
    """Visibility at which the shipped quadratic topology inequality stops
    being violated along the white-noise line (``None`` if never violated)."""
    return noise_threshold(gpt_topology(), p, "uniform")
