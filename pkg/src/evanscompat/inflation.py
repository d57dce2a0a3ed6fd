"""Order-n inflation of the split Evans graph as a linear program.

Columns are ``q(avec, bmat, cvec | ctx)`` with ``avec`` in A^n, ``bmat`` in
B^(n*n) (row-major ``b_ij``), ``cvec`` in C^n and the split-input context
``ctx`` in B^n. The column index is the mixed-radix number with digits
``(ctx, avec, bmat, cvec)``, most significant first.

Row groups:

* ``symmetry``      x_j = x_rep(j) for every column outside its orbit's
                    representative. A source relabeling (pi, sigma) maps
                    a_i -> a_pi(i), c_j -> c_sigma(j), b_ij -> b_pi(i)sigma(j)
                    and is admissible in a context iff ctx o pi^-1 == ctx o sigma^-1.
* ``no-signaling``  the (a_m, c_m) marginal does not depend on ctx_k, k != m.
* ``factorized``    on the diagonal context ctx = (b_11, ..., b_nn) the
                    marginal of (a_i, b_ii, c_i)_i equals prod_i p(a_i, b_ii, c_i).
* ``normalization`` one per context.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .dist import JointDistribution, bonet_wiring
from .kernels import orbit_representatives
from .lp import (FarkasCertificate, Feasible, Infeasible, LinearProgram, NumericalFailure,
                 check_certificate_exact, export_lp_text, solve)
from .witness import PolynomialWitness, WitnessError, cubic_inflation, evaluate_witness, \
    pr_support_assumption

DEFAULT_COLUMN_CAP = 5_000_000
GROUPS = ("symmetry", "no-signaling", "factorized", "normalization")


class InflationError(ValueError):
    pass


@dataclass
class InflationLpMeta:
    order: int
    cards: tuple[int, int, int]
    radices: tuple[int, ...]
    n_columns: int
    group_rows: dict[str, tuple[int, int]]      # tag -> [start, end)
    orbit_rep: np.ndarray = field(repr=False)    # representative column per column
    factor_assignments: list[tuple[tuple[int, int, int], ...]] = field(repr=False, default_factory=list)

    def digits(self, col: int) -> dict:
        """Decode a column index into its named digits."""
        n = self.order
        d = np.unravel_index(int(col), self.radices)
        d = [int(v) for v in d]
        ctx, a, b, c = d[:n], d[n:2 * n], d[2 * n:2 * n + n * n], d[2 * n + n * n:]
        return {"ctx": ctx, "a": a, "b": [b[i * n:(i + 1) * n] for i in range(n)], "c": c}

    def column(self, ctx, a, b, c) -> int:
        flat_b = [v for row in b for v in row]
        return int(np.ravel_multi_index(tuple(ctx) + tuple(a) + tuple(flat_b) + tuple(c), self.radices))

    def to_json(self) -> dict:
        n = self.order
        names = ([f"Bs_{k + 1}" for k in range(n)] + [f"A_{i + 1}" for i in range(n)]
                 + [f"B_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
                 + [f"C_{j + 1}" for j in range(n)])
        return {"order": n, "cards": list(self.cards), "n_columns": self.n_columns,
                "column_digits": names, "radices": list(self.radices),
                "column_index": "mixed radix over column_digits, first digit most significant; "
                                "column x<k> in the LP file is index k",
                "row_groups": {k: list(v) for k, v in self.group_rows.items()},
                "n_orbits": int(len(np.unique(self.orbit_rep)))}


def column_count(n: int, cards=(3, 2, 2)) -> int:
    na, nb, nc = cards
    return na ** n * nb ** (n * n) * nc ** n * nb ** n


def symmetry_maps(n: int):
    """Digit permutations and admissibility tests for every (pi, sigma) but the identity."""
    D = 3 * n + n * n
    ctx0, a0, b0, c0 = 0, n, 2 * n, 2 * n + n * n
    perms, adm = [], []
    for pi in itertools.permutations(range(n)):
        for sigma in itertools.permutations(range(n)):
            if pi == tuple(range(n)) and sigma == tuple(range(n)):
                continue
            P = np.empty(D, np.int64)
            for k in range(n):
                P[ctx0 + k] = ctx0 + pi[k]
                P[a0 + k] = a0 + pi[k]
                P[c0 + k] = c0 + sigma[k]
            for i in range(n):
                for j in range(n):
                    P[b0 + i * n + j] = b0 + pi[i] * n + sigma[j]
            pinv = np.argsort(pi)
            sinv = np.argsort(sigma)
            pairs = [(ctx0 + int(pinv[k]), ctx0 + int(sinv[k])) for k in range(n)]
            perms.append(P)
            adm.append(pairs)
    if not perms:
        return np.zeros((0, D), np.int64), np.zeros((0, n, 2), np.int64)
    return np.array(perms, np.int64), np.array(adm, np.int64)


def _column_digits(radices):
    n_cols = int(np.prod(radices))
    return np.stack(np.unravel_index(np.arange(n_cols, dtype=np.int64), radices), axis=1).astype(np.int8)


def build(p: JointDistribution, n: int, column_cap: int = DEFAULT_COLUMN_CAP,
          no_signaling: str = "full"):
    """Return ``(LinearProgram, InflationLpMeta)``."""
    if n < 1:
        raise InflationError("inflation order must be >= 1")
    if len(p.shape) != 3:
        raise InflationError("p must be over (A, B, C)")
    cards = tuple(p.shape)
    na, nb, nc = cards
    n_cols = column_count(n, cards)
    if n_cols > column_cap:
        raise InflationError(f"{n_cols} columns exceeds the cap of {column_cap}")
    radices = (nb,) * n + (na,) * n + (nb,) * (n * n) + (nc,) * n
    digits = _column_digits(radices)
    ctx_d = digits[:, :n]
    a_d = digits[:, n:2 * n]
    b_d = digits[:, 2 * n:2 * n + n * n]
    c_d = digits[:, 2 * n + n * n:]
    cols = np.arange(n_cols, dtype=np.int64)
    n_ctx = nb ** n
    ctx_id = cols // (n_cols // n_ctx)

    perms, adm = symmetry_maps(n)
    rep = np.asarray(orbit_representatives(np.array(radices, np.int64), perms, adm), np.int64)

    blocks: list[sp.csr_matrix] = []
    rhs: list = []
    tags: list[str] = []
    group_rows: dict[str, tuple[int, int]] = {}
    row0 = 0

    def add_group(tag, rows_idx, cols_idx, vals, n_rows, group_rhs):
        nonlocal row0
        M = sp.csr_matrix((vals, (rows_idx, cols_idx)), shape=(n_rows, n_cols))
        M.sum_duplicates()
        blocks.append(M)
        rhs.extend(group_rhs)
        tags.extend([tag] * n_rows)
        group_rows[tag] = (row0, row0 + n_rows)
        row0 += n_rows

    # symmetry: x_j - x_rep(j) = 0
    nonrep = np.flatnonzero(rep != cols)
    k = len(nonrep)
    add_group("symmetry", np.r_[np.arange(k), np.arange(k)], np.r_[nonrep, rep[nonrep]],
              np.r_[np.ones(k), -np.ones(k)], k, [0] * k)

    # no-signaling: a marginal that excludes A_k, C_k must not see ctx_k
    non_ctx = np.concatenate([a_d, b_d, c_d], axis=1)
    non_ctx_radices = (na,) * n + (nb,) * (n * n) + (nc,) * n
    r_parts, c_parts, v_parts = [], [], []
    n_rows = 0
    for k in range(n):
        if no_signaling == "full":
            kept_sets = [[d for d in range(non_ctx.shape[1]) if d != k and d != n + n * n + k]]
        elif no_signaling == "marginal":
            kept_sets = [[m, n + n * n + m] for m in range(n) if m != k]
        else:
            raise InflationError(f"unknown no-signaling mode {no_signaling!r}")
        rest = [d for d in range(n) if d != k]
        ctx_rest = (np.ravel_multi_index(tuple(ctx_d[:, rest].T), (nb,) * (n - 1))
                    if rest else np.zeros(n_cols, np.int64))
        for kept in kept_sets:
            kept_code = np.ravel_multi_index(tuple(non_ctx[:, kept].T.astype(np.int64)),
                                             tuple(non_ctx_radices[d] for d in kept))
            size = nb ** (n - 1) * int(np.prod([non_ctx_radices[d] for d in kept]))
            key = ctx_rest * (size // nb ** (n - 1)) + kept_code
            for v in range(1, nb):
                base = n_rows + (v - 1) * size
                sel = ctx_d[:, k] == v
                ref = ctx_d[:, k] == 0
                r_parts += [base + key[sel], base + key[ref]]
                c_parts += [cols[sel], cols[ref]]
                v_parts += [np.ones(int(sel.sum())), -np.ones(int(ref.sum()))]
            n_rows += (nb - 1) * size
    if n_rows:
        add_group("no-signaling", np.concatenate(r_parts), np.concatenate(c_parts), np.concatenate(v_parts),
                  n_rows, [0] * n_rows)
    else:
        add_group("no-signaling", np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), 0, [])

    # factorized: context equals the diagonal b's
    diag = b_d[:, [i * n + i for i in range(n)]]
    on_diag = np.all(diag == ctx_d, axis=1)
    cell = (a_d.astype(np.int64) * nb + diag) * nc + c_d          # (a_i, b_ii, c_i) code per i
    key = np.zeros(n_cols, np.int64)
    for i in range(n):
        key = key * (na * nb * nc) + cell[:, i]
    n_fac = (na * nb * nc) ** n
    probs = p.probs
    assignments = []
    fac_rhs = []
    for r in range(n_fac):
        code = r
        cells = []
        for _ in range(n):
            cells.append(code % (na * nb * nc))
            code //= na * nb * nc
        cells = cells[::-1]
        entry = tuple(tuple(int(v) for v in np.unravel_index(cc, (na, nb, nc))) for cc in cells)
        assignments.append(entry)
        val = Fraction(1) if p.exact else 1.0
        for e in entry:
            val = val * (probs[e] if p.exact else float(probs[e]))
        fac_rhs.append(val)
    sel = on_diag
    add_group("factorized", key[sel], cols[sel], np.ones(int(sel.sum())), n_fac, fac_rhs)

    # normalization
    add_group("normalization", ctx_id, cols, np.ones(n_cols), n_ctx, [1] * n_ctx)

    A = sp.vstack(blocks, format="csr")
    lp = LinearProgram.from_matrix(A, rhs, tags=tags)
    meta = InflationLpMeta(n, cards, radices, n_cols, group_rows, rep, assignments)
    return lp, meta


# -- solving ---------------------------------------------------------------------

def quotient(lp: LinearProgram, meta: InflationLpMeta):
    """Merge each symmetry orbit into one column and drop the symmetry rows."""
    rep = meta.orbit_rep
    reps, orbit = np.unique(rep, return_inverse=True)
    s, e = meta.group_rows["symmetry"]
    keep = np.r_[np.arange(0, s), np.arange(e, lp.n_rows)]
    A = lp.A[keep].tocoo()
    Aq = sp.csr_matrix((A.data, (A.row, orbit[A.col])), shape=(len(keep), len(reps)))
    Aq.sum_duplicates()
    Aq.eliminate_zeros()
    rows_q = LinearProgram.from_matrix(Aq, [lp.rhs[i] for i in keep],
                                       tags=[lp.tags[i] for i in keep])
    return rows_q, keep, orbit


def lift_certificate(lp: LinearProgram, meta: InflationLpMeta, keep, y_q) -> list[Fraction]:
    """Extend a quotient certificate to the full LP. Each symmetry row
    ``x_j - x_rep = 0`` receives ``-(y^T A)_j`` so non-representative columns
    cancel; representative columns then carry the quotient's column sums."""
    y = [Fraction(0)] * lp.n_rows
    for i, v in zip(keep, y_q):
        y[int(i)] = v
    s, e = meta.group_rows["symmetry"]
    if e > s:
        A = lp.A
        sym = A[s:e].tocoo()
        # the +1 entry of each symmetry row sits on its non-representative column
        nonrep = np.empty(e - s, np.int64)
        plus = sym.data > 0
        nonrep[sym.row[plus]] = sym.col[plus]
        At = A[keep].T.tocsr()
        for r, j in enumerate(nonrep):
            lo, hi = At.indptr[j], At.indptr[j + 1]
            acc = Fraction(0)
            for row, val in zip(At.indices[lo:hi], At.data[lo:hi]):
                yv = y_q[int(row)]
                if yv:
                    acc += yv * Fraction(val)
            y[s + r] = -acc
    return y


@dataclass
class InflationResult:
    feasible: bool
    certificate: FarkasCertificate | None = None
    quotient_certificate: FarkasCertificate | None = None
    validated: bool = False
    x: np.ndarray | None = None


def check(p: JointDistribution, n: int, method: str = "highs", threads=None,
          validate_full: bool | None = None, lp_meta=None) -> InflationResult:
    """Feasibility of the order-n inflation; certificates are verified exactly
    on the quotient and, by default for n <= 2, on the full LP as well."""
    lp, meta = lp_meta if lp_meta is not None else build(p, n)
    lpq, keep, orbit = quotient(lp, meta)
    res = solve(lpq, method=method, threads=threads)
    if isinstance(res, Feasible):
        # quotient columns sum their members' coefficients, so every member takes the orbit value
        x = np.asarray(res.x, float)[orbit]
        return InflationResult(True, x=x)
    y_q = res.certificate.y
    y = lift_certificate(lp, meta, keep, y_q)
    if validate_full is None:
        validate_full = n <= 2
    ok = check_certificate_exact(lpq, y_q)
    if validate_full:
        ok = ok and check_certificate_exact(lp, y)
    if not ok:
        raise NumericalFailure("lifted certificate failed exact validation")
    return InflationResult(False, FarkasCertificate(y), res.certificate, True)


def witness_from_certificate(lp: LinearProgram, y, assignments, fac_range, shape,
                             name: str) -> PolynomialWitness:
    """``y^T b(p) <= 0`` as a polynomial: factorized rows carry monomials,
    every other row contributes its constant right-hand side."""
    s, e = fac_range
    terms = []
    const = Fraction(0)
    for i, yi in enumerate(y):
        if yi == 0:
            continue
        if s <= i < e:
            terms.append((yi, assignments[i - s]))
        else:
            const += yi * lp.rhs[i]
    if const:
        terms.append((const, ()))
    return PolynomialWitness(tuple(shape), tuple(terms), Fraction(0), "<=", name)


def dual_witness(p: JointDistribution, n: int, result: InflationResult | None = None,
                 lp_meta=None) -> PolynomialWitness:
    lp, meta = lp_meta if lp_meta is not None else build(p, n)
    if result is None:
        result = check(p, n, lp_meta=(lp, meta))
    if result.feasible:
        raise InflationError("dual_witness needs an infeasible input")
    w = witness_from_certificate(lp, result.certificate.y, meta.factor_assignments,
                                 meta.group_rows["factorized"], p.shape, f"inflation_order{n}")
    val, violated = evaluate_witness(w, p)
    if not violated:
        raise NumericalFailure("extracted witness is not violated by its input")
    return w


def cubic_witness_regression(p: JointDistribution, tol: float = 1e-12):
    """Value of the shipped order-3 witness minus 1/3 (positive means violated).
    Only meaningful on distributions supported on c = b + f(a,b) mod 2."""
    if tuple(p.shape) != (3, 2, 2):
        raise InflationError("needs |A|=3, |B|=|C|=2")
    if not pr_support_assumption(p, tol):
        raise WitnessError("support assumption violated: mass off c = b + f(a,b) mod 2")
    val, _ = evaluate_witness(cubic_inflation(), p)
    return val - Fraction(1, 3) if p.exact else val - 1.0 / 3.0


def export(p: JointDistribution, n: int, lp_path, meta_path=None):
    lp, meta = build(p, n)
    export_lp_text(lp, lp_path)
    if meta_path is not None:
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta.to_json(), fh, indent=1, sort_keys=True)
    return lp, meta
