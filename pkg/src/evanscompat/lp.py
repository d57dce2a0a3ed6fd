"""Equality-form linear programs ``A x = b, x >= 0`` with exact Farkas
certificates.

Sign convention: an infeasibility certificate ``y`` satisfies
``y^T A <= 0`` componentwise and ``y^T b > 0``.

Three solve paths:

* ``"highs"``   float phase-1 LP in HiGHS; its row duals are the certificate
  source, rationalized and repaired, then verified exactly.
* ``"simplex"`` own revised simplex (Bland's rule) in floats.
* ``"exact"``   the same simplex over ``Fraction`` (small problems only).
"""
from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .dist import to_fraction

FEAS_TOL = 1e-9
DENOMINATOR_CAP = 10**9
EXACT_NNZ_LIMIT = 20_000


class NumericalFailure(RuntimeError):
    """Neither feasibility nor infeasibility could be certified."""


class LPError(ValueError):
    pass


class LinearProgram:
    """``A x = b, x >= 0`` with optional objective ``min c^T x``.

    Coefficients are stored as floats; they are treated as the exact binary
    values they represent during certificate validation. ``rhs`` is kept as
    exact rationals.
    """

    def __init__(self, n_vars: int, rows: Iterable[dict[int, float] | Sequence[tuple[int, float]]],
                 rhs: Iterable, objective: Sequence[float] | None = None,
                 tags: Sequence[str] | None = None):
        if n_vars < 0:
            raise LPError("negative variable count")
        data, indices, indptr = [], [], [0]
        for r, row in enumerate(rows):
            items = row.items() if isinstance(row, dict) else row
            seen = set()
            for j, v in items:
                j = int(j)
                if not 0 <= j < n_vars:
                    raise LPError(f"row {r}: column {j} out of range")
                if j in seen:
                    raise LPError(f"row {r}: duplicate entry for column {j}")
                seen.add(j)
                if v != 0:
                    indices.append(j)
                    data.append(float(v))
            indptr.append(len(indices))
        m = len(indptr) - 1
        self._init(n_vars, sp.csr_matrix((np.array(data, float), np.array(indices, np.int64),
                                          np.array(indptr, np.int64)), shape=(m, n_vars)),
                   rhs, objective, tags)

    def _init(self, n_vars, A, rhs, objective, tags):
        self.n_vars = int(n_vars)
        self.A = A.tocsr()
        self.A.sort_indices()
        rhs = [to_fraction(v) for v in rhs]
        if len(rhs) != self.A.shape[0]:
            raise LPError(f"{self.A.shape[0]} rows but {len(rhs)} right-hand sides")
        self.rhs = rhs
        self.b = np.array([float(v) for v in rhs], float)
        if not np.all(np.isfinite(self.b)):
            raise LPError("non-finite right-hand side")
        self.objective = None if objective is None else np.asarray(objective, float)
        if self.objective is not None and self.objective.shape != (self.n_vars,):
            raise LPError("objective length differs from variable count")
        self.tags = list(tags) if tags is not None else [""] * self.n_rows
        if len(self.tags) != self.n_rows:
            raise LPError("one tag per row required")

    @classmethod
    def from_matrix(cls, A, rhs, objective=None, tags=None) -> "LinearProgram":
        """Build from a scipy sparse matrix; duplicate entries are rejected."""
        coo = sp.coo_matrix(A)
        keys = coo.row.astype(np.int64) * max(coo.shape[1], 1) + coo.col
        if len(np.unique(keys)) != len(keys):
            raise LPError("duplicate (row, column) entries")
        lp = cls.__new__(cls)
        lp._init(coo.shape[1], coo.tocsr(), rhs, objective, tags)
        return lp

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def nnz(self) -> int:
        return self.A.nnz

    def residual(self, x) -> float:
        x = np.asarray(x, float)
        if self.n_rows == 0:
            return 0.0
        return float(np.max(np.abs(self.A @ x - self.b)))


@dataclass
class FarkasCertificate:
    y: list[Fraction]

    def to_json(self) -> dict:
        return {"convention": "y^T A <= 0, y^T b > 0", "y": [str(v) for v in self.y]}

    @classmethod
    def from_json(cls, data: dict | str) -> "FarkasCertificate":
        if isinstance(data, str):
            data = json.loads(data)
        return cls([Fraction(v) for v in data["y"]])


@dataclass
class Feasible:
    x: np.ndarray
    method: str = ""
    feasible: bool = field(default=True, init=False)


@dataclass
class Infeasible:
    certificate: FarkasCertificate
    method: str = ""
    phase1_value: float = float("nan")
    feasible: bool = field(default=False, init=False)


# -- exact certificate checking ---------------------------------------------------

def _exact_coeff(v: float) -> Fraction:
    return Fraction(v)  # floats are dyadic rationals: exact


def certificate_products(lp: LinearProgram, y: Sequence[Fraction]) -> tuple[dict[int, Fraction], Fraction]:
    """Exact ``y^T A`` (as a sparse dict over columns) and ``y^T b``."""
    ytA: dict[int, Fraction] = {}
    ytb = Fraction(0)
    A = lp.A
    for i, yi in enumerate(y):
        if yi == 0:
            continue
        ytb += yi * lp.rhs[i]
        start, end = A.indptr[i], A.indptr[i + 1]
        for j, v in zip(A.indices[start:end], A.data[start:end]):
            j = int(j)
            ytA[j] = ytA.get(j, 0) + yi * _exact_coeff(v)
    return ytA, ytb


def check_certificate_exact(lp: LinearProgram, y: Sequence[Fraction]) -> bool:
    if len(y) != lp.n_rows:
        return False
    ytA, ytb = certificate_products(lp, y)
    return ytb > 0 and all(v <= 0 for v in ytA.values())


def rationalize(values, cap: int = DENOMINATOR_CAP) -> list[Fraction]:
    """Continued-fraction rounding with bounded denominators."""
    out = []
    for v in values:
        if isinstance(v, Fraction):
            out.append(v)
        else:
            fv = float(v)
            out.append(Fraction(0) if fv == 0 else Fraction(fv).limit_denominator(cap))
    return out


def covering_rows(lp: LinearProgram) -> list[int]:
    """Rows with all coefficients positive and positive rhs (normalization rows)."""
    A = lp.A
    rows = []
    for i in range(lp.n_rows):
        vals = A.data[A.indptr[i]:A.indptr[i + 1]]
        if len(vals) and np.all(vals > 0) and lp.rhs[i] > 0:
            rows.append(i)
    return rows


def repair_certificate(lp: LinearProgram, y: list[Fraction]) -> list[Fraction] | None:
    """Absorb small positive entries of ``y^T A`` by lowering ``y`` on covering
    rows; returns a valid certificate or ``None``."""
    y = list(y)
    ytA, ytb = certificate_products(lp, y)
    bad = {j: v for j, v in ytA.items() if v > 0}
    if not bad:
        return y if ytb > 0 else None
    A = lp.A.tocsc()
    cover = set(covering_rows(lp))
    if not cover:
        return None
    delta: dict[int, Fraction] = {}
    for j, excess in bad.items():
        rows = A.indices[A.indptr[j]:A.indptr[j + 1]]
        vals = A.data[A.indptr[j]:A.indptr[j + 1]]
        cands = [(int(r), v) for r, v in zip(rows, vals) if int(r) in cover]
        if not cands:
            return None
        r, v = min(cands)
        delta[r] = max(delta.get(r, Fraction(0)), excess / _exact_coeff(v))
    # columns where two covering rows meet get at least their share from each; re-check below
    for r, d in delta.items():
        y[r] -= d
    return y if check_certificate_exact(lp, y) else None


def validate_certificate(lp: LinearProgram, cert: FarkasCertificate | Sequence) -> bool:
    """Rationalize (denominator cap 1e9) and verify both Farkas conditions exactly."""
    y = cert.y if isinstance(cert, FarkasCertificate) else list(cert)
    if len(y) != lp.n_rows:
        return False
    return check_certificate_exact(lp, rationalize(y))


def _certify(lp: LinearProgram, y_float: np.ndarray) -> FarkasCertificate | None:
    y_float = np.asarray(y_float, float)
    scale = np.max(np.abs(y_float)) if len(y_float) else 0.0
    if scale == 0 or not np.isfinite(scale):
        return None
    y_float = y_float / scale
    if y_float @ lp.b < 0:
        y_float = -y_float
    y_float[np.abs(y_float) < 1e-13] = 0.0
    for cap in (DENOMINATOR_CAP, 10**6):
        y = rationalize(y_float, cap)
        if check_certificate_exact(lp, y):
            return FarkasCertificate(y)
        fixed = repair_certificate(lp, y)
        if fixed is not None:
            return FarkasCertificate(fixed)
    return None


# -- HiGHS path -------------------------------------------------------------------

def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("EVANSCOMPAT_THREADS", "1")))
    except ValueError:
        return 1


def highs_solve(A: sp.spmatrix, row_lower, row_upper, col_lower, col_upper, cost=None,
                threads: int | None = None, time_limit: float | None = None, q=None,
                tight: bool = False):
    """Thin HiGHS wrapper; returns (status string, x, row duals, objective).
    ``q`` is an optional PSD Hessian (upper triangle used) for min ``c^T x + x^T Q x / 2``."""
    import highspy

    A = sp.csc_matrix(A)
    m, n = A.shape
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("threads", threads or default_threads())
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    if tight:
        h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        h.setOptionValue("dual_feasibility_tolerance", 1e-10)
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = m
    lp.col_cost_ = np.zeros(n) if cost is None else np.asarray(cost, float)
    lp.col_lower_ = np.asarray(col_lower, float)
    lp.col_upper_ = np.asarray(col_upper, float)
    lp.row_lower_ = np.asarray(row_lower, float)
    lp.row_upper_ = np.asarray(row_upper, float)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    if q is not None:
        model = highspy.HighsModel()
        model.lp_ = lp
        Q = sp.csc_matrix(sp.triu(sp.csc_matrix(q)))
        hess = highspy.HighsHessian()
        hess.dim_ = n
        hess.format_ = highspy.HessianFormat.kTriangular
        hess.start_ = Q.indptr.astype(np.int32)
        hess.index_ = Q.indices.astype(np.int32)
        hess.value_ = Q.data.astype(float)
        model.hessian_ = hess
        h.passModel(model)
    else:
        h.passModel(lp)
    h.run()
    status = h.modelStatusToString(h.getModelStatus())
    sol = h.getSolution()
    x = np.array(sol.col_value, float) if sol.value_valid else np.full(n, np.nan)
    duals = np.array(sol.row_dual, float) if sol.dual_valid else np.full(m, np.nan)
    obj = h.getInfo().objective_function_value
    return status, x, duals, obj


def _solve_highs(lp: LinearProgram, threads=None, time_limit=None):
    m, n = lp.n_rows, lp.n_vars
    if m == 0:
        return Feasible(np.zeros(n), "highs")
    # phase 1: A x + s+ - s- = b, minimize total slack
    I = sp.identity(m, format="csc")
    A1 = sp.hstack([lp.A.tocsc(), I, -I], format="csc")
    cost = np.r_[np.zeros(n), np.ones(2 * m)]
    status, x, duals, obj = highs_solve(A1, lp.b, lp.b, np.zeros(n + 2 * m),
                                        np.full(n + 2 * m, np.inf), cost, threads, time_limit)
    if status != "Optimal":
        raise NumericalFailure(f"phase-1 LP ended with status {status}")
    xs = np.clip(x[:n], 0, None)
    if lp.residual(xs) <= FEAS_TOL:
        return Feasible(xs, "highs")
    if obj > FEAS_TOL:
        cert = _certify(lp, duals)
        if cert is not None:
            return Infeasible(cert, "highs", obj)
    # borderline: polish on the support, then re-solve with tight tolerances
    xs = _polish(lp, xs)
    if xs is not None:
        return Feasible(xs, "highs")
    status, x, _, _ = highs_solve(lp.A, lp.b, lp.b, np.zeros(n), np.full(n, np.inf),
                                  lp.objective, threads, time_limit, tight=True)
    if status == "Optimal":
        xs = np.clip(x, 0, None)
        if lp.residual(xs) <= FEAS_TOL:
            return Feasible(xs, "highs")
        xs = _polish(lp, xs)
        if xs is not None:
            return Feasible(xs, "highs")
    if lp.nnz <= EXACT_NNZ_LIMIT:
        res = _solve_simplex(lp, exact=True)
        res.method = "highs+exact"
        return res
    raise NumericalFailure(f"phase-1 value {obj:.3e}: no point within {FEAS_TOL} and no valid certificate")


def _polish(lp: LinearProgram, x: np.ndarray):
    """Least-squares correction restricted to the support of ``x``; returns
    the corrected point if it is non-negative and within tolerance."""
    support = np.flatnonzero(x > 1e-12)
    if support.size == 0:
        return None
    As = lp.A[:, support].toarray()
    delta, *_ = np.linalg.lstsq(As, lp.b - As @ x[support], rcond=None)
    y = x.copy()
    y[support] += delta
    if y.min() < 0:
        y = np.clip(y, 0, None)
    return y if lp.residual(y) <= FEAS_TOL else None


# -- own revised simplex ------------------------------------------------------------

def _revised_simplex_phase1(A_rows: list[list], b: list, n: int, zero, one, tol, max_iter=200_000):
    """Phase-1 revised simplex with Bland's rule on dense data.

    Rows are pre-flipped so ``b >= 0``; artificials ``n..n+m-1`` start basic.
    Returns (value, x, y) with ``y`` the phase-1 duals.
    """
    m = len(b)
    cols = [[A_rows[i][j] for i in range(m)] for j in range(n)]
    basis = list(range(n, n + m))
    in_basis = set(basis)
    Binv = [[one if i == k else zero for k in range(m)] for i in range(m)]
    xB = list(b)

    def col(j):
        if j < n:
            return cols[j]
        e = [zero] * m
        e[j - n] = one
        return e

    def cost(j):
        return one if j >= n else zero

    for _ in range(max_iter):
        cB = [cost(j) for j in basis]
        y = [sum((cB[i] * Binv[i][k] for i in range(m)), zero) for k in range(m)]
        entering = None
        for j in range(n + m):  # Bland: lowest index with negative reduced cost
            if j in in_basis:
                continue
            a = col(j)
            d = cost(j) - sum((y[k] * a[k] for k in range(m) if a[k] != 0), zero)
            if d < -tol:
                entering = j
                break
        if entering is None:
            x = [zero] * n
            for i, j in enumerate(basis):
                if j < n:
                    x[j] = xB[i]
            value = sum((xB[i] for i, j in enumerate(basis) if j >= n), zero)
            return value, x, y
        a = col(entering)
        u = [sum((Binv[i][k] * a[k] for k in range(m) if a[k] != 0), zero) for i in range(m)]
        best, leave = None, None
        for i in range(m):
            if u[i] > tol:
                ratio = xB[i] / u[i]
                # Bland tie-break: smallest basic index
                if best is None or ratio < best - tol or (abs(ratio - best) <= tol and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            raise NumericalFailure("phase-1 problem unbounded (cannot happen for a bounded objective)")
        piv = u[leave]
        Binv[leave] = [v / piv for v in Binv[leave]]
        xB[leave] = xB[leave] / piv
        for i in range(m):
            if i != leave and u[i] != 0:
                f = u[i]
                Binv[i] = [vi - f * vl for vi, vl in zip(Binv[i], Binv[leave])]
                xB[i] = xB[i] - f * xB[leave]
        in_basis.discard(basis[leave])
        in_basis.add(entering)
        basis[leave] = entering
    raise NumericalFailure("iteration limit reached")


def _solve_simplex(lp: LinearProgram, exact: bool):
    m, n = lp.n_rows, lp.n_vars
    if m == 0:
        return Feasible(np.zeros(n), "exact" if exact else "simplex")
    if exact and lp.nnz > EXACT_NNZ_LIMIT:
        raise LPError(f"exact mode limited to {EXACT_NNZ_LIMIT} nonzeros (got {lp.nnz})")
    dense = lp.A.toarray()
    if exact:
        zero, one, tol = Fraction(0), Fraction(1), 0
        rows = [[_exact_coeff(v) if v != 0 else zero for v in r] for r in dense]
        b = list(lp.rhs)
    else:
        zero, one, tol = 0.0, 1.0, 1e-11
        rows = [list(map(float, r)) for r in dense]
        b = list(lp.b)
    sign = []
    for i in range(m):
        if b[i] < 0:
            rows[i] = [-v for v in rows[i]]
            b[i] = -b[i]
            sign.append(-1)
        else:
            sign.append(1)
    value, x, y = _revised_simplex_phase1(rows, b, n, zero, one, tol)
    method = "exact" if exact else "simplex"
    if value <= (0 if exact else FEAS_TOL):
        xs = np.array([float(v) for v in x])
        if exact:
            return Feasible(np.array(x, dtype=object), method)
        return Feasible(np.clip(xs, 0, None), method)
    y = [yi * s for yi, s in zip(y, sign)]
    if exact:
        if check_certificate_exact(lp, y):
            return Infeasible(FarkasCertificate(list(y)), method, float(value))
        raise NumericalFailure("exact phase-1 duals failed validation")
    cert = _certify(lp, np.array(y, float))
    if cert is None:
        raise NumericalFailure("simplex duals could not be certified")
    return Infeasible(cert, method, float(value))


def solve(lp: LinearProgram, method: str = "highs", threads: int | None = None,
          time_limit: float | None = None):
    """Return :class:`Feasible` or :class:`Infeasible` (with a validated certificate)."""
    if method == "highs":
        return _solve_highs(lp, threads, time_limit)
    if method == "simplex":
        return _solve_simplex(lp, exact=False)
    if method == "exact":
        return _solve_simplex(lp, exact=True)
    raise LPError(f"unknown method {method!r}")


# -- export -----------------------------------------------------------------------

def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def export_lp_text(lp: LinearProgram, sink=None) -> str:
    """CPLEX-LP text; deterministic. ``sink`` may be a path or a text stream."""
    out = io.StringIO()
    obj = lp.objective
    if obj is None or not np.any(obj):
        out.write("Minimize\n obj: 0\n")
    else:
        terms = _terms([(j, obj[j]) for j in range(lp.n_vars) if obj[j] != 0])
        out.write(f"Minimize\n obj: {terms}\n")
    out.write("Subject To\n")
    A = lp.A
    for i in range(lp.n_rows):
        s, e = A.indptr[i], A.indptr[i + 1]
        items = list(zip(A.indices[s:e].tolist(), A.data[s:e].tolist()))
        lhs = _terms(items) if items else "0 x0"
        out.write(f" r{i}: {lhs} = {_num(lp.b[i])}\n")
    out.write("Bounds\n")
    # x >= 0 is the format default; state it for readers of the file
    for j in range(lp.n_vars):
        out.write(f" x{j} >= 0\n")
    out.write("End\n")
    text = out.getvalue()
    if sink is not None:
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sink.write(text)
    return text


def _terms(items) -> str:
    parts = []
    for k, (j, v) in enumerate(items):
        mag = abs(v)
        coef = "" if mag == 1 else _num(mag) + " "
        if k == 0:
            parts.append(("- " if v < 0 else "") + f"{coef}x{j}")
        else:
            parts.append(("- " if v < 0 else "+ ") + f"{coef}x{j}")
    return " ".join(parts)
