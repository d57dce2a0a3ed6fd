"""Global solution of the bilinear Evans compatibility problems.

A classical Evans distribution is written through variables
``q(avec, b, cvec)`` with ``avec`` in A^|B| and ``cvec`` in C^|B|. Its
marginals ``r(avec)``, ``s(cvec)`` and ``z(avec, cvec)`` must factorize as
``z = r * s``; every other constraint is linear. Fixing ``s`` turns the
problem into an LP, so spatial branching acts on ``s`` (and on any other
declared branch variables).

Node relaxations use McCormick envelopes and are solved by HiGHS.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dist import EvansModel, JointDistribution, mix_with_uniform
from .lp import default_threads
from .witness import Poly, PolynomialWitness, WitnessError, marginal_poly

FEAS_TOL = 1e-7
NODE_TIME_LIMIT = 1.0  # seconds per relaxation before the cut-based fallback (normal nodes take ~10 ms)


class QcqpError(ValueError):
    pass


@dataclass
class BilinearProgram:
    """Box-bounded program with linear equalities and bilinear equalities
    ``x[z] = x[x] * x[y]``.

    ``sense='max'`` maximizes ``c @ x``; ``sense='min'`` minimizes
    ``c @ x + x @ Q @ x / 2`` (``Q`` PSD). With ``target`` set the program is a
    decision problem: feasible iff the optimum reaches ``target``.
    """
    n: int
    lower: np.ndarray
    upper: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    triples: list[tuple[int, int, int]]
    branch_vars: tuple[int, ...]
    c: np.ndarray
    sense: str = "max"
    Q: sp.spmatrix | None = None
    constant: float = 0.0
    target: float | None = None
    names: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, float)
        self.upper = np.asarray(self.upper, float)
        if self.lower.shape != (self.n,) or self.upper.shape != (self.n,):
            raise QcqpError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise QcqpError("bounds must be finite")
        if np.any(self.lower > self.upper):
            raise QcqpError("empty variable box")
        branch = set(self.branch_vars)
        for k, (z, x, y) in enumerate(self.triples):
            if len({z, x, y}) != 3:
                raise QcqpError(f"triple {k} does not reference three distinct variables")
            if not all(0 <= v < self.n for v in (z, x, y)):
                raise QcqpError(f"triple {k} references an undeclared variable")
            if y not in branch:
                raise QcqpError(f"triple {k}: its y-variable must be a branch variable")
        if self.sense not in ("max", "min"):
            raise QcqpError("sense must be 'max' or 'min'")
        if self.Q is not None and self.sense != "min":
            raise QcqpError("quadratic objectives are minimized")
        self.c = np.asarray(self.c, float)
        self.b_eq = np.asarray(self.b_eq, float)

    @property
    def pin_vars(self) -> tuple[int, ...]:
        """Variables whose pinning turns every product linear."""
        return tuple(sorted({y for _, _, y in self.triples}))

    def objective(self, x: np.ndarray) -> float:
        val = float(self.c @ x) + self.constant
        if self.Q is not None:
            val += 0.5 * float(x @ (self.Q @ x))
        return val

    def violation(self, x: np.ndarray) -> float:
        """Largest residual over linear rows, bilinear rows and bounds."""
        res = 0.0
        if self.A_eq.shape[0]:
            res = float(np.max(np.abs(self.A_eq @ x - self.b_eq)))
        if self.triples:
            t = np.array(self.triples)
            res = max(res, float(np.max(np.abs(x[t[:, 0]] - x[t[:, 1]] * x[t[:, 2]]))))
        res = max(res, float(np.max(self.lower - x, initial=0)), float(np.max(x - self.upper, initial=0)))
        return res


@dataclass
class SolveReport:
    status: str                 # "Feasible" | "InfeasibleCertifiedByBound" | "GapLimit"
    objective: float | None     # best incumbent (in the program's own sense)
    lower: float
    upper: float
    point: np.ndarray | None
    nodes: int
    wall_time: float

    def to_json(self) -> dict:
        return {"status": self.status, "objective": self.objective, "lower": self.lower,
                "upper": self.upper, "nodes": self.nodes, "wall_time": self.wall_time}


# -- builders ---------------------------------------------------------------------

class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.rows: list[dict[int, float]] = []
        self.rhs: list[float] = []
        self.triples: list[tuple[int, int, int]] = []
        self.branch: list[int] = []

    def var(self, name, lo=0.0, hi=1.0) -> int:
        self.names.append(name)
        self.lower.append(lo)
        self.upper.append(hi)
        return len(self.names) - 1

    def row(self, coefs: dict[int, float], rhs: float):
        self.rows.append(coefs)
        self.rhs.append(rhs)

    def matrix(self):
        data, ri, ci = [], [], []
        for i, r in enumerate(self.rows):
            for j, v in r.items():
                if v != 0:
                    ri.append(i)
                    ci.append(j)
                    data.append(v)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(self.rows), len(self.names)))

    def program(self, c, **kw) -> BilinearProgram:
        n = len(self.names)
        cvec = np.zeros(n)
        for j, v in c.items():
            cvec[j] = v
        return BilinearProgram(n, np.array(self.lower), np.array(self.upper), self.matrix(),
                               np.array(self.rhs, float), list(self.triples),
                               tuple(sorted(set(self.branch))), cvec, names=list(self.names), **kw)


def _evans_core(cards):
    """Variables q, r, s, z and every row that does not involve p."""
    na, nb, nc = cards
    if nb < 1 or na < 1 or nc < 1:
        raise QcqpError("cardinalities must be >= 1")
    av = list(itertools.product(range(na), repeat=nb))
    cv = list(itertools.product(range(nc), repeat=nb))
    bd = _Builder()
    q = {(i, b, j): bd.var(f"q[{''.join(map(str, av[i]))},{b},{''.join(map(str, cv[j]))}]")
         for i in range(len(av)) for b in range(nb) for j in range(len(cv))}
    r = [bd.var(f"r[{''.join(map(str, a))}]") for a in av]
    s = [bd.var(f"s[{''.join(map(str, c))}]") for c in cv]
    z = {(i, j): bd.var(f"z[{''.join(map(str, av[i]))},{''.join(map(str, cv[j]))}]")
         for i in range(len(av)) for j in range(len(cv))}
    for (i, j), zi in z.items():
        row = {q[i, b, j]: 1.0 for b in range(nb)}
        row[zi] = -1.0
        bd.row(row, 0.0)
    for i, ri in enumerate(r):
        row = {z[i, j]: 1.0 for j in range(len(cv))}
        row[ri] = -1.0
        bd.row(row, 0.0)
    for j, sj in enumerate(s):
        row = {z[i, j]: 1.0 for i in range(len(av))}
        row[sj] = -1.0
        bd.row(row, 0.0)
    bd.row({v: 1.0 for v in r}, 1.0)
    bd.row({v: 1.0 for v in s}, 1.0)
    bd.row({v: 1.0 for v in q.values()}, 1.0)
    for (i, j), zi in z.items():
        bd.triples.append((zi, r[i], s[j]))
    bd.branch.extend(s)

    def cell(a, b, c):
        """q-columns whose (a_b, b, c_b) equals (a, b, c)."""
        return [q[i, b, j] for i in range(len(av)) for j in range(len(cv))
                if av[i][b] == a and cv[j][b] == c]

    meta = {"cards": cards, "n_q": len(q), "n_r": len(r), "n_s": len(s), "n_z": len(z),
            "q": q, "r": r, "s": s, "z": z}
    return bd, cell, meta


def build_evans_feasibility(p: JointDistribution) -> BilinearProgram:
    """Decision program: p is Evans-classical iff the optimum reaches 1.

    The marginal rows read ``sum q = u + t (p - u)`` with ``u`` uniform and a
    guide variable ``t`` in [0, 1] that is maximized; ``t = 1`` gives the exact
    rows ``sum q = p``. The guide only orders the search: infeasibility is
    declared when every node relaxation caps ``t`` below 1.
    """
    if len(p.shape) != 3:
        raise QcqpError("p must be over three variables (A, B, C)")
    cards = tuple(p.shape)
    bd, cell, meta = _evans_core(cards)
    t = bd.var("t")
    u = 1.0 / np.prod(cards)
    probs = np.asarray(p.to_float().probs, float)
    for a, b, c in np.ndindex(*cards):
        row = {k: 1.0 for k in cell(a, b, c)}
        row[t] = -(probs[a, b, c] - u)
        bd.row(row, u)
    meta.update(kind="feasibility", guide=t)
    return bd.program({t: 1.0}, sense="max", target=1.0, meta=meta)


def model_point(prog: BilinearProgram, m: EvansModel) -> np.ndarray:
    """Feasible point of :func:`build_evans_feasibility` (guide t = 1) built
    from an Evans model: response strings are drawn independently per b given
    the latent, so ``sum_b q = r s`` holds by construction."""
    na, nb, nc = prog.meta["cards"]
    av = list(itertools.product(range(na), repeat=nb))
    cv = list(itertools.product(range(nc), repeat=nb))
    pl = np.asarray(m.p_lambda, float)
    pm = np.asarray(m.p_mu, float)
    fa = np.asarray(m.p_a_given_b_lambda, float)
    fb = np.asarray(m.p_b_given_lambda_mu, float)
    fc = np.asarray(m.p_c_given_b_mu, float)
    # A(avec | l) and C(cvec | m)
    Al = np.array([[np.prod([fa[a[b], b, l] for b in range(nb)]) for l in range(len(pl))] for a in av])
    Cm = np.array([[np.prod([fc[c[b], b, k] for b in range(nb)]) for k in range(len(pm))] for c in cv])
    x = np.zeros(prog.n)
    q = np.einsum("l,k,il,blk,jk->ibj", pl, pm, Al, fb, Cm)
    for (i, b, j), col in prog.meta["q"].items():
        x[col] = q[i, b, j]
    r, s_ = Al @ pl, Cm @ pm
    for i, col in enumerate(prog.meta["r"]):
        x[col] = r[i]
    for j, col in enumerate(prog.meta["s"]):
        x[col] = s_[j]
    for (i, j), col in prog.meta["z"].items():
        x[col] = r[i] * s_[j]
    x[prog.meta["guide"]] = 1.0
    return x


def build_evans_visibility(p: JointDistribution) -> BilinearProgram:
    """Joint formulation: maximize v with marginal rows ``v p + (1 - v) u``."""
    prog = build_evans_feasibility(p)
    prog.target = None
    prog.meta["kind"] = "visibility"
    return prog


# -- relaxations --------------------------------------------------------------------

def _propagate(prog: BilinearProgram, lo: np.ndarray, hi: np.ndarray):
    """Tighten auxiliary bounds by interval products, in triple order."""
    for z, x, y in prog.triples:
        corners = (lo[x] * lo[y], lo[x] * hi[y], hi[x] * lo[y], hi[x] * hi[y])
        lo[z] = max(lo[z], min(corners))
        hi[z] = min(hi[z], max(corners))
    return lo, hi


def _tighten(prog: BilinearProgram, lo: np.ndarray, hi: np.ndarray, passes: int = 4) -> bool:
    """Interval propagation over the linear rows and the products, in place.

    Each row ``sum a_j x_j = b`` bounds every ``x_j`` by the extreme values of
    the rest of the row. Returns False when the box is found empty.
    """
    A = prog.A_eq.tocoo()
    r, c, a = A.row, A.col, A.data
    b = prog.b_eq
    m = A.shape[0]
    for _ in range(passes):
        before = hi - lo
        cmin = np.where(a > 0, a * lo[c], a * hi[c])
        cmax = np.where(a > 0, a * hi[c], a * lo[c])
        rmin = np.bincount(r, cmin, m)
        rmax = np.bincount(r, cmax, m)
        # a_j x_j lies in [b - (rmax - cmax), b - (rmin - cmin)]
        lo_t = b[r] - (rmax[r] - cmax)
        hi_t = b[r] - (rmin[r] - cmin)
        new_lo = np.where(a > 0, lo_t / a, hi_t / a) - 1e-12
        new_hi = np.where(a > 0, hi_t / a, lo_t / a) + 1e-12
        np.maximum.at(lo, c, new_lo)
        np.minimum.at(hi, c, new_hi)
        _propagate(prog, lo, hi)
        if np.any(lo > hi + 1e-9):
            return False
        np.minimum(lo, hi, out=lo)
        if np.max(before - (hi - lo), initial=0.0) < 1e-9:
            break
    return True


def _mccormick(prog: BilinearProgram, lo, hi):
    t = np.array(prog.triples, dtype=np.int64).reshape(-1, 3)
    k = len(t)
    Z, X, Y = t[:, 0], t[:, 1], t[:, 2]
    xl, xu, yl, yu = lo[X], hi[X], lo[Y], hi[Y]
    rows = np.repeat(np.arange(4 * k), 3)
    cols = np.stack([np.stack([Z, X, Y], 1)] * 4, 1).reshape(-1)
    one = np.ones(k)
    vals = np.stack([
        np.stack([one, -yl, -xl], 1),
        np.stack([one, -yu, -xu], 1),
        np.stack([one, -yl, -xu], 1),
        np.stack([one, -yu, -xl], 1),
    ], 1).reshape(-1)
    M = sp.csr_matrix((vals, (rows, cols)), shape=(4 * k, prog.n))
    inf = np.full(k, np.inf)
    rl = np.stack([-xl * yl, -xu * yu, -inf, -inf], 1).reshape(-1)
    ru = np.stack([inf, inf, -xu * yl, -xl * yu], 1).reshape(-1)
    return M, rl, ru


class _NodeSolver:
    """One HiGHS instance per search: the linear rows stay loaded and each node
    only rewrites column bounds and McCormick coefficients, so the simplex
    warm-starts from the previous basis."""

    def __init__(self, prog: BilinearProgram, threads=None):
        import highspy

        self.prog = prog
        t = np.array(prog.triples, dtype=np.int64).reshape(-1, 3)
        self.Z, self.X, self.Y = t[:, 0], t[:, 1], t[:, 2]
        self.m0 = prog.A_eq.shape[0]
        M, rl, ru = _mccormick(prog, prog.lower, prog.upper)
        A = sp.vstack([prog.A_eq, M], format="csc")
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("threads", threads or default_threads())
        lp = highspy.HighsLp()
        lp.num_col_, lp.num_row_ = prog.n, A.shape[0]
        lp.col_cost_ = -prog.c if prog.sense == "max" else prog.c.copy()
        lp.col_lower_, lp.col_upper_ = prog.lower.copy(), prog.upper.copy()
        lp.row_lower_ = np.r_[prog.b_eq, rl]
        lp.row_upper_ = np.r_[prog.b_eq, ru]
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        if prog.Q is not None:
            model = highspy.HighsModel()
            model.lp_ = lp
            Q = sp.csc_matrix(sp.triu(sp.csc_matrix(prog.Q)))
            hess = highspy.HighsHessian()
            hess.dim_ = prog.n
            hess.format_ = highspy.HessianFormat.kTriangular
            hess.start_ = Q.indptr.astype(np.int32)
            hess.index_ = Q.indices.astype(np.int32)
            hess.value_ = Q.data.astype(float)
            model.hessian_ = hess
            h.passModel(model)
        else:
            h.passModel(lp)
        self.h = h
        self.all_cols = np.arange(prog.n, dtype=np.int32)
        k = len(t)
        self.mc_rows = (self.m0 + np.arange(4 * k, dtype=np.int32)).astype(np.int32)
        self.coef = None

    def solve(self, lo, hi):
        prog, h = self.prog, self.h
        xl, xu, yl, yu = lo[self.X], hi[self.X], lo[self.Y], hi[self.Y]
        # coefficients of x and y in the four envelope rows
        cx = np.stack([-yl, -yu, -yl, -yu], 1).reshape(-1)
        cy = np.stack([-xl, -xu, -xu, -xl], 1).reshape(-1)
        rows = self.mc_rows
        xs = np.repeat(self.X, 4)
        ys = np.repeat(self.Y, 4)
        if self.coef is None:
            changed = np.ones(len(rows), bool), np.ones(len(rows), bool)
        else:
            changed = cx != self.coef[0], cy != self.coef[1]
        for i in np.flatnonzero(changed[0]):
            h.changeCoeff(int(rows[i]), int(xs[i]), float(cx[i]))
        for i in np.flatnonzero(changed[1]):
            h.changeCoeff(int(rows[i]), int(ys[i]), float(cy[i]))
        self.coef = (cx, cy)
        inf = np.full(len(xl), np.inf)
        rl = np.stack([-xl * yl, -xu * yu, -inf, -inf], 1).reshape(-1)
        ru = np.stack([inf, inf, -xu * yl, -xl * yu], 1).reshape(-1)
        h.changeRowsBounds(len(rows), rows, rl, ru)
        h.changeColsBounds(prog.n, self.all_cols, np.asarray(lo, float), np.asarray(hi, float))
        status = self._run()
        if status not in ("Optimal", "Infeasible", "Time limit reached"):
            # a stale basis occasionally trips the solver; retry cold once
            h.clearSolver()
            status = self._run()
        if status == "Infeasible":
            return False, None, -math.inf
        if status != "Optimal":
            h.clearSolver()
            return self._cut_bound(lo, hi)
        x = np.clip(np.array(h.getSolution().col_value, float), lo, hi)
        value = prog.objective(x)
        return True, x, (value if prog.sense == "max" else -value)

    def _run(self) -> str:
        # HiGHS counts its time limit from the first run of the instance
        self.h.setOptionValue("time_limit", self.h.getRunTime() + NODE_TIME_LIMIT)
        self.h.run()
        return self.h.modelStatusToString(self.h.getModelStatus())

    def _cut_bound(self, lo, hi, rounds: int = 40):
        """Fallback when HiGHS does not finish a node (seen with its QP solver).

        Each square x_i^2 in the diagonal Hessian is replaced by an epigraph
        variable bounded below by tangent lines, refined at the LP optimum.
        Tangents under-estimate the square, so the LP value is a valid
        relaxation bound whether or not the refinement converges.
        """
        from scipy.optimize import linprog

        prog = self.prog
        n = prog.n
        M, rl, ru = _mccormick(prog, lo, hi)
        if prog.Q is None:
            sq, qd = np.zeros(0, np.int64), np.zeros(0)
        else:
            Q = sp.csr_matrix(prog.Q)
            if (Q - sp.diags(Q.diagonal())).count_nonzero():
                raise QcqpError("node solve failed and the Hessian is not diagonal")
            sq = np.flatnonzero(Q.diagonal())
            qd = Q.diagonal()[sq]
        k = len(sq)
        sign = -1.0 if prog.sense == "max" else 1.0
        cost = np.r_[sign * prog.c, 0.5 * qd]
        fin_l, fin_u = np.isfinite(rl), np.isfinite(ru)
        A_mc = sp.hstack([M, sp.csr_matrix((M.shape[0], k))])
        A_ub = [A_mc[fin_u], -A_mc[fin_l]]
        b_ub = [ru[fin_u], -rl[fin_l]]
        A_eq = sp.hstack([prog.A_eq, sp.csr_matrix((prog.A_eq.shape[0], k))])
        bounds = list(zip(lo, hi)) + [(0, None)] * k
        pts = [lo[sq], hi[sq], 0.5 * (lo[sq] + hi[sq])]
        x = None
        for _ in range(rounds):
            for t in pts:
                # e_i >= 2 t x_i - t^2
                cut = sp.csr_matrix((np.r_[2 * t, -np.ones(k)],
                                     (np.r_[np.arange(k), np.arange(k)], np.r_[sq, n + np.arange(k)])),
                                    shape=(k, n + k))
                A_ub.append(cut)
                b_ub.append(t * t)
            res = linprog(cost, A_ub=sp.vstack(A_ub), b_ub=np.concatenate(b_ub), A_eq=A_eq,
                          b_eq=prog.b_eq, bounds=bounds, method="highs")
            if res.status == 2:
                return False, None, -math.inf
            if res.status != 0:
                raise QcqpError(f"node relaxation failed: {res.message}")
            x = np.clip(res.x[:n], lo, hi)
            lp_val = float(res.fun)
            gap = x[sq] ** 2 - res.x[n:]
            if gap.size == 0 or gap.max() <= 1e-12:
                break
            pts = [x[sq]]
        # max-sense bound, as returned by solve()
        return True, x, (-lp_val + prog.constant if prog.sense == "max" else -(lp_val + prog.constant))


def _solve_node(prog, lo, hi, threads=None, fixed=False, solver=None):
    """Solve the relaxation (or, with ``fixed``, the LP/QP obtained once every
    branch variable is pinned: the envelopes then hold with equality).
    Returns (ok, x, value-in-max-sense)."""
    if fixed:
        lo, hi = lo.copy(), hi.copy()
        for v in prog.pin_vars:
            hi[v] = lo[v]
    if solver is None:
        solver = _NodeSolver(prog, threads)
    return solver.solve(lo, hi)


def _branch_choice(prog, x, lo, hi):
    branch = set(prog.branch_vars)
    best, choice = -1.0, None
    for k, (z, xi, yi) in enumerate(prog.triples):
        viol = abs(x[z] - x[xi] * x[yi])
        if viol > best + 1e-15:
            cands = [v for v in (xi, yi) if v in branch and hi[v] - lo[v] > 1e-12]
            if not cands:
                continue
            # wider box first, then lowest index
            var = min(cands, key=lambda v: (-(hi[v] - lo[v]), v))
            best, choice = viol, var
    return best, choice


BRANCH_BLEND = 0.5


def _split_point(v, lo, hi):
    # blend of the midpoint and the relaxation value, kept off the box edges
    w = hi - lo
    pt = (1 - BRANCH_BLEND) * 0.5 * (lo + hi) + BRANCH_BLEND * v
    return min(max(pt, lo + 0.1 * w), hi - 0.1 * w)


def solve_global(prog: BilinearProgram, gap_tol: float = 1e-3, time_limit: float | None = None,
                 max_nodes: int | None = None, threads: int | None = None) -> SolveReport:
    """Best-bound spatial branch-and-bound.

    Pruning is sound: a node is discarded only when its McCormick relaxation is
    infeasible or its bound cannot improve on the incumbent (or, for decision
    programs, cannot reach the target).
    """
    t0 = time.perf_counter()
    sign = 1.0 if prog.sense == "max" else -1.0
    target = None if prog.target is None else sign * prog.target
    lo0, hi0 = prog.lower.copy(), prog.upper.copy()
    if not _tighten(prog, lo0, hi0):
        lo0, hi0 = None, None
    best_val, best_x = -math.inf, None
    nodes = 0
    counter = itertools.count()
    heap: list = []
    pruned = [-math.inf]  # best bound among nodes discarded by the gap test
    unresolved = False  # a leaf that could neither be split nor certified
    solver = _NodeSolver(prog, threads)

    def push(lo, hi):
        if lo is None or not _tighten(prog, lo, hi):
            return
        ok, x, bound = solver.solve(lo, hi)
        if not ok:
            return
        if target is not None and bound < target - FEAS_TOL:
            pruned[0] = max(pruned[0], bound)
            return
        if target is None and bound <= best_val + gap_tol:
            pruned[0] = max(pruned[0], bound)
            return
        heapq.heappush(heap, (-bound, next(counter), lo, hi, x))

    def try_incumbent(x, lo, hi):
        nonlocal best_val, best_x
        cands = []
        if prog.violation(x) <= FEAS_TOL:
            cands.append(x)
        flo, fhi = lo.copy(), hi.copy()
        for v in prog.pin_vars:
            flo[v] = fhi[v] = min(max(x[v], lo[v]), hi[v])
        ok, xf, _ = solver.solve(flo, fhi)
        if ok:
            cands.append(xf)
        for cand in cands:
            if prog.violation(cand) <= FEAS_TOL:
                val = sign * prog.objective(cand)
                if val > best_val:
                    best_val, best_x = val, cand

    push(lo0, hi0)
    status = None
    while heap:
        if target is not None and best_val >= target - 1e-9:
            status = "Feasible"
            break
        neg_bound, _, lo, hi, x = heap[0]
        bound = -neg_bound
        if target is None and bound - best_val <= gap_tol:
            status = "Feasible"
            break
        if (max_nodes is not None and nodes >= max_nodes) or \
                (time_limit is not None and time.perf_counter() - t0 > time_limit):
            status = "GapLimit"
            break
        heapq.heappop(heap)
        nodes += 1
        tried = target is not None or nodes <= 500 or nodes % 4 == 0
        if tried:
            try_incumbent(x, lo, hi)
        if target is None and bound - best_val <= gap_tol:
            continue
        viol, var = _branch_choice(prog, x, lo, hi)
        if var is None or viol <= FEAS_TOL:
            # leaf: record its point, and keep its bound in case it was not attained
            if not tried:
                try_incumbent(x, lo, hi)
            pruned[0] = max(pruned[0], bound)
            if viol > FEAS_TOL and target is not None and bound >= target - FEAS_TOL:
                unresolved = True
            continue
        mid = _split_point(x[var], lo[var], hi[var])
        for side in (0, 1):
            nlo, nhi = lo.copy(), hi.copy()
            if side == 0:
                nhi[var] = mid
            else:
                nlo[var] = mid
            push(nlo, nhi)
    if status is None:
        if target is not None:
            if best_val >= target - 1e-9:
                status = "Feasible"
            else:
                status = "GapLimit" if unresolved else "InfeasibleCertifiedByBound"
        else:
            status = "Feasible" if best_x is not None else "InfeasibleCertifiedByBound"
    open_bound = max((-h[0] for h in heap), default=-math.inf)
    upper = max(open_bound, best_val, pruned[0])
    if status == "InfeasibleCertifiedByBound":
        upper = -math.inf if target is None else min(upper, target)
    lower = best_val
    if prog.sense == "min":
        lower, upper = -upper, -lower
    obj = None if best_x is None else prog.objective(best_x)
    return SolveReport(status, obj, lower, upper, best_x, nodes, time.perf_counter() - t0)


# -- visibility ---------------------------------------------------------------------

@dataclass
class VisibilityResult:
    value: float          # certified-feasible visibility
    upper: float          # certified-infeasible above this
    probes: list = field(default_factory=list)
    nodes: int = 0

    def to_json(self) -> dict:
        return {"visibility": self.value, "upper": self.upper, "nodes": self.nodes,
                "probes": self.probes}


def visibility(p: JointDistribution, gap_tol: float = 0.01, mode: str = "bisection",
               time_limit: float | None = None, threads: int | None = None) -> VisibilityResult:
    """Largest v with ``v p + (1 - v) u`` Evans-classical, bracketed to ``gap_tol``.

    Each probe's branch-and-bound also yields certified facts about the noise
    line (an incumbent at guide value t proves ``v t`` feasible; a global bound
    proves everything above ``v * bound`` infeasible) which tighten the bracket.
    """
    if mode == "joint":
        prog = build_evans_visibility(p)
        rep = solve_global(prog, gap_tol, time_limit, threads=threads)
        if rep.status == "GapLimit":
            raise GapLimitError(rep)
        return VisibilityResult(rep.objective, rep.upper, [], rep.nodes)
    if mode != "bisection":
        raise QcqpError(f"unknown visibility mode {mode!r}")
    lo, hi = 0.0, 1.0
    probes = []
    nodes = 0
    v = 1.0
    while True:
        prog = build_evans_feasibility(mix_with_uniform(p.to_float(), v))
        rep = solve_global(prog, gap_tol, time_limit, threads=threads)
        nodes += rep.nodes
        probes.append({"v": v, "status": rep.status, "nodes": rep.nodes})
        if rep.status == "GapLimit":
            raise GapLimitError(rep)
        if rep.status == "Feasible":
            lo = max(lo, v)
        else:
            hi = min(hi, v * max(rep.upper, 0.0), v)
            if rep.objective is not None:
                lo = max(lo, v * rep.objective)
        if v == 1.0 and rep.status == "Feasible":
            return VisibilityResult(1.0, 1.0, probes, nodes)
        if hi - lo <= gap_tol:
            break
        v = 0.5 * (lo + hi)
    return VisibilityResult(lo, hi, probes, nodes)


class GapLimitError(RuntimeError):
    def __init__(self, report: SolveReport):
        super().__init__(f"gap limit reached: bounds [{report.lower}, {report.upper}] "
                         f"after {report.nodes} nodes")
        self.report = report


# -- functionals --------------------------------------------------------------------

Factor = dict  # linear form over p-entries: {(a, b, c): coef}


def factored_terms(w: PolynomialWitness) -> list[tuple[Fraction, list[Factor]]]:
    """Products of linear forms representing ``w``'s left side.

    Presets built from marginals keep their marginal factors (fewer branch
    dimensions); everything else is factored entry by entry. The factored
    form is expanded again and compared with ``w`` exactly.
    """
    shape = w.shape
    pa = [{idx: Fraction(1) for idx in np.ndindex(*shape) if idx[0] == a} for a in range(shape[0])]

    def e(*idx):
        return {tuple(idx): Fraction(1)}

    if w.name == "pearl":
        terms = [(Fraction(1), [e(0, 1, 0), pa[1]]), (Fraction(1), [e(1, 1, 1), pa[0]]),
                 (Fraction(-1), [pa[0], pa[1]])]
    elif w.name == "bonet":
        terms = [(Fraction(1), [e(0, 1, 0), pa[1], pa[2]]), (Fraction(-1), [e(1, 1, 0), pa[0], pa[2]]),
                 (Fraction(-1), [e(1, 1, 1), pa[0], pa[2]]), (Fraction(-1), [e(2, 0, 1), pa[0], pa[1]]),
                 (Fraction(-1), [e(2, 1, 0), pa[0], pa[1]])]
    else:
        terms = [(c, [e(*idx) for idx in m]) for c, m in w.terms]
    expanded = Poly()
    for c, factors in terms:
        prod = Poly.const(c)
        for f in factors:
            prod = prod * Poly({(k,): v for k, v in f.items()})
        expanded = expanded + prod
    if expanded.terms != w.to_poly().terms:
        raise WitnessError(f"factored form of {w.name!r} does not expand to the witness")
    return terms


def build_functional(w: PolynomialWitness) -> BilinearProgram:
    """maximize w's left side over the Evans classical set (degree <= 3)."""
    if w.degree > 3:
        raise QcqpError(f"degree {w.degree} objectives are not supported (max 3)")
    bd, cell, meta = _evans_core(w.shape)
    terms = factored_terms(w)
    forms: dict[tuple, int] = {}

    def form_var(f: Factor) -> int:
        key = tuple(sorted(f.items()))
        if key not in forms:
            v = bd.var(f"l{len(forms)}")
            row = {v: -1.0}
            for idx, coef in f.items():
                for col in cell(*idx):
                    row[col] = row.get(col, 0.0) + float(coef)
            bd.row(row, 0.0)
            forms[key] = v
        return forms[key]

    # y-side preference: factors that occur most often across terms
    counts: dict[tuple, int] = {}
    for _, fs in terms:
        for f in fs:
            key = tuple(sorted(f.items()))
            counts[key] = counts.get(key, 0) + 1
    products: dict[tuple[int, int], int] = {}
    c: dict[int, float] = {}
    const = 0.0
    for coef, fs in terms:
        if not fs:
            const += float(coef)
            continue
        fs = sorted(fs, key=lambda f: (counts[tuple(sorted(f.items()))], tuple(sorted(f.items()))))
        cur = form_var(fs[0])
        for f in fs[1:]:
            y = form_var(f)
            key = (cur, y)
            if key not in products:
                zv = bd.var(f"w{len(products)}")
                bd.triples.append((zv, cur, y))
                bd.branch.extend((cur, y))
                products[key] = zv
            cur = products[key]
        c[cur] = c.get(cur, 0.0) + float(coef)
    # both factors of every product are split: the envelope error then shrinks
    # with the product of the two widths
    bd.branch.extend(meta["r"])
    meta.update(kind="functional", forms=len(forms), products=len(products))
    return bd.program(c, sense="max", constant=const, meta=meta)


@dataclass
class FunctionalResult:
    value: float
    upper: float
    point: JointDistribution | None
    nodes: int
    wall_time: float


def implied_distribution(prog: BilinearProgram, x: np.ndarray) -> JointDistribution:
    """p(a,b,c) read off the q-variables of a solution."""
    cards = prog.meta["cards"]
    na, nb, nc = cards
    av = list(itertools.product(range(na), repeat=nb))
    cv = list(itertools.product(range(nc), repeat=nb))
    arr = np.zeros(cards)
    for (i, b, j), col in prog.meta["q"].items():
        arr[av[i][b], b, cv[j][b]] += x[col]
    arr = np.clip(arr, 0, None)
    arr /= arr.sum()
    return JointDistribution(tuple(zip("ABC", cards)), arr)


def max_functional(w: PolynomialWitness, gap_tol: float = 1e-3, time_limit: float | None = None,
                   threads: int | None = None) -> FunctionalResult:
    prog = build_functional(w)
    if not prog.triples:
        # linear (or constant) objective: a single LP over q
        ok, x, val = _solve_node(prog, prog.lower, prog.upper, threads)
        if not ok:
            raise QcqpError("linear functional program infeasible")
        return FunctionalResult(val, val, implied_distribution(prog, x), 0, 0.0)
    rep = solve_global(prog, gap_tol, time_limit, threads=threads)
    if rep.status == "GapLimit":
        raise GapLimitError(rep)
    return FunctionalResult(rep.objective, rep.upper, implied_distribution(prog, rep.point),
                            rep.nodes, rep.wall_time)


# -- ball witness -------------------------------------------------------------------

@dataclass
class BallWitnessResult:
    witness: PolynomialWitness
    bound: float            # certified lower bound on min ||p - p*||^2
    upper: float            # attained by ``point``
    point: JointDistribution | None
    degenerate: bool
    nodes: int
    wall_time: float


def build_ball(p_star: JointDistribution) -> BilinearProgram:
    cards = tuple(p_star.shape)
    bd, cell, meta = _evans_core(cards)
    ps = np.asarray(p_star.to_float().probs, float)
    pv = {}
    for idx in np.ndindex(*cards):
        v = bd.var(f"p[{''.join(map(str, idx))}]")
        row = {col: 1.0 for col in cell(*idx)}
        row[v] = -1.0
        bd.row(row, 0.0)
        pv[idx] = v
    n = len(bd.names)
    c = {v: -2.0 * ps[idx] for idx, v in pv.items()}
    cols = list(pv.values())
    Q = sp.csc_matrix((np.full(len(cols), 2.0), (cols, cols)), shape=(n, n))
    meta.update(kind="ball", p=pv)
    return bd.program(c, sense="min", Q=Q, constant=float(np.sum(ps ** 2)), meta=meta)


def ball_witness(p_star: JointDistribution, gap_tol: float = 1e-5, time_limit: float | None = None,
                 threads: int | None = None) -> BallWitnessResult:
    """Quadratic witness ``||p - p*||^2 - B* >= 0`` expanded over p-entries,
    with ``B*`` a certified lower bound of the squared distance to the
    classical set."""
    prog = build_ball(p_star)
    rep = solve_global(prog, gap_tol, time_limit, threads=threads)
    if rep.status == "GapLimit":
        raise GapLimitError(rep)
    bound = max(rep.lower, 0.0)
    degenerate = bound <= 1e-9
    if degenerate:
        bound = 0.0
    ps = p_star.to_float().probs
    poly = Poly()
    for idx in np.ndindex(*p_star.shape):
        pi = Fraction(float(ps[idx])).limit_denominator(10**12)
        poly = poly + Poly.var(*idx) * Poly.var(*idx) - 2 * pi * Poly.var(*idx)
    const = sum((Fraction(float(ps[idx])).limit_denominator(10**12) ** 2
                 for idx in np.ndindex(*p_star.shape)), Fraction(0))
    poly = poly + (const - Fraction(bound).limit_denominator(10**12))
    w = PolynomialWitness.from_poly(poly, p_star.shape, 0, ">=", "ball")
    point = implied_distribution(prog, rep.point) if rep.point is not None else None
    return BallWitnessResult(w, bound, rep.upper, point, degenerate, rep.nodes, rep.wall_time)


def witness_constant(w: PolynomialWitness) -> Fraction:
    for c, m in w.terms:
        if not m:
            return c
    return Fraction(0)
