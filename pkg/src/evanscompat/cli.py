"""Command-line front end.

Exit codes: 0 feasible or success, 2 infeasible (certified), 3 gap or time
limit, 1 usage or data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunReport:
    command: str
    inputs_digest: str
    status: str
    results: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = __version__

    def to_json(self) -> dict:
        return {"command": self.command, "inputs_digest": self.inputs_digest,
                "status": self.status, "results": self.results, "artifacts": self.artifacts,
                "wall_time": self.wall_time, "version": self.version}


def digest(command: str, payload) -> str:
    blob = json.dumps({"command": command, "inputs": payload}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _read_json(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") \
            from None


def _load_dist(path: str):
    from .dist import DistributionError, JointDistribution
    data = _read_json(path)
    try:
        return JointDistribution.from_json(data), data
    except DistributionError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def _parse_rationals(text: str):
    try:
        return [Fraction(t.strip()) for t in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"cannot parse rational list {text!r}") from None


def _load_dag(spec: str):
    from . import graph
    named = {"evans": graph.evans_dag, "bilocal": graph.bilocal_dag,
             "instrumental": graph.instrumental_dag}
    if spec in named:
        return named[spec]()
    try:
        return graph.CausalDag.from_json(_read_json(spec))
    except graph.GraphError as exc:
        raise UsageError(f"{spec}: {exc}") from None


def _names(text):
    return [t for t in (text or "").split(",") if t]


# -- commands -----------------------------------------------------------------------

def cmd_gen(args):
    from . import dist, quantum
    if args.what == "pr-box":
        pa = _parse_rationals(args.pa)
        if len(pa) != 3:
            raise UsageError("--pa needs three entries")
        try:
            p = dist.pr_box(pa)
        except dist.DistributionError as exc:
            raise UsageError(str(exc)) from None
        payload = {"pa": [str(v) for v in pa]}
    elif args.what == "swap":
        if args.dim < 2:
            raise UsageError("--dim must be at least 2")
        try:
            s = quantum.SwapSetup.uniform_basis(args.dim, args.basis, args.c_basis or args.basis)
        except quantum.PovmError as exc:
            raise UsageError(str(exc)) from None
        p = quantum.swap_distribution(s)
        payload = {"dim": args.dim, "basis": args.basis, "c_basis": args.c_basis}
    else:
        if args.name != "pr-model":
            raise UsageError(f"unknown model {args.name!r}")
        p = dist.evaluate_evans_model(dist.explicit_pr_model())
        payload = {"model": args.name}
    data = p.to_json()
    if args.out:
        _write_json(args.out, data)
    return EXIT_OK, "ok", {"distribution": data}, {"out": args.out} if args.out else {}, payload


def cmd_sep(args):
    from . import graph
    dag = _load_dag(args.dag)
    X, Y, Z = _names(args.x), _names(args.y), _names(args.z)
    try:
        if args.kind == "dsep":
            ans = graph.d_separated(dag, X, Y, Z)
        else:
            ans = graph.e_separated(dag, X, Y, Z, _names(args.delete))
    except graph.GraphError as exc:
        raise UsageError(str(exc)) from None
    payload = {"dag": dag.to_json(), "x": X, "y": Y, "z": Z, "delete": _names(getattr(args, "delete", ""))}
    return EXIT_OK, "ok", {"separated": ans}, {}, payload


def _cert_path(args, kind):
    if args.cert:
        return args.cert
    src = Path(args.dist)
    return str(src.with_name(f"{src.stem}.{kind}.cert.json"))


def cmd_check(args):
    from . import gpt, inflation, qcqp
    p, raw = _load_dist(args.dist)
    payload = {"dist": raw, "kind": args.kind, "order": args.order}
    if args.kind == "classical":
        if len(p.shape) != 3:
            raise UsageError("classical check needs a distribution over (A, B, C)")
        rep = qcqp.solve_global(qcqp.build_evans_feasibility(p), time_limit=args.time_limit,
                                threads=args.threads)
        code = {"Feasible": EXIT_OK, "InfeasibleCertifiedByBound": EXIT_INFEASIBLE}.get(rep.status, EXIT_LIMIT)
        return code, rep.status, rep.to_json(), {}, payload
    if args.kind == "inflation":
        if args.order is None or args.order < 1:
            raise UsageError("check inflation needs --order n (n >= 1)")
        if len(p.shape) != 3:
            raise UsageError("inflation check needs a distribution over (A, B, C)")
        r = inflation.check(p, args.order, threads=args.threads)
        if r.feasible:
            return EXIT_OK, "Feasible", {}, {}, payload
        path = _cert_path(args, f"inflation{args.order}")
        _write_json(path, r.certificate.to_json())
        return EXIT_INFEASIBLE, "Infeasible", {"validated": r.validated}, {"certificate": path}, payload
    r = gpt.check_gpt(p, threads=args.threads)
    if r.feasible:
        return EXIT_OK, "Feasible", {}, {}, payload
    path = _cert_path(args, "gpt")
    _write_json(path, r.certificate.to_json())
    return EXIT_INFEASIBLE, "Infeasible", {"validated": True}, {"certificate": path}, payload


def cmd_visibility(args):
    from . import gpt, qcqp
    p, raw = _load_dist(args.dist)
    payload = {"dist": raw, "kind": args.kind, "gap": args.gap}
    if args.kind == "classical":
        try:
            r = qcqp.visibility(p, gap_tol=args.gap, time_limit=args.time_limit, threads=args.threads)
        except qcqp.GapLimitError as exc:
            return EXIT_LIMIT, "GapLimit", exc.report.to_json(), {}, payload
        return EXIT_OK, "ok", r.to_json(), {}, payload
    try:
        scan = gpt.gpt_visibility(p, tol=args.gap, threads=args.threads)
    except gpt.MonotonicityError as exc:
        return EXIT_ERROR, "NonMonotone", {"probes": exc.probes}, {}, payload
    return EXIT_OK, "ok", {"visibility": scan.v_crit, "probes": scan.probes,
                           "inequality_threshold": gpt.topology_inequality_threshold(p)
                           if tuple(p.shape) == (2, 2, 2) else None}, {}, payload


def cmd_witness(args):
    from . import gpt, inflation, qcqp, witness
    payload = {"kind": args.kind, "target": args.target, "order": args.order}
    if args.kind == "preset":
        try:
            w = witness.preset(args.target)
        except witness.WitnessError as exc:
            raise UsageError(str(exc)) from None
        results = {"witness": w.to_json()}
        if args.eval:
            p, raw = _load_dist(args.eval)
            payload["eval"] = raw
            val, violated = witness.evaluate_witness(w, p)
            results.update(value=str(val) if isinstance(val, Fraction) else float(val), violated=violated)
        if args.maximize:
            try:
                r = qcqp.max_functional(w, gap_tol=args.gap, time_limit=args.time_limit,
                                        threads=args.threads)
            except qcqp.GapLimitError as exc:
                return EXIT_LIMIT, "GapLimit", exc.report.to_json(), {}, payload
            results["max_over_evans"] = {"value": r.value, "upper": r.upper, "nodes": r.nodes}
        return EXIT_OK, "ok", results, {}, payload
    if not args.target:
        raise UsageError(f"witness {args.kind} needs a distribution file")
    p, raw = _load_dist(args.target)
    payload["dist"] = raw
    if args.kind == "ball":
        try:
            r = qcqp.ball_witness(p, time_limit=args.time_limit, threads=args.threads)
        except qcqp.GapLimitError as exc:
            return EXIT_LIMIT, "GapLimit", exc.report.to_json(), {}, payload
        val, violated = witness.evaluate_witness(r.witness, p)
        return EXIT_OK, "ok", {"witness": r.witness.to_json(), "bound": r.bound,
                               "degenerate": r.degenerate, "value": float(val),
                               "violated": violated}, {}, payload
    if args.order is not None:
        res = inflation.check(p, args.order)
        if res.feasible:
            return EXIT_OK, "Feasible", {"message": "no witness: inflation LP feasible"}, {}, payload
        w = inflation.dual_witness(p, args.order, res)
    else:
        res = gpt.check_gpt(p)
        if res.feasible:
            return EXIT_OK, "Feasible", {"message": "no witness: topology LP feasible"}, {}, payload
        w = gpt.gpt_dual_witness(p, res)
    val, _ = witness.evaluate_witness(w, p)
    return EXIT_INFEASIBLE, "Infeasible", {"witness": w.to_json(), "value": str(val)}, {}, payload


def cmd_export(args):
    from . import gpt, inflation
    from .lp import export_lp_text
    p, raw = _load_dist(args.dist)
    payload = {"dist": raw, "kind": args.kind, "order": args.order}
    if args.kind == "inflation":
        if args.order is None:
            raise UsageError("export lp --kind inflation needs --order")
        lp, meta = inflation.export(p, args.order, args.out, args.meta)
        info = {"rows": lp.n_rows, "columns": lp.n_vars}
    else:
        g = gpt.build_gpt_lp(p)
        export_lp_text(g.lp, args.out)
        if args.meta:
            _write_json(args.meta, {"cards": g.cards, "group_rows": g.group_rows,
                                    "tags": list(g.lp.tags or [])})
        info = {"rows": g.lp.n_rows, "columns": g.lp.n_vars}
    arts = {"lp": args.out}
    if args.meta:
        arts["meta"] = args.meta
    return EXIT_OK, "ok", info, arts, payload


def cmd_reproduce(args):
    from . import acceptance
    echo = (lambda line: print(line, file=sys.stderr)) if args.format == "text" else None
    numbers = [int(k) for k in args.only.split(",")] if args.only else None
    outcomes = acceptance.run(numbers, seed=args.seed, extended=args.extended, echo=echo)
    results = {str(o.number): o.to_json() for o in outcomes}
    status = "ok" if all(o.passed for o in outcomes) else "failed"
    arts = {}
    if args.out:
        stable = {k: {kk: vv for kk, vv in v.items() if kk != "wall_time"} for k, v in results.items()}
        _write_json(args.out, stable)
        arts["report"] = args.out
    return (EXIT_OK if status == "ok" else EXIT_ERROR), status, results, arts, \
        {"seed": args.seed, "only": numbers, "extended": args.extended}


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "text"), default="text")
    common.add_argument("--threads", type=int, default=None,
                        help="HiGHS threads (default: $EVANSCOMPAT_THREADS or 1)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--time-limit", type=float, default=None)
    common.add_argument("--report", help="write the run report as JSON to this path")

    parser = _Parser(prog="evanscompat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", parents=[common], help="generate a distribution")
    gsub = gen.add_subparsers(dest="what", required=True, parser_class=_Parser)
    g = gsub.add_parser("pr-box", parents=[common])
    g.add_argument("--pa", required=True, help="p_A as three rationals, e.g. 10/21,1/21,10/21")
    g.add_argument("--out")
    g = gsub.add_parser("swap", parents=[common])
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--basis", default="computational", choices=("computational", "fourier"))
    g.add_argument("--c-basis", choices=("computational", "fourier"))
    g.add_argument("--out")
    g = gsub.add_parser("model", parents=[common])
    g.add_argument("name", help="pr-model")
    g.add_argument("--out")

    for kind in ("dsep", "esep"):
        s = sub.add_parser(kind, parents=[common], help=f"{kind[0]}-separation query")
        s.add_argument("--dag", required=True, help="DAG JSON file or evans|bilocal|instrumental")
        s.add_argument("--x", required=True)
        s.add_argument("--y", required=True)
        s.add_argument("--z", default="")
        if kind == "esep":
            s.add_argument("--delete", default="")
        s.set_defaults(kind=kind)

    c = sub.add_parser("check", parents=[common], help="compatibility check")
    c.add_argument("kind", choices=("classical", "inflation", "gpt"))
    c.add_argument("dist")
    c.add_argument("--order", type=int)
    c.add_argument("--cert", help="certificate output path")

    v = sub.add_parser("visibility", parents=[common], help="noise robustness")
    v.add_argument("kind", choices=("classical", "gpt"))
    v.add_argument("dist")
    v.add_argument("--gap", type=float, default=0.01)

    w = sub.add_parser("witness", parents=[common], help="witness construction")
    w.add_argument("kind", choices=("ball", "dual", "preset"))
    w.add_argument("target", nargs="?", help="distribution file, or preset name")
    w.add_argument("--order", type=int, help="dual: inflation order (default: topology LP)")
    w.add_argument("--eval", help="preset: evaluate at this distribution")
    w.add_argument("--maximize", action="store_true", help="preset: maximize over the Evans set")
    w.add_argument("--gap", type=float, default=1e-3)

    e = sub.add_parser("export", parents=[common], help="export an LP")
    e.add_argument("what", choices=("lp",))
    e.add_argument("dist")
    e.add_argument("--kind", choices=("inflation", "gpt"), default="inflation")
    e.add_argument("--order", type=int)
    e.add_argument("--out", required=True)
    e.add_argument("--meta")

    r = sub.add_parser("reproduce", parents=[common], help="run the acceptance checks")
    r.add_argument("what", choices=("all",))
    r.add_argument("--only", help="comma-separated criterion numbers")
    r.add_argument("--extended", action="store_true", help="include the order-3 inflation solve")
    r.add_argument("--out", help="write timing-free results here")
    return parser


HANDLERS = {"gen": cmd_gen, "dsep": cmd_sep, "esep": cmd_sep, "check": cmd_check,
            "visibility": cmd_visibility, "witness": cmd_witness, "export": cmd_export,
            "reproduce": cmd_reproduce}


def _emit(report: RunReport, fmt: str):
    if fmt == "json":
        print(json.dumps(_jsonable(report.to_json()), indent=1, sort_keys=True))
        return
    print(f"{report.command}: {report.status}")
    for k, v in report.results.items():
        text = json.dumps(_jsonable(v), sort_keys=True)
        print(f"  {k}: {text if len(text) < 200 else text[:197] + '...'}")
    for k, v in report.artifacts.items():
        print(f"  wrote {k}: {v}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"evanscompat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.threads is not None:
        os.environ["EVANSCOMPAT_THREADS"] = str(args.threads)
    parts = [args.command]
    for k in ("what", "kind"):
        v = getattr(args, k, None)
        if isinstance(v, str) and v not in parts:
            parts.append(v)
    command = " ".join(parts)
    t0 = time.perf_counter()
    try:
        code, status, results, artifacts, payload = HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"evanscompat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:  # domain validation errors from the engines
        print(f"evanscompat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report = RunReport(command, digest(command, _jsonable(payload)), status, _jsonable(results),
                       artifacts, time.perf_counter() - t0)
    if args.report:
        _write_json(args.report, report.to_json())
    _emit(report, args.format)
    return code


if __name__ == "__main__":
    sys.exit(main())
