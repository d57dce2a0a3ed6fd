"""Causal DAGs: d-separation, node splitting, e-separation and the split-Evans
inflation family.

Node ids are strings. Every function that returns a collection of nodes returns
it sorted so results are reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

OBSERVABLE = "observable"
LATENT = "latent"


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("graph contains a cycle: " + " -> ".join(cycle + cycle[:1]))


@dataclass(frozen=True)
class CausalDag:
    nodes: tuple[tuple[str, str], ...]
    edges: tuple[tuple[str, str], ...]
    exogenous_latents: bool = False
    _parents: dict = field(init=False, repr=False, compare=False)
    _children: dict = field(init=False, repr=False, compare=False)
    _descendants: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple((str(n), str(k)) for n, k in self.nodes))
        object.__setattr__(self, "edges", tuple((str(u), str(v)) for u, v in self.edges))
        ids = [n for n, _ in self.nodes]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids")
        kinds = dict(self.nodes)
        for _, k in self.nodes:
            if k not in (OBSERVABLE, LATENT):
                raise GraphError(f"unknown node kind {k!r}")
        parents = {n: set() for n in ids}
        children = {n: set() for n in ids}
        for u, v in self.edges:
            if u not in kinds or v not in kinds:
                raise GraphError(f"edge ({u}, {v}) references an unknown node")
            parents[v].add(u)
            children[u].add(v)
        object.__setattr__(self, "_parents", {n: frozenset(s) for n, s in parents.items()})
        object.__setattr__(self, "_children", {n: frozenset(s) for n, s in children.items()})
        cycle = _find_cycle(ids, children)
        if cycle:
            raise CycleError(cycle)
        if self.exogenous_latents:
            for n, k in self.nodes:
                if k == LATENT and parents[n]:
                    raise GraphError(f"latent node {n} has parents but latents must be exogenous")
        object.__setattr__(self, "_descendants", _transitive_closure(ids, children))

    @classmethod
    def build(cls, observable: Iterable[str], latent: Iterable[str],
              edges: Iterable[tuple[str, str]], exogenous_latents: bool = False) -> "CausalDag":
        nodes = [(n, OBSERVABLE) for n in observable] + [(n, LATENT) for n in latent]
        return cls(tuple(nodes), tuple(edges), exogenous_latents)

    @property
    def node_ids(self) -> list[str]:
        return sorted(n for n, _ in self.nodes)

    def kind(self, node: str) -> str:
        self._check(node)
        return dict(self.nodes)[node]

    @property
    def observables(self) -> list[str]:
        return sorted(n for n, k in self.nodes if k == OBSERVABLE)

    @property
    def latents(self) -> list[str]:
        return sorted(n for n, k in self.nodes if k == LATENT)

    def parents(self, node: str) -> list[str]:
        self._check(node)
        return sorted(self._parents[node])

    def children(self, node: str) -> list[str]:
        self._check(node)
        return sorted(self._children[node])

    def descendants(self, node: str) -> frozenset[str]:
        """Strict descendants of ``node``."""
        self._check(node)
        return self._descendants[node]

    def topological_order(self) -> list[str]:
        indeg = {n: len(self._parents[n]) for n in self._parents}
        ready = sorted(n for n, d in indeg.items() if d == 0)
        out = []
        while ready:
            n = ready.pop(0)
            out.append(n)
            for c in sorted(self._children[n]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        return out

    def remove_nodes(self, drop: Iterable[str]) -> "CausalDag":
        drop = set(drop)
        for d in drop:
            self._check(d)
        nodes = tuple((n, k) for n, k in self.nodes if n not in drop)
        edges = tuple((u, v) for u, v in self.edges if u not in drop and v not in drop)
        return CausalDag(nodes, edges, self.exogenous_latents)

    def _check(self, node: str) -> None:
        if node not in self._parents:
            raise GraphError(f"unknown node {node!r}")

    # -- serialization -------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "nodes": [{"id": n, "kind": k} for n, k in self.nodes],
            "edges": [[u, v] for u, v in self.edges],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "CausalDag":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            nodes = tuple((d["id"], d.get("kind", OBSERVABLE)) for d in data["nodes"])
            edges = tuple((e[0], e[1]) for e in data["edges"])
        except (KeyError, TypeError, IndexError) as exc:
            raise GraphError(f"malformed DAG JSON: {exc}") from exc
        return cls(nodes, edges, bool(data.get("exogenous_latents", False)))


def _find_cycle(ids, children) -> list[str] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in ids}
    stack_path: list[str] = []

    def visit(n):
        color[n] = GREY
        stack_path.append(n)
        for c in sorted(children[n]):
            if color[c] == GREY:
                return stack_path[stack_path.index(c):]
            if color[c] == WHITE:
                found = visit(c)
                if found:
                    return found
        stack_path.pop()
        color[n] = BLACK
        return None

    for n in sorted(ids):
        if color[n] == WHITE:
            found = visit(n)
            if found:
                return list(found)
    return None


def _transitive_closure(ids, children) -> dict[str, frozenset[str]]:
    out = {}
    for n in ids:
        seen = set()
        todo = list(children[n])
        while todo:
            c = todo.pop()
            if c not in seen:
                seen.add(c)
                todo.extend(children[c])
        out[n] = frozenset(seen)
    return out


def _as_set(dag: CausalDag, xs, label: str) -> frozenset[str]:
    if isinstance(xs, str):
        xs = [xs]
    s = frozenset(xs)
    for x in s:
        dag._check(x)
    return s


def _disjoint(*sets) -> None:
    seen: set[str] = set()
    for s in sets:
        if seen & s:
            raise GraphError(f"node sets overlap on {sorted(seen & s)}")
        seen |= s


def d_separated(dag: CausalDag, X, Y, Z=()) -> bool:
    """True iff every undirected path between X and Y is blocked by Z.

    Reachability traversal over (node, direction) states: a state records
    whether the walk entered the node along an edge pointing into it ("up"
    means we arrived from a child). Colliders pass iff the node or one of its
    descendants is in Z.
    """
    X, Y, Z = _as_set(dag, X, "X"), _as_set(dag, Y, "Y"), _as_set(dag, Z, "Z")
    _disjoint(X, Y, Z)
    if not X or not Y:
        return True
    # nodes with a descendant (or itself) in Z
    ancestors_of_z = set(Z)
    for n in dag._parents:
        if dag._descendants[n] & Z:
            ancestors_of_z.add(n)

    visited = set()
    # direction "up": arrived from a child (or start); "down": arrived from a parent
    todo = [(x, "up") for x in sorted(X)]
    while todo:
        node, direction = todo.pop()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node in Y:
            return False
        if direction == "up":
            if node in Z:
                continue
            for p in dag._parents[node]:
                todo.append((p, "up"))
            for c in dag._children[node]:
                todo.append((c, "down"))
        else:
            if node not in Z:
                for c in dag._children[node]:
                    todo.append((c, "down"))
            if node in ancestors_of_z:
                for p in dag._parents[node]:
                    todo.append((p, "up"))
    return True


def d_separated_by_paths(dag: CausalDag, X, Y, Z=(), max_nodes: int = 12) -> bool:
    """Exhaustive oracle: enumerate every simple path of the skeleton between
    X and Y and test each one for blocking. Exponential; small graphs only."""
    X, Y, Z = _as_set(dag, X, "X"), _as_set(dag, Y, "Y"), _as_set(dag, Z, "Z")
    _disjoint(X, Y, Z)
    if len(dag.node_ids) > max_nodes:
        raise GraphError(f"path oracle limited to {max_nodes} nodes")
    nbrs = {n: set(dag._parents[n]) | set(dag._children[n]) for n in dag.node_ids}

    def blocked(path):
        for i in range(1, len(path) - 1):
            a, v, b = path[i - 1], path[i], path[i + 1]
            collider = a in dag._parents[v] and b in dag._parents[v]
            if collider:
                if v not in Z and not (dag._descendants[v] & Z):
                    return True
            elif v in Z:
                return True
        return False

    def walk(path):
        end = path[-1]
        if end in Y:
            return not blocked(path)
        for nxt in sorted(nbrs[end]):
            if nxt not in path and walk(path + [nxt]):
                return True
        return False

    return not any(walk([x]) for x in sorted(X))


def split_node(dag: CausalDag, d: str, suffix: str = "s") -> CausalDag:
    """Split observable ``d``: ``d`` keeps its incoming edges, a new parentless
    observable ``d + suffix`` takes over all outgoing edges."""
    dag._check(d)
    if dag.kind(d) != OBSERVABLE:
        raise GraphError(f"only observable nodes can be split, {d!r} is latent")
    new = d + suffix
    if new in dag._parents:
        raise GraphError(f"split copy name {new!r} already in use")
    nodes = dag.nodes + ((new, OBSERVABLE),)
    edges = tuple((new, v) if u == d else (u, v) for u, v in dag.edges)
    return CausalDag(nodes, edges, dag.exogenous_latents)


def e_separated(dag: CausalDag, X, Y, Z=(), D=()) -> bool:
    """X and Y d-separated by Z after deleting D.

    Computed on the vertex-deleted graph and cross-checked against
    d-separation by Z and the split copies of D in the node-split graph.
    """
    X, Y, Z, D = (_as_set(dag, s, n) for s, n in ((X, "X"), (Y, "Y"), (Z, "Z"), (D, "D")))
    _disjoint(X, Y, Z, D)
    for d in D:
        if dag.kind(d) != OBSERVABLE:
            raise GraphError(f"deleted node {d!r} must be observable")
    deleted = d_separated(dag.remove_nodes(D), X, Y, Z)
    split = dag
    copies = []
    for d in sorted(D):
        split = split_node(split, d, suffix="#")
        copies.append(d + "#")
    via_split = d_separated(split, X, Y, Z | frozenset(copies))
    if deleted != via_split:
        raise AssertionError(
            f"e-separation criteria disagree (deletion={deleted}, splitting={via_split})")
    return deleted


# -- named graphs --------------------------------------------------------------

def evans_dag() -> CausalDag:
    return CausalDag.build(["A", "B", "C"], ["L", "M"],
                           [("L", "A"), ("L", "B"), ("M", "B"), ("M", "C"),
                            ("B", "A"), ("B", "C")], exogenous_latents=True)


def bilocal_dag() -> CausalDag:
    return CausalDag.build(["A", "B", "C", "X", "Z"], ["L", "M"],
                           [("X", "A"), ("Z", "C"), ("L", "A"), ("L", "B"),
                            ("M", "B"), ("M", "C")], exogenous_latents=True)


def instrumental_dag() -> CausalDag:
    return CausalDag.build(["A", "B", "C"], ["M"],
                           [("A", "B"), ("B", "C"), ("M", "B"), ("M", "C")],
                           exogenous_latents=True)


@dataclass(frozen=True)
class InflationGraph:
    """Order-n inflation of the split Evans graph.

    Copies: A_i, C_j, Bs_k and latents L_i, M_j indexed by 1..n; B_ij for every
    pair (i, j).
    """
    order: int
    dag: CausalDag

    def a(self, i: int) -> str:
        return f"A_{i}"

    def c(self, j: int) -> str:
        return f"C_{j}"

    def b(self, i: int, j: int) -> str:
        return f"B_{i}{j}" if self.order < 10 else f"B_{i}_{j}"

    def bs(self, k: int) -> str:
        return f"Bs_{k}"

    def lam(self, i: int) -> str:
        return f"L_{i}"

    def mu(self, j: int) -> str:
        return f"M_{j}"

    def b_copies(self) -> list[str]:
        r = range(1, self.order + 1)
        return [self.b(i, j) for i in r for j in r]

    def restrict(self, indices: Iterable[int]) -> CausalDag:
        """Subgraph on copies whose indices all lie in ``indices``."""
        idx = set(indices)
        keep = set()
        for i in idx:
            keep |= {self.a(i), self.c(i), self.bs(i), self.lam(i), self.mu(i)}
            for j in idx:
                keep.add(self.b(i, j))
        drop = [n for n in self.dag.node_ids if n not in keep]
        return self.dag.remove_nodes(drop)


def inflate_evans_split(n: int) -> InflationGraph:
    if not isinstance(n, int) or n < 1:
        raise GraphError("inflation order must be a positive integer")
    g = InflationGraph(n, CausalDag((), ()))
    r = range(1, n + 1)
    obs = [g.a(i) for i in r] + [g.c(j) for j in r] + [g.bs(k) for k in r] + g.b_copies()
    lat = [g.lam(i) for i in r] + [g.mu(j) for j in r]
    edges = []
    for i in r:
        edges += [(g.lam(i), g.a(i)), (g.bs(i), g.a(i))]
        edges += [(g.mu(i), g.c(i)), (g.bs(i), g.c(i))]
        for j in r:
            edges += [(g.lam(i), g.b(i, j)), (g.mu(j), g.b(i, j))]
    return InflationGraph(n, CausalDag.build(obs, lat, edges, exogenous_latents=True))
