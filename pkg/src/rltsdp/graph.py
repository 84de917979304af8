"""Graphs with signed loops, tree decompositions and the structural checks
that decide when the exact SDP-representable hull is small."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

__all__ = [
    "LoopGraph",
    "TreeDecomp",
    "StructureReport",
    "GraphError",
    "plus_components",
    "neighborhood",
    "has_connected_plus_triplet",
    "min_fill_tree_decomposition",
    "eliminate_component",
    "eliminate_with_decomposition",
    "check_poly_conditions",
    "to_dot",
    "tree_decomposition_to_dot",
]


class GraphError(ValueError):
    pass


def _edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class LoopGraph:
    """Simple graph on nodes ``1..node_count`` (or an explicit node set) with plus and minus loops."""

    node_count: int
    edges: frozenset = frozenset()
    plus_loops: frozenset = frozenset()
    minus_loops: frozenset = frozenset()
    node_set: frozenset | None = None

    def __post_init__(self):
        nodes = frozenset(range(1, self.node_count + 1)) if self.node_set is None else frozenset(self.node_set)
        object.__setattr__(self, "node_set", nodes)
        object.__setattr__(self, "node_count", len(nodes))
        edges = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-pair ({i}, {j}) is not an edge; use loops")
            if i not in nodes or j not in nodes:
                raise GraphError(f"edge ({i}, {j}) has an endpoint outside the node set")
            edges.add(_edge(i, j))
        object.__setattr__(self, "edges", frozenset(edges))
        plus, minus = frozenset(self.plus_loops), frozenset(self.minus_loops)
        if plus & minus:
            raise GraphError(f"nodes {sorted(plus & minus)} carry both plus and minus loops")
        if not (plus | minus) <= nodes:
            raise GraphError("loop on a node outside the node set")
        object.__setattr__(self, "plus_loops", plus)
        object.__setattr__(self, "minus_loops", minus)

    @property
    def nodes(self) -> list[int]:
        return sorted(self.node_set)

    @cached_property
    def adjacency(self) -> dict[int, frozenset]:
        adj = {v: set() for v in self.node_set}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return {v: frozenset(s) for v, s in adj.items()}

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def induced_connected(self, nodes: Iterable[int]) -> bool:
        nodes = set(nodes)
        if not nodes:
            return True
        start = min(nodes)
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in self.adjacency[u]:
                if w in nodes and w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen == nodes


@dataclass(frozen=True)
class TreeDecomp:
    bags: tuple[frozenset, ...]
    tree_edges: frozenset = field(default_factory=frozenset)

    @property
    def width(self) -> int:
        return max((len(b) for b in self.bags), default=0) - 1

    def neighbors(self) -> dict[int, set]:
        nb = {t: set() for t in range(len(self.bags))}
        for a, b in self.tree_edges:
            nb[a].add(b)
            nb[b].add(a)
        return nb

    def violations(self, g: LoopGraph) -> list[str]:
        """Reasons why this is not a tree decomposition of ``g`` (empty list when valid)."""
        problems = []
        m = len(self.bags)
        if g.node_count and m == 0:
            return ["no bags"]
        if len(self.tree_edges) != max(m - 1, 0):
            problems.append(f"tree has {len(self.tree_edges)} edges for {m} bags")
        nb = self.neighbors()
        if m:
            seen, stack = {0}, [0]
            while stack:
                t = stack.pop()
                for u in nb[t] - seen:
                    seen.add(u)
                    stack.append(u)
            if len(seen) != m:
                problems.append("bag tree is disconnected")
        covered = frozenset().union(*self.bags) if self.bags else frozenset()
        if covered != g.node_set:
            problems.append(f"bags cover {sorted(covered)} but nodes are {g.nodes}")
        for i, j in sorted(g.edges):
            if not any(i in b and j in b for b in self.bags):
                problems.append(f"edge ({i}, {j}) not inside any bag")
        for v in g.nodes:
            holding = {t for t, b in enumerate(self.bags) if v in b}
            if not holding:
                continue
            start = min(holding)
            seen, stack = {start}, [start]
            while stack:
                t = stack.pop()
                for u in nb[t]:
                    if u in holding and u not in seen:
                        seen.add(u)
                        stack.append(u)
            if seen != holding:
                problems.append(f"bags containing node {v} are not connected in the tree")
        return problems

    def is_valid(self, g: LoopGraph) -> bool:
        return not self.violations(g)


@dataclass(frozen=True)
class StructureReport:
    components: tuple[tuple[frozenset, frozenset], ...]
    has_triplet: bool
    max_plus_degree: int
    width_bound: int
    eliminated_width_bound: int
    d_max: int
    width_cap: int
    degree_cap: int
    poly_ok: bool
    reasons: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "components": [
                {"nodes": sorted(c), "neighborhood": sorted(n)} for c, n in self.components
            ],
            "has_triplet": self.has_triplet,
            "max_plus_degree": self.max_plus_degree,
            "width_bound": self.width_bound,
            "eliminated_width_bound": self.eliminated_width_bound,
            "d_max": self.d_max,
            "width_cap": self.width_cap,
            "degree_cap": self.degree_cap,
            "poly_ok": self.poly_ok,
            "reasons": list(self.reasons),
        }


def plus_components(g: LoopGraph) -> list[frozenset]:
    """Connected components of the subgraph induced by plus-loop nodes, ordered by smallest member."""
    remaining = set(g.plus_loops)
    comps = []
    while remaining:
        start = min(remaining)
        comp = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in g.adjacency[u]:
                if w in remaining and w not in comp:
                    comp.add(w)
                    stack.append(w)
        remaining -= comp
        comps.append(frozenset(comp))
    return sorted(comps, key=min)


def neighborhood(g: LoopGraph, nodes: Iterable[int]) -> frozenset:
    nodes = frozenset(nodes)
    if not nodes <= g.node_set:
        raise GraphError(f"nodes {sorted(nodes - g.node_set)} not in graph")
    out = set()
    for v in nodes:
        out |= g.adjacency[v]
    return frozenset(out - nodes)


def has_connected_plus_triplet(g: LoopGraph) -> bool:
    return any(len(c) >= 3 for c in plus_components(g))


def _elimination_decomposition(adj: dict[int, set], order_key=None) -> TreeDecomp:
    """Min-fill elimination; ties go to the smallest node."""
    adj = {v: set(nb) for v, nb in adj.items()}
    order: list[int] = []
    bags: list[frozenset] = []
    while adj:
        best, best_fill = None, None
        for v in sorted(adj):
            nb = adj[v]
            fill = sum(1 for a, b in combinations(sorted(nb), 2) if b not in adj[a])
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
                if fill == 0:
                    break
        nb = adj.pop(best)
        for a, b in combinations(nb, 2):
            adj[a].add(b)
            adj[b].add(a)
        for a in nb:
            adj[a].discard(best)
        order.append(best)
        bags.append(frozenset(nb | {best}))
    pos = {v: k for k, v in enumerate(order)}
    tree = set()
    for k, v in enumerate(order[:-1]):
        rest = bags[k] - {v}
        parent = min(pos[u] for u in rest) if rest else k + 1
        tree.add((k, parent))
    return TreeDecomp(tuple(bags), frozenset(tree))


def min_fill_tree_decomposition(g: LoopGraph) -> TreeDecomp:
    return _elimination_decomposition({v: set(nb) for v, nb in g.adjacency.items()})


def eliminate_component(g: LoopGraph, component: Iterable[int]) -> LoopGraph:
    """Remove a connected node set and turn its neighborhood into a clique."""
    comp = frozenset(component)
    if not comp <= g.node_set:
        raise GraphError(f"nodes {sorted(comp - g.node_set)} not in graph")
    if not comp or not g.induced_connected(comp):
        raise GraphError(f"node set {sorted(comp)} does not induce a connected subgraph")
    nbhd = neighborhood(g, comp)
    keep = g.node_set - comp
    edges = {e for e in g.edges if e[0] in keep and e[1] in keep}
    edges |= {_edge(a, b) for a, b in combinations(sorted(nbhd), 2)}
    return LoopGraph(
        node_count=len(keep),
        edges=frozenset(edges),
        plus_loops=g.plus_loops & keep,
        minus_loops=g.minus_loops & keep,
        node_set=keep,
    )


def eliminate_with_decomposition(g: LoopGraph, td: TreeDecomp, component: Iterable[int]):
    """Eliminate ``component`` and transform ``td`` alongside it.

    Every bag loses the component's nodes and one new bag holding the
    neighborhood is attached as a leaf to a bag that met the component.
    Returns ``(eliminated_graph, decomposition)``. The result can violate
    the running-intersection property (``K_{2,3}`` with one side-1 node
    removed is the smallest case), so callers should check ``is_valid``.
    """
    comp = frozenset(component)
    h = eliminate_component(g, comp)
    nbhd = neighborhood(g, comp)
    anchor = min(t for t, b in enumerate(td.bags) if b & comp)
    bags = tuple(frozenset(b - comp) for b in td.bags) + (nbhd,)
    new = len(bags) - 1
    return h, TreeDecomp(bags, td.tree_edges | {(anchor, new)})


def check_poly_conditions(g: LoopGraph, width_cap: int = 10, degree_cap: int = 12) -> StructureReport:
    if width_cap < 0 or degree_cap < 0:
        raise GraphError("caps must be nonnegative")
    comps = plus_components(g)
    components = tuple((c, neighborhood(g, c)) for c in comps)
    triplet = any(len(c) >= 3 for c in comps)
    max_plus_degree = max((g.degree(v) for v in g.plus_loops), default=0)
    td = min_fill_tree_decomposition(g)
    width = td.width
    h, htd = g, td
    for c in comps:
        h, htd = eliminate_with_decomposition(h, htd, c)
    eliminated = -1
    if h.node_count:
        # the carried decomposition is not always valid for h, so it only counts when it checks out
        eliminated = min_fill_tree_decomposition(h).width
        if htd.is_valid(h):
            eliminated = min(eliminated, htd.width)
    d_max = max((len(n) for _, n in components), default=0)
    reasons = []
    for c in comps:
        if len(c) >= 3:
            reasons.append("connected-plus-triplet {" + ",".join(map(str, sorted(c))) + "}")
    if width > width_cap:
        reasons.append(f"min-fill width {width} exceeds cap {width_cap}")
    if max_plus_degree > degree_cap:
        reasons.append(f"plus-node degree {max_plus_degree} exceeds cap {degree_cap}")
    return StructureReport(
        components=components,
        has_triplet=triplet,
        max_plus_degree=max_plus_degree,
        width_bound=width,
        eliminated_width_bound=eliminated,
        d_max=d_max,
        width_cap=width_cap,
        degree_cap=degree_cap,
        poly_ok=not reasons,
        reasons=tuple(reasons),
    )


def to_dot(g: LoopGraph, name: str = "G") -> str:
    lines = [f"graph {name} {{"]
    for v in g.nodes:
        attr = ""
        if v in g.plus_loops:
            attr = ' [label="%d+", shape=doublecircle]' % v
        elif v in g.minus_loops:
            attr = ' [label="%d-", shape=circle, style=dashed]' % v
        lines.append(f"  {v}{attr};")
    for i, j in sorted(g.edges):
        lines.append(f"  {i} -- {j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def tree_decomposition_to_dot(td: TreeDecomp, name: str = "T") -> str:
    lines = [f"graph {name} {{"]
    for t, bag in enumerate(td.bags):
        label = ",".join(map(str, sorted(bag)))
        lines.append(f'  b{t} [label="{{{label}}}"];')
    for a, b in sorted(td.tree_edges):
        lines.append(f"  b{a} -- b{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def subgraph(g: LoopGraph, nodes: Sequence[int]) -> LoopGraph:
    keep = frozenset(nodes)
    return LoopGraph(
        node_count=len(keep),
        edges=frozenset(e for e in g.edges if e[0] in keep and e[1] in keep),
        plus_loops=g.plus_loops & keep,
        minus_loops=g.minus_loops & keep,
        node_set=keep,
    )
