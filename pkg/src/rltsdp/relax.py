"""Assembly of relaxation programs.

A program is a list of LMI blocks whose entries are exact linear forms over
extended variables, plus equalities and a linear objective. Size-1 blocks
encode scalar inequalities ``form >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

from .graph import (
    LoopGraph,
    TreeDecomp,
    has_connected_plus_triplet,
    min_fill_tree_decomposition,
    neighborhood,
    plus_components,
)
from .instance import QpInstance, build_graph
from .rlt import CONST, LinearForm, Monomial, Registry, Square, Weight, ell, rho, subsets

__all__ = [
    "LmiBlock",
    "RelaxationProgram",
    "Psd2Config",
    "RelaxationError",
    "psd2_blocks",
    "build_psd2",
    "build_shor",
    "add_mccormick",
    "add_triangle",
    "add_minus_loop_bounds",
    "build_multilinear_jtree",
    "build_exact_hull",
    "build_deyida",
    "build_relaxation",
    "dominance_split_check",
    "psd2_size_counts",
    "set_instance_objective",
]


class RelaxationError(ValueError):
    pass


def _setstr(nodes) -> str:
    return "{" + ",".join(map(str, sorted(nodes))) + "}"


@dataclass(frozen=True)
class LmiBlock:
    entries: tuple[tuple[LinearForm, ...], ...]
    label: str = ""

    def __post_init__(self):
        k = len(self.entries)
        if k < 1:
            raise RelaxationError("an LMI block needs size >= 1")
        for a in range(k):
            if len(self.entries[a]) != k:
                raise RelaxationError(f"block {self.label!r} is not square")
            for b in range(a):
                if self.entries[a][b] != self.entries[b][a]:
                    raise RelaxationError(f"block {self.label!r} is not symmetric at ({a}, {b})")

    @classmethod
    def scalar(cls, form: LinearForm, label: str = "") -> "LmiBlock":
        return cls(((form,),), label)

    @property
    def size(self) -> int:
        return len(self.entries)

    def forms(self):
        for row in self.entries:
            yield from row

    def principal(self, rows: Sequence[int]) -> tuple[tuple[LinearForm, ...], ...]:
        return tuple(tuple(self.entries[a][b] for b in rows) for a in rows)


@dataclass
class RelaxationProgram:
    name: str = ""
    registry: Registry = field(default_factory=Registry)
    blocks: list[LmiBlock] = field(default_factory=list)
    equalities: list[tuple[LinearForm, Fraction]] = field(default_factory=list)
    objective: LinearForm = field(default_factory=LinearForm)
    offset: Fraction = Fraction(0)

    def _register(self, form: LinearForm) -> None:
        for key in form.keys():
            if key != CONST:
                self.registry.add(key)

    def add_block(self, block: LmiBlock, dedupe: bool = False) -> "RelaxationProgram":
        if dedupe and block.entries in self._entry_set():
            return self
        for form in block.forms():
            self._register(form)
        self.blocks.append(block)
        if hasattr(self, "_entries_cache"):
            self._entries_cache.add(block.entries)
        return self

    def _entry_set(self):
        if not hasattr(self, "_entries_cache"):
            self._entries_cache = {b.entries for b in self.blocks}
        return self._entries_cache

    def add_scalar(self, form: LinearForm, label: str = "", dedupe: bool = False):
        return self.add_block(LmiBlock.scalar(form, label), dedupe=dedupe)

    def add_equality(self, form: LinearForm, rhs=0) -> "RelaxationProgram":
        self._register(form)
        self.equalities.append((form, Fraction(rhs)))
        return self

    def set_objective(self, form: LinearForm, offset=0) -> "RelaxationProgram":
        const = form.constant
        form = form - const if const else form
        self._register(form)
        self.objective = form
        self.offset = Fraction(offset) + Fraction(const)
        return self

    def block_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for b in self.blocks:
            out[b.size] = out.get(b.size, 0) + 1
        return dict(sorted(out.items(), reverse=True))

    def size_summary(self) -> str:
        counts = self.block_counts()
        parts = [f"{c}x({k}x{k})" if k > 1 else f"{c} scalar" for k, c in counts.items()]
        # match the usual "1×(3×3), 4×(2×2), 4 scalar" reading
        parts = [p.replace("x(", "×(").replace("x", "×") if "(" in p else p for p in parts]
        return ", ".join(parts)

    def referenced_keys(self) -> set:
        keys = set()
        for b in self.blocks:
            for f in b.forms():
                keys.update(f.keys())
        for f, _ in self.equalities:
            keys.update(f.keys())
        keys.update(self.objective.keys())
        keys.discard(CONST)
        return keys

    def pretty(self) -> str:
        lines = [f"program {self.name}".rstrip()]
        obj = str(self.objective)
        if self.offset:
            obj += f" + ({self.offset})"
        lines.append(f"minimize {obj}")
        for b in self.blocks:
            if b.size == 1:
                lines.append(f"[{b.label}] {b.entries[0][0]} >= 0")
                continue
            lines.append(f"[{b.label}] psd {b.size}x{b.size}")
            for a in range(b.size):
                for c in range(a, b.size):
                    lines.append(f"  ({a},{c}) {b.entries[a][c]}")
        for form, rhs in self.equalities:
            lines.append(f"{form} = {rhs}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Psd2Config:
    plus: frozenset
    minus: frozenset

    def __init__(self, plus: Iterable[int], minus: Iterable[int] = ()):
        plus, minus = frozenset(plus), frozenset(minus)
        if plus & minus:
            raise RelaxationError(f"plus and minus sets overlap at {sorted(plus & minus)}")
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    def validate(self, g: LoopGraph) -> None:
        for v in self.plus:
            if v not in g.plus_loops:
                raise RelaxationError(f"node {v} in the plus set has no plus loop")
        for v in self.minus:
            if v not in g.node_set:
                raise RelaxationError(f"node {v} not in graph")
            if v in g.plus_loops:
                raise RelaxationError(f"node {v} in the minus set carries a plus loop")
            if not g.adjacency[v] & self.plus:
                raise RelaxationError(f"node {v} in the minus set is not adjacent to the plus set")

    def __str__(self):
        return f"P={_setstr(self.plus)},M={_setstr(self.minus)}"


def psd2_block(plus: Iterable[int], minus: Iterable[int], r: Sequence[int], j: Sequence[int]) -> LmiBlock:
    """The block indexed by ``R`` and ``J`` of the plus/minus system."""
    r = tuple(sorted(r))
    m_r = (frozenset(plus) | frozenset(minus)) - frozenset(r)
    j = frozenset(j)
    if not j <= m_r:
        raise RelaxationError(f"J={_setstr(j)} is not inside M_R={_setstr(m_r)}")
    rest = m_r - j
    k = len(r) + 1
    rows = []
    for a in range(k):
        row = []
        for b in range(k):
            if a == 0 and b == 0:
                row.append(ell(j, rest))
            elif a == 0 or b == 0:
                row.append(ell(j | {r[max(a, b) - 1]}, rest))
            elif a == b:
                row.append(rho(r[a - 1], j, rest))
            else:
                row.append(ell(j | {r[a - 1], r[b - 1]}, rest))
        rows.append(tuple(row))
    label = f"psd2 P={_setstr(plus)} R={_setstr(r)} J={_setstr(j)}"
    return LmiBlock(tuple(rows), label)


def psd2_blocks(plus: Iterable[int], minus: Iterable[int] = ()) -> list[LmiBlock]:
    plus, minus = frozenset(plus), frozenset(minus)
    if plus & minus:
        raise RelaxationError(f"plus and minus sets overlap at {sorted(plus & minus)}")
    out = []
    for r in subsets(plus):
        m_r = (plus | minus) - frozenset(r)
        for j in subsets(m_r):
            out.append(psd2_block(plus, minus, r, j))
    return out


def psd2_size_counts(p: int, m: int) -> dict[str, int]:
    """Closed-form sizes of the plus/minus system with ``|P| = p`` and ``|M| = m``."""
    return {
        "scalar_blocks": 2 ** (m + p),
        "lmi_blocks": 2**m * (3**p - 2**p),
        # monomials over M ∪ P including the constant, plus squares z_ii^J
        "variables": (2 ** (m + p) * (p + 2)) // 2,
    }


def _add_psd2(prog: RelaxationProgram, plus, minus, dedupe=False) -> RelaxationProgram:
    for block in psd2_blocks(plus, minus):
        prog.add_block(block, dedupe=dedupe)
    return prog


def build_psd2(g: LoopGraph, cfg: Psd2Config, prog: RelaxationProgram | None = None,
               validate: bool = True) -> RelaxationProgram:
    if validate:
        cfg.validate(g)
    if prog is None:
        prog = RelaxationProgram(name=f"psd2 {cfg}")
    return _add_psd2(prog, cfg.plus, cfg.minus)


def set_instance_objective(prog: RelaxationProgram, inst: QpInstance) -> RelaxationProgram:
    terms = {}
    for i, v in inst.diag.items():
        terms[Square(i)] = v
    for (i, j), v in inst.offdiag.items():
        terms[Monomial((i, j))] = v
    for i, v in inst.linear.items():
        terms[Monomial((i,))] = v
    return prog.set_objective(LinearForm(terms))


def _z(*nodes) -> LinearForm:
    return LinearForm.var(Monomial(nodes))


def build_shor(g: LoopGraph, inst: QpInstance | None = None,
               prog: RelaxationProgram | None = None) -> RelaxationProgram:
    """Bordered moment matrix over all nodes with diag(Y) <= x and the box."""
    if prog is None:
        prog = RelaxationProgram(name="shor")
    nodes = g.nodes
    k = len(nodes) + 1
    rows = []
    for a in range(k):
        row = []
        for b in range(k):
            if a == 0 and b == 0:
                row.append(LinearForm.const(1))
            elif a == 0 or b == 0:
                row.append(_z(nodes[max(a, b) - 1]))
            elif a == b:
                row.append(LinearForm.var(Square(nodes[a - 1])))
            else:
                row.append(_z(nodes[a - 1], nodes[b - 1]))
        rows.append(tuple(row))
    prog.add_block(LmiBlock(tuple(rows), f"shor {_setstr(nodes)}"))
    for i in nodes:
        prog.add_scalar(_z(i), f"box z{i}>=0")
        prog.add_scalar(1 - _z(i), f"box z{i}<=1")
        prog.add_scalar(_z(i) - LinearForm.var(Square(i)), f"diag z{i}{i}<=z{i}")
    if inst is not None:
        set_instance_objective(prog, inst)
    return prog


def add_shor_block(prog: RelaxationProgram, g: LoopGraph) -> RelaxationProgram:
    """Only the bordered moment matrix, without the accompanying linear bounds."""
    tmp = build_shor(g)
    prog.add_block(tmp.blocks[0])
    return prog


def add_mccormick(prog: RelaxationProgram, g: LoopGraph, all_pairs: bool = True) -> RelaxationProgram:
    pairs = combinations(g.nodes, 2) if all_pairs else sorted(g.edges)
    for i, j in pairs:
        zij = _z(i, j)
        prog.add_scalar(zij, f"mc {i}{j} a")
        prog.add_scalar(zij - _z(i) - _z(j) + 1, f"mc {i}{j} b")
        prog.add_scalar(_z(i) - zij, f"mc {i}{j} c")
        prog.add_scalar(_z(j) - zij, f"mc {i}{j} d")
    return prog


def add_triangle(prog: RelaxationProgram, g: LoopGraph) -> RelaxationProgram:
    for i, j, k in combinations(g.nodes, 3):
        yij, yik, yjk = _z(i, j), _z(i, k), _z(j, k)
        prog.add_scalar(_z(i) - yij - yik + yjk, f"tri {i}{j}{k} a")
        prog.add_scalar(_z(j) - yij - yjk + yik, f"tri {i}{j}{k} b")
        prog.add_scalar(_z(k) - yik - yjk + yij, f"tri {i}{j}{k} c")
        prog.add_scalar(1 - _z(i) - _z(j) - _z(k) + yij + yik + yjk, f"tri {i}{j}{k} d")
    return prog


def add_minus_loop_bounds(prog: RelaxationProgram, g: LoopGraph) -> RelaxationProgram:
    for i in sorted(g.minus_loops):
        zi = Monomial((i,))
        if zi not in prog.registry:
            prog.add_scalar(_z(i), f"box z{i}>=0")
            prog.add_scalar(1 - _z(i), f"box z{i}<=1")
        prog.add_scalar(_z(i) - LinearForm.var(Square(i)), f"minus z{i}{i}<=z{i}")
    return prog


def build_multilinear_jtree(nodes: Iterable[int], monomials: Iterable[Iterable[int]], td: TreeDecomp,
                            prog: RelaxationProgram | None = None, tag: str = "") -> RelaxationProgram:
    """Bag-assignment formulation of the multilinear polytope over a tree decomposition.

    Each bag gets one nonnegative weight per 0/1 assignment of its nodes, the
    weights of a bag sum to one, adjacent bags agree on the marginals of their
    separator, and each requested monomial equals the total weight of the
    assignments that set all of its nodes to one in the first bag covering it.
    """
    if prog is None:
        prog = RelaxationProgram(name="jtree")
    nodes = sorted(set(nodes))
    mons = {tuple(sorted(set(s))) for s in monomials if len(set(s)) >= 1}
    mons |= {(v,) for v in nodes}
    if not nodes:
        return prog
    bags = [tuple(sorted(b)) for b in td.bags]
    covered = set().union(*map(set, bags)) if bags else set()
    if not set(nodes) <= covered:
        raise RelaxationError(f"nodes {sorted(set(nodes) - covered)} are not in any bag")

    def weight(t, bits):
        return Weight(tag, t, bags[t], bits)

    def assignments(t):
        k = len(bags[t])
        for mask in range(1 << k):
            yield tuple(mask >> b & 1 for b in range(k))

    for t in range(len(bags)):
        total = LinearForm()
        for bits in assignments(t):
            w = LinearForm.var(weight(t, bits))
            prog.add_scalar(w, f"jtree{tag} bag{t} w{''.join(map(str, bits))}>=0")
            total = total + w
        prog.add_equality(total, 1)
    for t, u in sorted(tuple(sorted(e)) for e in td.tree_edges):
        sep = sorted(set(bags[t]) & set(bags[u]))
        if not sep:
            continue
        for mask in range(1 << len(sep)):
            target = {v: mask >> b & 1 for b, v in enumerate(sep)}
            lhs = LinearForm()
            for s, sign in ((t, 1), (u, -1)):
                pos = [bags[s].index(v) for v in sep]
                for bits in assignments(s):
                    if all(bits[p] == target[v] for p, v in zip(pos, sep)):
                        lhs = lhs + LinearForm.var(weight(s, bits), sign)
            prog.add_equality(lhs, 0)
    for s in sorted(mons, key=lambda m: (len(m), m)):
        home = next((t for t, b in enumerate(bags) if set(s) <= set(b)), None)
        if home is None:
            raise RelaxationError(f"monomial {s} is not covered by any bag")
        pos = [bags[home].index(v) for v in s]
        form = LinearForm.var(Monomial(s))
        for bits in assignments(home):
            if all(bits[p] for p in pos):
                form = form - LinearForm.var(weight(home, bits))
        prog.add_equality(form, 0)
    return prog


def build_exact_hull(g: LoopGraph | None, inst: QpInstance, allow_triplet: bool = False,
                     max_component_size: int = 20) -> RelaxationProgram:
    """Glue per-component plus/minus systems and a junction tree on the plus-free rest.

    Without connected-plus-triplets the result is an extended formulation of
    the convex hull. With ``allow_triplet`` the same assembly is returned as a
    relaxation.
    """
    if g is None:
        g = build_graph(inst)
    comps = plus_components(g)
    bad = [c for c in comps if len(c) >= 3]
    if bad and not allow_triplet:
        raise RelaxationError(
            "connected-plus-triplet " + _setstr(bad[0]) + "; the exact hull assembly needs components of size <= 2"
        )
    prog = RelaxationProgram(name="exact" if not bad else "psd2-components")
    rest = set(g.node_set)
    extra_edges = set()
    extra_mons = set()
    for c in comps:
        nbhd = neighborhood(g, c)
        if len(c) + len(nbhd) > max_component_size:
            raise RelaxationError(
                f"component {_setstr(c)} with neighborhood of size {len(nbhd)} exceeds the size guard "
                f"({max_component_size})"
            )
        _add_psd2(prog, c, nbhd)
        rest -= c
        nb = sorted(nbhd)
        extra_edges.update(combinations(nb, 2))
        extra_mons.update(s for s in subsets(nb) if len(s) >= 2)
    if rest:
        edges = {e for e in g.edges if e[0] in rest and e[1] in rest}
        remainder = LoopGraph(len(rest), frozenset(edges | extra_edges), node_set=frozenset(rest))
        td = min_fill_tree_decomposition(remainder)
        build_multilinear_jtree(rest, edges | extra_mons, td, prog, tag="0")
    add_minus_loop_bounds(prog, g)
    set_instance_objective(prog, inst)
    return prog


def build_deyida(g: LoopGraph | None, inst: QpInstance, with_shor: bool = False) -> RelaxationProgram:
    """One-plus-node systems (|P| = 1, M = all neighbors) for every plus node.

    McCormick inequalities on the edges and the minus-loop bounds keep the
    program bounded when some edges are far from plus nodes.
    """
    if g is None:
        g = build_graph(inst)
    prog = RelaxationProgram(name="deyida+shor" if with_shor else "deyida")
    for v in sorted(g.plus_loops):
        _add_psd2(prog, {v}, g.adjacency[v], dedupe=True)
    for i, j in sorted(g.edges):
        zij = _z(i, j)
        for form, tag in ((zij, "a"), (zij - _z(i) - _z(j) + 1, "b"), (_z(i) - zij, "c"), (_z(j) - zij, "d")):
            prog.add_scalar(form, f"mc {i}{j} {tag}", dedupe=True)
    for i in g.nodes:
        if Monomial((i,)) not in prog.registry:
            prog.add_scalar(_z(i), f"box z{i}>=0")
            prog.add_scalar(1 - _z(i), f"box z{i}<=1")
    add_minus_loop_bounds(prog, g)
    if with_shor:
        # the full Shor set: bordered moment matrix plus diag(Y) <= x
        add_shor_block(prog, g)
        for i in g.nodes:
            prog.add_scalar(_z(i) - LinearForm.var(Square(i)), f"diag z{i}{i}<=z{i}", dedupe=True)
    set_instance_objective(prog, inst)
    return prog


def build_shor_mc_tri(g: LoopGraph | None, inst: QpInstance, triangle: bool = True,
                      mccormick: bool = True) -> RelaxationProgram:
    if g is None:
        g = build_graph(inst)
    name = "shor" + ("-mc" if mccormick else "") + ("-tri" if triangle and mccormick else "")
    prog = build_shor(g, inst, RelaxationProgram(name=name))
    if mccormick:
        add_mccormick(prog, g)
        if triangle:
            add_triangle(prog, g)
    return prog


def parse_psd2_spec(text: str) -> Psd2Config:
    """Parse ``P=1,2;M=3`` / ``P={1,2},M={}`` style plus/minus specifications."""
    body = text.strip()
    if body.startswith("psd2:"):
        body = body[5:]
    body = body.replace("∅", "").replace("{", "").replace("}", "").replace(";", " ").replace(" ", ",")
    plus: list[int] = []
    minus: list[int] = []
    current = None
    for tok in body.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "=" in tok:
            name, _, tok = tok.partition("=")
            name = name.strip().upper()
            if name not in ("P", "M"):
                raise RelaxationError(f"unknown set {name!r} in {text!r}")
            current = plus if name == "P" else minus
            tok = tok.strip()
            if not tok:
                continue
        if current is None:
            raise RelaxationError(f"cannot parse {text!r}; expected P=...,M=...")
        try:
            current.append(int(tok))
        except ValueError:
            raise RelaxationError(f"bad node {tok!r} in {text!r}") from None
    return Psd2Config(plus, minus)


RELAXATIONS = ("shor", "shor-mc", "shor-mc-tri", "deyida", "deyida+shor", "exact", "psd2-components")


def build_relaxation(name: str, inst: QpInstance, g: LoopGraph | None = None) -> RelaxationProgram:
    if g is None:
        g = build_graph(inst)
    if name == "shor":
        return build_shor_mc_tri(g, inst, mccormick=False)
    if name == "shor-mc":
        return build_shor_mc_tri(g, inst, triangle=False)
    if name == "shor-mc-tri":
        return build_shor_mc_tri(g, inst)
    if name == "deyida":
        return build_deyida(g, inst)
    if name == "deyida+shor":
        return build_deyida(g, inst, with_shor=True)
    if name == "exact":
        return build_exact_hull(g, inst)
    if name == "psd2-components":
        return build_exact_hull(g, inst, allow_triplet=True)
    if name.startswith("psd2"):
        cfg = parse_psd2_spec(name)
        prog = build_psd2(g, cfg)
        covered = cfg.plus | cfg.minus
        missing = [i for i in g.nodes if i not in covered]
        if missing:
            raise RelaxationError(
                f"psd2 {cfg} leaves nodes {missing} uncovered; the objective would be unbounded"
            )
        add_minus_loop_bounds(prog, g)
        return set_instance_objective(prog, inst)
    raise RelaxationError(f"unknown relaxation {name!r}; choose from {', '.join(RELAXATIONS)} or psd2:P=..,M=..")


def dominance_split_check(cfg: Psd2Config, cfg2: Psd2Config) -> bool:
    """Check that every block of ``cfg`` is implied by blocks of ``cfg2`` entrywise.

    With equal plus sets and ``M ⊆ M'``, each block must equal the sum of the
    blocks of ``cfg2`` indexed by ``J ∪ T`` over all ``T ⊆ M' \\ M``. With
    equal minus sets and ``P ⊆ P'``, each block must be a principal submatrix
    of the ``cfg2`` block indexed by ``R ∪ (P' \\ P)`` and the same ``J``.
    """
    big = {}
    for block in psd2_blocks(cfg2.plus, cfg2.minus):
        big[block.label.split(" R=", 1)[1]] = block

    def lookup(r, j):
        return big[f"{_setstr(r)} J={_setstr(j)}"]

    if cfg.plus == cfg2.plus and cfg.minus <= cfg2.minus:
        extra = sorted(cfg2.minus - cfg.minus)
        for block in psd2_blocks(cfg.plus, cfg.minus):
            r, j = _parse_label(block.label)
            k = block.size
            total = [[LinearForm() for _ in range(k)] for _ in range(k)]
            for t in subsets(extra):
                other = lookup(r, set(j) | set(t))
                for a in range(k):
                    for b in range(k):
                        total[a][b] = total[a][b] + other.entries[a][b]
            if tuple(map(tuple, total)) != block.entries:
                return False
        return True
    if cfg.minus == cfg2.minus and cfg.plus <= cfg2.plus:
        added = cfg2.plus - cfg.plus
        for block in psd2_blocks(cfg.plus, cfg.minus):
            r, j = _parse_label(block.label)
            r2 = tuple(sorted(set(r) | added))
            other = lookup(r2, j)
            rows = [0] + [1 + r2.index(v) for v in r]
            if other.principal(rows) != block.entries:
                return False
        return True
    raise RelaxationError(f"configs {cfg} and {cfg2} are not related by a plus or minus set extension")


def _parse_label(label: str):
    _, _, tail = label.partition(" R=")
    r_txt, _, j_txt = tail.partition(" J=")

    def parse(s):
        s = s.strip("{}")
        return tuple(int(v) for v in s.split(",") if v)

    return parse(r_txt), parse(j_txt)


def ground_program(prog: RelaxationProgram, x) -> dict:
    """Map each registered key to its value at the box point ``x``."""
    from .rlt import ground_value

    return {key: ground_value(key, x) for key in prog.registry}
