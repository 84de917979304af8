"""Extended variables and the two RLT factor families.

``Monomial(S)`` stands for the product of ``x_i`` over ``S`` (the empty set
is the constant 1). ``Square(i, J)`` stands for ``x_i**2`` times the product
over ``J``. ``Weight`` keys are the per-bag assignment weights of the
junction-tree formulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from numbers import Rational
from typing import Iterable, Iterator, Mapping

__all__ = [
    "Monomial",
    "Square",
    "Weight",
    "VarKey",
    "LinearForm",
    "Registry",
    "RltError",
    "ell",
    "rho",
    "evaluate",
    "ground_value",
    "subsets",
    "CONST",
]


class RltError(ValueError):
    pass


def _canon(nodes: Iterable[int]) -> tuple[int, ...]:
    out = tuple(sorted(set(nodes)))
    return out


@dataclass(frozen=True, order=True)
class Monomial:
    nodes: tuple[int, ...]

    def __init__(self, nodes: Iterable[int] = ()):
        object.__setattr__(self, "nodes", _canon(nodes))

    @property
    def is_const(self) -> bool:
        return not self.nodes

    def sort_key(self):
        return (0, len(self.nodes), self.nodes)

    def __str__(self):
        if not self.nodes:
            return "1"
        return "z(" + ",".join(map(str, self.nodes)) + ")"


@dataclass(frozen=True, order=True)
class Square:
    node: int
    cond: tuple[int, ...]

    def __init__(self, node: int, cond: Iterable[int] = ()):
        cond = _canon(cond)
        if node in cond:
            raise RltError(f"square variable of node {node} conditioned on a set containing it")
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "cond", cond)

    def sort_key(self):
        return (1, self.node, len(self.cond), self.cond)

    def __str__(self):
        base = f"z({self.node},{self.node}"
        if self.cond:
            return base + "|" + ",".join(map(str, self.cond)) + ")"
        return base + ")"


@dataclass(frozen=True, order=True)
class Weight:
    """Weight of one 0/1 assignment ``bits`` of the junction-tree bag ``nodes``."""

    tag: str
    bag: int
    nodes: tuple[int, ...]
    bits: tuple[int, ...]

    def sort_key(self):
        return (2, self.tag, self.bag, self.bits)

    def __str__(self):
        return f"w{self.tag}[{self.bag}](" + "".join(map(str, self.bits)) + ")"


VarKey = Monomial | Square | Weight
CONST = Monomial(())


def _num(v):
    if isinstance(v, Fraction):
        return v.numerator if v.denominator == 1 else v
    if isinstance(v, int):
        return v
    if isinstance(v, Rational):
        return Fraction(v)
    raise TypeError(f"exact coefficient required, got {type(v).__name__}")


class LinearForm:
    """Affine combination of extended variables with exact coefficients.

    The constant term is carried by ``Monomial(())``.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping | Iterable = ()):
        acc: dict = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for key, coef in items:
            coef = _num(coef)
            acc[key] = acc.get(key, 0) + coef
        self._terms = {k: v for k, v in acc.items() if v != 0}
        self._hash = None

    @classmethod
    def var(cls, key, coef=1) -> "LinearForm":
        return cls({key: coef})

    @classmethod
    def const(cls, value) -> "LinearForm":
        return cls({CONST: value})

    @property
    def terms(self) -> Mapping:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def keys(self):
        return self._terms.keys()

    def coefficient(self, key):
        return self._terms.get(key, 0)

    @property
    def constant(self):
        return self._terms.get(CONST, 0)

    def variables(self) -> list:
        return [k for k in self._terms if k != CONST]

    def is_constant(self) -> bool:
        return all(k == CONST for k in self._terms)

    def __len__(self):
        return len(self._terms)

    def __add__(self, other):
        if not isinstance(other, LinearForm):
            other = LinearForm.const(other)
        out = dict(self._terms)
        for k, v in other._terms.items():
            out[k] = out.get(k, 0) + v
        return LinearForm(out)

    __radd__ = __add__

    def __neg__(self):
        return LinearForm({k: -v for k, v in self._terms.items()})

    def __sub__(self, other):
        if not isinstance(other, LinearForm):
            other = LinearForm.const(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        scalar = _num(scalar)
        return LinearForm({k: v * scalar for k, v in self._terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, LinearForm):
            return self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self._terms == ({CONST: other} if other else {})
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def sorted_items(self):
        return sorted(self._terms.items(), key=lambda kv: kv[0].sort_key())

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for k, v in self.sorted_items():
            name = str(k)
            if k == CONST:
                chunk = str(abs(v))
            elif abs(v) == 1:
                chunk = name
            else:
                chunk = f"{abs(v)}*{name}"
            sign = "-" if v < 0 else "+"
            parts.append((sign, chunk))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, chunk in parts[1:]:
            out += f" {sign} {chunk}"
        return out

    def __repr__(self):
        return f"LinearForm({self})"


def subsets(nodes: Iterable[int]) -> Iterator[tuple[int, ...]]:
    """All subsets of ``nodes`` by a binary counter over the sorted elements."""
    items = sorted(nodes)
    for mask in range(1 << len(items)):
        yield tuple(items[b] for b in range(len(items)) if mask >> b & 1)


def _check_disjoint(j1, j2):
    if set(j1) & set(j2):
        raise RltError(f"factor sets overlap: {sorted(set(j1) & set(j2))}")


def ell(j1: Iterable[int], j2: Iterable[int]) -> LinearForm:
    """Linearization of prod_{J1} x_i * prod_{J2} (1 - x_i)."""
    j1, j2 = _canon(j1), _canon(j2)
    _check_disjoint(j1, j2)
    return LinearForm({Monomial(j1 + t): (-1) ** len(t) for t in subsets(j2)})


def rho(i: int, j1: Iterable[int], j2: Iterable[int]) -> LinearForm:
    """Linearization of x_i**2 * prod_{J1} x_j * prod_{J2} (1 - x_j)."""
    j1, j2 = _canon(j1), _canon(j2)
    _check_disjoint(j1, j2)
    if i in j1 or i in j2:
        raise RltError(f"node {i} must lie outside both factor sets")
    return LinearForm({Square(i, j1 + t): (-1) ** len(t) for t in subsets(j2)})


def ground_value(key, x):
    """Value of a monomial or square variable at the box point ``x`` (1-based nodes)."""
    def coord(i):
        if not 1 <= i <= len(x):
            raise RltError(f"node {i} outside point of dimension {len(x)}")
        return x[i - 1]

    if isinstance(key, Monomial):
        out = 1
        for i in key.nodes:
            out = out * coord(i)
        return out
    if isinstance(key, Square):
        out = coord(key.node) ** 2
        for i in key.cond:
            out = out * coord(i)
        return out
    if isinstance(key, Weight):
        out = 1
        for i, b in zip(key.nodes, key.bits):
            out = out * (coord(i) if b else 1 - coord(i))
        return out
    raise RltError(f"{key} has no grounding at a box point")


def evaluate(form: LinearForm, x, values: Mapping | None = None):
    """Substitute ``x`` into ``form``; keys missing from ``values`` are grounded from ``x``."""
    total = 0
    for key, coef in form.items():
        if values is not None and key in values:
            val = values[key]
        else:
            val = ground_value(key, x)
        total = total + coef * val
    return total


class Registry:
    """Interns variable keys and hands out dense column indices on first use."""

    def __init__(self):
        self._index: dict = {}
        self._keys: list = []

    def add(self, key) -> int:
        idx = self._index.get(key)
        if idx is None:
            idx = len(self._keys)
            self._index[key] = idx
            self._keys.append(key)
        return idx

    def add_form(self, form: LinearForm) -> None:
        for key in form.keys():
            self.add(key)

    def index(self, key) -> int:
        return self._index[key]

    def __contains__(self, key):
        return key in self._index

    def __len__(self):
        return len(self._keys)

    def __iter__(self):
        return iter(self._keys)

    @property
    def keys(self) -> list:
        return list(self._keys)

    def count(self, kind=None, include_const=True) -> int:
        return sum(
            1
            for k in self._keys
            if (kind is None or isinstance(k, kind)) and (include_const or k != CONST)
        )


def pairs(nodes: Iterable[int]):
    return combinations(sorted(nodes), 2)
