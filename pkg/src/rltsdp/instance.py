"""Sparse box-constrained QP instances.

An instance stores the objective

    sum_i d_i x_i^2 + sum_{i<j} a_ij x_i x_j + sum_i c_i x_i,   x in [0, 1]^n

in coefficient form. Off-diagonal coefficients are counted once, so a
symmetric matrix ``Q`` converts via ``a_ij = 2 Q_ij``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

__all__ = [
    "InstanceError",
    "QpInstance",
    "parse_instance",
    "emit_instance",
    "read_instance",
    "write_instance",
    "objective_value",
    "build_graph",
    "from_matrix",
    "random_instance",
]


class InstanceError(ValueError):
    """Raised for malformed instance text or invalid coefficients."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class QpInstance:
    n: int
    diag: Mapping[int, Fraction] = field(default_factory=dict)
    offdiag: Mapping[tuple[int, int], Fraction] = field(default_factory=dict)
    linear: Mapping[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise InstanceError(f"n must be a positive integer, got {self.n!r}")
        diag, offdiag, linear = {}, {}, {}
        for i, v in self.diag.items():
            self._check_index(i)
            v = _as_fraction(v)
            if v:
                diag[i] = v
        for key, v in self.offdiag.items():
            i, j = key
            self._check_index(i)
            self._check_index(j)
            if i == j:
                raise InstanceError(f"off-diagonal key ({i}, {j}) repeats an index")
            p = _pair(i, j)
            if p in offdiag:
                raise InstanceError(f"duplicate off-diagonal key {p}")
            v = _as_fraction(v)
            if v:
                offdiag[p] = v
        for i, v in self.linear.items():
            self._check_index(i)
            v = _as_fraction(v)
            if v:
                linear[i] = v
        object.__setattr__(self, "diag", dict(sorted(diag.items())))
        object.__setattr__(self, "offdiag", dict(sorted(offdiag.items())))
        object.__setattr__(self, "linear", dict(sorted(linear.items())))

    def _check_index(self, i):
        if not isinstance(i, int) or not 1 <= i <= self.n:
            raise InstanceError(f"index {i!r} outside [1, {self.n}]")

    def __hash__(self):
        return hash((self.n, tuple(self.diag.items()), tuple(self.offdiag.items()),
                     tuple(self.linear.items())))

    @property
    def num_coefficients(self) -> int:
        return len(self.diag) + len(self.offdiag) + len(self.linear)

    def symmetric_matrix(self) -> np.ndarray:
        """Float symmetric ``Q`` (1-based indices shifted to 0) with x'Qx the quadratic part."""
        q = np.zeros((self.n, self.n))
        for i, v in self.diag.items():
            q[i - 1, i - 1] = float(v)
        for (i, j), v in self.offdiag.items():
            q[i - 1, j - 1] = q[j - 1, i - 1] = float(v) / 2
        return q

    def linear_vector(self) -> np.ndarray:
        c = np.zeros(self.n)
        for i, v in self.linear.items():
            c[i - 1] = float(v)
        return c


def from_matrix(q, c) -> QpInstance:
    """Build an instance from a symmetric matrix ``Q`` and vector ``c`` (objective x'Qx + c'x)."""
    q = np.asarray(q)
    n = q.shape[0]
    if q.shape != (n, n) or len(c) != n:
        raise InstanceError("Q must be n x n and c of length n")
    diag = {i + 1: _as_fraction(q[i, i].item()) for i in range(n)}
    off = {}
    for i in range(n):
        for j in range(i + 1, n):
            if q[i, j] != q[j, i]:
                raise InstanceError(f"Q is not symmetric at ({i + 1}, {j + 1})")
            off[(i + 1, j + 1)] = 2 * _as_fraction(q[i, j].item())
    lin = {i + 1: _as_fraction(c[i].item() if hasattr(c[i], "item") else c[i]) for i in range(n)}
    return QpInstance(n, diag, off, lin)


def parse_instance(text: str | TextIO) -> QpInstance:
    """Parse the line-based instance format.

    Lines starting with ``#`` are comments. The first remaining line is
    ``n <int>``, followed by ``d i v``, ``q i j v`` and ``c i v`` lines.
    """
    if isinstance(text, str):
        text = io.StringIO(text)
    n = None
    diag: dict[int, Fraction] = {}
    off: dict[tuple[int, int], Fraction] = {}
    lin: dict[int, Fraction] = {}
    for lineno, raw in enumerate(text, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if n is None:
            if tag != "n" or len(parts) != 2:
                raise InstanceError("expected 'n <int>' before coefficients", lineno)
            try:
                n = int(parts[1])
            except ValueError:
                raise InstanceError(f"bad variable count {parts[1]!r}", lineno) from None
            if n < 1:
                raise InstanceError(f"n must be positive, got {n}", lineno)
            continue
        arity = {"d": 3, "c": 3, "q": 4}.get(tag)
        if arity is None:
            raise InstanceError(f"unknown line tag {tag!r}", lineno)
        if len(parts) != arity:
            raise InstanceError(f"'{tag}' line needs {arity - 1} fields", lineno)
        try:
            idx = [int(p) for p in parts[1:-1]]
            value = Fraction(parts[-1])
        except ValueError:
            raise InstanceError(f"cannot parse {line!r}", lineno) from None
        for i in idx:
            if not 1 <= i <= n:
                raise InstanceError(f"index {i} outside [1, {n}]", lineno)
        if tag == "q":
            if idx[0] == idx[1]:
                raise InstanceError("q line with i == j; use a d line", lineno)
            key = _pair(*idx)
            target = off
        else:
            key = idx[0]
            target = diag if tag == "d" else lin
        if key in target:
            raise InstanceError(f"duplicate coefficient {tag} {key}", lineno)
        target[key] = value
    if n is None:
        raise InstanceError("missing 'n <int>' line")
    return QpInstance(n, diag, off, lin)


def _fmt(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    # exact decimal when the denominator only has factors 2 and 5
    d = v.denominator
    k = 0
    while d % 10 == 0:
        d //= 10
        k += 1
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d == 1:
        digits = k + max(twos, fives)
        scaled = v * 10**digits
        s = str(abs(scaled.numerator)).rjust(digits + 1, "0")
        out = f"{s[:-digits]}.{s[-digits:]}".rstrip("0").rstrip(".")
        return ("-" if v < 0 else "") + out
    return f"{v.numerator}/{v.denominator}"


def emit_instance(inst: QpInstance) -> str:
    out = [f"n {inst.n}"]
    out += [f"d {i} {_fmt(v)}" for i, v in sorted(inst.diag.items())]
    out += [f"q {i} {j} {_fmt(v)}" for (i, j), v in sorted(inst.offdiag.items())]
    out += [f"c {i} {_fmt(v)}" for i, v in sorted(inst.linear.items())]
    return "\n".join(out) + "\n"


def read_instance(path) -> QpInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh)


def write_instance(inst: QpInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_instance(inst))


def objective_value(inst: QpInstance, x: Sequence[Real]):
    """Objective at a point of the box; exact when ``x`` holds Fractions or ints."""
    if len(x) != inst.n:
        raise InstanceError(f"point has dimension {len(x)}, instance has n={inst.n}")
    exact = all(isinstance(v, (int, Fraction)) for v in x)
    if not exact:
        x = [float(v) for v in x]
        total = 0.0
        for i, v in inst.diag.items():
            total += float(v) * x[i - 1] ** 2
        for (i, j), v in inst.offdiag.items():
            total += float(v) * x[i - 1] * x[j - 1]
        for i, v in inst.linear.items():
            total += float(v) * x[i - 1]
        return total
    total = Fraction(0)
    for i, v in inst.diag.items():
        total += v * x[i - 1] ** 2
    for (i, j), v in inst.offdiag.items():
        total += v * x[i - 1] * x[j - 1]
    for i, v in inst.linear.items():
        total += v * x[i - 1]
    return total


def build_graph(inst: QpInstance):
    from .graph import LoopGraph

    return LoopGraph(
        node_count=inst.n,
        edges=frozenset(inst.offdiag),
        plus_loops=frozenset(i for i, v in inst.diag.items() if v > 0),
        minus_loops=frozenset(i for i, v in inst.diag.items() if v < 0),
    )


def check_point(x: Iterable[Real], n: int) -> list:
    x = list(x)
    if len(x) != n:
        raise InstanceError(f"point has dimension {len(x)}, expected {n}")
    for v in x:
        if not 0 <= v <= 1:
            raise InstanceError(f"coordinate {v} outside [0, 1]")
    return x


def random_instance(n: int, density: float = 0.5, plus: int | None = None, seed: int = 0,
                    no_triplet: bool = False, minus_fraction: float = 0.5,
                    magnitude: int = 100) -> QpInstance:
    """Seeded random instance with integer coefficients in ``[-magnitude, magnitude]``.

    ``plus`` nodes get positive diagonals; the rest get a negative diagonal
    with probability ``minus_fraction`` and none otherwise. With
    ``no_triplet`` the plus-plus edges are thinned so that no connected group
    of three plus nodes remains.
    """
    if n < 1:
        raise InstanceError(f"n must be positive, got {n}")
    if not 0 <= density <= 1:
        raise InstanceError(f"density must lie in [0, 1], got {density}")
    if plus is None:
        plus = n // 2
    if not 0 <= plus <= n:
        raise InstanceError(f"cannot place {plus} plus loops on {n} nodes")
    rng = np.random.default_rng(seed)

    def coef():
        v = 0
        while v == 0:
            v = int(rng.integers(-magnitude, magnitude + 1))
        return v

    plus_nodes = set(int(v) + 1 for v in rng.choice(n, size=plus, replace=False))
    diag = {}
    for i in range(1, n + 1):
        if i in plus_nodes:
            diag[i] = int(rng.integers(1, magnitude + 1))
        elif rng.random() < minus_fraction:
            diag[i] = -int(rng.integers(1, magnitude + 1))
    off = {}
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if rng.random() < density:
                off[(i, j)] = coef()
    if no_triplet:
        parent = {v: v for v in plus_nodes}
        size = {v: 1 for v in plus_nodes}

        def find(v):
            while parent[v] != v:
                v = parent[v]
            return v

        for key in [k for k in off if k[0] in plus_nodes and k[1] in plus_nodes]:
            a, b = find(key[0]), find(key[1])
            if a == b and size[a] <= 2:
                continue
            if a != b and size[a] + size[b] <= 2:
                parent[b] = a
                size[a] += size[b]
                continue
            del off[key]
    lin = {i: coef() for i in range(1, n + 1) if rng.random() < 0.9}
    return QpInstance(n, diag, off, lin)
