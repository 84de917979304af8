"""Exact global minimization of small box QPs by enumerating faces of the cube.

On a face, variables are pinned to 0, pinned to 1 or free. A global minimizer
lying in the relative interior of its face is a stationary point of the
restriction, so solving the free-block stationarity system on every face and
keeping the solutions that land inside the open face covers it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .instance import QpInstance, objective_value

__all__ = ["GlobalSolution", "OracleError", "global_min_boxqp", "grid_refine_check", "MAX_N"]

MAX_N = 14
EXACT_MAX_N = 6


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class GlobalSolution:
    value: object
    argmin: tuple
    face: tuple
    candidates_examined: int

    @property
    def exact(self) -> bool:
        return isinstance(self.value, (int, Fraction))


def _tags(x, free):
    out = []
    for i, v in enumerate(x):
        if i in free:
            out.append("free")
        else:
            out.append("upper" if v == 1 else "lower")
    return tuple(out)


def _exact_matrices(inst: QpInstance):
    n = inst.n
    h = [[Fraction(0)] * n for _ in range(n)]  # Hessian 2Q
    for i, v in inst.diag.items():
        h[i - 1][i - 1] = 2 * v
    for (i, j), v in inst.offdiag.items():
        h[i - 1][j - 1] = v
        h[j - 1][i - 1] = v
    c = [Fraction(0)] * n
    for i, v in inst.linear.items():
        c[i - 1] = v
    return h, c


def _rref_transform(a):
    """Return (E, pivots) with E @ a in reduced row echelon form (exact)."""
    k = len(a)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(k)] for i, row in enumerate(a)]
    pivots = []
    r = 0
    for col in range(k):
        p = next((i for i in range(r, k) if aug[i][col] != 0), None)
        if p is None:
            continue
        aug[r], aug[p] = aug[p], aug[r]
        inv = 1 / aug[r][col]
        aug[r] = [v * inv for v in aug[r]]
        for i in range(k):
            if i != r and aug[i][col] != 0:
                f = aug[i][col]
                aug[i] = [vi - f * vr for vi, vr in zip(aug[i], aug[r])]
        pivots.append(col)
        r += 1
    e = [row[k:] for row in aug]
    return e, pivots


def _exact_search(inst: QpInstance) -> GlobalSolution:
    n = inst.n
    h, c = _exact_matrices(inst)
    best = None
    examined = 0
    for size in range(n + 1):
        for free in itertools.combinations(range(n), size):
            fixed = [i for i in range(n) if i not in free]
            hf = [[h[i][j] for j in free] for i in free]
            # x = H w with H^2 w = r gives the minimum-norm solution of H x = r
            h2 = [[sum(hf[i][t] * hf[t][j] for t in range(size)) for j in range(size)] for i in range(size)]
            e, pivots = _rref_transform(h2)
            rank = len(pivots)
            for bits in itertools.product((0, 1), repeat=len(fixed)):
                x = [Fraction(0)] * n
                for i, b in zip(fixed, bits):
                    x[i] = Fraction(b)
                if size:
                    r = [-(c[i] + sum(h[i][j] * x[j] for j in fixed)) for i in free]
                    t = [sum(e[a][b] * r[b] for b in range(size)) for a in range(size)]
                    if any(t[a] != 0 for a in range(rank, size)):
                        continue
                    w = [Fraction(0)] * size
                    for a, col in enumerate(pivots):
                        w[col] = t[a]
                    xf = [sum(hf[i][j] * w[j] for j in range(size)) for i in range(size)]
                    if any(not (0 < v < 1) for v in xf):
                        continue
                    for i, v in zip(free, xf):
                        x[i] = v
                examined += 1
                val = objective_value(inst, x)
                key = (val, tuple(x))
                if best is None or key < best[0]:
                    best = (key, set(free))
    (val, x), free = best
    return GlobalSolution(val, x, _tags(x, free), examined)


def _float_search(inst: QpInstance) -> GlobalSolution:
    n = inst.n
    q = inst.symmetric_matrix()
    h = 2 * q
    c = inst.linear_vector()
    best_val = np.inf
    best_x = None
    best_free: tuple = ()
    examined = 0
    scale = 1.0 + np.abs(h).max() + np.abs(c).max()
    for size in range(n + 1):
        for free in itertools.combinations(range(n), size):
            free_l = list(free)
            fixed = [i for i in range(n) if i not in free]
            pats = np.array(list(itertools.product((0.0, 1.0), repeat=len(fixed))), dtype=float)
            pats = pats.reshape(2 ** len(fixed), len(fixed))
            xs = np.zeros((pats.shape[0], n))
            xs[:, fixed] = pats
            if size:
                hf = h[np.ix_(free_l, free_l)]
                rhs = -(c[free_l][None, :] + pats @ h[np.ix_(free_l, fixed)].T)
                pinv = np.linalg.pinv(hf)
                sol = rhs @ pinv.T
                resid = np.abs(sol @ hf.T - rhs).max(axis=1) if size else np.zeros(len(pats))
                inside = np.all((sol > 0) & (sol < 1), axis=1) & (resid <= 1e-9 * scale)
                xs = xs[inside]
                xs[:, free_l] = sol[inside]
            if not len(xs):
                continue
            examined += len(xs)
            vals = np.einsum("ki,ij,kj->k", xs, q, xs) + xs @ c
            k = int(np.argmin(vals))
            v = float(vals[k])
            if v < best_val - 1e-12 * scale or (abs(v - best_val) <= 1e-12 * scale and tuple(xs[k]) < tuple(best_x)):
                best_val, best_x, best_free = v, xs[k].copy(), free
    x = tuple(float(v) for v in best_x)
    return GlobalSolution(float(objective_value(inst, x)), x, _tags(x, set(best_free)), examined)


def global_min_boxqp(inst: QpInstance, exact: bool | None = None) -> GlobalSolution:
    """Global minimum over [0,1]^n; rational arithmetic by default when n <= 6."""
    if inst.n > MAX_N:
        raise OracleError(f"n={inst.n} exceeds the face-enumeration guard of {MAX_N}")
    if exact is None:
        exact = inst.n <= EXACT_MAX_N
    return _exact_search(inst) if exact else _float_search(inst)


def grid_refine_check(inst: QpInstance, value, resolution=Fraction(1, 200), chunk: int = 1 << 20) -> bool:
    """True iff no point of the regular grid with spacing ``resolution`` beats ``value - 1e-7``."""
    steps = int(round(1 / float(resolution)))
    if steps < 1:
        raise OracleError("resolution must be at most 1")
    n = inst.n
    axis = np.linspace(0.0, 1.0, steps + 1)
    q = inst.symmetric_matrix()
    c = inst.linear_vector()
    total = (steps + 1) ** n
    threshold = float(value) - 1e-7
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        pts = np.empty((len(idx), n))
        rem = idx
        for d in range(n - 1, -1, -1):
            pts[:, d] = axis[rem % (steps + 1)]
            rem = rem // (steps + 1)
        vals = np.einsum("ki,ij,kj->k", pts, q, pts) + pts @ c
        if vals.min() < threshold:
            return False
    return True
