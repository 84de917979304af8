"""Standard-form block SDPs, exact presolve, an interior-point solver and SDPA I/O.

The standard form is

    minimize    c'y + offset
    subject to  sum_k y_k F_k - F_0  is PSD in every block,

with the companion problem ``maximize <F_0, X> + offset`` subject to
``<F_k, X> = c_k`` and ``X`` PSD.
"""

from __future__ import annotations

import heapq
import io
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, TextIO

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .relax import RelaxationProgram
from .rlt import CONST, LinearForm, Monomial, Square, Weight

__all__ = [
    "SdpError",
    "SdpBlock",
    "SdpStandard",
    "SolveResult",
    "EliminationMap",
    "lower",
    "solve",
    "solve_program",
    "check_certificate",
    "export_sdpa",
    "import_sdpa",
    "block_min_eigenvalues",
]

log = logging.getLogger(__name__)

MAX_BLOCK = 64
MAX_VARS = 20000


class SdpError(ValueError):
    pass


@dataclass
class SdpBlock:
    """One PSD block. ``coeffs[k]`` and ``const`` hold upper-triangle entries (0-based)."""

    size: int
    diagonal: bool = False
    coeffs: dict = field(default_factory=dict)
    const: dict = field(default_factory=dict)
    label: str = ""

    def matrix(self, k: int | None) -> np.ndarray:
        entries = self.const if k is None else self.coeffs.get(k, {})
        out = np.zeros((self.size, self.size))
        for (i, j), v in entries.items():
            out[i, j] = v
            out[j, i] = v
        return out


@dataclass
class EliminationMap:
    """Pivot variables expressed through the surviving free variables."""

    pivots: dict  # key -> LinearForm over free keys (constant via CONST)
    free: list  # free keys in column order
    dropped: list = field(default_factory=list)

    def value_map(self, y: Iterable[float]) -> dict:
        vals = {key: float(v) for key, v in zip(self.free, y)}
        for key in self.dropped:
            vals[key] = 0.0
        for key, form in self.pivots.items():
            vals[key] = sum(float(c) * (1.0 if k == CONST else vals.get(k, 0.0)) for k, c in form.items())
        return vals


@dataclass
class SdpStandard:
    m: int
    blocks: list
    cost: np.ndarray
    offset: float = 0.0
    names: list | None = None
    elimination: EliminationMap | None = None
    status_hint: str | None = None  # "unbounded" when a block-free variable carries cost

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float).reshape(-1)
        if self.cost.shape[0] != self.m:
            raise SdpError(f"cost has length {self.cost.shape[0]}, expected {self.m}")

    def slack(self, y) -> list[np.ndarray]:
        """Recompute sum_k y_k F_k - F_0 per block from the stored entries."""
        y = np.asarray(y, dtype=float)
        out = []
        for blk in self.blocks:
            s = -blk.matrix(None)
            for k, entries in blk.coeffs.items():
                if y[k] == 0:
                    continue
                for (i, j), v in entries.items():
                    s[i, j] += y[k] * v
                    if i != j:
                        s[j, i] += y[k] * v
            out.append(s)
        return out

    def block_summary(self) -> dict:
        sizes: dict = {}
        for blk in self.blocks:
            key = -blk.size if blk.diagonal else blk.size
            sizes[key] = sizes.get(key, 0) + 1
        return sizes


@dataclass
class SolveResult:
    status: str
    primal_objective: float = math.nan
    dual_objective: float = math.nan
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    min_eigenvalues: list = field(default_factory=list)
    iterations: int = 0
    gap: float = math.nan
    primal_infeasibility: float = math.nan
    dual_infeasibility: float = math.nan
    seconds: float = 0.0
    message: str = ""

    @property
    def bound(self) -> float:
        return self.primal_objective

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
            "iterations": self.iterations,
            "gap": self.gap,
            "primal_infeasibility": self.primal_infeasibility,
            "dual_infeasibility": self.dual_infeasibility,
            "min_eigenvalue": min(self.min_eigenvalues) if self.min_eigenvalues else None,
            "seconds": self.seconds,
            "message": self.message,
        }


# ---------------------------------------------------------------- presolve

def _div(a, b):
    q = Fraction(a) / Fraction(b)
    return q.numerator if q.denominator == 1 else q


def _pivot_rank(key, registry_index):
    kind = 0 if isinstance(key, Monomial) else 1 if isinstance(key, Square) else 2
    return (kind, registry_index.get(key, 1 << 60))


def _eliminate(equalities, registry_index):
    """Triangular elimination; returns pivots in creation order fully back-substituted."""
    order: list = []
    expr: dict = {}  # pivot -> dict over keys (CONST included), expression not yet reduced
    created: dict = {}
    for row_no, (form, rhs) in enumerate(equalities):
        row = dict(form.items())
        row[CONST] = row.get(CONST, 0) - rhs
        row = {k: v for k, v in row.items() if v != 0}
        heap = [(created[k], k) for k in row if k in created]
        heapq.heapify(heap)
        seen = set()
        while heap:
            _, p = heapq.heappop(heap)
            if p in seen or p not in row:
                continue
            seen.add(p)
            coef = row.pop(p)
            for k, v in expr[p].items():
                nv = row.get(k, 0) + coef * v
                if nv:
                    row[k] = nv
                else:
                    row.pop(k, None)
                if k in created and k in row and k not in seen:
                    heapq.heappush(heap, (created[k], k))
        vars_ = [k for k in row if k != CONST]
        if not vars_:
            if row.get(CONST, 0) != 0:
                raise SdpError(
                    f"inconsistent equalities: row {row_no} ({form} = {rhs}) reduces to "
                    f"0 = {-row[CONST]}"
                )
            continue
        p = min(vars_, key=lambda k: _pivot_rank(k, registry_index))
        a = row.pop(p)
        expr[p] = {k: _div(-v, a) for k, v in row.items()}
        created[p] = len(order)
        order.append(p)
    # back substitution in reverse creation order
    final: dict = {}
    for p in reversed(order):
        out: dict = {}
        for k, v in expr[p].items():
            if k in final:
                for k2, v2 in final[k].items():
                    out[k2] = out.get(k2, 0) + v * v2
            else:
                out[k] = out.get(k, 0) + v
        final[p] = {k: v for k, v in out.items() if v != 0}
    return {p: LinearForm(final[p]) for p in order}


def _substitute(form: LinearForm, pivots: dict) -> dict:
    out: dict = {}
    for k, v in form.items():
        if k in pivots:
            for k2, v2 in pivots[k].items():
                out[k2] = out.get(k2, 0) + v * v2
        else:
            out[k] = out.get(k, 0) + v
    return {k: v for k, v in out.items() if v != 0}


def lower(prog: RelaxationProgram) -> SdpStandard:
    """Eliminate equalities exactly and map the program to standard form."""
    reg_index = {k: i for i, k in enumerate(prog.registry)}
    pivots = _eliminate(prog.equalities, reg_index)

    sub_blocks = []
    for blk in prog.blocks:
        ents = [[_substitute(blk.entries[a][b], pivots) for b in range(blk.size)] for a in range(blk.size)]
        sub_blocks.append((blk, ents))
    obj = _substitute(prog.objective, pivots)

    in_blocks = set()
    for _, ents in sub_blocks:
        for row in ents:
            for e in row:
                in_blocks.update(k for k in e if k != CONST)
    used = set(in_blocks) | {k for k in obj if k != CONST}
    order = [k for k in prog.registry if k in used and k not in pivots]
    status_hint = None
    dropped = [k for k in order if k not in in_blocks]
    for k in dropped:
        if obj.get(k, 0) != 0:
            status_hint = "unbounded"
    free = [k for k in order if k in in_blocks]
    col = {k: i for i, k in enumerate(free)}

    diag = SdpBlock(0, diagonal=True, label="scalar")
    dense = []
    for blk, ents in sub_blocks:
        has_var = any(k != CONST for row in ents for e in row for k in e)
        if not has_var:
            mat = np.array([[float(ents[a][b].get(CONST, 0)) for b in range(blk.size)] for a in range(blk.size)])
            exact_ok = mat[0, 0] >= 0 if blk.size == 1 else np.linalg.eigvalsh(mat).min() >= -1e-12
            if blk.size == 1:
                exact_ok = ents[0][0].get(CONST, 0) >= 0
            if not exact_ok:
                raise SdpError(f"block {blk.label!r} is constant and not PSD; the program is infeasible")
            continue
        if blk.size == 1:
            i = diag.size
            diag.size += 1
            e = ents[0][0]
            for k, v in e.items():
                if k == CONST:
                    diag.const[(i, i)] = -float(v)
                else:
                    diag.coeffs.setdefault(col[k], {})[(i, i)] = float(v)
            continue
        out = SdpBlock(blk.size, label=blk.label)
        for a in range(blk.size):
            for b in range(a, blk.size):
                for k, v in ents[a][b].items():
                    if k == CONST:
                        out.const[(a, b)] = -float(v)
                    else:
                        out.coeffs.setdefault(col[k], {})[(a, b)] = float(v)
        dense.append(out)
    blocks = dense + ([diag] if diag.size else [])
    cost = np.array([float(obj.get(k, 0)) for k in free])
    offset = float(prog.offset) + float(obj.get(CONST, 0))
    elim = EliminationMap(pivots=pivots, free=free, dropped=dropped)
    return SdpStandard(len(free), blocks, cost, offset, names=[str(k) for k in free],
                       elimination=elim, status_hint=status_hint)


# ---------------------------------------------------------------- solver

class _Group:
    """Blocks of equal size s, stacked: data A (m x nb*s*s) and C (nb, s, s)."""

    def __init__(self, s, blocks, block_ids, m):
        self.s = s
        self.ids = block_ids
        nb = len(blocks)
        self.nb = nb
        rows, cols, vals = [], [], []
        self.C = np.zeros((nb, s, s))
        for b, blk in enumerate(blocks):
            base = b * s * s
            for k, entries in blk.coeffs.items():
                for (i, j), v in entries.items():
                    rows.append(k)
                    cols.append(base + i * s + j)
                    vals.append(-v)
                    if i != j:
                        rows.append(k)
                        cols.append(base + j * s + i)
                        vals.append(-v)
            self.C[b] = -blk.matrix(None)
        self.A = sp.csr_matrix((vals, (rows, cols)), shape=(m, nb * s * s))
        self.AT = self.A.T.tocsr()

    def op(self, X):
        return self.A @ X.reshape(-1)

    def adj(self, y):
        out = (self.AT @ y).reshape(self.nb, self.s, self.s)
        return out


class _Diag:
    def __init__(self, blk, block_id, m):
        self.id = block_id
        d = blk.size
        rows, cols, vals = [], [], []
        for k, entries in blk.coeffs.items():
            for (i, _), v in entries.items():
                rows.append(k)
                cols.append(i)
                vals.append(-v)
        self.A = sp.csr_matrix((vals, (rows, cols)), shape=(m, d))
        self.AT = self.A.T.tocsr()
        self.C = np.zeros(d)
        for (i, _), v in blk.const.items():
            self.C[i] = -v
        self.d = d


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _chol(a):
    return np.linalg.cholesky(a)


def _max_step(L, dX):
    """Largest alpha with L L' + alpha dX PSD (batched)."""
    Linv = np.linalg.inv(L)
    t = Linv @ dX @ np.swapaxes(Linv, -1, -2)
    lam = np.linalg.eigvalsh(_sym(t)).min()
    return math.inf if lam >= 0 else -1.0 / lam


def _block_diag_sparse(mats: np.ndarray) -> sp.csr_matrix:
    nb, q, _ = mats.shape
    indptr = np.arange(nb + 1)
    indices = np.arange(nb)
    return sp.bsr_matrix((mats, indices, indptr), shape=(nb * q, nb * q)).tocsr()


def _inner(groups, diag, X, Z, xd, zd):
    total = sum(float(np.sum(X[g] * Z[g])) for g in range(len(groups)))
    if diag is not None:
        total += float(xd @ zd)
    return total


def solve(sdp: SdpStandard, tol: float = 1e-8, max_iter: int = 200,
          max_block: int = MAX_BLOCK, max_vars: int = MAX_VARS) -> SolveResult:
    """Infeasible-start primal-dual path following with NT scaling and Mehrotra correction."""
    start = time.perf_counter()
    if not 0 < tol <= 1e-3:
        raise SdpError(f"tolerance must lie in (0, 1e-3], got {tol}")
    if sdp.m > max_vars:
        raise SdpError(f"{sdp.m} variables exceed the guard of {max_vars}")
    for blk in sdp.blocks:
        if not blk.diagonal and blk.size > max_block:
            raise SdpError(f"block of size {blk.size} exceeds the guard of {max_block}")
    if sdp.status_hint == "unbounded":
        return SolveResult("unbounded", -math.inf, -math.inf, message="variable with cost appears in no block")
    if sum(1 for blk in sdp.blocks if blk.diagonal) > 1:
        res = solve(_merge_diagonals(sdp), tol, max_iter, max_block, max_vars)
        if len(res.y) == sdp.m:
            res.min_eigenvalues = block_min_eigenvalues(sdp, res.y)
        return res
    m = sdp.m
    if m == 0:
        mins = [float(np.linalg.eigvalsh(s).min()) for s in sdp.slack(np.zeros(0))]
        if mins and min(mins) < -tol:
            return SolveResult("infeasible", math.inf, math.inf, min_eigenvalues=mins)
        return SolveResult("optimal", sdp.offset, sdp.offset, np.zeros(0), mins, 0, 0.0, 0.0, 0.0,
                           time.perf_counter() - start)

    by_size: dict = {}
    diag = None
    for idx, blk in enumerate(sdp.blocks):
        if blk.diagonal:
            if diag is not None:
                raise SdpError("at most one diagonal block is supported")
            diag = _Diag(blk, idx, m)
        else:
            by_size.setdefault(blk.size, []).append(idx)
    groups = [_Group(s, [sdp.blocks[i] for i in ids], ids, m) for s, ids in sorted(by_size.items())]

    # scaling: b = -c, C = -F0
    b_raw = -sdp.cost
    nb_ = max(1.0, float(np.linalg.norm(b_raw)))
    c_norm = math.sqrt(sum(float(np.sum(g.C**2)) for g in groups) + (float(diag.C @ diag.C) if diag else 0.0))
    nc_ = max(1.0, c_norm)
    b = b_raw / nb_
    Cs = [g.C / nc_ for g in groups]
    Cd = diag.C / nc_ if diag else None

    def A_op(Xs, xd):
        out = np.zeros(m)
        for g, X in zip(groups, Xs):
            out += g.op(X)
        if diag is not None:
            out += diag.A @ xd
        return out

    def A_adj(y):
        return [g.adj(y) for g in groups], (diag.AT @ y if diag else None)

    n_total = sum(g.nb * g.s for g in groups) + (diag.d if diag else 0)
    a_norms = np.sqrt(np.asarray(sum((g.A.multiply(g.A)).sum(axis=1) for g in groups) if groups else 0)
                      .reshape(-1) + (np.asarray(diag.A.multiply(diag.A).sum(axis=1)).reshape(-1) if diag else 0))
    xi = max(10.0, math.sqrt(n_total), float(np.max((1 + np.abs(b)) / (1 + a_norms))) * 10)
    eta = max(10.0, math.sqrt(n_total), float(np.max(a_norms)) if a_norms.size else 1.0, 1 + c_norm / nc_)
    X = [np.broadcast_to(np.eye(g.s) * xi, (g.nb, g.s, g.s)).copy() for g in groups]
    Z = [np.broadcast_to(np.eye(g.s) * eta, (g.nb, g.s, g.s)).copy() for g in groups]
    xd = np.full(diag.d, xi) if diag else None
    zd = np.full(diag.d, eta) if diag else None
    y = np.zeros(m)

    status = "numerical_failure"
    message = "iteration limit"
    it = 0
    relgap = pinf = dinf = math.inf
    pobj = dobj = math.nan
    best = None
    for it in range(max_iter + 1):
        ATy, ATy_d = A_adj(y)
        Rp = b - A_op(X, xd)
        Rd = [Cg - Zg - Ag for Cg, Zg, Ag in zip(Cs, Z, ATy)]
        Rd_d = (Cd - zd - ATy_d) if diag else None
        primal = sum(float(np.sum(Cg * Xg)) for Cg, Xg in zip(Cs, X)) + (float(Cd @ xd) if diag else 0.0)
        dual = float(b @ y)
        # report in the y-problem's orientation: c'y + offset versus <F0,X> + offset
        pobj = -dual * nb_ * nc_ + sdp.offset
        dobj = -primal * nb_ * nc_ + sdp.offset
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(Rp)) / (1 + float(np.linalg.norm(b)))
        rd_norm = math.sqrt(sum(float(np.sum(r * r)) for r in Rd) + (float(Rd_d @ Rd_d) if diag else 0.0))
        dinf = rd_norm / (1 + c_norm / nc_)
        if relgap <= tol and pinf <= tol and dinf <= tol:
            status, message = "optimal", ""
            break
        score = max(relgap, pinf, dinf)
        if best is None or score < best[0]:
            best = (score, it, y.copy(), pobj, dobj, relgap, pinf, dinf)
        # certificates of infeasibility
        xnorm = math.sqrt(sum(float(np.sum(x * x)) for x in X) + (float(xd @ xd) if diag else 0.0))
        ynorm = float(np.linalg.norm(y))
        if -primal > 0 and xnorm > 1e6:
            ax = float(np.linalg.norm(A_op(X, xd)))
            if ax / -primal < 1e-6:
                status, message = "infeasible", "primal ray certifies the LMI system is empty"
                break
        if dual > 0 and ynorm > 1e6:
            r = math.sqrt(sum(float(np.sum((Ag + Zg) ** 2)) for Ag, Zg in zip(ATy, Z))
                          + (float(np.sum((ATy_d + zd) ** 2)) if diag else 0.0))
            if r / dual < 1e-6:
                status, message = "unbounded", "dual ray certifies the objective is unbounded below"
                break
        if it == max_iter:
            break
        try:
            LX = [_chol(x) for x in X]
            LZ = [_chol(z) for z in Z]
        except np.linalg.LinAlgError:
            message = "iterate lost positive definiteness"
            break
        Gs, lams, Ws = [], [], []
        for lx, lz in zip(LX, LZ):
            u, lam, vt = np.linalg.svd(np.swapaxes(lz, -1, -2) @ lx)
            G = lx @ np.swapaxes(vt, -1, -2) / np.sqrt(lam)[:, None, :]
            Gs.append(G)
            lams.append(lam)
            Ws.append(G @ np.swapaxes(G, -1, -2))
        if diag is not None:
            wd = xd / zd
        # Schur complement M = B B' with B = A (G kron G); factor B' by QR so the
        # triangular factor of M is obtained without squaring its condition number
        parts = []
        for g, G in zip(groups, Gs):
            kr = np.einsum("bij,bkl->bikjl", G, G).reshape(g.nb, g.s * g.s, g.s * g.s)
            parts.append((g.A @ _block_diag_sparse(kr)).toarray())
        if diag is not None:
            parts.append((diag.A @ sp.diags(np.sqrt(wd))).toarray())
        B = np.hstack(parts)
        dscale = np.sqrt(np.maximum(np.einsum("ij,ij->i", B, B), 1e-300))
        Bt = np.vstack([(B / dscale[:, None]).T, 1e-12 * np.eye(m)])
        if not np.all(np.isfinite(Bt)):
            message = "Schur complement not finite"
            break
        R = sla.qr(Bt, mode="r", check_finite=False)[0][:m]
        if np.min(np.abs(np.diag(R))) == 0:
            message = "Schur complement not positive definite"
            break

        def schur_solve(rhs, R=R, dscale=dscale):
            t = sla.solve_triangular(R, rhs / dscale, trans="T", check_finite=False)
            return sla.solve_triangular(R, t, check_finite=False) / dscale

        WRdW = [W @ r @ W for W, r in zip(Ws, Rd)]

        def direction(Rc, Rc_d):
            base = Rp - A_op(Rc, Rc_d if diag else None) + A_op(WRdW, (wd * Rd_d) if diag else None)
            dy = schur_solve(base)
            for _ in range(3):
                # refine against the operator itself, not the assembled Schur matrix
                ATdy, ATdy_d = A_adj(dy)
                applied = A_op([W @ a @ W for W, a in zip(Ws, ATdy)], (wd * ATdy_d) if diag else None)
                r = base - applied
                if not np.all(np.isfinite(r)):
                    break
                dy = dy + schur_solve(r)
            ATdy, ATdy_d = A_adj(dy)
            dZ = [r - a for r, a in zip(Rd, ATdy)]
            dX = [_sym(rc - W @ dz @ W) for rc, W, dz in zip(Rc, Ws, dZ)]
            if diag is not None:
                dz_d = Rd_d - ATdy_d
                dx_d = Rc_d - wd * dz_d
            else:
                dz_d = dx_d = None
            return dy, dX, dZ, dx_d, dz_d

        def steps(dX, dZ, dx_d, dz_d):
            ap = ad = math.inf
            for lx, lz, dx, dz in zip(LX, LZ, dX, dZ):
                ap = min(ap, _max_step(lx, dx))
                ad = min(ad, _max_step(lz, _sym(dz)))
            if diag is not None:
                neg = dx_d < 0
                if neg.any():
                    ap = min(ap, float(np.min(-xd[neg] / dx_d[neg])))
                neg = dz_d < 0
                if neg.any():
                    ad = min(ad, float(np.min(-zd[neg] / dz_d[neg])))
            return ap, ad

        mu = _inner(groups, diag, X, Z, xd, zd) / n_total
        Rc0 = [-x for x in X]
        dy, dX, dZ, dx_d, dz_d = direction(Rc0, -xd if diag else None)
        ap, ad = steps(dX, dZ, dx_d, dz_d)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = _inner(groups, diag, [x + ap * d for x, d in zip(X, dX)], [z + ad * d for z, d in zip(Z, dZ)],
                        (xd + ap * dx_d) if diag else None, (zd + ad * dz_d) if diag else None) / n_total
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0

        Rc = []
        for G, lam, dx, dz in zip(Gs, lams, dX, dZ):
            Ginv = np.linalg.inv(G)
            dxt = Ginv @ dx @ np.swapaxes(Ginv, -1, -2)
            dzt = np.swapaxes(G, -1, -2) @ dz @ G
            prod = dxt @ dzt
            rhs = -(prod + np.swapaxes(prod, -1, -2))
            idx = np.arange(lam.shape[1])
            rhs[:, idx, idx] += 2 * (sigma * mu - lam**2)
            rt = rhs / (lam[:, :, None] + lam[:, None, :])
            Rc.append(_sym(G @ rt @ np.swapaxes(G, -1, -2)))
        Rc_d = ((sigma * mu - xd * zd - dx_d * dz_d) / zd) if diag else None
        dy, dX, dZ, dx_d, dz_d = direction(Rc, Rc_d)
        ap, ad = steps(dX, dZ, dx_d, dz_d)
        gamma = 0.9 + 0.09 * min(1.0, ap, ad)
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        X = [x + ap * d for x, d in zip(X, dX)]
        Z = [_sym(z + ad * d) for z, d in zip(Z, dZ)]
        y = y + ad * dy
        if diag is not None:
            xd = xd + ap * dx_d
            zd = zd + ad * dz_d
        log.debug("it %d mu %.2e sigma %.2e ap %.3f ad %.3f gap %.1e pinf %.1e dinf %.1e",
                  it, mu, sigma, ap, ad, relgap, pinf, dinf)
        if max(ap, ad) < 1e-10:
            message = "step length collapsed"
            break

    if status == "numerical_failure" and best is not None and best[0] <= tol:
        # the run degraded after reaching the target accuracy; report that iterate
        _, _, y, pobj, dobj, relgap, pinf, dinf = best
        status, message = "optimal", ""
    y_out = y * nc_
    result = SolveResult(status, pobj, dobj, y_out, [], it, relgap, pinf, dinf, 0.0, message)
    if status == "optimal":
        ok, mins, why = check_certificate(sdp, result, tol)
        result.min_eigenvalues = mins
        if not ok:
            result.status = "numerical_failure"
            result.message = why
    elif status in ("numerical_failure",):
        result.min_eigenvalues = block_min_eigenvalues(sdp, y_out)
    if status == "unbounded":
        result.primal_objective = result.dual_objective = -math.inf
    elif status == "infeasible":
        result.primal_objective = result.dual_objective = math.inf
    result.seconds = time.perf_counter() - start
    return result


def _merge_diagonals(sdp: SdpStandard) -> SdpStandard:
    merged = SdpBlock(0, diagonal=True, label="scalar")
    dense = []
    for blk in sdp.blocks:
        if not blk.diagonal:
            dense.append(blk)
            continue
        shift = merged.size
        merged.size += blk.size
        for (i, j), v in blk.const.items():
            merged.const[(i + shift, j + shift)] = v
        for k, ents in blk.coeffs.items():
            target = merged.coeffs.setdefault(k, {})
            for (i, j), v in ents.items():
                target[(i + shift, j + shift)] = v
    return SdpStandard(sdp.m, dense + [merged], sdp.cost, sdp.offset, sdp.names, sdp.elimination, sdp.status_hint)


def block_min_eigenvalues(sdp: SdpStandard, y) -> list[float]:
    out = []
    for blk, s in zip(sdp.blocks, sdp.slack(y)):
        if blk.diagonal:
            out.append(float(np.min(np.diag(s))) if blk.size else 0.0)
        else:
            out.append(float(np.linalg.eigvalsh(s).min()))
    return out


def check_certificate(sdp: SdpStandard, result: SolveResult, tol: float):
    """Rebuild every slack block from ``y`` and re-check eigenvalues and the duality gap."""
    mins = block_min_eigenvalues(sdp, result.y)
    pobj = float(sdp.cost @ result.y) + sdp.offset if sdp.m else sdp.offset
    if mins and min(mins) < -10 * tol:
        return False, mins, f"slack eigenvalue {min(mins):.3e} below -10*tol"
    gap = abs(pobj - result.dual_objective) / (1 + abs(pobj) + abs(result.dual_objective))
    if gap > 10 * tol:
        return False, mins, f"recomputed gap {gap:.3e} above tolerance"
    return True, mins, ""


def solve_program(prog: RelaxationProgram, tol: float = 1e-8, **kw):
    """Lower and solve; returns ``(result, values)`` where values maps registry keys to floats."""
    try:
        sdp = lower(prog)
    except SdpError as exc:
        if "infeasible" in str(exc) or "inconsistent" in str(exc):
            return SolveResult("infeasible", math.inf, math.inf, message=str(exc)), {}
        raise
    res = solve(sdp, tol=tol, **kw)
    values = sdp.elimination.value_map(res.y) if res.status == "optimal" else {}
    return res, values


# ---------------------------------------------------------------- SDPA

def _g(v: float) -> str:
    if v == 0:
        v = 0.0
    return "%.17g" % v


def export_sdpa(sdp: SdpStandard, sink) -> None:
    """Write the SDPA sparse format to a path or text stream."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="ascii", newline="\n") as fh:
            export_sdpa(sdp, fh)
        return
    lines = [str(sdp.m), str(len(sdp.blocks))]
    lines.append(" ".join(str(-blk.size if blk.diagonal else blk.size) for blk in sdp.blocks))
    lines.append(" ".join(_g(float(v)) for v in sdp.cost))
    entries = []
    for bi, blk in enumerate(sdp.blocks, start=1):
        for (i, j), v in blk.const.items():
            if v != 0:
                entries.append((0, bi, i + 1, j + 1, v))
        for k, ents in blk.coeffs.items():
            for (i, j), v in ents.items():
                if v != 0:
                    entries.append((k + 1, bi, i + 1, j + 1, v))
    entries.sort(key=lambda e: e[:4])
    lines += [f"{k} {b} {i} {j} {_g(v)}" for k, b, i, j, v in entries]
    lines.append(f"*offset {_g(float(sdp.offset))}")
    sink.write("\n".join(lines) + "\n")


def _header_tokens(line: str) -> list[str]:
    for ch in "{}(),":
        line = line.replace(ch, " ")
    return line.split()


def import_sdpa(source) -> SdpStandard:
    """Parse an SDPA sparse file (path, text stream or string with newlines)."""
    if isinstance(source, str) and "\n" in source:
        source = io.StringIO(source)
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="ascii") as fh:
            return import_sdpa(fh)
    offset = 0.0
    header: list = []
    header_lines = 0
    m = nblocks = None
    sizes: list = []
    cost: list = []
    blocks: list = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        if line[0] in '*"':
            if line.startswith("*offset"):
                try:
                    offset = float(line.split()[1])
                except (IndexError, ValueError):
                    raise SdpError(f"line {lineno}: bad offset line") from None
            continue
        if header_lines < 4:
            toks = _header_tokens(line)
            try:
                if header_lines == 0:
                    m = int(toks[0])
                elif header_lines == 1:
                    nblocks = int(toks[0])
                elif header_lines == 2:
                    sizes = [int(t) for t in toks[:nblocks]]
                    if len(sizes) != nblocks:
                        raise ValueError
                else:
                    cost = [float(t) for t in toks[:m]]
                    if len(cost) != m:
                        raise ValueError
            except (ValueError, IndexError):
                raise SdpError(f"line {lineno}: malformed header line {line!r}") from None
            header_lines += 1
            if header_lines == 3:
                blocks = [SdpBlock(abs(s), diagonal=s < 0) for s in sizes]
                if any(s == 0 for s in sizes):
                    raise SdpError(f"line {lineno}: zero block size")
            if header_lines == 3 and m == 0:
                header_lines = 4
            continue
        toks = line.split()
        try:
            k, bi, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
            if len(toks) != 5:
                raise ValueError
        except (ValueError, IndexError):
            raise SdpError(f"line {lineno}: malformed entry {line!r}") from None
        if not (0 <= k <= m and 1 <= bi <= nblocks):
            raise SdpError(f"line {lineno}: entry index out of range")
        blk = blocks[bi - 1]
        if not (1 <= i <= blk.size and 1 <= j <= blk.size):
            raise SdpError(f"line {lineno}: position ({i}, {j}) outside block {bi}")
        if blk.diagonal and i != j:
            raise SdpError(f"line {lineno}: off-diagonal entry in diagonal block {bi}")
        i, j = min(i, j) - 1, max(i, j) - 1
        target = blk.const if k == 0 else blk.coeffs.setdefault(k - 1, {})
        if (i, j) in target:
            raise SdpError(f"line {lineno}: duplicate entry")
        target[(i, j)] = v
    if header_lines < 4:
        raise SdpError("truncated SDPA header")
    return SdpStandard(m, blocks, np.array(cost), offset)
