"""Brute-force reference computations.

Each routine here evaluates a quantity straight from its defining optimization
or expectation, without the closed forms used in ``exponents``.  They are slow
and only meant for verification.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .channel_core import Dmc


def simplex_grid(k: int, step: float) -> NDArray[np.float64]:
    """All points of the (k-1)-simplex with coordinates on a ``step`` lattice."""
    n = int(round(1.0 / step))
    pts = [c for c in itertools.product(range(n + 1), repeat=k - 1) if sum(c) <= n]
    a = np.array(pts, dtype=np.float64).reshape(-1, k - 1)
    return np.column_stack([a, n - a.sum(axis=1)]) / n


def _local_simplex(center: NDArray[np.float64], step: float) -> NDArray[np.float64]:
    k = center.size
    off = np.arange(-10, 11) * (step / 10.0)
    pts = []
    for d in itertools.product(off, repeat=k - 1):
        head = center[:-1] + np.array(d)
        last = 1.0 - head.sum()
        if np.all(head >= -1e-15) and last >= -1e-15:
            pts.append(np.append(np.clip(head, 0, 1), max(last, 0.0)))
    return np.array(pts)


def _entropy_rows(p: NDArray[np.float64]) -> NDArray[np.float64]:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, -p * np.log(p), 0.0)
    return t.sum(axis=-1)


def _inner_max(col: NDArray[np.float64], lam: float, step: float, refine: bool) -> float:
    """max over p on the simplex of H(p) + lam * sum_x p(x) ln col(x)."""
    with np.errstate(divide="ignore"):
        lc = np.log(col)

    def objective(p: NDArray[np.float64]) -> NDArray[np.float64]:
        lin = np.where(p > 0, p * np.where(np.isfinite(lc), lc, 0.0), 0.0)
        bad = np.any((p > 0) & ~np.isfinite(lc), axis=-1)
        v = _entropy_rows(p) + lam * lin.sum(axis=-1)
        return np.where(bad, -np.inf, v)

    pts = simplex_grid(col.size, step)
    vals = objective(pts)
    best = int(np.argmax(vals))
    v = float(vals[best])
    if refine:
        loc = _local_simplex(pts[best], step)
        v = max(v, float(np.max(objective(loc))))
    return v


def f_exponent_oracle(py: ArrayLike, lam: float, ch: Dmc, step: float = 0.01,
                      refine: bool = True) -> float:
    """ln|X| - sum_y py(y) max_{P_{x|y=y}} [H(X|Y=y) + lam E ln P(y|X)] by grid search."""
    p = np.asarray(py, dtype=np.float64)
    g = np.array([_inner_max(ch.probs[:, y], lam, step, refine) for y in range(ch.output_size)])
    mask = p > 0
    return float(math.log(ch.input_size) - np.sum(p[mask] * g[mask]))


def pair_exponent_oracle(th_a: Dmc, th_b: Dmc, rho: float, s: float, step: float = 0.01,
                         refine: bool = True) -> float:
    """min over P_y of F(P_y,1-s,th_a) + rho F(P_y,s/rho,th_b) - H(Y) by nested grid search."""
    if rho == 0:
        return 0.0
    ny = th_a.output_size
    ga = np.array([_inner_max(th_a.probs[:, y], 1.0 - s, step, refine) for y in range(ny)])
    gb = np.array([_inner_max(th_b.probs[:, y], s / rho, step, refine) for y in range(ny)])
    lnx = math.log(th_a.input_size)

    def objective(py: NDArray[np.float64]) -> NDArray[np.float64]:
        fa = lnx - py @ ga
        fb = lnx - py @ gb
        return fa + rho * fb - _entropy_rows(py)

    pts = simplex_grid(ny, step)
    vals = objective(pts)
    best = int(np.argmin(vals))
    v = float(vals[best])
    if refine:
        v = min(v, float(np.min(objective(_local_simplex(pts[best], step)))))
    return v


def u_moment_bruteforce(y: ArrayLike, lam: float, ch: Dmc) -> float:
    """ln of the average of P^lam(y|x) over all |X|^n codewords."""
    ya = np.asarray(y, dtype=np.int64)
    n = ya.size
    xs = np.array(list(itertools.product(range(ch.input_size), repeat=n)), dtype=np.int64)
    terms = np.prod(ch.probs[xs, ya[None, :]] ** lam, axis=1)
    return math.log(terms.mean())


def e0_direct(s: float, rho: float, ch: Dmc, q: ArrayLike | None = None) -> float:
    """Forney's E0 by plain summation (no log-domain tricks)."""
    qv = np.full(ch.input_size, 1.0 / ch.input_size) if q is None else np.asarray(q, float)
    total = 0.0
    for y in range(ch.output_size):
        a = sum(qv[x] * ch.probs[x, y] ** (1.0 - s) for x in range(ch.input_size))
        b = sum(qv[x] * ch.probs[x, y] ** (s / rho) for x in range(ch.input_size))
        total += a * b ** rho
    return -math.log(total)


def e1_bruteforce(rate: float, threshold: float, ch: Dmc, step: float = 1e-3) -> float:
    """E1 by exhaustive search over s and rho stepped directly, s <= rho."""
    k = int(round(1.0 / step))
    best = 0.0
    q = 1.0 / ch.input_size
    P = ch.probs
    for i in range(1, k + 1):
        rho = i * step
        s = np.arange(0, i + 1) * step
        lam = s / rho
        a = (q * P[:, :, None] ** (1.0 - s)).sum(axis=0)
        b = (q * P[:, :, None] ** lam).sum(axis=0)
        vals = -np.log((a * b ** rho).sum(axis=0)) - rho * rate - s * threshold
        best = max(best, float(vals.max()))
    return best
