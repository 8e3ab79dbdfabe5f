"""Oracle-backed verification suites used by ``erasure-exponents verify``.

Each suite returns a :class:`SuiteReport` listing individual checks with the
measured delta and the tolerance it was held to.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel_core import ChannelFamily, Dmc, all_outputs
from .decoders import ERASURE, ForneyDecoder
from .exponents import (DEFAULT_GRID, GridSpec, bsc_pair_numerator, e0_forney, e1, f_exponent,
                        gallager_e, pair_exponent, u_bound, u_moment, xi_star)
from .oracles import (e0_direct, f_exponent_oracle, pair_exponent_oracle,
                      u_moment_bruteforce)
from .sim import rng_for, sample_codebook

# Reference xi*(R, T) values for the BSC family; rows R = 0..0.30, columns T = 0..0.150.
REFERENCE_RATES = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
REFERENCE_THRESHOLDS = (0.0, 0.025, 0.05, 0.075, 0.10, 0.125, 0.15)
REFERENCE_XI = (
    (1.000, 0.364, 0.523, 0.418, 0.396, 0.422, 0.298),
    (1.000, 0.756, 0.713, 0.656, 0.535, 0.562, 0.495),
    (1.000, 0.858, 0.774, 0.648, 0.655, 0.585, 0.518),
    (1.000, 0.877, 0.809, 0.720, 0.713, 0.662, 0.622),
    (1.000, 0.905, 0.815, 0.729, 0.729, 0.684, 0.647),
    (1.000, 0.912, 0.832, 0.763, 0.706, 0.661, 0.627),
    (1.000, 0.896, 0.850, 0.788, 0.738, 0.644, 0.613),
)

SUITES = ("closed-forms", "table1", "decoder-optimality", "u-bound")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    delta: float
    tol: float
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks]}


def reference_xi(rate: float, threshold: float) -> float:
    i = min(range(7), key=lambda k: abs(REFERENCE_RATES[k] - rate))
    j = min(range(7), key=lambda k: abs(REFERENCE_THRESHOLDS[k] - threshold))
    if abs(REFERENCE_RATES[i] - rate) > 1e-9 or abs(REFERENCE_THRESHOLDS[j] - threshold) > 1e-9:
        raise KeyError((rate, threshold))
    return REFERENCE_XI[i][j]


def random_dmc(rng: np.random.Generator, nx: int, ny: int) -> Dmc:
    p = rng.dirichlet(np.ones(ny), size=nx)
    return Dmc(p / p.sum(axis=1, keepdims=True))


# --- closed forms -----------------------------------------------------------

def closed_forms(count: int = 100, seed: int = 0, step: float = 0.01,
                 tol: float = 5e-3, bsc_tol: float = 1e-9) -> SuiteReport:
    """Closed-form F and pair exponents against grid-searched definitions."""
    rng = rng_for(seed, 0)
    worst_f = worst_p = 0.0
    where_f: dict = {}
    where_p: dict = {}
    for k in range(count):
        nx, ny = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        a, b = random_dmc(rng, nx, ny), random_dmc(rng, nx, ny)
        py = rng.dirichlet(np.ones(ny))
        rho = float(rng.uniform(0.05, 1.0))
        s = float(rng.uniform(0.0, rho))
        lam = s / rho
        df = abs(f_exponent(py, lam, a) - f_exponent_oracle(py, lam, a, step))
        dp = abs(pair_exponent(a, b, rho, s) - pair_exponent_oracle(a, b, rho, s, step))
        if df > worst_f:
            worst_f, where_f = df, {"instance": k, "shape": [nx, ny], "lam": lam}
        if dp > worst_p:
            worst_p, where_p = dp, {"instance": k, "shape": [nx, ny], "rho": rho, "s": s}

    worst_b = worst_e0 = 0.0
    for theta, theta_t, rho, s, rate, t in _bsc_points(rng, 200):
        ca, cb = Dmc.bsc(theta), Dmc.bsc(theta_t)
        general = pair_exponent(ca, cb, rho, s) - rho * rate - s * t
        worst_b = max(worst_b, abs(general - bsc_pair_numerator(theta, theta_t, s, rho, rate, t)))
        worst_e0 = max(worst_e0, abs(e0_forney(s, rho, ca) - e0_direct(s, rho, ca)))
    checks = (
        Check("f_exponent vs simplex oracle", worst_f < tol, worst_f, tol, where_f),
        Check("pair_exponent vs simplex oracle", worst_p < tol, worst_p, tol, where_p),
        Check("BSC pair numerator closed form", worst_b < bsc_tol, worst_b, bsc_tol),
        Check("E0 log-domain vs direct sum", worst_e0 < bsc_tol, worst_e0, bsc_tol),
    )
    return SuiteReport("closed-forms", checks)


def _bsc_points(rng: np.random.Generator, count: int):
    for _ in range(count):
        theta, theta_t = rng.uniform(0.01, 0.5, size=2)
        rho = float(rng.uniform(0.05, 1.0))
        s = float(rng.uniform(0.0, rho))
        yield float(theta), float(theta_t), rho, s, float(rng.uniform(0, 0.3)), float(rng.uniform(0, 0.15))


# --- reference xi* table -----------------------------------------------------

def table1(rates: Sequence[float] = REFERENCE_RATES,
           thresholds: Sequence[float] = REFERENCE_THRESHOLDS,
           g: GridSpec = DEFAULT_GRID, tol: float = 0.02, tight: float = 0.01,
           min_tight: int | None = None,
           mapper: Callable = map) -> SuiteReport:
    """xi* on the BSC grid family against the reference table."""
    fam = ChannelFamily.bsc()
    cells = [(r, t) for r in rates for t in thresholds]
    results = list(mapper(lambda rt: xi_star(rt[0], rt[1], fam, g), cells))
    checks = []
    n_tight = 0
    for (r, t), res in zip(cells, results):
        ref = reference_xi(r, t)
        d = abs(res.xi - ref)
        n_tight += d <= tight
        checks.append(Check(f"xi*(R={r:g}, T={t:g})", d <= tol, d, tol,
                            {"computed": res.xi, "reference": ref}))
    need = math.ceil(len(cells) * 44 / 49) if min_tight is None else min_tight
    checks.append(Check(f"cells within {tight:g}", n_tight >= need, float(len(cells) - n_tight),
                        float(len(cells) - need), {"within": int(n_tight), "required": need}))
    return SuiteReport("table1", tuple(checks))


# --- decoder optimality -----------------------------------------------------

def forney_violations(cb, ch: Dmc, threshold: float, rel: float = 1e-12) -> int:
    """Output vectors where Forney's choice does not minimize the Lagrangian share.

    For a fixed y, deciding m costs (1 + w) sum_{m' != m} P(y|x_m'), erasing
    costs w sum_m P(y|x_m), with w = e^{-nT}.  All M + 1 options are compared.
    """
    ys = all_outputs(cb.n, ch.output_size)
    dec = ForneyDecoder(ch, threshold)
    d = dec.decide(cb, ys)
    P = np.exp(dec.scores(cb, ys))  # (M, N)
    w = math.exp(-cb.n * threshold)
    others = np.stack([np.delete(P, m, axis=0).sum(axis=0) for m in range(cb.M)])
    cost = np.vstack([(1 + w) * others, w * P.sum(axis=0)[None, :]])  # (M+1, N)
    pick = np.where(d == ERASURE, cb.M, d)
    chosen = cost[pick, np.arange(len(ys))]
    return int(np.sum(chosen > cost.min(axis=0) * (1 + rel) + 1e-300))


def decoder_optimality(max_n: int = 6, max_m: int = 4, thetas: Sequence[float] = (0.1, 0.3),
                       thresholds: Sequence[float] = (0.0, 0.05, 0.2), seed: int = 0,
                       codebooks: int = 2) -> SuiteReport:
    checks = []
    idx = 0
    for n, M, theta, t in itertools.product(range(1, max_n + 1), range(2, max_m + 1),
                                            thetas, thresholds):
        ch = Dmc.bsc(theta)
        bad = 0
        for _ in range(codebooks):
            bad += forney_violations(sample_codebook(n, M, seed, index=idx), ch, t)
            idx += 1
        checks.append(Check(f"n={n} M={M} theta={theta:g} T={t:g}", bad == 0, float(bad), 0.0))
    return SuiteReport("decoder-optimality", tuple(checks))


# --- U bound ----------------------------------------------------------------

def u_bound_suite(count: int = 1000, lengths: Sequence[int] = (4, 8, 12), seed: int = 0,
                  brute_max_n: int = 10, brute_count: int = 60) -> SuiteReport:
    rng = rng_for(seed, 1)
    violations = 0
    worst = -math.inf
    for k in range(count):
        n = int(lengths[k % len(lengths)])
        theta = float(rng.uniform(0.01, 0.5))
        lam = float(rng.uniform(0.0, 1.0))
        y = rng.integers(0, 2, size=n)
        ch = Dmc.bsc(theta)
        gap = u_moment(y, lam, ch) - u_bound(y, lam, ch)
        worst = max(worst, gap)
        violations += gap > 1e-9
    brute = 0.0
    for _ in range(brute_count):
        n = int(rng.integers(1, brute_max_n + 1))
        ch = Dmc.bsc(float(rng.uniform(0.01, 0.5)))
        lam = float(rng.uniform(0.0, 1.0))
        y = rng.integers(0, 2, size=n)
        brute = max(brute, abs(u_moment(y, lam, ch) - u_moment_bruteforce(y, lam, ch)))
    checks = (
        Check("ln U minus bound (max)", violations == 0, worst, 0.0, {"violations": violations}),
        Check("product form vs codeword enumeration", brute < 1e-9, brute, 1e-9),
    )
    return SuiteReport("u-bound", checks)


def gallager_consistency(thetas: Sequence[float] = (0.05, 0.1, 0.2),
                         rates: Sequence[float] = (0.05, 0.1, 0.2),
                         g: GridSpec = DEFAULT_GRID) -> list[tuple[float, float, float, float]]:
    """(theta, R, e1 at T=0, max over rho of gallager_e) for each pair."""
    rhos = np.linspace(0.0, 1.0, 10001)
    out = []
    for theta, r in itertools.product(thetas, rates):
        best = max(gallager_e(theta, float(p), r) for p in rhos)
        out.append((theta, r, e1(r, 0.0, Dmc.bsc(theta), g=g), best))
    return out


def run_suite(name: str, **kw) -> SuiteReport:
    if name == "closed-forms":
        return closed_forms(**kw)
    if name == "table1":
        return table1(**kw)
    if name == "decoder-optimality":
        return decoder_optimality(**kw)
    if name == "u-bound":
        return u_bound_suite(**kw)
    raise KeyError(name)
