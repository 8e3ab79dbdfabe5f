"""Random-coding ensembles and exact / Monte Carlo error probabilities.

Randomness comes from Philox streams keyed by (seed, codebook index, block
index), so results do not depend on how work is scheduled across threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np
from numpy.typing import NDArray

from .channel_core import (ChannelFamily, Codebook, Dmc, all_outputs, batch_joint_counts,
                           message_count)
from .decoders import (CHUNK, ERASURE, ForneyDecoder, UniversalContext, UniversalDecoder,
                       Variant)
from .exponents import DEFAULT_GRID, GridSpec, _data_lines, exponent_table

DEFAULT_OUTPUT_BUDGET = 1 << 20
DEFAULT_SYMBOL_BUDGET = 1 << 26
MC_BLOCK = 4096


class BudgetExceeded(RuntimeError):
    """Requested enumeration or sampling exceeds the configured budget."""


class Decoder(Protocol):
    threshold: float

    def decide(self, cb: Codebook, ys: NDArray[np.int64]) -> NDArray[np.int64]: ...

    def decide_counts(self, cb: Codebook, counts: NDArray[np.float64]) -> NDArray[np.int64]: ...


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass(frozen=True)
class ErrorStats:
    pr_e1: float
    pr_e2: float
    pr_erasure: float
    gamma: float
    stderr: dict | None = None


def sample_codebook(n: int, M: int, seed: int, input_size: int = 2, index: int = 0,
                    budget: int = DEFAULT_SYMBOL_BUDGET) -> Codebook:
    """M codewords of length n, i.i.d. uniform symbols."""
    if n < 1 or M < 2:
        raise ValueError("need n >= 1 and M >= 2")
    if M * n > budget:
        raise BudgetExceeded(f"M*n = {M * n} exceeds the symbol budget {budget}")
    words = rng_for(seed, index).integers(0, input_size, size=(M, n))
    return Codebook(words, input_size)


def _outcome_masks(d: NDArray[np.int64], M: int) -> NDArray[np.float64]:
    """Indicator rows (E1, E2, erasure) over the flattened (m, y) grid, shape (3, M*N)."""
    m = np.arange(M)[:, None]
    wrong = d[None, :] != m
    erased = np.broadcast_to(d[None, :] == ERASURE, wrong.shape)
    return np.stack([wrong, wrong & ~erased, erased]).reshape(3, -1).astype(np.float64)


def exact_error_probs(cb: Codebook, dec: Decoder, ch: Dmc, threshold: float | None = None,
                      budget: int = DEFAULT_OUTPUT_BUDGET) -> ErrorStats:
    """Pr{E1}, Pr{E2}, Pr{R0} and the Lagrangian by enumerating every output vector."""
    t = dec.threshold if threshold is None else threshold
    ny = ch.output_size ** cb.n
    if ny > budget:
        raise BudgetExceeded(f"|Y|^n = {ny} exceeds the output budget {budget}")
    ys = all_outputs(cb.n, ch.output_size)
    d = dec.decide(cb, ys)
    e1_parts, e2_parts, r0_parts = [], [], []
    lp = ch.log_probs.ravel()
    for a in range(0, len(ys), CHUNK):
        counts = batch_joint_counts(cb.words, ys[a:a + CHUNK], ch.input_size, ch.output_size)
        P = np.exp(counts @ lp)
        dc = d[a:a + CHUNK]
        m = np.arange(cb.M)[:, None]
        wrong = dc[None, :] != m
        erased = np.broadcast_to(dc[None, :] == ERASURE, wrong.shape)
        e1_parts.append(P[wrong])
        e2_parts.append(P[wrong & ~erased])
        r0_parts.append(P[erased])
    pe1 = math.fsum(np.concatenate(e1_parts)) / cb.M
    pe2 = math.fsum(np.concatenate(e2_parts)) / cb.M
    pr0 = math.fsum(np.concatenate(r0_parts)) / cb.M
    return ErrorStats(pe1, pe2, pr0, pe2 + math.exp(-cb.n * t) * pe1)


def mc_error_probs(cb: Codebook, dec: Decoder, ch: Dmc, trials: int, seed: int,
                   threshold: float | None = None, codebook_index: int = 0) -> ErrorStats:
    """Monte Carlo estimate: m uniform, y ~ P(.|x_m), with standard errors."""
    if trials < 1:
        raise ValueError("trials must be positive")
    t = dec.threshold if threshold is None else threshold
    w = math.exp(-cb.n * t)
    n1 = n2 = n0 = 0
    g_sum = g_sq = 0.0
    for b, start in enumerate(range(0, trials, MC_BLOCK)):
        k = min(MC_BLOCK, trials - start)
        rng = rng_for(seed, codebook_index, b)
        msgs = rng.integers(0, cb.M, size=k)
        ys = ch.sample_outputs(cb.words[msgs], rng)
        d = dec.decide(cb, ys)
        e1 = d != msgs
        e2 = e1 & (d != ERASURE)
        g = e2 + w * e1
        n1 += int(e1.sum())
        n2 += int(e2.sum())
        n0 += int((d == ERASURE).sum())
        g_sum += float(g.sum())
        g_sq += float((g * g).sum())
    p1, p2, p0 = n1 / trials, n2 / trials, n0 / trials
    gm = g_sum / trials
    se = {
        "pr_e1": math.sqrt(p1 * (1 - p1) / trials),
        "pr_e2": math.sqrt(p2 * (1 - p2) / trials),
        "pr_erasure": math.sqrt(p0 * (1 - p0) / trials),
        "gamma": math.sqrt(max(g_sq / trials - gm * gm, 0.0) / trials),
    }
    return ErrorStats(p1, p2, p0, gm, se)


@dataclass(frozen=True)
class ThetaStats:
    theta: float
    stats: ErrorStats
    ratio: float  # average Gamma_theta scaled by e^{n[xi E1 + T]}


def _theta_row(ts: ThetaStats) -> dict:
    row = {"theta": ts.theta, "pr_e1": ts.stats.pr_e1, "pr_e2": ts.stats.pr_e2,
           "pr_erasure": ts.stats.pr_erasure, "gamma": ts.stats.gamma, "ratio": ts.ratio}
    if ts.stats.stderr is not None:
        row["stderr"] = ts.stats.stderr
    return row


@dataclass(frozen=True)
class EnsembleReport:
    n: int
    M: int
    codebooks: int
    seed: int
    xi: float
    config: dict
    per_theta: tuple[ThetaStats, ...]
    kn_ratio: float  # mean over codebooks of max over theta of the scaled Lagrangian

    @property
    def trials(self) -> int:
        return self.codebooks

    def at(self, theta: float, tol: float = 1e-9) -> ThetaStats:
        for ts in self.per_theta:
            if abs(ts.theta - theta) <= tol:
                return ts
        raise KeyError(theta)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n": self.n,
            "M": self.M,
            "codebooks": self.codebooks,
            "xi": self.xi,
            "per_theta": [_theta_row(ts) for ts in self.per_theta],
            "kn_ratio": self.kn_ratio,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleReport":
        per = tuple(ThetaStats(p["theta"], ErrorStats(p["pr_e1"], p["pr_e2"], p["pr_erasure"],
                                                      p["gamma"], p.get("stderr")), p["ratio"])
                    for p in d["per_theta"])
        return cls(d["n"], d["M"], d["codebooks"], d["seed"], d["xi"], d["config"], per,
                   d["kn_ratio"])


def _family_masses(cb: Codebook, dec: Decoder, fam: ChannelFamily,
                   ys: NDArray[np.int64]) -> NDArray[np.float64]:
    """Unnormalized (E1, E2, erasure) masses per family channel, shape (K, 3)."""
    lp = fam.log_prob_stack().reshape(len(fam), -1).T  # (C, K)
    out = np.zeros((3, len(fam)))
    for a in range(0, len(ys), CHUNK):
        counts = batch_joint_counts(cb.words, ys[a:a + CHUNK], fam.input_size, fam.output_size)
        d = dec.decide_counts(cb, counts)
        P = np.exp(counts.reshape(-1, counts.shape[-1]) @ lp)  # (M*N, K)
        out += _outcome_masks(d, cb.M) @ P
    return out.T / cb.M


def _make_decoder(kind: str, fam: ChannelFamily, table, xi: float, threshold: float, n: int,
                  channel_theta: float | None, variant: Variant | str):
    if kind == "universal":
        ctx = UniversalContext(fam, table, xi, threshold, n, Variant(variant))
        return UniversalDecoder(ctx), channel_theta
    if kind == "forney":
        if channel_theta is None:
            if len(fam) != 1:
                raise ValueError("the Forney decoder needs channel_theta for a multi-point family")
            channel_theta = fam.grid[0]
        return ForneyDecoder(fam.resolve(fam.index_of(channel_theta)), threshold), channel_theta
    raise ValueError(f"unknown decoder {kind!r}")


def ensemble_average(n: int, rate: float, threshold: float, fam: ChannelFamily,
                     decoder: str = "universal", xi: float = 1.0, codebooks: int = 50,
                     seed: int = 0, channel_theta: float | None = None,
                     variant: Variant | str = Variant.SUM_OVER_OTHERS,
                     g: GridSpec = DEFAULT_GRID, budget: int = DEFAULT_OUTPUT_BUDGET,
                     threads: int = 1) -> EnsembleReport:
    """Exact ensemble averages of the error probabilities for every family channel.

    ``decoder`` is ``"universal"`` (competitive-minimax rule with this ``xi``)
    or ``"forney"`` (optimal rule matched to ``channel_theta``).
    """
    ny = fam.output_size ** n
    if ny > budget:
        raise BudgetExceeded(f"|Y|^n = {ny} exceeds the output budget {budget}")
    M = message_count(n, rate)
    table = exponent_table(fam, rate, threshold, g)
    dec, channel_theta = _make_decoder(decoder, fam, table, xi, threshold, n, channel_theta, variant)
    ys = all_outputs(n, fam.output_size)
    scale = n * (xi * table.as_array() + threshold)
    w = math.exp(-n * threshold)

    def one(idx: int) -> NDArray[np.float64]:
        cb = sample_codebook(n, M, seed, fam.input_size, index=idx)
        return _family_masses(cb, dec, fam, ys)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            masses = list(ex.map(one, range(codebooks)))
    else:
        masses = [one(i) for i in range(codebooks)]
    masses = np.stack(masses)                         # (codebooks, K, 3)
    gamma = masses[:, :, 1] + w * masses[:, :, 0]     # (codebooks, K)
    log_ratio = np.log(np.maximum(gamma, 1e-300)) + scale[None, :]
    kn = np.exp(log_ratio.max(axis=1))

    per = []
    for k, theta in enumerate(fam.grid):
        avg = [math.fsum(masses[:, k, c]) / codebooks for c in range(3)]
        gm = math.fsum(gamma[:, k]) / codebooks
        per.append(ThetaStats(float(theta), ErrorStats(avg[0], avg[1], avg[2], gm),
                              gm * math.exp(scale[k])))
    config = {"n": n, "R": rate, "T": threshold, "decoder": decoder, "xi": xi,
              "codebooks": codebooks, "seed": seed, "variant": Variant(variant).value,
              "channel_theta": channel_theta, "family": fam.to_dict(), "mode": "exact"}
    return EnsembleReport(n, M, codebooks, seed, xi, config, tuple(per),
                          math.fsum(kn) / codebooks)


def ensemble_mc(n: int, rate: float, threshold: float, fam: ChannelFamily, channel_theta: float,
                trials: int, decoder: str = "universal", xi: float = 1.0, codebooks: int = 50,
                seed: int = 0, variant: Variant | str = Variant.SUM_OVER_OTHERS,
                g: GridSpec = DEFAULT_GRID, threads: int = 1) -> EnsembleReport:
    """Monte Carlo ensemble averages for the single channel ``channel_theta``.

    Used when |Y|^n is too large to enumerate.  Standard errors are taken
    across codebooks (within-codebook ones when there is only one).
    """
    M = message_count(n, rate)
    table = exponent_table(fam, rate, threshold, g)
    dec, channel_theta = _make_decoder(decoder, fam, table, xi, threshold, n, channel_theta, variant)
    k = fam.index_of(channel_theta)
    ch = fam.resolve(k)

    def one(idx: int) -> ErrorStats:
        cb = sample_codebook(n, M, seed, fam.input_size, index=idx)
        return mc_error_probs(cb, dec, ch, trials, seed, codebook_index=idx)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            runs = list(ex.map(one, range(codebooks)))
    else:
        runs = [one(i) for i in range(codebooks)]
    keys = ("pr_e1", "pr_e2", "pr_erasure", "gamma")
    cols = {key: np.array([getattr(r, key) for r in runs]) for key in keys}
    avg = {key: math.fsum(v) / codebooks for key, v in cols.items()}
    if codebooks > 1:
        se = {key: float(np.std(v, ddof=1) / math.sqrt(codebooks)) for key, v in cols.items()}
    else:
        se = dict(runs[0].stderr)
    stats = ErrorStats(avg["pr_e1"], avg["pr_e2"], avg["pr_erasure"], avg["gamma"], se)
    ratio = avg["gamma"] * math.exp(n * (xi * table.e1[k] + threshold))
    config = {"n": n, "R": rate, "T": threshold, "decoder": decoder, "xi": xi,
              "codebooks": codebooks, "seed": seed, "variant": Variant(variant).value,
              "channel_theta": channel_theta, "family": fam.to_dict(),
              "mode": "monte-carlo", "trials": trials}
    return EnsembleReport(n, M, codebooks, seed, xi, config,
                          (ThetaStats(float(channel_theta), stats, ratio),), ratio)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual: float
    censored: tuple[int, ...] = field(default=())


def exponent_fit(points: Iterable[tuple[int, float]]) -> FitResult:
    """Least-squares slope of -ln p against n; zero-probability points are censored."""
    pts = sorted((int(n), float(p)) for n, p in points)
    censored = tuple(n for n, p in pts if p <= 0)
    use = [(n, p) for n, p in pts if p > 0]
    if len(use) < 2:
        raise ValueError("need at least two points with positive probability")
    ns = np.array([n for n, _ in use], dtype=np.float64)
    ys = -np.log([p for _, p in use])
    slope, intercept = np.polyfit(ns, ys, 1)
    resid = float(np.sqrt(np.mean((ys - (slope * ns + intercept)) ** 2)))
    return FitResult(float(slope), float(intercept), resid, censored)


SERIES_HEADER = ["n", "pr_e1", "pr_e2", "pr_erasure"]


def series_csv(rows: Sequence[tuple[int, ErrorStats]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_HEADER)
    for n, st in rows:
        w.writerow([n, repr(st.pr_e1), repr(st.pr_e2), repr(st.pr_erasure)])
    return buf.getvalue()


def read_series_csv(text: str) -> list[tuple[int, ErrorStats]]:
    out = []
    for row in csv.DictReader(_data_lines(text)):
        e1, e2, r0 = float(row["pr_e1"]), float(row["pr_e2"]), float(row["pr_erasure"])
        out.append((int(row["n"]), ErrorStats(e1, e2, r0, math.nan)))
    return out
