"""Erasure decoders: Forney's optimal rule, the competitive-minimax universal rule,
and its variable-threshold generalization.

All decoders work in the log domain on batches of output vectors.  Batch
decisions are integer arrays holding the 0-based decoded message index, or
``ERASURE`` (-1).  For T >= 0 a qualifying message always has the largest
score, so only maximal-score messages are tested; ties at the threshold go to
the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .channel_core import (ChannelError, ChannelFamily, Codebook, Dmc, batch_joint_counts,
                           joint_type)
from .exponents import (DEFAULT_GRID, ExponentTable, GridSpec, exponent_table,
                        threshold_vector, variable_e1)

ERASURE = -1
CHUNK = 1 << 14


class Variant(str, Enum):
    SUM_OVER_OTHERS = "sum"
    MAX_ALPHA = "max-alpha"


@dataclass(frozen=True)
class DecodeResult:
    """Outcome for one output vector; ``message`` is 0-based, None means erasure."""

    message: int | None
    scores: NDArray[np.float64] | None = field(default=None, repr=False, compare=False)

    @property
    def is_erasure(self) -> bool:
        return self.message is None

    @classmethod
    def from_code(cls, code: int, scores: NDArray | None = None) -> "DecodeResult":
        return cls(None if code == ERASURE else int(code), scores)


def _as_batch(cb: Codebook, ys: ArrayLike, output_size: int) -> NDArray[np.int64]:
    y = np.asarray(ys, dtype=np.int64)
    if y.ndim == 1:
        y = y[None, :]
    if y.ndim != 2 or y.shape[1] != cb.n:
        raise ChannelError("output vectors must have the codebook's block length")
    if y.size and (y.min() < 0 or y.max() >= output_size):
        raise ChannelError("output symbol outside the alphabet")
    return y


def _lse_without(scores: NDArray[np.float64], m: int) -> NDArray[np.float64]:
    others = np.delete(scores, m, axis=0)
    return logsumexp(others, axis=0)


def _decide(own: NDArray[np.float64], margin: float,
            competitor: Callable[[int, NDArray[np.bool_]], NDArray[np.float64]]) -> NDArray[np.int64]:
    """Lowest m with own[m] - competitor(m) >= margin, else ERASURE.

    ``competitor(m, cols)`` returns the log competitor term for message m on
    the selected columns.
    """
    M, N = own.shape
    out = np.full(N, ERASURE, dtype=np.int64)
    top = own.max(axis=0)
    for m in range(M):
        cols = (own[m] == top) & (out == ERASURE)
        if not cols.any():
            continue
        comp = competitor(m, cols)
        ok = own[m, cols] - comp >= margin
        idx = np.flatnonzero(cols)[ok]
        out[idx] = m
    return out


def _chunked(dec, cb: Codebook, y: NDArray[np.int64], nx: int, ny: int) -> NDArray[np.int64]:
    out = np.empty(len(y), dtype=np.int64)
    for a in range(0, len(y), CHUNK):
        counts = batch_joint_counts(cb.words, y[a:a + CHUNK], nx, ny)
        out[a:a + CHUNK] = dec.decide_counts(cb, counts)
    return out


def _same_type(counts: NDArray[np.int64]) -> NDArray[np.bool_]:
    """same[a, b, y] is True when codewords a and b share a joint type with y."""
    return np.all(counts[:, None, :, :] == counts[None, :, :, :], axis=-1)


class ForneyDecoder:
    """Optimal erasure decoder for a known channel."""

    def __init__(self, ch: Dmc, threshold: float):
        if threshold < 0:
            raise ValueError("threshold must be non-negative")
        self.channel = ch
        self.threshold = float(threshold)

    def scores(self, cb: Codebook, ys: NDArray[np.int64]) -> NDArray[np.float64]:
        """ln P(y|x_m), shape (M, N)."""
        counts = batch_joint_counts(cb.words, ys, self.channel.input_size, self.channel.output_size)
        return counts @ self.channel.log_probs.ravel()

    def decide_counts(self, cb: Codebook, counts: NDArray[np.float64]) -> NDArray[np.int64]:
        sc = counts @ self.channel.log_probs.ravel()
        return _decide(sc, cb.n * self.threshold, lambda m, cols: _lse_without(sc[:, cols], m))

    def decide(self, cb: Codebook, ys: ArrayLike) -> NDArray[np.int64]:
        y = _as_batch(cb, ys, self.channel.output_size)
        return _chunked(self, cb, y, self.channel.input_size, self.channel.output_size)


def forney_decode(cb: Codebook, y: ArrayLike, ch: Dmc, threshold: float) -> DecodeResult:
    dec = ForneyDecoder(ch, threshold)
    ya = _as_batch(cb, y, ch.output_size)
    if len(ya) != 1:
        raise ChannelError("forney_decode takes a single output vector")
    return DecodeResult.from_code(int(dec.decide(cb, ya)[0]), dec.scores(cb, ya)[:, 0])


@dataclass(frozen=True)
class UniversalContext:
    """Everything the universal score needs, fixed for one (R, T, xi, n)."""

    family: ChannelFamily = field(repr=False)
    table: ExponentTable = field(repr=False)
    xi: float
    threshold: float
    n: int
    variant: Variant = Variant.SUM_OVER_OTHERS

    def __post_init__(self) -> None:
        if not 0.0 < self.xi <= 1.0:
            raise ValueError("xi must lie in (0, 1]")
        if self.table.family is not self.family and self.table.family.grid != self.family.grid:
            raise ValueError("exponent table was computed for another family")
        if abs(self.table.threshold - self.threshold) > 1e-12:
            raise ValueError("exponent table threshold differs from the context threshold")
        object.__setattr__(self, "variant", Variant(self.variant))

    @classmethod
    def build(cls, fam: ChannelFamily, rate: float, threshold: float, xi: float, n: int,
              variant: Variant | str = Variant.SUM_OVER_OTHERS,
              g: GridSpec = DEFAULT_GRID) -> "UniversalContext":
        return cls(fam, exponent_table(fam, rate, threshold, g), xi, threshold, n, Variant(variant))

    @property
    def offsets(self) -> NDArray[np.float64]:
        """n [xi E1(theta) + T] per grid point."""
        return self.n * (self.xi * self.table.as_array() + self.threshold)


def _family_scores(fam: ChannelFamily, counts: NDArray[np.int64],
                   offsets: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    """max over theta of offsets[theta] + ln P_theta, with the maximizing index."""
    lp = fam.log_prob_stack().reshape(len(fam), -1).T  # (C, K)
    full = counts @ lp + offsets
    k = np.argmax(full, axis=-1)
    return np.take_along_axis(full, k[..., None], axis=-1)[..., 0], k


def universal_f(x: ArrayLike, y: ArrayLike, ctx: UniversalContext) -> float:
    """ln f(x, y) = max over theta of n [xi E1(R,T,theta) + T] + ln P_theta(y|x)."""
    fam = ctx.family
    jt = joint_type(x, y, fam.input_size, fam.output_size)
    if jt.n != ctx.n:
        raise ChannelError("vector length differs from the context block length")
    v, _ = _family_scores(fam, jt.counts.reshape(1, -1), ctx.offsets)
    return float(v[0])


class UniversalDecoder:
    """Competitive-minimax decoder built on the universal score f."""

    def __init__(self, ctx: UniversalContext):
        self.ctx = ctx
        self.threshold = ctx.threshold

    def trace(self, cb: Codebook, ys: NDArray[np.int64]) -> tuple[NDArray, NDArray, NDArray]:
        """(log f scores, maximizing grid index, joint counts), each (M, N, ...)."""
        fam = self.ctx.family
        counts = batch_joint_counts(cb.words, ys, fam.input_size, fam.output_size)
        sc, k = _family_scores(fam, counts, self.ctx.offsets)
        return sc, k, counts

    def decide_counts(self, cb: Codebook, counts: NDArray[np.float64]) -> NDArray[np.int64]:
        if cb.n != self.ctx.n:
            raise ChannelError("codebook block length differs from the context")
        sc, _ = _family_scores(self.ctx.family, counts, self.ctx.offsets)
        if self.ctx.variant is Variant.SUM_OVER_OTHERS:
            comp = lambda m, cols: _lse_without(sc[:, cols], m)
        else:
            same = _same_type(counts)
            comp = lambda m, cols: _max_alpha(sc[:, cols], same[:, :, cols], m)
        return _decide(sc, cb.n * self.threshold, comp)

    def decide(self, cb: Codebook, ys: ArrayLike) -> NDArray[np.int64]:
        fam = self.ctx.family
        y = _as_batch(cb, ys, fam.output_size)
        return _chunked(self, cb, y, fam.input_size, fam.output_size)


def _max_alpha(sc: NDArray[np.float64], same: NDArray[np.bool_], m: int) -> NDArray[np.float64]:
    """max over alpha of ln alpha + ln M(alpha), over the codewords other than m."""
    keep = np.delete(np.arange(sc.shape[0]), m)
    mult = same[np.ix_(keep, keep)].sum(axis=1)
    return np.max(sc[keep] + np.log(mult), axis=0)


def universal_decode(cb: Codebook, y: ArrayLike, ctx: UniversalContext) -> DecodeResult:
    dec = UniversalDecoder(ctx)
    ya = _as_batch(cb, y, ctx.family.output_size)
    if len(ya) != 1:
        raise ChannelError("universal_decode takes a single output vector")
    sc, _, _ = dec.trace(cb, ya)
    return DecodeResult.from_code(int(dec.decide(cb, ya)[0]), sc[:, 0])


@dataclass(frozen=True)
class ThresholdMap:
    """Per-grid-point thresholds T_theta with the matching E1(R, T_theta, theta)."""

    thresholds: NDArray[np.float64]
    e1: NDArray[np.float64]

    @classmethod
    def build(cls, fam: ChannelFamily, rate: float,
              t_map: Mapping[float, float] | Callable[[float], float],
              g: GridSpec = DEFAULT_GRID) -> "ThresholdMap":
        t = threshold_vector(fam, t_map)
        return cls(t, variable_e1(fam, rate, t, g))


class VariableThresholdDecoder:
    """Decide m iff g(x_m, y) >= sum over m' != m of h(x_m', y)."""

    def __init__(self, ctx: UniversalContext, tmap: ThresholdMap):
        if len(tmap.thresholds) != len(ctx.family):
            raise ValueError("threshold map does not cover the family grid")
        self.ctx = ctx
        self.tmap = tmap
        self.threshold = ctx.threshold

    def decide_counts(self, cb: Codebook, counts: NDArray[np.float64]) -> NDArray[np.int64]:
        n, xi = self.ctx.n, self.ctx.xi
        g_off = n * xi * self.tmap.e1
        h_off = g_off + n * self.tmap.thresholds
        g, _ = _family_scores(self.ctx.family, counts, g_off)
        h, _ = _family_scores(self.ctx.family, counts, h_off)
        return _decide(g, 0.0, lambda m, cols: _lse_without(h[:, cols], m))

    def decide(self, cb: Codebook, ys: ArrayLike) -> NDArray[np.int64]:
        fam = self.ctx.family
        y = _as_batch(cb, ys, fam.output_size)
        return _chunked(self, cb, y, fam.input_size, fam.output_size)


def variable_threshold_decode(cb: Codebook, y: ArrayLike, ctx: UniversalContext,
                              tmap: ThresholdMap) -> DecodeResult:
    ya = _as_batch(cb, y, ctx.family.output_size)
    if len(ya) != 1:
        raise ChannelError("variable_threshold_decode takes a single output vector")
    return DecodeResult.from_code(int(VariableThresholdDecoder(ctx, tmap).decide(cb, ya)[0]))
