"""Channels, channel families, joint types and basic information measures.

All logarithms are natural; rates, thresholds and exponents are in nats.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

# Finite stand-in for ln 0.  Keeps orderings total and makes 0 * LOG_ZERO == 0
# inside count-weighted sums, which -inf would turn into nan.
LOG_ZERO = -1e300

ROW_TOL = 1e-12

DEFAULT_BSC_GRID = tuple(round(0.01 * k, 2) for k in range(1, 51))


class ChannelError(ValueError):
    """Malformed channel, family, codeword or output vector."""


def safe_log(p: ArrayLike) -> NDArray[np.float64]:
    """Elementwise ln with zeros mapped to LOG_ZERO."""
    p = np.asarray(p, dtype=np.float64)
    out = np.full(p.shape, LOG_ZERO)
    np.log(p, out=out, where=p > 0)
    return out


def tilted_power(p: NDArray[np.float64], lam: ArrayLike) -> NDArray[np.float64]:
    """P**lam with the limiting convention 0**0 = 0.

    At lam = 0 this is the support indicator of P, which is the limit of P**lam
    as lam decreases to 0.
    """
    p = np.asarray(p, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    return np.where(p > 0, np.exp(lam * np.where(p > 0, logp, 0.0)), 0.0)


@dataclass(frozen=True)
class Dmc:
    """Discrete memoryless channel given by its transition matrix P(y|x).

    ``probs[x, y]`` is the probability of output ``y`` given input ``x``.
    """

    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise ChannelError("transition matrix must be 2-D")
        if p.shape[0] < 2 or p.shape[1] < 2:
            raise ChannelError("need at least two input and two output symbols")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ChannelError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_TOL):
            raise ChannelError("every row of the transition matrix must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def input_size(self) -> int:
        return self.probs.shape[0]

    @property
    def output_size(self) -> int:
        return self.probs.shape[1]

    @property
    def log_probs(self) -> NDArray[np.float64]:
        return safe_log(self.probs)

    @classmethod
    def bsc(cls, theta: float) -> "Dmc":
        if not 0.0 <= theta <= 1.0:
            raise ChannelError(f"crossover probability {theta} outside [0, 1]")
        return cls(np.array([[1.0 - theta, theta], [theta, 1.0 - theta]]))

    def to_dict(self) -> dict:
        return {
            "input_alphabet": self.input_size,
            "output_alphabet": self.output_size,
            "rows": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dmc":
        try:
            rows = d["rows"]
            nx, ny = int(d["input_alphabet"]), int(d["output_alphabet"])
        except (KeyError, TypeError) as exc:
            raise ChannelError(f"bad channel spec: {exc}") from exc
        ch = cls(np.asarray(rows, dtype=np.float64))
        if ch.input_size != nx or ch.output_size != ny:
            raise ChannelError("declared alphabet sizes do not match rows")
        return ch

    def sample_outputs(self, x: NDArray[np.int64], rng: np.random.Generator) -> NDArray[np.int64]:
        """Draw y ~ P(.|x) symbol by symbol for an integer array of inputs."""
        cdf = np.cumsum(self.probs, axis=1)
        u = rng.random(np.shape(x))
        y = (u[..., None] >= cdf[x]).sum(axis=-1)
        return np.minimum(y, self.output_size - 1)


@dataclass(frozen=True)
class ChannelFamily:
    """Finite grid of channels {P_theta}.

    ``kind`` is ``"bsc"`` (grid of crossover probabilities) or ``"general"``
    (explicit channel list, ``grid`` holds the indices 0..K-1).
    """

    kind: str
    grid: tuple[float, ...]
    channels: tuple[Dmc, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if not self.grid:
            raise ChannelError("channel family grid is empty")
        if len(set(self.grid)) != len(self.grid):
            raise ChannelError("channel family grid points must be distinct")
        if len(self.channels) != len(self.grid):
            raise ChannelError("one channel per grid point required")
        shapes = {c.probs.shape for c in self.channels}
        if len(shapes) != 1:
            raise ChannelError("all channels in a family must share alphabets")

    @classmethod
    def bsc(cls, grid: Sequence[float] = DEFAULT_BSC_GRID) -> "ChannelFamily":
        pts = tuple(float(t) for t in grid)
        for t in pts:
            if not 0.0 < t <= 0.5:
                raise ChannelError(f"BSC grid point {t} outside (0, 1/2]")
        return cls("bsc", pts, tuple(Dmc.bsc(t) for t in pts))

    @classmethod
    def general(cls, channels: Sequence[Dmc]) -> "ChannelFamily":
        chs = tuple(channels)
        return cls("general", tuple(float(i) for i in range(len(chs))), chs)

    def __len__(self) -> int:
        return len(self.grid)

    def resolve(self, index: int) -> Dmc:
        return self.channels[index]

    def index_of(self, theta: float, tol: float = 1e-9) -> int:
        for i, t in enumerate(self.grid):
            if abs(t - theta) <= tol:
                return i
        raise KeyError(f"{theta} is not a grid point of this family")

    @property
    def input_size(self) -> int:
        return self.channels[0].input_size

    @property
    def output_size(self) -> int:
        return self.channels[0].output_size

    def log_prob_stack(self) -> NDArray[np.float64]:
        """Array of shape (K, |X|, |Y|) holding ln P_theta(y|x)."""
        return np.stack([c.log_probs for c in self.channels])

    def to_dict(self) -> dict:
        if self.kind == "bsc":
            return {"kind": "bsc", "grid": list(self.grid)}
        return {"kind": "general", "channels": [c.to_dict() for c in self.channels]}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelFamily":
        kind = d.get("kind")
        if kind == "bsc":
            return cls.bsc(d["grid"])
        if kind == "general":
            return cls.general([Dmc.from_dict(c) for c in d["channels"]])
        raise ChannelError(f"unknown family kind {kind!r}")


def load_channel(path: str | Path) -> Dmc:
    with open(path) as fh:
        return Dmc.from_dict(json.load(fh))


def load_family(path: str | Path) -> ChannelFamily:
    with open(path) as fh:
        return ChannelFamily.from_dict(json.load(fh))


def _as_symbols(v: ArrayLike, size: int, what: str) -> NDArray[np.int64]:
    a = np.asarray(v, dtype=np.int64)
    if a.ndim != 1:
        raise ChannelError(f"{what} must be a 1-D symbol vector")
    if a.size and (a.min() < 0 or a.max() >= size):
        raise ChannelError(f"{what} has a symbol outside the alphabet of size {size}")
    return a


@dataclass(frozen=True)
class JointType:
    """Joint empirical counts of an (input, output) vector pair."""

    counts: NDArray[np.int64]

    def __post_init__(self) -> None:
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 2 or np.any(c < 0):
            raise ChannelError("joint type counts must be a non-negative matrix")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def key(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.counts.ravel())

    def output_type(self) -> NDArray[np.float64]:
        """Empirical distribution of the output vector."""
        return self.counts.sum(axis=0) / max(self.n, 1)

    def input_type(self) -> NDArray[np.float64]:
        return self.counts.sum(axis=1) / max(self.n, 1)

    def log_likelihood(self, ch: Dmc) -> float:
        c = self.counts
        if c.shape != ch.probs.shape:
            raise ChannelError("joint type shape does not match channel alphabets")
        if np.any((c > 0) & (ch.probs == 0)):
            return LOG_ZERO
        return float(np.sum(c * ch.log_probs))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, JointType) and np.array_equal(self.counts, other.counts)

    def __hash__(self) -> int:
        return hash(self.key())


def joint_type(x: ArrayLike, y: ArrayLike, input_size: int = 2, output_size: int = 2) -> JointType:
    xa = _as_symbols(x, input_size, "codeword")
    ya = _as_symbols(y, output_size, "output vector")
    if xa.shape != ya.shape:
        raise ChannelError("codeword and output vector lengths differ")
    counts = np.zeros((input_size, output_size), dtype=np.int64)
    np.add.at(counts, (xa, ya), 1)
    return JointType(counts)


def log_likelihood(ch: Dmc, x: ArrayLike, y: ArrayLike) -> float:
    """ln P(y|x) = sum_i ln P(y_i|x_i); LOG_ZERO when any factor vanishes."""
    xa = _as_symbols(x, ch.input_size, "codeword")
    ya = _as_symbols(y, ch.output_size, "output vector")
    if xa.shape != ya.shape:
        raise ChannelError("codeword and output vector lengths differ")
    p = ch.probs[xa, ya]
    if np.any(p == 0):
        return LOG_ZERO
    return float(np.sum(np.log(p)))


@dataclass(frozen=True)
class Codebook:
    """M codewords of length n, stored as an (M, n) integer array."""

    words: NDArray[np.int64]
    input_size: int = 2

    def __post_init__(self) -> None:
        w = np.array(self.words, dtype=np.int64)
        if w.ndim != 2:
            raise ChannelError("codebook must be an (M, n) array")
        if w.shape[0] < 2:
            raise ChannelError("a codebook needs at least two codewords")
        if w.size and (w.min() < 0 or w.max() >= self.input_size):
            raise ChannelError("codeword symbol outside the input alphabet")
        w.setflags(write=False)
        object.__setattr__(self, "words", w)

    @property
    def M(self) -> int:
        return self.words.shape[0]

    @property
    def n(self) -> int:
        return self.words.shape[1]

    @property
    def realized_rate(self) -> float:
        return math.log(self.M) / self.n if self.n else math.inf


def message_count(n: int, rate: float) -> int:
    """M = ceil(e^{nR}), never below 2."""
    if n < 1 or rate < 0:
        raise ChannelError("need n >= 1 and R >= 0")
    # guard against e^{nR} landing a hair above an integer
    return max(2, math.ceil(math.exp(n * rate) - 1e-9))


def entropy(p: ArrayLike, tol: float = 1e-9) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError("probabilities must sum to 1")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def binary_entropy(u: float) -> float:
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"{u} is not a probability")
    return entropy([u, 1.0 - u])


def batch_joint_counts(words: NDArray[np.int64], ys: NDArray[np.int64],
                       input_size: int, output_size: int) -> NDArray[np.float64]:
    """Joint-type counts for every (codeword, output) pair.

    Returns shape (M, N, |X|*|Y|) with cell index x*|Y| + y.  Counts are
    exact integers held as floats so they feed straight into matrix products.
    """
    M, n = words.shape
    N = ys.shape[0]
    xo = (words[:, None, :] == np.arange(input_size)[None, :, None]).astype(np.float64)
    yo = (ys[:, None, :] == np.arange(output_size)[None, :, None]).astype(np.float64)
    c = xo.reshape(M * input_size, n) @ yo.reshape(N * output_size, n).T
    c = c.reshape(M, input_size, N, output_size).transpose(0, 2, 1, 3)
    return np.ascontiguousarray(c).reshape(M, N, input_size * output_size)


def all_outputs(n: int, output_size: int) -> NDArray[np.int64]:
    """Every vector of Y^n in lexicographic order, shape (|Y|^n, n)."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(output_size ** n, dtype=np.int64)
    powers = output_size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % output_size
