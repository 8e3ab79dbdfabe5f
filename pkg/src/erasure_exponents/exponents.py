"""Single-letter exponents for erasure decoding under the uniform random-coding ensemble.

Conventions used throughout:

* ``s`` and ``rho`` satisfy 0 <= s <= rho <= 1.  The search grid steps ``rho``
  and the ratio ``lam = s / rho`` (both in [0, 1]), plus the corner
  ``s = rho = 0`` whose objective is identically 0.
* Inner optimizations over conditional input laws and output laws are done in
  closed form (tilted distributions); ``erasure_exponents.oracles`` holds the
  brute-force simplex searches those closed forms are checked against.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .channel_core import ChannelFamily, Dmc, tilted_power

log = logging.getLogger(__name__)

VANISH_TOL = 1e-9
LN2 = math.log(2.0)


class ExponentError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Search resolutions.

    ``step_s`` is the step of ``s / rho``; ``step_rho`` the step of ``rho``;
    ``step_theta`` the default BSC family spacing; ``step_py`` the simplex
    resolution of the brute-force oracles.  ``refine`` adds one local pass at
    ten times the resolution around each coarse optimizer.
    """

    step_s: float = 0.01
    step_rho: float = 0.01
    step_theta: float = 0.01
    step_py: float = 0.01
    refine: bool = True

    def __post_init__(self) -> None:
        for name in ("step_s", "step_rho", "step_theta", "step_py"):
            v = getattr(self, name)
            if not 0.0 < v <= 0.5:
                raise ExponentError(f"{name}={v} must lie in (0, 0.5]")

    def sr_points(self) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """(s, rho, lam) arrays; index 0 is the s = rho = 0 corner."""
        kr = int(round(1.0 / self.step_rho))
        kl = int(round(1.0 / self.step_s))
        rho_axis = np.minimum(np.arange(1, kr + 1) * self.step_rho, 1.0)
        lam_axis = np.minimum(np.arange(0, kl + 1) * self.step_s, 1.0)
        rho, lam = np.meshgrid(rho_axis, lam_axis, indexing="ij")
        rho = np.concatenate([[0.0], rho.ravel()])
        lam = np.concatenate([[0.0], lam.ravel()])
        return lam * rho, rho, lam

    def local_offsets(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        off = np.arange(-10, 11) / 10.0
        return off * self.step_rho, off * self.step_s


DEFAULT_GRID = GridSpec()


def _check_sr(s: float, rho: float) -> None:
    if rho < 0 or rho > 1 or s < 0 or s > 1:
        raise ExponentError("need 0 <= s <= rho <= 1")
    if s > rho + 1e-15:
        raise ExponentError(f"s={s} exceeds rho={rho}")
    if rho == 0 and s > 0:
        raise ExponentError("rho = 0 requires s = 0")


def _uniform(nx: int) -> NDArray[np.float64]:
    return np.full(nx, 1.0 / nx)


def _log_col_power(probs: NDArray[np.float64], lam: ArrayLike,
                   q: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
    """ln sum_x q(x) P(y|x)^lam for every lam, shape lam.shape + (|Y|,).

    Without ``q`` the plain (unweighted) column sum is returned.
    """
    lam = np.asarray(lam, dtype=np.float64)
    pw = tilted_power(probs[None, :, :], lam.reshape(-1, 1, 1))
    if q is not None:
        pw = pw * q[None, :, None]
    with np.errstate(divide="ignore"):
        out = np.log(pw.sum(axis=1))
    return out.reshape(lam.shape + (probs.shape[1],))


def _pair_base(la: NDArray[np.float64], lb: NDArray[np.float64],
               rho: NDArray[np.float64], nx: int) -> NDArray[np.float64]:
    """(1+rho) ln|X| - ln sum_y A_y B_y^rho from log column sums."""
    rb = np.where(rho[..., None] > 0, rho[..., None] * lb, 0.0)
    with np.errstate(invalid="ignore"):
        lse = logsumexp(la + rb, axis=-1)
    return (1.0 + rho) * math.log(nx) - lse


def e0_forney(s: float, rho: float, ch: Dmc, q: ArrayLike | None = None) -> float:
    """Forney's E0(s, rho, Q) in nats (uniform Q unless given)."""
    _check_sr(s, rho)
    if rho == 0:
        raise ExponentError("rho must be positive")
    qv = _uniform(ch.input_size) if q is None else np.asarray(q, dtype=np.float64)
    if qv.shape != (ch.input_size,) or np.any(qv < 0) or abs(qv.sum() - 1) > 1e-9:
        raise ExponentError("q must be a distribution on the input alphabet")
    la = _log_col_power(ch.probs, np.array(1.0 - s), qv)
    lb = _log_col_power(ch.probs, np.array(s / rho), qv)
    with np.errstate(invalid="ignore"):
        return float(-logsumexp(la + rho * lb))


def pair_exponent(th_a: Dmc, th_b: Dmc, rho: float, s: float) -> float:
    """min over output laws of F(P_y,1-s,th_a) + rho F(P_y,s/rho,th_b) - H(Y).

    The minimizer is the output law proportional to A_y B_y^rho, which gives
    (1+rho) ln|X| - ln sum_y A_y B_y^rho.
    """
    _check_sr(s, rho)
    if th_a.probs.shape != th_b.probs.shape:
        raise ExponentError("channels must share alphabets")
    if rho == 0:
        return 0.0
    la = _log_col_power(th_a.probs, np.array(1.0 - s))
    lb = _log_col_power(th_b.probs, np.array(s / rho))
    return float(_pair_base(la, lb, np.asarray(rho), th_a.input_size))


def f_exponent(py: ArrayLike, lam: float, ch: Dmc) -> float:
    """ln|X| - max over P_{x|y} of [H(X|Y) + lam E ln P(Y|X)].

    Per output symbol the maximizer is the tilted law P(y|x)^lam / sum_x', so
    the value is ln|X| - sum_y py(y) ln sum_x P(y|x)^lam.
    """
    if lam < 0:
        raise ExponentError("lambda must be non-negative")
    p = np.asarray(py, dtype=np.float64)
    if p.shape != (ch.output_size,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ExponentError("py must be a distribution on the output alphabet")
    lc = _log_col_power(ch.probs, np.array(lam))
    mask = p > 0
    if np.any(np.isneginf(lc[mask])):
        return math.inf
    return float(math.log(ch.input_size) - np.sum(p[mask] * lc[mask]))


def e2(e1_value: float, threshold: float) -> float:
    if e1_value < 0:
        raise ExponentError("E1 must be non-negative")
    return e1_value + threshold


def gallager_e(theta: float, rho: float, rate: float = 0.0) -> float:
    """BSC Gallager function rho ln2 - (1+rho) ln[theta^a + (1-theta)^a] - rho R, a = 1/(1+rho).

    Defined for every rho >= 0 so the decomposition identity can be evaluated
    at rho values above 1.
    """
    if rho < 0:
        raise ExponentError("rho must be non-negative")
    if not 0.0 < theta <= 0.5:
        raise ExponentError("theta must lie in (0, 1/2]")
    a = 1.0 / (1.0 + rho)
    return rho * LN2 - (1.0 + rho) * math.log(theta ** a + (1 - theta) ** a) - rho * rate


def bsc_pair_numerator(theta: float, theta_t: float, s: float, rho: float,
                       rate: float, threshold: float) -> float:
    """Closed-form BSC numerator of the xi* ratio."""
    if rho == 0:
        return 0.0
    lam = s / rho
    return (rho * LN2
            - math.log(theta ** (1 - s) + (1 - theta) ** (1 - s))
            - rho * math.log(theta_t ** lam + (1 - theta_t) ** lam)
            - rho * rate - s * threshold)


def gallager_decomposition(theta: float, theta_t: float, s: float, rho: float,
                           rate: float) -> float:
    """(1-s) E(theta, rho') + s E(theta_t, rho'') with rho' = s/(1-s), rho'' = rho/s - 1."""
    if not 0.0 < s < 1.0 or s > rho:
        raise ExponentError("need 0 < s < 1 and s <= rho")
    rho1 = 1.0 / (1.0 - s) - 1.0
    rho2 = rho / s - 1.0
    return (1 - s) * gallager_e(theta, rho1, rate) + s * gallager_e(theta_t, rho2, rate)


# --- grid search machinery -------------------------------------------------

@dataclass
class _ChannelPowers:
    """Log column sums of every channel in a family on the coarse grid."""

    log_a: NDArray[np.float64]  # (K, P, |Y|): ln sum_x P^{1-s}
    log_b: NDArray[np.float64]  # (K, P, |Y|): ln sum_x P^{lam}
    separable: bool


def _powers(channels: Sequence[Dmc], s: NDArray, lam: NDArray) -> _ChannelPowers:
    la = np.stack([_log_col_power(c.probs, 1.0 - s) for c in channels])
    lb = np.stack([_log_col_power(c.probs, lam) for c in channels])
    # Output-symmetric families (e.g. BSC) have y-independent column sums and the
    # pair objective splits into a theta term plus a theta-tilde term.
    sep = bool(np.all(np.isfinite(la)) and np.all(np.isfinite(lb))
               and np.allclose(la, la[..., :1], rtol=0, atol=1e-14)
               and np.allclose(lb, lb[..., :1], rtol=0, atol=1e-14))
    return _ChannelPowers(la, lb, sep)


def _row_numerators(pw: _ChannelPowers, i: int, rho: NDArray, nx: int, ny: int) -> NDArray:
    """Pair objective without the rate/threshold terms for (i, every j)."""
    if pw.separable:
        return ((1.0 + rho) * math.log(nx) - math.log(ny)
                - pw.log_a[i, :, 0][None, :] - rho[None, :] * pw.log_b[:, :, 0])
    return _pair_base(pw.log_a[i][None, :, :], pw.log_b, rho[None, :], nx)


def _local_points(g: GridSpec, rho0: NDArray, lam0: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """Refinement grids around coarse (rho, lam) optimizers; shapes (..., L)."""
    dr, dl = g.local_offsets()
    r = np.clip(rho0[..., None, None] + dr[:, None], 0.0, 1.0)
    lm = np.clip(lam0[..., None, None] + dl[None, :], 0.0, 1.0)
    r, lm = np.broadcast_arrays(r, lm)
    shape = r.shape[:-2] + (r.shape[-2] * r.shape[-1],)
    r = r.reshape(shape)
    lm = np.where(r > 0, lm.reshape(shape), 0.0)
    return lm * r, r, lm


def _pair_numerator_at(ch_a: Dmc, ch_b: Dmc, s: NDArray, rho: NDArray, lam: NDArray,
                       rate: float, t_b: float) -> NDArray:
    la = _log_col_power(ch_a.probs, 1.0 - s)
    lb = _log_col_power(ch_b.probs, lam)
    base = _pair_base(la, lb, rho, ch_a.input_size)
    return np.where(rho > 0, base, 0.0) - rho * rate - s * t_b


@dataclass(frozen=True)
class E1Point:
    value: float
    s: float
    rho: float


def _e1_search(ch: Dmc, rate: float, threshold: float, g: GridSpec,
               coarse: tuple[NDArray, NDArray, NDArray] | None = None,
               num0: NDArray | None = None) -> E1Point:
    s, rho, lam = coarse if coarse is not None else g.sr_points()
    if num0 is None:
        num0 = _pair_numerator_at(ch, ch, s, rho, lam, 0.0, 0.0)
    vals = num0 - rho * rate - s * threshold
    vals[0] = 0.0
    k = int(np.argmax(vals))
    best = E1Point(float(vals[k]), float(s[k]), float(rho[k]))
    if g.refine and k != 0:
        ls, lr, ll = _local_points(g, np.asarray(rho[k]), np.asarray(lam[k]))
        lv = _pair_numerator_at(ch, ch, ls, lr, ll, rate, threshold)
        j = int(np.argmax(lv))
        if lv[j] > best.value:
            best = E1Point(float(lv[j]), float(ls[j]), float(lr[j]))
    return E1Point(max(best.value, 0.0), best.s, best.rho)


def e1_argmax(rate: float, threshold: float, ch: Dmc, q: ArrayLike | None = None,
              g: GridSpec = DEFAULT_GRID) -> E1Point:
    """E1(R,T) for a known channel with its maximizing (s, rho)."""
    if rate < 0 or threshold < 0:
        raise ExponentError("rate and threshold must be non-negative")
    if q is not None and not np.allclose(q, _uniform(ch.input_size)):
        raise NotImplementedError("only the uniform input distribution is supported")
    return _e1_search(ch, rate, threshold, g)


def e1(rate: float, threshold: float, ch: Dmc, q: ArrayLike | None = None,
       g: GridSpec = DEFAULT_GRID) -> float:
    """max over 0 <= s <= rho <= 1 of E0(s,rho,Q) - rho R - s T (uniform Q)."""
    return e1_argmax(rate, threshold, ch, q, g).value


@dataclass(frozen=True)
class ExponentTable:
    """E1(R, T, theta) on every grid point of a family."""

    family: ChannelFamily = field(repr=False)
    rate: float
    threshold: float
    e1: tuple[float, ...]
    q: str = "uniform"

    def __post_init__(self) -> None:
        if len(self.e1) != len(self.family):
            raise ExponentError("one E1 value per family grid point required")
        if any(v < 0 for v in self.e1):
            raise ExponentError("E1 values must be non-negative")

    def as_array(self) -> NDArray[np.float64]:
        return np.asarray(self.e1, dtype=np.float64)

    def to_json(self) -> str:
        return json.dumps({"R": self.rate, "T": self.threshold,
                           "grid": list(self.family.grid), "e1": list(self.e1)})

    @classmethod
    def from_json(cls, text: str, family: ChannelFamily) -> "ExponentTable":
        d = json.loads(text)
        if [float(t) for t in d["grid"]] != list(family.grid):
            raise ExponentError("cached table grid does not match the family")
        return cls(family, float(d["R"]), float(d["T"]), tuple(float(v) for v in d["e1"]))


def exponent_table(fam: ChannelFamily, rate: float, threshold: float,
                   g: GridSpec = DEFAULT_GRID) -> ExponentTable:
    coarse = g.sr_points()
    vals = tuple(_e1_search(c, rate, threshold, g, coarse).value for c in fam.channels)
    return ExponentTable(fam, rate, threshold, vals)


def threshold_vector(fam: ChannelFamily,
                     t_map: Mapping[float, float] | Callable[[float], float]) -> NDArray[np.float64]:
    """Per-grid-point thresholds from a mapping (or callable) theta -> T_theta."""
    out = np.empty(len(fam))
    for i, t in enumerate(fam.grid):
        if callable(t_map):
            v = float(t_map(t))
        else:
            v = None
            for key, val in t_map.items():
                if abs(float(key) - t) <= 1e-9:
                    v = float(val)
                    break
            if v is None:
                raise ExponentError(f"threshold map has no entry for grid point {t}")
        if v < 0:
            raise ExponentError("thresholds must be non-negative")
        out[i] = v
    return out


def variable_e1(fam: ChannelFamily, rate: float, thresholds: Sequence[float],
                g: GridSpec = DEFAULT_GRID) -> NDArray[np.float64]:
    """E1(R, T_theta, theta) for each grid point."""
    coarse = g.sr_points()
    return np.array([_e1_search(c, rate, float(t), g, coarse).value
                     for c, t in zip(fam.channels, thresholds)])


@dataclass(frozen=True)
class XiResult:
    """Outcome of the xi* min-max search.

    ``degenerate`` marks that the minimizing pair contributed 1 through the
    vanishing-denominator convention; ``clamped`` that a negative raw value
    was reported as 0.
    """

    xi: float
    theta: float
    theta_tilde: float
    s: float
    rho: float
    degenerate: bool
    raw: float
    clamped: bool = False

    @property
    def argmin_pair(self) -> tuple[float, float]:
        return (self.theta, self.theta_tilde)

    @property
    def argmax_point(self) -> tuple[float, float]:
        return (self.s, self.rho)


def _xi_search(fam: ChannelFamily, rate: float, thresholds: NDArray[np.float64],
               g: GridSpec) -> XiResult:
    if rate < 0:
        raise ExponentError("rate must be non-negative")
    K = len(fam)
    nx, ny = fam.input_size, fam.output_size
    s, rho, lam = g.sr_points()
    pw = _powers(fam.channels, s, lam)

    # E1 per grid point, on the same coarse grid (plus refinement)
    e1v = np.empty(K)
    for k, ch in enumerate(fam.channels):
        if pw.separable:
            num0 = (1.0 + rho) * math.log(nx) - math.log(ny) - pw.log_a[k, :, 0] - rho * pw.log_b[k, :, 0]
        else:
            num0 = _pair_base(pw.log_a[k], pw.log_b[k], rho, nx)
        num0[0] = 0.0
        e1v[k] = _e1_search(ch, rate, float(thresholds[k]), g, (s, rho, lam), num0).value
    good = e1v > VANISH_TOL

    values = np.ones((K, K))
    arg_s = np.full((K, K), math.nan)
    arg_r = np.full((K, K), math.nan)
    degenerate = np.ones((K, K), dtype=bool)
    for i in range(K):
        if not good[i]:
            continue
        cols = np.flatnonzero(good)
        num = _row_numerators(pw, i, rho, nx, ny)[cols]
        num = num - rho[None, :] * rate - s[None, :] * thresholds[cols, None]
        num[:, 0] = 0.0
        den = e1v[i] + s[None, :] * (e1v[cols, None] - e1v[i])
        ok = den > VANISH_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ok, num / np.where(ok, den, 1.0), -np.inf)
        kbest = np.argmax(ratio, axis=1)
        vbest = ratio[np.arange(len(cols)), kbest]
        for c, j in enumerate(cols):
            if not np.isfinite(vbest[c]):
                continue
            if j == i:
                # the numerator and denominator maximize to the same E1 value
                values[i, j], degenerate[i, j] = 1.0, False
                continue
            v, bs, br = float(vbest[c]), float(s[kbest[c]]), float(rho[kbest[c]])
            if g.refine:
                ls, lr, ll = _local_points(g, np.asarray(rho[kbest[c]]), np.asarray(lam[kbest[c]]))
                ln = _pair_numerator_at(fam.channels[i], fam.channels[j], ls, lr, ll,
                                        rate, float(thresholds[j]))
                ld = e1v[i] + ls * (e1v[j] - e1v[i])
                lok = ld > VANISH_TOL
                lr_ = np.where(lok, ln / np.where(lok, ld, 1.0), -np.inf)
                m = int(np.argmax(lr_))
                if lr_[m] > v:
                    v, bs, br = float(lr_[m]), float(ls[m]), float(lr[m])
            values[i, j], arg_s[i, j], arg_r[i, j] = v, bs, br
            degenerate[i, j] = False

    flat = int(np.argmin(values))
    i, j = divmod(flat, K)
    raw = float(values[i, j])
    xi = min(raw, 1.0)
    clamped = xi < 0
    if clamped:
        log.warning("xi* max-ratio is negative (%.4g) at pair (%s, %s); reporting 0",
                    raw, fam.grid[i], fam.grid[j])
        xi = 0.0
    s_best, r_best = float(arg_s[i, j]), float(arg_r[i, j])
    if not degenerate[i, j] and i == j:
        pt = _e1_search(fam.channels[i], rate, float(thresholds[i]), g)
        s_best, r_best = pt.s, pt.rho
    return XiResult(xi, fam.grid[i], fam.grid[j], s_best, r_best,
                    bool(degenerate[i, j]), raw, clamped)


def xi_star(rate: float, threshold: float, fam: ChannelFamily,
            g: GridSpec = DEFAULT_GRID) -> XiResult:
    """Universally achievable fraction of the erasure exponent for a fixed threshold.

    Pairs in which either channel has E1 = 0 place no constraint (they count
    as 1): a channel with no exponent has nothing to guarantee.
    """
    if threshold < 0:
        raise ExponentError("threshold must be non-negative")
    return _xi_search(fam, rate, np.full(len(fam), float(threshold)), g)


def xi_star_variable(rate: float, t_map: Mapping[float, float] | Callable[[float], float],
                     fam: ChannelFamily, g: GridSpec = DEFAULT_GRID) -> XiResult:
    """xi* when the threshold depends on the channel, T = T_theta."""
    return _xi_search(fam, rate, threshold_vector(fam, t_map), g)


# --- appendix quantity U ----------------------------------------------------

def u_moment(y: ArrayLike, lam: float, ch: Dmc) -> float:
    """ln E[P^lam(y|X)] for X uniform over X^n, i.e. sum_i ln[(1/|X|) sum_x P(y_i|x)^lam]."""
    ya = np.asarray(y, dtype=np.int64)
    lc = _log_col_power(ch.probs, np.array(lam))
    if ya.size and np.any(np.isneginf(lc[ya])):
        return -math.inf
    return float(np.sum(lc[ya]) - ya.size * math.log(ch.input_size))


def u_bound(y: ArrayLike, lam: float, ch: Dmc) -> float:
    """Type-counting upper bound |Y|(|X|-1) ln(n+1) - n F(P_y-hat, lam, ch)."""
    ya = np.asarray(y, dtype=np.int64)
    n = ya.size
    py = np.bincount(ya, minlength=ch.output_size) / max(n, 1)
    f = f_exponent(py, lam, ch) if n else 0.0
    return ch.output_size * (ch.input_size - 1) * math.log(n + 1) - n * f


# --- xi table I/O -----------------------------------------------------------

XI_CSV_HEADER = ["R", "T", "xi", "theta", "theta_tilde", "s", "rho", "degenerate"]


def xi_table(rates: Iterable[float], thresholds: Iterable[float], fam: ChannelFamily,
             g: GridSpec = DEFAULT_GRID) -> list[tuple[float, float, XiResult]]:
    ts = list(thresholds)
    return [(r, t, xi_star(r, t, fam, g)) for r in rates for t in ts]


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def xi_table_csv(rows: Iterable[tuple[float, float, XiResult]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(XI_CSV_HEADER)
    for r, t, res in rows:
        w.writerow([repr(float(r)), repr(float(t)), repr(res.xi), repr(res.theta),
                    repr(res.theta_tilde), _fmt(res.s), _fmt(res.rho), int(res.degenerate)])
    return buf.getvalue()


def _data_lines(text: str) -> io.StringIO:
    """CSV body with ``#`` provenance lines dropped."""
    return io.StringIO("".join(ln for ln in text.splitlines(keepends=True) if not ln.startswith("#")))


def read_xi_csv(text: str) -> list[dict]:
    out = []
    for row in csv.DictReader(_data_lines(text)):
        out.append({
            "R": float(row["R"]), "T": float(row["T"]), "xi": float(row["xi"]),
            "theta": float(row["theta"]), "theta_tilde": float(row["theta_tilde"]),
            "s": float(row["s"]) if row["s"] else math.nan,
            "rho": float(row["rho"]) if row["rho"] else math.nan,
            "degenerate": bool(int(row["degenerate"])),
        })
    return out
