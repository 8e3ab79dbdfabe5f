import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erasure_exponents.channel_core import ChannelFamily, Dmc, binary_entropy
from erasure_exponents.exponents import (DEFAULT_GRID, ExponentError, ExponentTable, GridSpec,
                                         bsc_pair_numerator, e0_forney, e1, e1_argmax, e2,
                                         exponent_table, f_exponent, gallager_decomposition,
                                         gallager_e, pair_exponent, read_xi_csv,
                                         threshold_vector, u_bound, u_moment, xi_star,
                                         xi_star_variable, xi_table, xi_table_csv)
from erasure_exponents.oracles import (e0_direct, e1_bruteforce, pair_exponent_oracle,
                                       u_moment_bruteforce)

LN2 = math.log(2)
COARSE = GridSpec(step_s=0.05, step_rho=0.05)
SMALL_FAMILY = ChannelFamily.bsc([0.02, 0.05, 0.1, 0.15, 0.2, 0.3])

# E1(R=0.1, T=0.05) for BSC(0.1): direct (s, rho) scan at step 1e-3
E1_GOLDEN = 0.09883389331750825
# xi*(R=0.1) on the default BSC grid with T_theta = 0.1 (ln 2 - h2(theta))
XI_VARIABLE_GOLDEN = 0.8451859807098939


def bsc_e0(theta, s, rho):
    lam = s / rho
    return (rho * LN2 - math.log(theta ** (1 - s) + (1 - theta) ** (1 - s))
            - rho * math.log(theta ** lam + (1 - theta) ** lam))


sr = st.tuples(st.floats(0.01, 1.0), st.floats(0.0, 1.0)).map(lambda t: (t[0] * t[1], t[0]))


# --- E0 ---------------------------------------------------------------------

@settings(max_examples=100)
@given(st.floats(0.01, 0.5), sr)
def test_e0_bsc_closed_form(theta, point):
    s, rho = point
    assert e0_forney(s, rho, Dmc.bsc(theta)) == pytest.approx(bsc_e0(theta, s, rho), abs=1e-12)


@pytest.mark.parametrize("theta", [0.05, 0.2, 0.5])
@pytest.mark.parametrize("rho", [0.1, 0.6, 1.0])
def test_e0_at_s_zero(theta, rho):
    ch = Dmc.bsc(theta)
    assert e0_forney(0.0, rho, ch) == pytest.approx(0.0, abs=1e-12)
    assert e0_forney(0.0, rho, ch) == pytest.approx(e0_direct(0.0, rho, ch), abs=1e-12)


def test_e0_general_q_matches_direct():
    ch = Dmc(np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6], [0.3, 0.3, 0.4]]))
    q = [0.5, 0.3, 0.2]
    assert e0_forney(0.3, 0.7, ch, q) == pytest.approx(e0_direct(0.3, 0.7, ch, q), abs=1e-12)


@pytest.mark.parametrize("s,rho", [(0.6, 0.5), (0.1, 0.0), (-0.1, 0.5), (0.2, 1.2)])
def test_e0_rejects(s, rho):
    with pytest.raises(ExponentError):
        e0_forney(s, rho, Dmc.bsc(0.1))


def test_useless_channel_e0_never_positive():
    ch = Dmc.bsc(0.5)
    for s, rho, lam in zip(*DEFAULT_GRID.sr_points()):
        if rho > 0:
            assert e0_forney(s, rho, ch) - rho * 0.1 - s * 0.1 <= 1e-12


# --- E1 / E2 ----------------------------------------------------------------

@pytest.mark.parametrize("rate,t", [(0.0, 0.0), (0.1, 0.1), (0.3, 0.0)])
def test_e1_useless_channel(rate, t):
    assert e1(rate, t, Dmc.bsc(0.5)) == pytest.approx(0.0, abs=1e-12)


def test_e1_golden():
    pt = e1_argmax(0.1, 0.05, Dmc.bsc(0.1))
    assert pt.value == pytest.approx(E1_GOLDEN, abs=1e-6)
    assert 0 <= pt.s <= pt.rho <= 1


@pytest.mark.slow
def test_e1_golden_from_bruteforce():
    assert e1_bruteforce(0.1, 0.05, Dmc.bsc(0.1), step=1e-3) == pytest.approx(E1_GOLDEN, abs=1e-9)


def test_e1_at_zero_threshold_is_gallager():
    best = max(gallager_e(0.1, r, 0.1) for r in np.linspace(0, 1, 10001))
    assert e1(0.1, 0.0, Dmc.bsc(0.1)) == pytest.approx(best, abs=0.02)
    assert e1(0.1, 0.0, Dmc.bsc(0.1)) == pytest.approx(best, abs=1e-6)


def test_e1_rejects():
    with pytest.raises(ExponentError):
        e1(-0.1, 0.0, Dmc.bsc(0.1))
    with pytest.raises(ExponentError):
        e1(0.1, -0.01, Dmc.bsc(0.1))
    with pytest.raises(NotImplementedError):
        e1(0.1, 0.0, Dmc.bsc(0.1), q=[0.3, 0.7])


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0, 0.4), st.floats(0, 0.4), st.floats(0, 0.2), st.floats(0, 0.2))
def test_e1_nonnegative_and_monotone(theta, r1, r2, t1, t2):
    g = GridSpec(step_s=0.02, step_rho=0.02, refine=False)
    ch = Dmc.bsc(theta)
    lo_r, hi_r = sorted((r1, r2))
    lo_t, hi_t = sorted((t1, t2))
    assert e1(lo_r, lo_t, ch, g=g) >= e1(hi_r, lo_t, ch, g=g) >= 0
    assert e1(lo_r, lo_t, ch, g=g) >= e1(lo_r, hi_t, ch, g=g) >= 0


def test_e2_examples():
    assert e2(0.3, 0.05) == pytest.approx(0.35)
    assert e2(0.0, 0.0) == 0.0
    v = e1(0.1, 0.05, Dmc.bsc(0.1))
    assert e2(v, 0.05) >= v
    with pytest.raises(ExponentError):
        e2(-1.0, 0.1)


# --- F and the pair exponent ------------------------------------------------

@given(st.floats(0.01, 0.5), st.floats(0, 1))
def test_f_exponent_trivial_lambdas(theta, p0):
    ch = Dmc.bsc(theta)
    assert f_exponent([p0, 1 - p0], 1.0, ch) == pytest.approx(LN2, abs=1e-12)
    assert f_exponent([p0, 1 - p0], 0.0, ch) == pytest.approx(0.0, abs=1e-12)


def test_f_exponent_half_lambda():
    v = f_exponent([0.4, 0.6], 0.5, Dmc.bsc(0.1))
    assert v == pytest.approx(LN2 - math.log(math.sqrt(0.1) + math.sqrt(0.9)), abs=1e-12)


def test_f_exponent_rejects():
    with pytest.raises(ExponentError):
        f_exponent([0.5, 0.5], -0.1, Dmc.bsc(0.1))
    with pytest.raises(ExponentError):
        f_exponent([0.5, 0.6], 0.5, Dmc.bsc(0.1))


@settings(max_examples=100)
@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5), sr)
def test_pair_exponent_bsc_closed_form(a, b, point):
    s, rho = point
    v = pair_exponent(Dmc.bsc(a), Dmc.bsc(b), rho, s)
    assert v - 0.1 * rho - 0.05 * s == pytest.approx(
        bsc_pair_numerator(a, b, s, rho, 0.1, 0.05), abs=1e-12)


def test_pair_exponent_diagonal_maximizes_to_e1():
    ch = Dmc.bsc(0.1)
    s, rho, _ = GridSpec(step_s=0.01, step_rho=0.01).sr_points()
    vals = [pair_exponent(ch, ch, r, x) - 0.1 * r - 0.05 * x for x, r in zip(s[1:], rho[1:])]
    coarse = e1(0.1, 0.05, ch, g=GridSpec(refine=False))
    assert max(max(vals), 0.0) == pytest.approx(coarse, abs=1e-12)


def test_pair_exponent_general_dmc_against_oracle():
    a = Dmc(np.array([[0.6, 0.3, 0.1], [0.1, 0.2, 0.7]]))
    b = Dmc(np.array([[0.5, 0.4, 0.1], [0.2, 0.2, 0.6]]))
    assert pair_exponent(a, b, 0.7, 0.3) == pytest.approx(pair_exponent_oracle(a, b, 0.7, 0.3), abs=5e-3)


def test_pair_exponent_rho_zero():
    assert pair_exponent(Dmc.bsc(0.1), Dmc.bsc(0.2), 0.0, 0.0) == 0.0
    with pytest.raises(ExponentError):
        pair_exponent(Dmc.bsc(0.1), Dmc.bsc(0.2), 0.0, 0.1)


# --- Gallager function ------------------------------------------------------

@given(st.floats(0.01, 0.5), st.floats(0, 0.5))
def test_gallager_special_cases(theta, rate):
    assert gallager_e(theta, 0.0, rate) == pytest.approx(0.0, abs=1e-15)
    rho = 0.7
    assert gallager_e(0.5, rho, rate) == pytest.approx(-rho * rate, abs=1e-12)


def test_gallager_rejects():
    with pytest.raises(ExponentError):
        gallager_e(0.1, -0.5)
    with pytest.raises(ExponentError):
        gallager_e(0.7, 0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5), st.floats(0, 0.3))
def test_gallager_decomposition_identity(a, b, rate):
    s, rho, _ = GridSpec(step_s=0.05, step_rho=0.05).sr_points()
    for x, r in zip(s, rho):
        if 0 < x < 1 and r > 0:
            lhs = bsc_pair_numerator(a, b, x, r, rate, 0.0)
            assert abs(lhs - gallager_decomposition(a, b, x, r, rate)) <= 1e-9


# --- exponent tables --------------------------------------------------------

def test_exponent_table_monotone_in_theta_and_roundtrip():
    fam = ChannelFamily.bsc()
    tab = exponent_table(fam, 0.1, 0.05)
    v = tab.as_array()
    assert np.all(v >= 0)
    assert np.all(np.diff(v) <= 1e-12)
    back = ExponentTable.from_json(tab.to_json(), fam)
    assert back.e1 == tab.e1 and back.rate == 0.1 and back.threshold == 0.05
    with pytest.raises(ExponentError):
        ExponentTable.from_json(tab.to_json(), SMALL_FAMILY)


def test_threshold_vector():
    fam = ChannelFamily.bsc([0.1, 0.2])
    np.testing.assert_allclose(threshold_vector(fam, {0.1: 0.05, 0.2: 0.0}), [0.05, 0.0])
    np.testing.assert_allclose(threshold_vector(fam, lambda t: t / 2), [0.05, 0.1])
    with pytest.raises(ExponentError):
        threshold_vector(fam, {0.1: 0.05})
    with pytest.raises(ExponentError):
        threshold_vector(fam, lambda t: -1.0)


def test_grid_spec():
    s, rho, lam = DEFAULT_GRID.sr_points()
    assert s[0] == rho[0] == 0
    assert np.all(s <= rho + 1e-15) and rho.max() == 1.0 and lam.max() == 1.0
    with pytest.raises(ExponentError):
        GridSpec(step_s=0.0)
    with pytest.raises(ExponentError):
        GridSpec(step_rho=0.6)


# --- xi* --------------------------------------------------------------------

def test_xi_star_reference_cell():
    res = xi_star(0.10, 0.05, ChannelFamily.bsc())
    assert res.xi == pytest.approx(0.774, abs=0.005)
    assert not res.degenerate and not res.clamped
    assert 0 <= res.s <= res.rho <= 1
    assert res.argmin_pair == (res.theta, res.theta_tilde)


def test_xi_star_zero_threshold():
    assert xi_star(0.20, 0.0, ChannelFamily.bsc()).xi == pytest.approx(1.0, abs=0.005)


@pytest.mark.parametrize("theta", [0.05, 0.1, 0.3])
@pytest.mark.parametrize("rate,t", [(0.0, 0.0), (0.1, 0.05), (0.2, 0.1)])
def test_xi_star_singleton(theta, rate, t):
    fam = ChannelFamily.bsc([theta])
    assert xi_star(rate, t, fam, COARSE).xi == 1.0
    assert xi_star_variable(rate, {theta: t}, fam, COARSE).xi == 1.0


def test_xi_star_all_useless_is_degenerate():
    res = xi_star(0.8, 0.0, SMALL_FAMILY, COARSE)
    assert res.xi == 1.0 and res.degenerate


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 0.3), st.floats(0, 0.15))
def test_xi_star_in_unit_interval(rate, t):
    res = xi_star(rate, t, SMALL_FAMILY, COARSE)
    assert 0.0 <= res.xi <= 1.0
    assert res.clamped == (res.raw < 0)


def test_xi_star_rejects_negative_threshold():
    with pytest.raises(ExponentError):
        xi_star(0.1, -0.1, SMALL_FAMILY)


@pytest.mark.parametrize("rate,t", [(0.05, 0.025), (0.2, 0.1)])
def test_xi_variable_constant_map_reduces(rate, t):
    a = xi_star(rate, t, SMALL_FAMILY, COARSE)
    b = xi_star_variable(rate, lambda _: t, SMALL_FAMILY, COARSE)
    assert a.xi == b.xi and a.argmin_pair == b.argmin_pair


def test_xi_variable_golden():
    res = xi_star_variable(0.1, lambda th: 0.1 * (LN2 - binary_entropy(th)), ChannelFamily.bsc())
    assert res.xi == pytest.approx(XI_VARIABLE_GOLDEN, abs=1e-9)


def test_xi_csv_roundtrip():
    rows = xi_table([0.0, 0.1], [0.0, 0.05], SMALL_FAMILY, COARSE)
    assert len(rows) == 4
    parsed = read_xi_csv("# provenance line\n" + xi_table_csv(rows))
    for (r, t, res), d in zip(rows, parsed):
        assert (d["R"], d["T"], d["xi"], d["degenerate"]) == (r, t, res.xi, res.degenerate)
        assert d["theta"] == res.theta and d["theta_tilde"] == res.theta_tilde
        assert (math.isnan(d["s"]) and math.isnan(res.s)) or d["s"] == res.s


# --- U moment ---------------------------------------------------------------

@given(st.floats(0.01, 0.5), st.lists(st.integers(0, 1), min_size=1, max_size=20))
def test_u_moment_lambda_one(theta, y):
    assert u_moment(y, 1.0, Dmc.bsc(theta)) == pytest.approx(len(y) * math.log(0.5), abs=1e-12)


def test_u_moment_example():
    ch = Dmc.bsc(0.1)
    expected = 4 * math.log((math.sqrt(0.9) + math.sqrt(0.1)) / 2)
    assert u_moment([0, 0, 0, 0], 0.5, ch) == pytest.approx(expected, abs=1e-12)
    assert u_moment_bruteforce([0, 0, 0, 0], 0.5, ch) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=200)
@given(st.floats(0.01, 0.5), st.floats(0, 1), st.sampled_from([4, 8, 12]), st.integers(0, 2**31))
def test_u_bound_holds(theta, lam, n, seed):
    y = np.random.default_rng(seed).integers(0, 2, size=n)
    ch = Dmc.bsc(theta)
    assert u_moment(y, lam, ch) <= u_bound(y, lam, ch) + 1e-12
