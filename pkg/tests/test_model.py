import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stsfit.model import (
    HamiltonianParams,
    TransmonEnergyParams,
    branch_used,
    dressed_branches,
    effective_coupling_params,
    f_ge_max_from_energies,
    model_frequency,
    model_frequency_array,
    model_shift_array,
    squid_modulation,
    transmon_f_ge,
    transmon_level_energy,
)
from stsfit.synth import ANTICROSSING_TRUTH

params_st = st.builds(
    HamiltonianParams,
    f_c=st.floats(4e9, 9e9),
    g=st.floats(0.0, 150e6),
    period=st.floats(20e-6, 300e-6),
    i_ss=st.floats(-200e-6, 200e-6),
    f_ge_max=st.floats(2e9, 14e9),
    d=st.floats(0.0, 1.0),
)


def jc_oracle(f_c, g, f_ge):
    """Eigenfrequencies of the single-excitation Jaynes-Cummings block."""
    return np.linalg.eigvalsh(np.array([[f_c, g], [g, f_ge]]))[::-1]


def charge_basis_levels(e_j, e_c, n_cut=30):
    """Lowest transmon energies from the charge-basis Hamiltonian at n_g = 0."""
    n = np.arange(-n_cut, n_cut + 1)
    h = np.diag(4 * e_c * n.astype(float) ** 2) - 0.5 * e_j * (np.eye(len(n), k=1)
                                                               + np.eye(len(n), k=-1))
    return np.linalg.eigvalsh(h)


def test_params_validation():
    with pytest.raises(ValueError):
        ANTICROSSING_TRUTH.replace(d=1.2)
    with pytest.raises(ValueError):
        ANTICROSSING_TRUTH.replace(g=-1.0)
    with pytest.raises(ValueError):
        ANTICROSSING_TRUTH.replace(period=0.0)
    x = ANTICROSSING_TRUTH.to_array()
    assert HamiltonianParams.from_array(x) == ANTICROSSING_TRUTH


@pytest.mark.parametrize("d,x,expected", [
    (0.3, 0.0, 1.0),
    (0.3, np.pi / 2, 0.3),
    (0.5, np.pi / 4, np.sqrt(0.5 + 0.125)),
])
def test_squid_modulation_values(d, x, expected):
    assert squid_modulation(d, x) == pytest.approx(expected, rel=1e-14)
    assert squid_modulation(0.5, np.pi / 4) == pytest.approx(0.790569415, rel=1e-9)


def test_squid_modulation_domain():
    with pytest.raises(ValueError):
        squid_modulation(1.5, 0.1)
    with pytest.raises(ValueError):
        squid_modulation(-0.1, 0.1)


@given(st.floats(0, 1), st.floats(-20, 20))
def test_squid_modulation_bounds_and_period(d, x):
    k = squid_modulation(d, x)
    assert d - 1e-12 <= k <= 1 + 1e-12
    assert squid_modulation(d, x + np.pi) == pytest.approx(k, rel=1e-9, abs=1e-12)


def test_transmon_f_ge_examples():
    p = ANTICROSSING_TRUTH
    assert transmon_f_ge(p, p.i_ss) == pytest.approx(8.5e9, rel=1e-15)
    assert transmon_f_ge(p, p.i_ss + p.period / 2) == pytest.approx(8.5e9 * np.sqrt(0.3), rel=1e-12)
    assert transmon_f_ge(p, p.i_ss + p.period / 2) == pytest.approx(4.6555e9, rel=1e-4)
    sym = p.replace(d=1.0)
    np.testing.assert_allclose(transmon_f_ge(sym, np.linspace(0, 1e-3, 7)), 8.5e9, rtol=1e-15)


@given(params_st, st.floats(-1e-3, 1e-3), st.integers(-3, 3))
def test_f_ge_periodic_even_bounded(p, i, n):
    f = transmon_f_ge(p, i)
    assert transmon_f_ge(p, i + n * p.period) == pytest.approx(f, rel=1e-9)
    delta = i - p.i_ss
    assert transmon_f_ge(p, p.i_ss - delta) == pytest.approx(transmon_f_ge(p, p.i_ss + delta),
                                                             rel=1e-12)
    assert p.f_ge_max * np.sqrt(p.d) * (1 - 1e-12) <= f <= p.f_ge_max * (1 + 1e-12)


def test_dressed_branch_examples():
    p = ANTICROSSING_TRUTH.replace(g=0.0, f_ge_max=5e9)
    fp, fm = dressed_branches(p, p.i_ss)
    assert (fp, fm) == (pytest.approx(6.4e9), pytest.approx(5e9))
    # on resonance: f_ge(i_ss) = f_c
    p = ANTICROSSING_TRUTH.replace(f_ge_max=6.4e9)
    fp, fm = dressed_branches(p, p.i_ss)
    assert fp == pytest.approx(6.4e9 + 30e6, abs=1e-3)
    assert fm == pytest.approx(6.4e9 - 30e6, abs=1e-3)
    fp, fm = dressed_branches(ANTICROSSING_TRUTH, ANTICROSSING_TRUTH.i_ss)
    assert fm == pytest.approx(7.45e9 - np.sqrt(0.0009 + 1.1025) * 1e9, rel=1e-15)
    assert fm == pytest.approx(6.39957e9, abs=1e4)


@settings(max_examples=200)
@given(params_st, st.floats(-1e-3, 1e-3))
def test_branches_match_jaynes_cummings_oracle(p, i):
    fp, fm = dressed_branches(p, i)
    ref = jc_oracle(p.f_c, p.g, transmon_f_ge(p, i))
    assert fp == pytest.approx(ref[0], rel=1e-12)
    assert fm == pytest.approx(ref[1], rel=1e-12)
    assert fp - fm >= 2 * p.g - 1e-5  # absolute slack for rounding at ~10 GHz


def test_dispersive_asymptote():
    p = ANTICROSSING_TRUTH.replace(d=1.0)
    for f_ge in (20e9, 200e9, 2e12):
        fp, fm = dressed_branches(p.replace(f_ge_max=f_ge), 0.0)
        delta = f_ge - p.f_c
        assert p.f_c - fm == pytest.approx(p.g ** 2 / delta, rel=10 * p.g ** 2 / delta ** 2 + 1e-6)


def test_model_frequency_examples():
    p = ANTICROSSING_TRUTH.replace(g=0.0, f_ge_max=5e9)
    np.testing.assert_array_equal(model_frequency(p, np.linspace(0, 2e-4, 11), 20e6), 6.4e9)
    p = ANTICROSSING_TRUTH.replace(f_ge_max=6.4e9)
    assert model_frequency(p, p.i_ss, 100e6) == pytest.approx(6.43e9, abs=1e-3)
    # qubit far above: upper branch tracks the qubit out of the window
    fp, fm = dressed_branches(ANTICROSSING_TRUTH, ANTICROSSING_TRUTH.i_ss)
    assert model_frequency(ANTICROSSING_TRUTH, ANTICROSSING_TRUTH.i_ss, 20e6) == fm
    with pytest.raises(ValueError):
        model_frequency(ANTICROSSING_TRUTH, 0.0, 0.0)


@given(params_st, st.floats(1e6, 1e9))
def test_model_frequency_is_a_branch(p, span):
    i = np.linspace(-2e-4, 2e-4, 41)
    mu = model_frequency(p, i, span)
    fp, fm = dressed_branches(p, i)
    assert np.all((mu == fp) | (mu == fm))
    br = branch_used(p, i, span)
    np.testing.assert_array_equal(np.where(br == 1, fp, fm), mu)


@given(params_st)
def test_shift_form_matches_direct_model(p):
    i = np.linspace(-2e-4, 2e-4, 41)
    shift, up = model_shift_array(p.to_array(), i, 20e6)
    direct = model_frequency_array(p.to_array(), i, 20e6)
    np.testing.assert_allclose(p.f_c + shift, direct, rtol=1e-14, atol=0)
    np.testing.assert_array_equal(np.where(up, 1, -1), branch_used(p, i, 20e6))


def test_anticrossing_upper_branch_is_contiguous_per_period():
    p = ANTICROSSING_TRUTH
    i = np.linspace(p.i_ss - p.period / 2, p.i_ss + p.period / 2, 801)
    br = branch_used(p, i, 20e6)
    assert np.count_nonzero(np.diff(br)) == 2


def test_transmon_levels():
    tp = TransmonEnergyParams(e_j_sigma=50 * 200e6, e_c=200e6, d=0.3)
    assert transmon_level_energy(tp, 0.0, 0) == pytest.approx(-200e6 / 4)
    assert transmon_level_energy(tp, 0.0, 1) == pytest.approx(3750e6, rel=1e-12)
    e01 = transmon_level_energy(tp, 0.0, 1) - transmon_level_energy(tp, 0.0, 0)
    assert e01 == pytest.approx(np.sqrt(8 * 50) * 200e6 - 200e6, rel=1e-12)
    assert f_ge_max_from_energies(tp) == pytest.approx(e01, rel=1e-12)
    p = ANTICROSSING_TRUTH.replace(f_ge_max=f_ge_max_from_energies(tp), d=tp.d)
    assert transmon_f_ge(p, p.i_ss) == pytest.approx(e01, rel=1e-12)


def test_transmon_levels_against_charge_basis():
    e_c = 200e6
    tp = TransmonEnergyParams(e_j_sigma=80 * e_c, e_c=e_c, d=0.3)
    ev = charge_basis_levels(tp.e_j_sigma, e_c)
    e01 = transmon_level_energy(tp, 0.0, 1) - transmon_level_energy(tp, 0.0, 0)
    e12 = transmon_level_energy(tp, 0.0, 2) - transmon_level_energy(tp, 0.0, 1)
    # the expansion drops O(E_C sqrt(E_C/E_J)) terms, which grow with the level index
    assert abs(e01 - (ev[1] - ev[0])) < 0.05 * e_c
    assert abs(e12 - (ev[2] - ev[1])) < 0.2 * e_c


def test_transmon_level_warning_below_ratio_10():
    tp = TransmonEnergyParams(e_j_sigma=5 * 200e6, e_c=200e6, d=0.3)
    with pytest.warns(RuntimeWarning):
        transmon_level_energy(tp, 0.0, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        transmon_level_energy(TransmonEnergyParams(50 * 200e6, 200e6, 0.3), 0.0, 1)


def test_effective_coupling():
    assert effective_coupling_params(0.0, 6.4e9, 8.5e9) == (6.4e9, 0.0)
    fc, g = effective_coupling_params(30e6, 6.4e9, 8.5e9)
    assert 6.4e9 - fc == pytest.approx(0.1059e6, rel=1e-3)
    assert g == pytest.approx(26.03e6, rel=1e-3)
    assert effective_coupling_params(30e6, 7e9, 7e9)[1] == pytest.approx(30e6)
