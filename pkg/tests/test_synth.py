import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import NUISANCE, make_heatmap
from stsfit.extract import fit_circle
from stsfit.model import branch_used, model_frequency
from stsfit.synth import (
    ANTICROSSING_TRUTH,
    NotchNuisanceParams,
    StsHeatmap,
    compute_snr,
    default_grids,
    generate_heatmap,
    noise_sd_for_snr,
    notch_s21,
)


def test_notch_baseline_and_resonance():
    nu = NotchNuisanceParams(amplitude_a=0.8, alpha=0.0, tau=0.0, q_loaded=1e4, q_ext_mag=2e4,
                             q_ext_phase=0.0)
    far = notch_s21(np.array([5e9, 8e9]), 6.4e9, nu)
    np.testing.assert_allclose(far, 0.8, rtol=1e-3)
    on = notch_s21(6.4e9, 6.4e9, nu.__class__(1.0, 0.0, 0.0, 1e4, 2e4, 0.0))
    assert on == pytest.approx(1 - 1e4 / 2e4, abs=1e-15)


@given(st.floats(1e3, 1e5), st.floats(1.05, 5.0), st.floats(-1.0, 1.0), st.floats(0.1, 3.0))
def test_notch_locus_is_circle(q_l, ratio, phi, a):
    nu = NotchNuisanceParams(a, 0.4, 0.0, q_l, q_l * ratio, phi)
    f_r = 6e9
    f = f_r * (1 + np.linspace(-5, 5, 101) / q_l)
    z = notch_s21(f, f_r, nu)
    _, r, resid = fit_circle(z)
    assert r == pytest.approx(nu.circle_radius, rel=1e-9)
    assert resid < 1e-12 * max(1.0, a)


def test_heatmap_validation():
    cur, fp = default_grids(n_currents=5, n_freqs=6)
    s = np.ones((5, 6), complex)
    StsHeatmap(cur, fp, s)
    with pytest.raises(ValueError):
        StsHeatmap(cur, fp, s[:, :5])
    bad = s.copy()
    bad[1, 1] = np.nan
    with pytest.raises(ValueError):
        StsHeatmap(cur, fp, bad)
    with pytest.raises(ValueError):
        StsHeatmap(cur ** 2, fp, s)
    with pytest.raises(ValueError):
        StsHeatmap(cur, fp[::-1], s)


def test_noiseless_rows_follow_model():
    hm = make_heatmap("anticrossing")
    f_r = model_frequency(ANTICROSSING_TRUTH, hm.currents, hm.probe_span)
    for n in (0, 17, 50):
        np.testing.assert_array_equal(hm.s21[n], notch_s21(hm.probe_freqs, f_r[n], NUISANCE))
    again = make_heatmap("anticrossing", seed=99)
    np.testing.assert_array_equal(hm.s21, again.s21)
    assert hm.meta["truth"] == ANTICROSSING_TRUTH.as_dict()


def test_seed_determinism_and_noise_statistics():
    a = make_heatmap("anticrossing", snr=5, seed=3)
    b = make_heatmap("anticrossing", snr=5, seed=3)
    c = make_heatmap("anticrossing", snr=5, seed=4)
    np.testing.assert_array_equal(a.s21, b.s21)
    assert not np.array_equal(a.s21, c.s21)
    noise = a.s21 - make_heatmap("anticrossing").s21
    assert noise.size >= 1e4
    sd = NUISANCE.circle_radius / 5
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(sd ** 2, rel=0.02)
    # real and imaginary parts each carry half of the variance
    assert np.var(noise.real) == pytest.approx(sd ** 2 / 2, rel=0.03)


def test_topologies():
    cur, fp = default_grids()
    span = fp[-1] - fp[0]
    fine = np.linspace(cur[0], cur[-1], 20001)
    switches = np.count_nonzero(np.diff(branch_used(ANTICROSSING_TRUTH, fine, span)))
    # two avoided crossings per period; the 200 uA sweep holds 2.27 periods
    assert switches == 5
    below = ANTICROSSING_TRUTH.replace(f_ge_max=5.9e9)
    assert np.all(model_frequency(below, cur, span) > below.f_c)


def test_snr():
    assert compute_snr(19 * 0.01, 0.01) == pytest.approx(19)
    assert compute_snr(1.0, 0.2, 0.2) == pytest.approx(1 / (0.2 * np.sqrt(2)))
    assert compute_snr(1.0, 0.1, 0.3) == pytest.approx(3.16227766, rel=1e-8)
    with pytest.raises(ZeroDivisionError):
        compute_snr(1.0, 0.0, 0.0)
    assert compute_snr(0.3, noise_sd_for_snr(0.3, 7.0)) == pytest.approx(7.0)


@given(st.floats(1e-3, 10), st.floats(1e-4, 1), st.floats(0, 1))
def test_snr_never_exceeds_original(r, s0, s1):
    assert compute_snr(r, s0, s1) <= r / s0 * (1 + 1e-12)


def test_generate_rejects_negative_noise():
    cur, fp = default_grids()
    with pytest.raises(ValueError):
        generate_heatmap(ANTICROSSING_TRUTH, NUISANCE, cur, fp, noise_sd=-1.0)
