import json
import math

import numpy as np
import pytest

from fstirap.propagator import TimeGrid, propagate
from fstirap.spectro import (
    DEFAULT_ENERGIES,
    ResponseError,
    Spectrogram,
    apply_window,
    atas_scan,
    cross_section,
    default_probe,
    fit_oscillation,
    fourier,
    identify_peaks,
    parseval_error,
    table_i_lines,
)
from fstirap.pulses import sample_field
from fstirap.units import EV, FS

HBAR_EV_FS = 0.6582119569


def test_window_identity_and_tail():
    t = np.linspace(-10, 50, 601)
    x = np.cos(t)
    assert np.array_equal(apply_window(x, t, 0.0, math.inf), x)
    w = apply_window(np.ones_like(t), t, 5.0, 10.0)
    assert np.array_equal(w[t < 5.0], np.ones(np.sum(t < 5.0)))
    post = t >= 5.0
    assert np.allclose(w[post], np.exp(-(t[post] - 5.0) / 10.0), rtol=1e-15)
    with pytest.raises(ValueError):
        apply_window(x, t, 0.0, 0.0)


def _fwhm(tau):
    t = np.arange(0, 20 * tau, 0.05)
    d = np.cos(17.0 * EV * t * FS) * np.exp(-t / tau)
    e = np.linspace(16.8, 17.2, 2001)
    re = np.real(fourier(d, t, e))
    half = re.max() / 2
    above = e[re >= half]
    return above[-1] - above[0], e[np.argmax(re)]


def test_damped_cosine_lorentzian_width():
    w10, c10 = _fwhm(10.0)
    assert c10 == pytest.approx(17.0, abs=1e-3)
    assert w10 == pytest.approx(2 * HBAR_EV_FS / 10.0, rel=0.01)
    assert w10 == pytest.approx(0.132, abs=0.002)
    w20, _ = _fwhm(20.0)
    assert w20 / w10 == pytest.approx(0.5, rel=0.02)


def test_fourier_matches_fft_on_dft_grid():
    t = np.arange(4000) * 0.05
    x = np.exp(-(((t - 100) / 15) ** 2)) * np.cos(0.6 * t * FS)
    N, dt = t.size, 0.05 * FS
    k = np.arange(0, 1000)
    e = 2 * np.pi * k / (N * dt) / EV
    ours = fourier(x, t, e)
    ref = np.conj(np.fft.fft(x))[k] * dt
    assert np.max(np.abs(ours - ref)) < 1e-10 * np.max(np.abs(ref))


def test_zero_response_gives_zero_sigma():
    t = np.arange(-5, 80, 0.013)
    probe = sum(sample_field(p, t) for p in default_probe())
    sig = cross_section(np.zeros_like(t), probe, t, t_probe=0.0)
    assert np.all(sig == 0)


def test_vanishing_probe_spectrum_raises():
    t = np.arange(-5, 80, 0.013)
    with pytest.raises(ResponseError):
        cross_section(np.zeros_like(t), np.zeros_like(t), t)


def test_parseval_windowed_response(xe):
    tr = propagate(xe.state(math.pi / 4), xe.levels, xe.dip, default_probe(5.0), TimeGrid(0, 60, 13), record_dipole=True)
    t = tr.grid.times()
    assert parseval_error(apply_window(tr.dipole, t, 5.0, 10.0)) < 1e-8


@pytest.fixture(scope="module")
def stationary(xe):
    g = TimeGrid(0, 120, 13.0)
    return atas_scan(xe.levels, xe.dip, xe.basis_vector(xe.i1), [], [10.0, 20.0, 30.0], g)


def test_stationary_peaks_match_table(stationary):
    lines = [l for l in table_i_lines() if l.symbol.startswith("nu3/2")]
    found = identify_peaks(stationary.energies, stationary.sigma[:, 0], lines, tol=0.01)
    got = {sym: e for e, v, sym in found if sym is not None and v > 0}
    assert {"nu3/2_1", "nu3/2_2"} <= set(got)
    assert got["nu3/2_1"] == pytest.approx(16.745426, abs=0.01)
    assert got["nu3/2_2"] == pytest.approx(16.932476, abs=0.01)


def test_eigenstate_columns_do_not_depend_on_delay(xe):
    # one colour: a delay only rephases the probe; the window kink leaks
    # a few 1e-6 of the counter-rotating response
    g = TimeGrid(0, 130, 13.0)
    probe = [default_probe()[0]]
    s = atas_scan(xe.levels, xe.dip, xe.basis_vector(xe.i1), [], [13.0, 26.0, 39.0], g, probe=probe).sigma
    assert np.max(np.abs(s - s[:, :1])) < 1e-4 * np.max(np.abs(s))


def test_weak_probe_linearity(xe):
    g = TimeGrid(0, 100, 13.0)
    psi = xe.basis_vector(xe.i1)
    a = atas_scan(xe.levels, xe.dip, psi, [], [10.0], g, probe=default_probe(intensity=1e-3)).sigma
    b = atas_scan(xe.levels, xe.dip, psi, [], [10.0], g, probe=default_probe(intensity=5e-4)).sigma
    assert np.max(np.abs(a - b)) < 0.01 * np.max(np.abs(a))


@pytest.mark.xfail(strict=True, reason="the default 8e9 W/cm2 probe excites ~3% and shifts sigma by ~1.2%")
def test_default_probe_is_weak(xe):
    g = TimeGrid(0, 100, 13.0)
    psi = xe.basis_vector(xe.i1)
    a = atas_scan(xe.levels, xe.dip, psi, [], [10.0], g, probe=default_probe()).sigma
    b = atas_scan(xe.levels, xe.dip, psi, [], [10.0], g, probe=default_probe(intensity=0.004)).sigma
    assert np.max(np.abs(a - b)) < 0.01 * np.max(np.abs(a))


def test_delay_outside_window(xe):
    with pytest.raises(ValueError):
        atas_scan(xe.levels, xe.dip, xe.basis_vector(xe.i1), [], [50.0], TimeGrid(0, 100, 13.0))


def test_threads_do_not_change_results(xe):
    g = TimeGrid(0, 100, 13.0)
    args = (xe.levels, xe.dip, xe.state(math.pi / 4), [], [5.0, 6.0, 7.0, 8.0], g)
    a = atas_scan(*args, chunk=1, workers=1)
    b = atas_scan(*args, chunk=1, workers=3)
    assert np.array_equal(a.sigma, b.sigma)


def test_fit_oscillation_recovers_beat():
    t = np.arange(10, 26, 0.4)
    T = 2 * np.pi / (1.306423 * EV) / FS
    y = 0.3 * np.cos(2 * np.pi * t / T + 0.7) + 1.0 + 0.002 * t
    f = fit_oscillation(t, y)
    assert f.period == pytest.approx(T, rel=1e-6)
    assert f.frequency_ev == pytest.approx(1.306423, rel=1e-6)
    assert f.amplitude == pytest.approx(0.3, rel=1e-6)


def test_identify_peaks_synthetic():
    e = DEFAULT_ENERGIES
    col = sum(1 / (1 + ((e - c) / 0.03) ** 2) for c in (16.745, 17.2))
    found = identify_peaks(e, col)
    syms = {s for _, _, s in found}
    assert "nu3/2_1" in syms and "nu3/2_4" in syms
    assert identify_peaks(e, np.zeros_like(e)) == []


def test_spectrogram_exports(tmp_path):
    e = np.array([16.745426, 16.9, 17.0])
    sp = Spectrogram(np.array([1.0, 2.0]), e, np.arange(6.0).reshape(3, 2))
    sp.annotate()
    sp.to_csv(tmp_path / "s.csv")
    sp.to_json(tmp_path / "s.json")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0].split(",")[0] == "energy_eV" and len(rows) == 4
    data = json.loads((tmp_path / "s.json").read_text())
    assert {"label", "energy_eV", "delay_trace"} <= set(data["lines"][0])
    with pytest.raises(ResponseError):
        Spectrogram(np.array([1.0]), e, np.full((3, 1), np.nan))
