import math

import numpy as np
import pytest

from fstirap.propagator import NumericalError, TimeGrid, dipole_expectation, populations, propagate, reverse_check
from fstirap.pulses import ControlField, GaussianEnvelope, composite_fields, twin_gaussians
from fstirap.rwa import RwaParameters, propagate_rwa
from fstirap.units import EV, FS, intensity_to_field

E10 = float(intensity_to_field(10.88))


def fig1_run(s, dt=5.0, **kw):
    a, b = math.pi / 3, math.pi / 4
    wP, wS = s.resonant_carriers()
    fields = composite_fields(a, b, E10, E10, 60.0, 72.44, 12.0, 12.0, wP, wS, math.pi)
    return propagate(s.state(a), s.levels, s.dip, fields, TimeGrid(0, 140, dt), channels=s.channels, **kw)


@pytest.fixture(scope="module")
def fig1(three_level):
    return fig1_run(three_level, record_dipole=True)


def test_time_grid():
    g = TimeGrid(0.0, 650.0, 13.0)
    assert g.n_steps == 50000
    assert g.times()[-1] == pytest.approx(650.0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.0, 1.0)


def test_zero_field_eigenstate(xe):
    g = TimeGrid(0.0, 20.0, 10.0)
    tr = propagate(xe.basis_vector(xe.i3), xe.levels, xe.dip, [], g, store_stride=1.0)
    P = populations(tr)
    assert np.allclose(P[:, xe.i3], 1.0, atol=1e-14)
    E = xe.energies[xe.i3] * EV
    assert np.allclose(tr.amplitudes[:, xe.i3], np.exp(-1j * E * tr.times * FS), atol=1e-12)
    assert reverse_check(tr) < 1e-12


def test_rabi_oscillation_matches_formula(three_level):
    s = three_level
    E0 = 0.001
    wP, _ = s.resonant_carriers()
    pump = ControlField(GaussianEnvelope(E0, 0.0, 1e9), wP, 0.0, "pump")
    tr = propagate(s.basis_vector(s.i1), s.levels, s.dip, [pump], TimeGrid(0, 250, 20.0), channels=s.channels, store_stride=1.0)
    omega = E0 * s.dip.matrix[s.i1, s.i2]
    ref = np.sin(omega * tr.times * FS / 2) ** 2
    assert np.max(np.abs(populations(tr, [s.i2])[:, 0] - ref)) < 1e-3


def test_fig1_transfer(fig1, three_level):
    s = three_level
    P = fig1.final_populations()
    assert P[s.i1] == pytest.approx(0.5, abs=0.02)
    assert P[s.i3] == pytest.approx(0.5, abs=0.02)
    assert P[s.i2] < 0.01


def test_norm_and_population_sum(fig1):
    assert np.max(np.abs(populations(fig1).sum(axis=1) - 1)) < 1e-10
    steps = fig1.grid.n_steps
    assert fig1.norm_log.max() < 1e-10 * max(1.0, steps / 1e5)


def test_bad_inputs(three_level):
    s = three_level
    g = TimeGrid(0, 1, 10)
    with pytest.raises(ValueError):
        propagate(2 * s.state(0.0), s.levels, s.dip, [], g)
    tr = propagate(s.state(0.0), s.levels, s.dip, [], g)
    with pytest.raises(IndexError):
        populations(tr, [7])


def test_norm_drift_aborts(three_level):
    s = three_level
    with pytest.raises(NumericalError):
        fig1_run(s, dt=20.0, norm_tol=1e-18)


def test_reverse_check(fig1, three_level):
    assert reverse_check(fig1) < 1e-6
    assert reverse_check(fig1_run(three_level, dt=13.0)) < 1e-6


def test_second_order_convergence(three_level):
    ref = fig1_run(three_level, dt=1.25, store_stride=0).final
    errs = [np.abs(fig1_run(three_level, dt=dt, store_stride=0).final - ref).max() for dt in (20.0, 10.0, 5.0)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.0) and np.all(ratios < 5.5), (errs, ratios)


@pytest.mark.xfail(strict=True, reason="each split step is unitary and time-symmetric, so the reversal deficit is roundoff and does not scale with dt")
def test_reverse_deficit_grows_fourfold_with_dt(three_level):
    d1 = reverse_check(fig1_run(three_level, dt=10.0, store_stride=0))
    d2 = reverse_check(fig1_run(three_level, dt=20.0, store_stride=0))
    assert 3.0 < d2 / d1 < 5.0


def test_gauge_shift_invariance(xe):
    a = math.pi / 4
    wP, wS = xe.resonant_carriers()
    f = twin_gaussians(0.5, 10.0, 40.0, -10.0, wP, wS)
    g = TimeGrid(0, 80, 13.0)
    t1 = propagate(xe.state(a), xe.levels, xe.dip, f, g, record_dipole=True)
    t2 = propagate(xe.state(a), xe.levels, xe.dip, f, g, energy_shift=3.7, record_dipole=True)
    assert np.max(np.abs(populations(t1) - populations(t2))) < 1e-10
    assert np.max(np.abs(t1.dipole - t2.dipole)) < 1e-10
    ov = np.vdot(t1.final, t2.final)
    assert abs(abs(ov) - 1) < 1e-10


def test_dipole_expectation(three_level, xe, fig1):
    tr = propagate(xe.basis_vector(xe.i1), xe.levels, xe.dip, [], TimeGrid(0, 5, 10), store_stride=0.5)
    assert np.all(dipole_expectation(tr, xe.dip) == 0)
    d = dipole_expectation(fig1, three_level.dip)
    k = np.searchsorted(fig1.grid.times(), fig1.times)
    assert np.allclose(d, fig1.dipole[np.minimum(k, fig1.dipole.size - 1)], atol=1e-12)


def test_superposition_dipole_has_lines_split_by_ground_gap(xe):
    # after a weak broadband kick both ground terms radiate into a common
    # upper state, giving two lines 1.306 eV apart (the beat seen in delay)
    probe = [ControlField(GaussianEnvelope(0.002, 5.0, 0.5), 16.0, 0.0, "probe")]
    tr = propagate(xe.state(math.pi / 4), xe.levels, xe.dip, probe, TimeGrid(0, 80, 10.0), record_dipole=True)
    t = tr.grid.times()
    sel = t > 8
    d = tr.dipole[sel] * np.exp(-(t[sel] - 8) / 20.0)
    up = xe.energies[xe.levels.index("5s2.5p4.(1D2).5d 2[0]1/2")]
    amp = lambda e: abs(np.sum(d * np.exp(1j * e * EV * t[sel] * FS)))
    lines = [up - xe.energies[xe.i1], up - xe.energies[xe.i3]]
    assert lines[0] - lines[1] == pytest.approx(1.306423)
    background = np.median([amp(e) for e in np.linspace(13.0, 14.0, 11)])
    assert all(amp(e) > 10 * background for e in lines)


def test_time_mirrored_dipole(xe):
    psi = xe.state(math.pi / 4, 0.3)
    g = TimeGrid(0, 20, 10)
    tr = propagate(psi, xe.levels, xe.dip, [], g, record_dipole=True)
    # conjugate-reversed start: psi*(T) evolved forward gives d(T - t)
    start = np.conj(tr.final) * np.exp(-1j * xe.energies * EV * 0.0)
    back = propagate(start, xe.levels, xe.dip, [], g, record_dipole=True)
    assert np.allclose(back.dipole, tr.dipole[::-1], atol=1e-12)


def test_batch_matches_single(three_level):
    s = three_level
    wP, wS = s.resonant_carriers()
    g = TimeGrid(-200, 200, 20.0)
    sets = [list(twin_gaussians(3.38, 50.0, -d / 2, d, wP, wS, 1.0)) for d in (-20.0, 0.0, 30.0)]
    tb = propagate(s.state(0.5), s.levels, s.dip, sets, g, channels=s.channels, batch=True, store_stride=0)
    for b, fs in enumerate(sets):
        ts = propagate(s.state(0.5), s.levels, s.dip, fs, g, channels=s.channels, store_stride=0)
        assert np.allclose(tb.final[:, b], ts.final, atol=1e-13)


def test_full_carrier_agrees_with_rwa_fig1(fig1, three_level):
    s = three_level
    a, b = math.pi / 3, math.pi / 4
    from fstirap.pulses import composite_envelopes

    rp, rs = composite_envelopes(a, b, E10, E10, 60.0, 72.44, 12.0, 12.0)
    _, st = propagate_rwa(RwaParameters.resonant(rp, rs, math.pi), [math.cos(a), 0, math.sin(a)], (0, 140), [140.0])
    P = np.abs(st[-1]) ** 2
    assert np.max(np.abs(P - s.three(fig1.final_populations()))) < 0.02


def test_trajectory_csv(tmp_path, fig1, three_level):
    s = three_level
    p = tmp_path / "pop.csv"
    fig1.to_csv(p, [s.i1, s.i2, s.i3], ["P1", "P2", "P3"])
    lines = p.read_text().splitlines()
    assert lines[0] == "t_fs,P1,P2,P3"
    assert len(lines) == len(fig1.times) + 1
    fig1.save_dipole(tmp_path / "d.npz")
    z = np.load(tmp_path / "d.npz")
    assert z["dipole"].shape == z["t_fs"].shape
