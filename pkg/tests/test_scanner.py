import math

import numpy as np
import pytest

from fstirap.propagator import TimeGrid, propagate
from fstirap.scanner import Axis, Landscape, TwinPulse, fidelity, optimize_transfer, scan_delay, scan_phase
from fstirap.units import FS

PULSE = TwinPulse(intensity=3.38, width=50.0, dt=10.0)


def test_axis_validation():
    with pytest.raises(ValueError):
        Axis("x", [1.0])
    with pytest.raises(ValueError):
        Axis("x", [0.0, np.nan])
    assert Axis.linspace("phi", 0, 2 * np.pi, 4, endpoint=False).values[-1] == pytest.approx(1.5 * np.pi)


@pytest.fixture(scope="module")
def delay_scan(three_level):
    return scan_delay(three_level, np.linspace(0, np.pi / 2, 5), np.linspace(-100, 100, 6), phi=1.14 * np.pi, pulse=PULSE)


def test_closure_and_shape(delay_scan):
    assert delay_scan.P1.shape == (5, 6)
    assert delay_scan.closure_error() < 1e-8
    assert not delay_scan.missing.any()


def test_superposition_matches_direct_propagation(three_level, delay_scan):
    a, d = np.pi / 8 * 3, delay_scan.grid.axis2.values[2]
    fields = PULSE.fields(three_level, d, 1.14 * np.pi)
    tr = propagate(three_level.state(a), three_level.levels, three_level.dip, fields, PULSE.grid(100.0), channels=three_level.channels)
    P = np.abs(three_level.three(tr.final)) ** 2
    assert delay_scan.P1[3, 2] == pytest.approx(P[0], abs=1e-10)
    assert delay_scan.P3[3, 2] == pytest.approx(P[2], abs=1e-10)


def test_zero_intensity_keeps_initial_populations(three_level):
    alphas = np.linspace(0, np.pi / 2, 4)
    L = scan_delay(three_level, alphas, [-20.0, 20.0], pulse=TwinPulse(intensity=0.0, dt=50.0))
    assert np.allclose(L.P1, np.cos(alphas)[:, None] ** 2, atol=1e-12)
    assert np.allclose(L.P3, np.sin(alphas)[:, None] ** 2, atol=1e-12)


def test_phase_is_2pi_periodic(three_level):
    alphas = np.linspace(0, np.pi / 2, 3)
    L = scan_phase(three_level, alphas, [0.3, 0.3 + 2 * np.pi, 1.0], delay=-12.75, pulse=PULSE)
    assert np.max(np.abs(L.P1[:, 0] - L.P1[:, 1])) < 1e-10
    assert np.max(np.abs(L.P3[:, 0] - L.P3[:, 1])) < 1e-10


def test_rows_are_smooth_in_alpha(three_level):
    L = scan_delay(three_level, np.linspace(0, np.pi / 2, 33), [-40.0, 0.0, 40.0], pulse=PULSE)
    # populations are quadratic forms in (cos a, sin a): steps scale with the alpha spacing
    s = L.smoothness()
    assert s["P1_max_step_axis1"] < 2 * (np.pi / 2 / 32) + 1e-12
    assert s["P3_max_step_axis1"] < 2 * (np.pi / 2 / 32) + 1e-12


def test_threads_match_sequential(three_level):
    args = (three_level, np.linspace(0, np.pi / 2, 3), np.linspace(-60, 60, 6))
    import fstirap.scanner as sc

    a = sc._landscape(args[0], args[1], [PULSE.fields(args[0], d, 0.5) for d in args[2]], PULSE.grid(60), None, chunk=2, workers=1)
    b = sc._landscape(args[0], args[1], [PULSE.fields(args[0], d, 0.5) for d in args[2]], PULSE.grid(60), None, chunk=2, workers=3)
    assert np.array_equal(a.P1, b.P1) and np.array_equal(a.P3, b.P3)


def test_failed_chunk_is_left_missing(three_level, monkeypatch):
    import fstirap.scanner as sc
    from fstirap.propagator import NumericalError

    real = sc.final_amplitudes
    calls = []

    def flaky(system, fsets, grid, init):
        calls.append(1)
        if len(calls) == 2:
            raise NumericalError("norm drift")
        return real(system, fsets, grid, init)

    monkeypatch.setattr(sc, "final_amplitudes", flaky)
    fsets = [PULSE.fields(three_level, d, 0.0) for d in (-20.0, 0.0, 20.0, 40.0)]
    L = sc._landscape(three_level, np.array([0.0, 0.5]), fsets, PULSE.grid(40), None, chunk=2)
    assert L.missing[:, 2:].all() and not L.missing[:, :2].any()
    assert np.isfinite(L.closure_error())


def test_landscape_csv(tmp_path, delay_scan):
    delay_scan.to_csv(tmp_path / "l.csv")
    rows = (tmp_path / "l.csv").read_text().splitlines()
    assert rows[0] == "alpha,delay_fs,P1,P2,P3" and len(rows) == 31
    s = delay_scan.summary()
    assert s["shape"] == [5, 6] and s["missing_points"] == 0


def test_fidelity_definition():
    b = 0.4
    psi = np.array([math.cos(b), 0.0, 1j * math.sin(b)])
    assert fidelity(psi, b) == pytest.approx(1.0)
    assert fidelity(np.array([1.0, 0, 0]), np.pi / 2) == pytest.approx(0.0)


def test_zero_intensity_is_not_an_improvement(three_level):
    opt = optimize_transfer(
        three_level, np.pi / 4, np.pi / 2, {"delay": (-50, 50)}, {"intensity": 0.0},
        TwinPulse(dt=50.0), coarse=4, refine_rounds=1, refine_points=3,
    )
    assert not opt.improved and opt.fidelity == pytest.approx(0.5)


@pytest.fixture(scope="module")
def optimum(three_level):
    return optimize_transfer(
        three_level, np.pi / 4, np.pi / 2, {"delay": (-150, 150), "phi": (0, 2 * np.pi)}, None, PULSE,
        coarse=12, refine_rounds=3, refine_points=5, seed=7,
    )


@pytest.fixture(scope="module")
def oracle_max(three_level):
    # independent brute-force grid over the same box
    psi0 = three_level.state(np.pi / 4)
    grid = PULSE.grid(150)
    best = 0.0
    for d in np.linspace(-150, 150, 21):
        fsets = [PULSE.fields(three_level, d, p) for p in np.linspace(0, 2 * np.pi, 12, endpoint=False)]
        tr = propagate(psi0, three_level.levels, three_level.dip, fsets, grid, channels=three_level.channels, batch=True, store_stride=0)
        P3 = np.abs(tr.final[three_level.i3]) ** 2
        best = max(best, float(P3.max()))
    return best


def test_optimizer_beats_grid_oracle(optimum, oracle_max):
    assert optimum.improved
    assert optimum.fidelity >= oracle_max - 0.005
    assert sum(optimum.populations) == pytest.approx(1.0, abs=1e-8)


def test_optimizer_is_deterministic(three_level):
    kw = dict(coarse=4, refine_rounds=2, refine_points=3, seed=3)
    a = optimize_transfer(three_level, np.pi / 4, 0.0, {"delay": (-60, 60)}, {"phi": np.pi}, PULSE, **kw)
    b = optimize_transfer(three_level, np.pi / 4, 0.0, {"delay": (-60, 60)}, {"phi": np.pi}, PULSE, **kw)
    assert a.params == b.params and a.fidelity == b.fidelity


@pytest.mark.xfail(strict=True, reason="fixed-intensity twin pulses top out near 0.92 for pi/4 -> pi/2")
def test_optimizer_reaches_095(optimum):
    assert optimum.fidelity > 0.95


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the X-ray optimum sits at the 10 fs bound with F~0.70, not at 21.4 fs")
def test_xray_operating_point(xe_xray):
    pulse = TwinPulse(intensity=10.0, width=18.0, dt=10.0, margin=4.0)
    opt = optimize_transfer(xe_xray, np.pi / 4, 0.0, {"delay": (10, 35)}, {"phi": 0.0}, pulse, coarse=6, refine_rounds=1, refine_points=5)
    assert opt.fidelity > 0.9
    assert opt.params["delay"] == pytest.approx(21.4, abs=2.0)
