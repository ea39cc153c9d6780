import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fstirap.pulses import composite_envelopes
from fstirap.rwa import (
    RwaParameters,
    adiabatic_frame,
    adiabatic_populations,
    inverse_rotating_frame_transform,
    mixing_angle,
    propagate_rwa,
    rotating_frame_transform,
    rwa_hamiltonian,
)
from fstirap.units import intensity_to_field

const = lambda v: (lambda t: v + 0 * np.asarray(t, dtype=float))
# exact zeros or couplings well above the 1e-12 envelope floor
finite = st.one_of(st.just(0.0), st.floats(1e-6, 0.05), st.floats(-0.05, -1e-6))


def test_zero_fields_zero_matrix():
    p = RwaParameters.resonant(const(0.0), const(0.0), 0.7)
    assert np.all(rwa_hamiltonian(p, 3.0) == 0)


def test_real_symmetric_at_zero_phase():
    H = rwa_hamiltonian(RwaParameters(0.01, -0.02, 0.0, const(0.03), const(0.02)), 1.0)
    assert np.all(H.imag == 0) and np.array_equal(H, H.T)


def test_hermitian_with_phase():
    H = rwa_hamiltonian(RwaParameters(0.01, -0.02, 1.3, const(0.03), const(0.02)), 1.0)
    assert np.allclose(H, H.conj().T, atol=0)


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite, st.floats(0, 2 * math.pi))
def test_eigensystem_matches_formulas(wp, ws, d, phi):
    p = RwaParameters.resonant(const(wp), const(ws), phi, d)
    H = rwa_hamiltonian(p, np.array([0.0]))[0]
    fr = adiabatic_frame(p, [0.0])
    S = fr.states[0]
    E = np.array([fr.E0[0], fr.Ep[0], fr.Em[0]])
    assert fr.E0[0] == d
    assert np.allclose(np.sort(np.linalg.eigvalsh(H)), np.sort(E), atol=1e-12)
    assert np.abs(H @ S[:, 0] - d * S[:, 0]).max() < 1e-10
    assert np.abs(H @ S - S * E).max() < 1e-12
    assert np.abs(S.conj().T @ S - np.eye(3)).max() < 1e-12
    assert S[1, 0] == 0


def test_phi_limit_at_zero_detuning():
    fr = adiabatic_frame(RwaParameters.resonant(const(0.01), const(0.02)), [0.0])
    assert fr.phi_mix[0] == pytest.approx(-math.pi / 4)


def test_frame_examples():
    fr = adiabatic_frame(RwaParameters.resonant(const(0.0), const(0.02)), [0.0, 1.0])
    assert np.all(fr.theta == 0)
    assert np.allclose(fr.states[:, :, 0], [[1, 0, 0]] * 2)
    fr = adiabatic_frame(RwaParameters.resonant(const(0.02), const(0.02)), [0.0])
    assert fr.theta[0] == pytest.approx(math.pi / 4)
    assert abs(fr.states[0, 0, 0]) ** 2 == pytest.approx(0.5)
    assert abs(fr.states[0, 2, 0]) ** 2 == pytest.approx(0.5)
    with pytest.raises(ValueError):
        adiabatic_frame(RwaParameters(0.0, 0.1, 0.0, const(0.1), const(0.1)), [0.0])


def test_theta_held_below_floor():
    th = mixing_angle([0.0, 0.0, 1.0, 2.0, 0.0], [0.0, 0.0, 1.0, 1.0, 0.0])
    assert th[0] == th[1] == th[2] == pytest.approx(math.pi / 4)
    assert th[4] == th[3] == pytest.approx(math.atan(2.0))


@settings(max_examples=50, deadline=None)
@given(finite, finite, finite, st.integers(0, 2**31 - 1))
def test_adiabatic_populations_complete(wp, ws, d, seed):
    rng = np.random.default_rng(seed)
    fr = adiabatic_frame(RwaParameters.resonant(const(wp), const(ws), 0.4, d), [0.0])
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    v /= np.linalg.norm(v)
    assert adiabatic_populations(v, fr, 0).sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(adiabatic_populations(fr.states[0][:, 0], fr, 0), [1, 0, 0], atol=1e-14)


def test_rotating_frame_transform(rng):
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    assert np.array_equal(rotating_frame_transform(v, 0.0, 0.4, 0.36, 0.41), v)
    w = rotating_frame_transform(v, 12.3, 0.4, 0.36, 0.41)
    assert np.allclose(np.abs(w), np.abs(v), rtol=1e-15)
    assert np.allclose(inverse_rotating_frame_transform(w, 12.3, 0.4, 0.36, 0.41), v, atol=1e-14)


def test_fig1_rwa_dark_state_followed():
    a, b = math.pi / 3, math.pi / 4
    E0 = float(intensity_to_field(10.88))
    rp, rs = composite_envelopes(a, b, E0, E0, 60.0, 72.44, 12.0, 12.0)
    p = RwaParameters.resonant(rp, rs, math.pi)
    # initial state is psi_0 at t=0 for phi = pi: cos a|1> + sin a|3>
    t, st_ = propagate_rwa(p, [math.cos(a), 0, math.sin(a)], (0.0, 140.0), np.linspace(0, 140, 281))
    P = np.abs(st_[-1]) ** 2
    assert P[0] == pytest.approx(0.5, abs=0.02) and P[2] == pytest.approx(0.5, abs=0.02) and P[1] < 0.01
    pops = adiabatic_populations(st_, adiabatic_frame(p, t))
    assert pops[:, 0].min() > 0.98
