"""
Test truncated vorticity fields and their scalar functionals
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

import config
from exceptions import InitialDataError
from lattice_field import (
    NormParams, Truncation, VorticityField, WaveVector, analyticity_radius, complete_from_half,
    d_norm, energy_spectrum, enstrophy, hermitian_deviation, in_region_U, minimal_D, random_field,
    saturating_family, saturating_field, velocity_from_vorticity,
)
from rng_streams import stream


def test_truncation_active_set():
    trunc = Truncation(2)
    assert trunc.shape == (5, 5)
    modes = {k.as_tuple() for k in trunc.modes()}
    assert (0, 0) not in modes
    assert (2, 0) in modes and (1, 1) in modes and (2, 1) not in modes
    assert len(modes) == 12
    assert trunc.n_half == 6
    assert trunc.half_modes()[0] == WaveVector(0, 1)
    with pytest.raises(ValueError):
        trunc.index((2, 2))
    with pytest.raises(ValueError):
        Truncation(0)


def test_zero_wave_vector_rejected():
    with pytest.raises(ValueError):
        WaveVector(0, 0)


def test_from_modes_completes_conjugates():
    f = VorticityField.from_modes(3, {(1, 2): 1 + 2j})
    assert f.amplitude((-1, -2)) == 1 - 2j
    assert hermitian_deviation(f.amplitudes) == 0.0
    with pytest.raises(ValueError):
        VorticityField.from_modes(3, {(1, 0): 1j, (-1, 0): 1j})


def test_field_rejects_non_hermitian_and_zero_mode():
    trunc = Truncation(2)
    a = trunc.zeros()
    a[trunc.index((1, 0))] = 1.0
    with pytest.raises(ValueError):
        VorticityField(trunc, a)
    b = trunc.zeros()
    b[2, 2] = 1.0
    with pytest.raises(ValueError):
        VorticityField(trunc, b)


def test_amplitudes_are_immutable():
    f = VorticityField.from_modes(2, {(1, 0): 1.0})
    with pytest.raises(ValueError):
        f.amplitudes[0, 0] = 1.0


def test_enstrophy_examples():
    assert enstrophy(VorticityField.zeros(4)) == 0.0
    assert enstrophy(VorticityField.from_modes(4, {(1, 0): 1.0})) == pytest.approx(1.0)
    assert enstrophy(VorticityField.from_modes(4, {(1, 0): 3j})) == pytest.approx(9.0)


def test_enstrophy_scaling():
    f = random_field(Truncation(6), stream(5))
    assert enstrophy(f.scaled(-2.5)) == pytest.approx(6.25 * enstrophy(f), rel=1e-14)


def test_d_norm_example():
    f = VorticityField.from_modes(4, {(2, 0): 1.0})
    p = NormParams(r=1.5, alpha=3.0, D=2.0)
    assert d_norm(f, p) == pytest.approx(2 ** 1.5 * math.exp(0.25), rel=1e-14)
    assert d_norm(VorticityField.zeros(4), p) == 0.0


def test_d_norm_homogeneous():
    f = random_field(Truncation(6), stream(7))
    p = NormParams(1.5, 3.5, 1.2)
    for c in (-2.5, 0.3):
        assert d_norm(f.scaled(c), p) == pytest.approx(abs(c) * d_norm(f, p), rel=1e-14)


def test_d_norm_decreases_in_D():
    f = random_field(Truncation(6), stream(11))
    p = NormParams(1.5, 3.5, 1.0)
    values = [d_norm(f, p.with_D(D)) for D in (0.8, 1.0, 1.5, 3.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_norm_params_validation():
    with pytest.raises(ValueError):
        NormParams(r=1.0, alpha=3.0, D=1.0)
    with pytest.raises(ValueError):
        NormParams(r=2.0, alpha=3.0, D=1.0)
    with pytest.raises(ValueError):
        NormParams(r=1.5, alpha=3.5, D=0.0)


def _pair_boundary_D(alpha):
    # pair of amplitude c = D at |k| = 1 with both region conditions tight
    return brentq(lambda D: (1 - alpha) * math.log(D) + D ** (-alpha), 1.0001, 10.0)


def test_region_boundary_included():
    alpha = 3.5
    D = _pair_boundary_D(alpha)
    p = NormParams(1.5, alpha, D)
    on_boundary = VorticityField.from_modes(4, {(1, 0): D})
    assert in_region_U(on_boundary, p)
    outside = on_boundary.scaled(1.01)
    assert not in_region_U(outside, p)


def test_region_zero_field_always_inside():
    p = NormParams(1.5, 3.5, 0.1)
    assert in_region_U(VorticityField.zeros(3), p)


def test_minimal_D_matches_root():
    alpha, c = 3.5, 0.7
    f = VorticityField.from_modes(4, {(1, 0): c})
    norm_root = brentq(lambda D: math.log(c) + D ** (-alpha) - alpha * math.log(D), 0.5, 10.0)
    expected = max(norm_root, c)
    assert abs(minimal_D(f, 1.5, alpha) - expected) <= 2e-6
    assert minimal_D(VorticityField.zeros(4), 1.5, alpha) == 0.0


def test_minimal_D_is_admissible_and_monotone():
    f = random_field(Truncation(5), stream(3), amplitude=2.0)
    d = minimal_D(f, 1.5, 3.5)
    assert in_region_U(f, NormParams(1.5, 3.5, d))
    assert not in_region_U(f, NormParams(1.5, 3.5, d - config.MINIMAL_D_TOL))
    assert minimal_D(f.scaled(3.0), 1.5, 3.5) >= d
    assert analyticity_radius(f, 1.5, 3.5) == pytest.approx(d ** -3.5)


def test_energy_spectrum_example():
    spec = energy_spectrum([VorticityField.from_modes(4, {(1, 0): 1.0})])
    assert spec.value(1.0) == pytest.approx(2.0)
    assert spec.value(2.0) == 0.0


def test_energy_spectrum_sums_to_enstrophy():
    trunc = Truncation(7)
    ensemble = [random_field(trunc, stream(1, i)) for i in range(4)]
    spec = energy_spectrum(ensemble)
    mean_phi = np.mean([enstrophy(f) for f in ensemble])
    assert 0.5 * np.sum(spec.k * spec.e) == pytest.approx(mean_phi, rel=1e-12)
    frame = spec.to_frame()
    assert list(frame.columns) == ['k', 'e_k', 'mode_count']
    with pytest.raises(ValueError):
        energy_spectrum([])


def test_velocity_examples():
    trunc = Truncation(3)
    u = velocity_from_vorticity(VorticityField.from_modes(3, {(1, 0): 1.0}))
    i, j = trunc.index((1, 0))
    assert u[0, i, j] == pytest.approx(0.0)
    assert u[1, i, j] == pytest.approx(1j)
    u = velocity_from_vorticity(VorticityField.from_modes(3, {(0, 2): 4.0}))
    i, j = trunc.index((0, 2))
    assert u[0, i, j] == pytest.approx(-2j)
    assert u[1, i, j] == pytest.approx(0.0)


def test_velocity_divergence_free():
    trunc = Truncation(6)
    f = random_field(trunc, stream(9))
    u = velocity_from_vorticity(f)
    lat = trunc.lattice
    assert np.max(np.abs(lat.kx * u[0] + lat.ky * u[1])) < 1e-14


def test_saturating_profiles_inside_region():
    trunc = Truncation(6)
    p = NormParams(1.5, 3.5, 2.0)
    family = saturating_family(trunc, p)
    assert set(family) == {"smooth", "ascending", "descending"}
    for f in family.values():
        assert in_region_U(f, p)
    smooth = family["smooth"]
    tight_phi = abs(enstrophy(smooth) - p.D ** 2) <= 1e-10 * p.D ** 2
    tight_norm = abs(d_norm(smooth, p) - p.D ** p.alpha) <= 1e-10 * p.D ** p.alpha
    assert tight_phi or tight_norm
    half = saturating_field(trunc, p, "smooth", fill=0.5)
    assert enstrophy(half) == pytest.approx(0.25 * enstrophy(smooth))


def test_saturating_unknown_profile():
    with pytest.raises(ValueError):
        saturating_field(Truncation(4), NormParams(1.5, 3.5, 2.0), "spiral")


def test_saturating_overfill_rejected():
    with pytest.raises(InitialDataError):
        saturating_field(Truncation(4), NormParams(1.5, 3.5, 2.0), "smooth", fill=1.5)


def test_complete_from_half_batched():
    trunc = Truncation(3)
    rng = np.random.default_rng(0)
    half = rng.standard_normal((2, trunc.n_half)) + 1j * rng.standard_normal((2, trunc.n_half))
    full = complete_from_half(trunc, half)
    assert full.shape == (2,) + trunc.shape
    for a in full:
        VorticityField(trunc, a)


if __name__ == "__main__":
    test_enstrophy_examples()
    test_d_norm_example()
    test_region_boundary_included()
    test_minimal_D_matches_root()
    test_velocity_examples()
    print("lattice field tests passed")
