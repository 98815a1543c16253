"""Constellations, pilots, frames, the received-signal model and hard decisions."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfjcde.signals import (Constellation, Frame, design_pilots, draw_data, hard_decision,
                            max_cross_correlation, transmit, welch_bound)


@pytest.mark.parametrize("Q", [4, 16, 64, 256])
def test_constellation_energy_and_gray(Q):
    c = Constellation(Q)
    assert c.avg_energy == pytest.approx(1.0, abs=1e-12)
    assert len(np.unique(np.round(c.points, 12))) == Q
    # Gray: nearest neighbours on the square lattice differ in exactly one bit
    d = np.abs(c.points[:, None] - c.points[None, :])
    dmin = np.min(d[d > 1e-9])
    for i, j in zip(*np.nonzero(np.abs(d - dmin) < 1e-9)):
        assert np.sum(c.bit_table[i] != c.bit_table[j]) == 1


@pytest.mark.parametrize("Q", [2, 8, 32, 12])
def test_constellation_rejects_non_square(Q):
    with pytest.raises(ValueError):
        Constellation(Q)


def test_constellation_energy_scaling():
    assert Constellation(16, energy=2.5).avg_energy == pytest.approx(2.5)


def test_pilot_rows_have_expected_norm():
    X = design_pilots(50, 25, seed=0)
    assert X.shape == (50, 25)
    np.testing.assert_allclose(np.linalg.norm(X, axis=1), np.sqrt(25), rtol=1e-12)
    assert max_cross_correlation(X) > 0


def test_orthogonal_pilots():
    X = design_pilots(4, 4, mode="orthogonal")
    np.testing.assert_allclose(X @ X.conj().T, 4 * np.eye(4), atol=1e-12)
    with pytest.raises(ValueError):
        design_pilots(4, 3, mode="orthogonal")


def test_pilot_coherence_vs_welch_bound():
    # exhaustive pair scan, independent of max_cross_correlation
    X = design_pilots(8, 4, seed=3)
    worst = max(abs(np.vdot(X[j], X[i])) / (np.linalg.norm(X[i]) * np.linalg.norm(X[j]))
                for i, j in itertools.combinations(range(8), 2))
    assert worst == pytest.approx(max_cross_correlation(X))
    assert worst < 1.5 * welch_bound(8, 4)


def test_welch_bound_values():
    assert welch_bound(4, 4) == 0.0
    assert welch_bound(8, 4) == pytest.approx(np.sqrt(4 / 28))


def test_random_pilots_unit_modulus():
    X = design_pilots(6, 3, seed=1, mode="random")
    np.testing.assert_allclose(np.abs(X), 1.0)


def test_pilots_deterministic():
    assert np.array_equal(design_pilots(12, 6, seed=5), design_pilots(12, 6, seed=5))


def test_frame_partition():
    f = Frame(np.ones((2, 3)), np.zeros((2, 4)))
    assert f.X.shape == (2, 7)
    assert np.array_equal(np.concatenate([f.pilot_index_set, f.data_index_set]), np.arange(7))
    assert f.K_p == 3 and f.K_d == 4


def test_data_uniform_and_unit_energy():
    c = Constellation(4)
    sym, idx = draw_data(100, 1000, c, seed=0)
    counts = np.bincount(idx.ravel(), minlength=4)
    n, p = idx.size, 0.25
    assert np.all(np.abs(counts - n * p) < 3 * np.sqrt(n * p * (1 - p)))
    assert np.mean(np.abs(sym) ** 2) == pytest.approx(1.0, rel=0.01)
    np.testing.assert_array_equal(sym, c.points[idx])


def test_noiseless_transmit():
    rng = np.random.default_rng(0)
    H = rng.normal(size=(8, 3)) + 1j * rng.normal(size=(8, 3))
    X = rng.normal(size=(3, 5)) + 0j
    for snr in (None, np.inf):
        sig = transmit(H, X, snr)
        np.testing.assert_array_equal(sig.Y_spatial, H @ X)
        assert sig.noise_var == 0.0


def test_snr_calibration_monte_carlo():
    rng = np.random.default_rng(1)
    ratios = []
    for t in range(100):
        H = rng.normal(size=(16, 4)) + 1j * rng.normal(size=(16, 4))
        X = rng.normal(size=(4, 10)) + 1j * rng.normal(size=(4, 10))
        sig = transmit(H, X, 0.0, seed=t)
        HX = H @ X
        ratios.append(np.sum(np.abs(sig.Y_spatial - HX) ** 2) / np.sum(np.abs(HX) ** 2))
    assert 0.97 <= np.mean(ratios) <= 1.03


def test_noise_variance_formula():
    H = np.ones((4, 2), complex)
    X = np.ones((2, 3), complex)
    sig = transmit(H, X, 10.0, seed=0)
    assert sig.noise_var == pytest.approx(np.sum(np.abs(H @ X) ** 2) / (4 * 3 * 10))


def test_zero_linear_snr_rejected():
    with pytest.raises(ValueError):
        transmit(np.ones((2, 1)), np.ones((1, 1)), -np.inf)


def test_transmit_reproducible():
    H, X = np.ones((4, 2)), np.ones((2, 3))
    a = transmit(H, X, 5.0, seed=9).Y_spatial
    b = transmit(H, X, 5.0, seed=9).Y_spatial
    assert np.array_equal(a, b)


@pytest.mark.parametrize("Q", [4, 16, 64])
def test_hard_decision_identity_and_perturbation(Q):
    c = Constellation(Q)
    idx, bits = hard_decision(c.points, c)
    np.testing.assert_array_equal(idx, np.arange(Q))
    np.testing.assert_array_equal(bits, c.bit_table)
    idx2, _ = hard_decision(c.points + 1e-9 * (1 + 1j), c)
    np.testing.assert_array_equal(idx2, np.arange(Q))


def test_hard_decision_tie_goes_to_lower_index():
    c = Constellation(4)
    # midpoint of (-1+j)/sqrt2 (index 1) and (1+j)/sqrt2 (index 3)
    idx, _ = hard_decision(np.array([1j / np.sqrt(2)]), c)
    assert idx[0] == 1


@settings(max_examples=50, deadline=None)
@given(re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_hard_decision_is_nearest(re, im):
    c = Constellation(16)
    x = complex(re, im)
    idx, _ = hard_decision(np.array([x]), c)
    assert abs(x - c.points[idx[0]]) <= np.min(np.abs(x - c.points)) + 1e-12
