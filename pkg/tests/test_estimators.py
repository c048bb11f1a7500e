import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfloc.array_model import ArrayConfig, coupling_matrix, exact_steering, selection_matrices
from nfloc.estimators import (
    CLAMP_VALUE,
    PeakSearchError,
    SearchGrid,
    algorithm1,
    algorithm2,
    find_peaks,
    first_diag_of_inverse,
    initial_doa,
    initial_doa_spectrum,
    music_known_coupling,
    music_spectrum_known_coupling,
    rank_reduced_spectrum,
    rank_reduced_value,
)
from nfloc.signal_sim import generate_coupling

import oracles


def random_noise_basis(rng, M=5, N=1):
    z = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    q, _ = np.linalg.qr(z)
    return q[:, N:]


# ---------------------------------------------------------------- grid


def test_grid_for_array(cfg):
    g = SearchGrid.for_array(cfg)
    assert g.shape == (901, 624)
    assert g.ranges[0] == 1.76 and g.ranges[-1] == 7.99
    assert 3.3 in g.ranges and 30.0 in g.doas
    g.validate(cfg)


def test_grid_rejects_bad_steps():
    with pytest.raises(ValueError):
        SearchGrid(doa_step=0.0)
    with pytest.raises(ValueError):
        SearchGrid(doa_start=10, doa_stop=10.05, doa_step=0.1)


def test_grid_validate_range(cfg):
    with pytest.raises(ValueError):
        SearchGrid(range_start=1.0, range_stop=5.0).validate(cfg)


# ---------------------------------------------------------------- peaks


def test_find_peaks_1d():
    assert find_peaks(np.array([1.0, 3.0, 2.0]), 1) == [1]
    assert find_peaks(np.array([2.0, 2.0, 2.0]), 1) == [0]
    assert find_peaks(np.array([5.0, 1.0, 4.0, 0.0, 4.5]), 3) == [0, 4, 2]
    with pytest.raises(PeakSearchError) as err:
        find_peaks(np.array([1.0, 2.0, 3.0]), 2)
    assert err.value.found == [2]


def test_find_peaks_2d_gaussian_bump():
    x, y = np.meshgrid(np.arange(40), np.arange(30), indexing="ij")
    S = np.exp(-((x - 17) ** 2 + (y - 9) ** 2) / 20.0)
    assert find_peaks(S, 1) == [(17, 9)]
    S2 = S + 0.5 * np.exp(-((x - 5) ** 2 + (y - 25) ** 2) / 10.0)
    assert find_peaks(S2, 2) == [(17, 9), (5, 25)]


def test_find_peaks_2d_uses_four_neighbourhood():
    S = np.array([[0.0, 0.0, 0.0],
                  [0.0, 2.0, 0.0],
                  [0.0, 0.0, 3.0]])
    # (1, 1) only has axis neighbours of 0, so it is a peak despite the diagonal 3
    assert find_peaks(S, 2) == [(2, 2), (1, 1)]


def test_find_peaks_empty():
    with pytest.raises(PeakSearchError):
        find_peaks(np.array([]), 1)


# ---------------------------------------------------------------- rank reduction


def test_first_diag_of_inverse_identity():
    vals, clamped = first_diag_of_inverse(np.eye(3)[None].astype(complex))
    assert vals[0] == pytest.approx(1.0, rel=1e-11) and not clamped[0]


def test_first_diag_of_inverse_singular_is_clamped():
    vals, clamped = first_diag_of_inverse(np.zeros((1, 3, 3), complex))
    assert vals[0] == CLAMP_VALUE and clamped[0]


def _omega_oracle(Uw, doa, r0, P):
    X = oracles.transform_columns(oracles.steering(Uw.shape[0], doa, r0), P)
    Pi = Uw @ Uw.conj().T
    return X.conj().T @ Pi @ X


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 90.0), st.floats(1.76, 7.99),
       st.integers(1, 3))
def test_rank_reduced_matches_qp_oracle(seed, doa, r0, P):
    cfg = ArrayConfig(coupling_support=P)
    Uw = random_noise_basis(np.random.default_rng(seed))
    expected = 1.0 / oracles.constrained_min(_omega_oracle(Uw, doa, r0, P))
    got = rank_reduced_value(cfg, Uw, doa, r0)
    assert got == pytest.approx(expected, rel=1e-9)


def test_rank_reduced_p1_equals_music_identity(rng):
    cfg = ArrayConfig(coupling_support=1)
    Uw = random_noise_basis(rng)
    doas, ranges = np.arange(20.0, 70.0, 1.0), np.arange(2.0, 6.0, 0.1)
    rr, _ = rank_reduced_spectrum(cfg, Uw, doas, ranges)
    mu, _ = music_spectrum_known_coupling(cfg, Uw, np.eye(5), doas, ranges)
    assert np.max(np.abs(rr - mu) / mu) < 1e-12


def test_spectra_invariant_to_noise_basis_rotation(cfg, rng):
    Uw = random_noise_basis(rng)
    Q = oracles.random_unitary(Uw.shape[1], rng)
    doas, ranges = np.arange(0.0, 90.0, 3.0), np.arange(1.8, 7.9, 0.3)
    C = coupling_matrix(cfg, generate_coupling(3, 8))
    for fn in (lambda U: rank_reduced_spectrum(cfg, U, doas, ranges)[0],
               lambda U: music_spectrum_known_coupling(cfg, U, C, doas, ranges)[0],
               lambda U: initial_doa_spectrum(cfg, U, doas)):
        np.testing.assert_allclose(fn(Uw @ Q), fn(Uw), rtol=1e-9)


def test_music_spectrum_positive(cfg, rng):
    Uw = random_noise_basis(rng)
    S, _ = music_spectrum_known_coupling(cfg, Uw, np.eye(5), [10.0, 20.0], [2.0, 3.0])
    assert np.all(S > 0)


def test_initial_doa_p1_is_farfield_music(rng):
    cfg = ArrayConfig(coupling_support=1)
    Uw = random_noise_basis(rng)
    doas = np.arange(0.0, 90.1, 0.5)
    g = np.exp(1j * np.pi * np.cos(np.deg2rad(doas))[:, None] * cfg.indices)
    music = 1 / np.sum(np.abs(g @ Uw.conj()) ** 2, axis=1)
    np.testing.assert_allclose(initial_doa_spectrum(cfg, Uw, doas), music, rtol=1e-10)


def test_initial_doa_far_source(cfg, noiseless_basis):
    grid = SearchGrid.for_array(cfg)
    Uw = noiseless_basis(45.0, 7.9, np.array([1, 0, 0], complex))
    (theta,) = initial_doa(cfg, Uw, grid.doas)
    assert abs(theta - 45.0) <= 1.0


# ---------------------------------------------------------------- estimators

NOISELESS = [(30.0, 3.3), (47.3, 2.51)]


@pytest.mark.parametrize("truth", NOISELESS)
def test_music_known_coupling_noiseless(cfg, fine_grid, noiseless_basis, truth):
    c = generate_coupling(3, 17)
    Uw = noiseless_basis(*truth, c)
    rec = music_known_coupling(cfg, Uw, coupling_matrix(cfg, c), fine_grid, cache=True)
    assert rec.estimates == [truth]
    assert rec.method == "music" and rec.grid_points == (901, 624)


@pytest.mark.parametrize("truth", NOISELESS)
def test_algorithm1_noiseless(cfg, fine_grid, noiseless_basis, truth):
    Uw = noiseless_basis(*truth, generate_coupling(3, 17))
    rec = algorithm1(cfg, Uw, fine_grid, cache=True)
    assert rec.estimates == [truth]
    assert rec.iterations == 0


def test_algorithm1_off_grid_truth_snaps_to_nearest(cfg, noiseless_basis):
    grid = SearchGrid.for_array(cfg, doa_step=1.0, range_step=0.1)
    Uw = noiseless_basis(30.2, 3.32, np.array([1, 0, 0], complex))
    (theta, r), = algorithm1(cfg, Uw, grid).estimates
    assert abs(theta - 30.2) <= 1.0 and abs(r - 3.32) <= 0.1


def test_two_stage_matches_exhaustive_noiseless(cfg, fine_grid, noiseless_basis):
    Uw = noiseless_basis(52.4, 4.07, generate_coupling(3, 3))
    coarse = SearchGrid.for_array(cfg, coarse_doa_step=1.0, coarse_range_step=0.1)
    assert algorithm1(cfg, Uw, coarse).estimates == algorithm1(cfg, Uw, fine_grid).estimates


def test_algorithm1_two_sources(cfg, fine_grid):
    u1 = coupling_matrix(cfg, generate_coupling(3, 1)) @ exact_steering(cfg, 25.0, 3.0)
    u2 = coupling_matrix(cfg, generate_coupling(3, 2)) @ exact_steering(cfg, 65.0, 4.5)
    Uw = oracles.noiseless_noise_basis(np.stack([u1, u2], axis=1))
    rec = algorithm1(cfg, Uw, fine_grid, n_sources=2, cache=True)
    assert sorted(rec.estimates) == [(25.0, 3.0), (65.0, 4.5)]


def test_algorithm2_identity_coupling_noiseless(cfg, fine_grid, noiseless_basis):
    Uw = noiseless_basis(30.0, 3.3, np.array([1, 0, 0], complex))
    rec = algorithm2(cfg, Uw, fine_grid)
    assert rec.estimates == [(30.0, 3.3)]
    assert rec.converged and rec.iterations <= 5


def test_algorithm2_stopping_rule(cfg, fine_grid, noiseless_basis):
    Uw = noiseless_basis(40.0, 3.3, generate_coupling(3, 5))
    rec = algorithm2(cfg, Uw, fine_grid, q=0.1, max_iter=30)
    path = rec.history[0]
    assert rec.iterations == len(path) - 1 <= 30
    if rec.converged:
        assert abs(path[-1] - path[-2]) < 0.1
    # steps before the last one were all at least q
    assert all(abs(b - a) >= 0.1 - 1e-9 for a, b in zip(path[:-2], path[1:-1]))


def test_algorithm2_large_q_stops_after_one_refinement(cfg, fine_grid, noiseless_basis):
    Uw = noiseless_basis(40.0, 3.3, generate_coupling(3, 5))
    rec = algorithm2(cfg, Uw, fine_grid, q=180.0)
    assert rec.iterations == 1 and rec.converged


def test_algorithm2_max_iter_caps(cfg, fine_grid, noiseless_basis):
    Uw = noiseless_basis(40.0, 3.3, generate_coupling(3, 5))
    rec = algorithm2(cfg, Uw, fine_grid, q=1e-6, max_iter=2)
    assert rec.iterations == 2 and not rec.converged


def test_algorithm2_rejects_bad_arguments(cfg, fine_grid, rng):
    Uw = random_noise_basis(rng)
    with pytest.raises(ValueError):
        algorithm2(cfg, Uw, fine_grid, q=0.0)
    with pytest.raises(ValueError):
        algorithm2(cfg, Uw, fine_grid, max_iter=0)
    with pytest.raises(ValueError):
        algorithm2(cfg, Uw, fine_grid, n_sources=2, n_starts=3)


def test_algorithm2_multistart_never_worse(cfg, fine_grid, noiseless_basis):
    Uw = noiseless_basis(30.0, 3.3, generate_coupling(3, 0))
    single = algorithm2(cfg, Uw, fine_grid)
    multi = algorithm2(cfg, Uw, fine_grid, n_starts=3)
    assert multi.peak_values[0] >= single.peak_values[0]
    assert len(multi.history) >= 1
