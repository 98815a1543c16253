"""SOMP, UE-path pairing, reconstruction and the LS / P-SOMP baselines."""

import itertools
import tracemalloc

import numpy as np
import pytest

from nfjcde.dictionary import (Dictionary, build_candidate_dictionary, build_dictionary,
                               build_polar_grid)
from nfjcde.geometry import ArrayGeometry, array_response
from nfjcde.initial import (PathEstimateSet, UePaths, estimate_initial, ls_baseline,
                            psomp_baseline, reconstruct_initial, somp, two_d_omp)
from nfjcde.metrics import nmse
from nfjcde.signals import design_pilots, transmit


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _ls_residual(A, Y):
    return np.linalg.norm(Y - A @ np.linalg.lstsq(A, Y, rcond=None)[0])


def kron_omp(Y, atoms, X_p, L_hat):
    """Reference 1-D OMP on the materialised Kronecker system ``vec(Y) = Phi z``."""
    N, L = atoms.shape
    U = X_p.shape[0]
    Phi = np.stack([np.kron(X_p[u], atoms[:, l]) for u in range(U) for l in range(L)], axis=1)
    y = Y.ravel(order="F")
    norms = np.linalg.norm(Phi, axis=0)
    r, sel = y.copy(), []
    for _ in range(L_hat):
        score = np.abs(Phi.conj().T @ r) / norms
        score[sel] = -np.inf
        sel.append(int(np.argmax(score)))
        z = np.linalg.lstsq(Phi[:, sel], y, rcond=None)[0]
        r = y - Phi[:, sel] @ z
    return [(j % L, j // L) for j in sel], z


@pytest.fixture(scope="module")
def small_dict():
    g = ArrayGeometry(8, 0.003)
    return g, build_dictionary(g, build_polar_grid(g, 8, 2, 0.6, (-60, 60)))


def test_somp_single_path_matched_filter(small_dict):
    g, D = small_dict
    for m in (0, 5, 11):
        Y = D.atoms[:, [m]] * (0.7 - 0.2j)
        assert somp(Y, D, 1).support.tolist() == [m]


def test_somp_equals_best_subset_oracle(small_dict):
    g, D = small_dict
    assert D.M == 16
    rng = np.random.default_rng(0)
    for _ in range(30):
        sup = rng.choice(16, 2, replace=False)
        Y = D.atoms[:, sup] @ _cn(rng, 2, 3)
        best = min(itertools.combinations(range(16), 2),
                   key=lambda s: _ls_residual(D.atoms[:, s], Y))
        res = somp(Y, D, 2)
        assert set(res.support.tolist()) == set(best)
        np.testing.assert_allclose(D.atoms[:, res.support] @ res.gains, Y, atol=1e-10)


def test_somp_residual_non_increasing():
    g = ArrayGeometry.from_carrier(64, 100.0)
    D = build_dictionary(g, build_polar_grid(g, 96, 3, 0.6, (-60, 60)))
    rng = np.random.default_rng(1)
    Y = _cn(rng, 64, 6)
    res = somp(Y, D, 40)
    assert len(res.support) == 40
    assert np.all(np.diff(res.residual_norms) <= 1e-9)
    # the incremental residual agrees with a fresh LS fit
    assert res.residual_norms[-1] == pytest.approx(_ls_residual(D.atoms[:, res.support], Y),
                                                   rel=1e-8)


def test_somp_drops_dependent_atoms():
    g = ArrayGeometry(8, 0.003)
    a = array_response(g, 0.2, 3.0)
    atoms = np.stack([a, a, array_response(g, -0.4, 2.0)], axis=1)
    D = Dictionary(atoms, np.array([0.2, 0.2, -0.4]), np.array([3.0, 3.0, 2.0]))
    Y = (a + 0.5 * atoms[:, 2])[:, None]
    res = somp(Y, D, 3)
    assert res.dropped == [1]
    assert sorted(res.support.tolist()) == [0, 2]


def test_somp_rejects_bad_budget(small_dict):
    g, D = small_dict
    with pytest.raises(ValueError):
        somp(D.atoms[:, :1], D, 0)
    with pytest.raises(ValueError):
        somp(D.atoms[:, :1], D, D.M + 1)


@pytest.mark.slow
def test_somp_full_scale_stops_at_rank():
    g = ArrayGeometry.from_carrier(200, 100.0)
    D = build_dictionary(g, build_polar_grid(g, 395, 7, 0.6))
    rng = np.random.default_rng(2)
    res = somp(_cn(rng, 200, 25), D, 250)
    # no more than N linearly independent atoms exist in C^N
    assert len(res.support) == 200
    assert np.all(np.diff(res.residual_norms) <= 1e-9)


def test_pairing_orthogonal_pilots_exact():
    g = ArrayGeometry(16, 0.003)
    cand = build_candidate_dictionary([(0.3, 4.0), (-0.5, 2.0), (0.9, 6.0)], g)
    X_p = design_pilots(2, 2, mode="orthogonal")
    Z = np.zeros((3, 2), complex)
    Z[0, 1], Z[2, 0] = 1 - 0.5j, 0.3 + 0.8j
    Y = cand.atoms @ Z @ X_p
    ps = two_d_omp(Y, cand, X_p, 2)
    assert sorted(ps.pairs) == [(0, 1), (2, 0)]
    assert ps.per_ue[0].z[0] == pytest.approx(Z[2, 0], abs=1e-8)
    assert ps.per_ue[1].z[0] == pytest.approx(Z[0, 1], abs=1e-8)


def test_pairing_equals_exhaustive_triple_oracle():
    g = ArrayGeometry(16, 0.003)
    rng = np.random.default_rng(3)
    mismatches = 0
    for trial in range(5):
        cand = build_candidate_dictionary(
            np.column_stack([rng.uniform(-1, 1, 16), rng.uniform(1, 8, 16)]), g)
        X_p = design_pilots(3, 2, seed=trial)
        pairs = [(l, u) for u in range(3) for l in range(16)]
        truth = [pairs[i] for i in rng.choice(48, 3, replace=False)]
        Y = sum(np.outer(cand.atoms[:, l], X_p[u]) * _cn(rng, 1)[0] for l, u in truth)
        cols = {p: np.kron(X_p[p[1]], cand.atoms[:, p[0]]) for p in pairs}
        y = Y.ravel(order="F")
        best = min(itertools.combinations(pairs, 3),
                   key=lambda s: _ls_residual(np.stack([cols[p] for p in s], 1), y))
        got = two_d_omp(Y, cand, X_p, 3).pairs
        mismatches += set(got) != set(best)
    assert mismatches == 0


@pytest.mark.parametrize("seed", range(10))
def test_pairing_matches_kronecker_omp(seed):
    rng = np.random.default_rng(seed)
    g = ArrayGeometry(16, 0.003)
    cand = build_candidate_dictionary(
        np.column_stack([rng.uniform(-1, 1, 12), rng.uniform(1, 8, 12)]), g)
    X_p = design_pilots(4, 3, seed=seed)
    Y = _cn(rng, 16, 3)
    ref_pairs, ref_z = kron_omp(Y, cand.atoms, X_p, 6)
    ps = two_d_omp(Y, cand, X_p, 6)
    assert ps.pairs == ref_pairs
    z = np.concatenate([p.z for p in ps.per_ue])
    order = [ps.pairs.index(pair) for u in range(4) for pair in ref_pairs if pair[1] == u]
    np.testing.assert_allclose(z, ref_z[order], atol=1e-9)


def test_pairing_masks_duplicate_candidates():
    g = ArrayGeometry(16, 0.003)
    cand = build_candidate_dictionary([(0.3, 4.0), (0.3, 4.0), (-0.2, 3.0)], g)
    X_p = design_pilots(2, 2, mode="orthogonal")
    Y = np.outer(cand.atoms[:, 0], X_p[0]) + np.outer(cand.atoms[:, 2], X_p[1])
    ps = two_d_omp(Y, cand, X_p, 3)
    assert len(set(ps.pairs)) == len(ps.pairs)
    assert not {(0, 0), (1, 0)} <= set(ps.pairs)


@pytest.mark.slow
def test_pairing_full_scale_budget_and_memory():
    g = ArrayGeometry.from_carrier(200, 100.0)
    rng = np.random.default_rng(4)
    cand = build_candidate_dictionary(
        np.column_stack([rng.uniform(-1, 1, 250), rng.uniform(1, 10, 250)]), g)
    X_p = design_pilots(50, 25, seed=0)
    Y = _cn(rng, 200, 25)
    tracemalloc.start()
    ps = two_d_omp(Y, cand, X_p, 250)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    assert int(ps.L_hat_u.sum()) == 250
    # the Kronecker matrix alone would take N K_p L U * 16 bytes = 1 GB
    assert peak < 64e6


def test_reconstruct_oracle_and_empty_ue():
    g = ArrayGeometry(32, 0.003)
    th, r, z = np.array([0.1, -0.3]), np.array([2.0, 5.0]), np.array([1 + 1j, 0.4 - 0.1j])
    H = np.zeros((32, 2), complex)
    H[:, 0] = array_response(g, th, r) @ z
    ps = PathEstimateSet(np.zeros((0, 2)), [UePaths(th, r, z, np.arange(2)),
                                            UePaths(np.zeros(0), np.zeros(0),
                                                    np.zeros(0, complex), np.zeros(0, int))])
    est = reconstruct_initial(ps, g)
    assert np.sum(np.abs(est.H0_spatial[:, 0] - H[:, 0]) ** 2) / np.sum(np.abs(H) ** 2) < 1e-20
    assert np.all(est.H0_spatial[:, 1] == 0)


def test_pipeline_on_grid_high_snr():
    g = ArrayGeometry.from_carrier(64, 100.0)
    D = build_dictionary(g, build_polar_grid(g, 96, 3, 0.6, (-60, 60)))
    rng = np.random.default_rng(5)
    U, K_p = 8, 8
    H = np.zeros((64, U), complex)
    for u in range(U):
        H[:, u] = D.atoms[:, rng.choice(D.M, 2, replace=False)] @ _cn(rng, 2)
    X_p = design_pilots(U, K_p, seed=0)
    sig = transmit(H, X_p, 40.0, seed=1)
    est = estimate_initial(sig.Y_spatial, X_p, D, g, L_hat=16)
    assert nmse(H, est.H0_spatial) < -20


def test_pipeline_identifiability_orthogonal_noiseless():
    g = ArrayGeometry.from_carrier(64, 100.0)
    D = build_dictionary(g, build_polar_grid(g, 64, 3, 0.6, (-60, 60)))
    failures = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        U, K_p, L = 3, 3, 3
        X_p = design_pilots(U, K_p, mode="orthogonal")
        atoms = rng.choice(D.M, L, replace=False)
        owner = rng.permutation(np.arange(L) % U)
        Z = np.zeros((D.M, U), complex)
        Z[atoms, owner] = 0.5 + _cn(rng, L)
        Y = D.atoms @ Z @ X_p
        est = estimate_initial(Y, X_p, D, g, L_hat=L)
        got = {(float(p.theta[i]), float(p.r[i]), u)
               for u, p in enumerate(est.path_set.per_ue) for i in range(p.L)}
        want = {(float(D.theta[a]), float(D.r[a]), int(o)) for a, o in zip(atoms, owner)}
        failures += got != want
    assert failures == 0


def test_ls_orthogonal_exact_and_underdetermined():
    rng = np.random.default_rng(6)
    H = _cn(rng, 8, 4)
    X = design_pilots(4, 4, mode="orthogonal")
    np.testing.assert_allclose(ls_baseline(H @ X, X), H, atol=1e-12)
    Xn = design_pilots(4, 2, seed=0)
    Hh = ls_baseline(H @ Xn, Xn)
    np.testing.assert_allclose(Hh @ Xn, H @ Xn, atol=1e-10)
    assert np.linalg.norm(Hh - H) > 0.1 * np.linalg.norm(H)


def test_psomp_orthogonal_exact_support():
    g = ArrayGeometry.from_carrier(32, 100.0)
    D = build_dictionary(g, build_polar_grid(g, 32, 2, 0.6, (-60, 60)))
    X_p = design_pilots(3, 3, mode="orthogonal")
    sup = [4, 20, 51]
    H = D.atoms[:, sup] * np.array([1.0, 0.5j, -0.8])
    est = psomp_baseline(H @ X_p, X_p, D, g, 1)
    assert [int(p.candidate_index[0]) for p in est.path_set.per_ue] == sup
    np.testing.assert_allclose(est.H0_spatial, H, atol=1e-10)


def test_psomp_single_ue_is_somp():
    g = ArrayGeometry.from_carrier(32, 100.0)
    D = build_dictionary(g, build_polar_grid(g, 32, 2, 0.6, (-60, 60)))
    rng = np.random.default_rng(7)
    X_p = np.exp(2j * np.pi * rng.random((1, 4)))
    Y = _cn(rng, 32, 4)
    est = psomp_baseline(Y, X_p, D, g, 3)
    y_u = Y @ X_p[0].conj() / 4
    ref = somp(y_u[:, None], D, 3)
    np.testing.assert_array_equal(est.path_set.per_ue[0].candidate_index, ref.support)
