"""Initial channel estimation from non-orthogonal pilots.

Stage one runs SOMP over the full polar dictionary to collect path
candidates shared by all UEs. Stage two pairs candidates with UEs by greedy
pursuit over the product of candidate atoms and pilot rows, without ever
forming the Kronecker dictionary. LS and per-UE SOMP (P-SOMP) baselines are
included for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .dictionary import Dictionary, build_candidate_dictionary
from .flops import FlopCounter, count
from .geometry import ArrayGeometry, array_response

SPAN_TOL = 1e-10


@dataclass
class SompResult:
    support: np.ndarray
    candidates: np.ndarray
    gains: np.ndarray
    residual_norms: np.ndarray
    dropped: list = field(default_factory=list)


@dataclass
class UePaths:
    theta: np.ndarray
    r: np.ndarray
    z: np.ndarray
    candidate_index: np.ndarray

    @property
    def L(self) -> int:
        return len(self.theta)


@dataclass
class PathEstimateSet:
    candidates: np.ndarray
    per_ue: list[UePaths]
    pairs: list[tuple[int, int]] = field(default_factory=list)
    residual_norms: np.ndarray | None = None

    @property
    def L_hat_u(self) -> np.ndarray:
        return np.array([p.L for p in self.per_ue])


@dataclass
class InitialEstimate:
    H0_spatial: np.ndarray
    path_set: PathEstimateSet


class _IncrementalQR:
    """Gram-Schmidt basis that grows one column at a time (two passes)."""

    def __init__(self, n: int, capacity: int):
        self.Q = np.zeros((n, capacity), dtype=complex)
        self.R = np.zeros((capacity, capacity), dtype=complex)
        self.k = 0

    def try_add(self, a: np.ndarray, tol: float = SPAN_TOL):
        Q = self.Q[:, :self.k]
        c = Q.conj().T @ a
        v = a - Q @ c
        c2 = Q.conj().T @ v
        v -= Q @ c2
        c += c2
        nu = np.linalg.norm(v)
        if nu <= tol * np.linalg.norm(a):
            return None
        q = v / nu
        self.Q[:, self.k] = q
        self.R[:self.k, self.k] = c
        self.R[self.k, self.k] = nu
        self.k += 1
        return q


def somp(Y: np.ndarray, dictionary: Dictionary, L_hat: int,
         counter: FlopCounter | None = None) -> SompResult:
    """Simultaneous OMP with squared-l2 aggregation over the columns of ``Y``.

    The residual correlations are updated in place with each new orthonormal
    direction, so an iteration costs one pass over the dictionary instead of
    a fresh least-squares fit. Atoms that fall in the span of the selected set
    are skipped. Stops early once the dictionary cannot add rank.

    Returns
    -------
    SompResult
        ``support`` indices, ``candidates`` rows ``(theta, r)``, LS ``gains``
        of shape ``(len(support), K)`` and the residual Frobenius norm after
        every accepted atom.
    """
    Y = np.atleast_2d(Y.T).T
    A = dictionary.atoms
    N, M = A.shape
    if L_hat < 1 or L_hat > M:
        raise ValueError("need 1 <= L_hat <= dictionary size")
    norms2 = np.sum(np.abs(A) ** 2, axis=0)
    corr = A.conj().T @ Y
    count(counter, "somp_correlation", M * N * Y.shape[1])
    qr = _IncrementalQR(N, min(L_hat, N))
    energy = float(np.sum(np.abs(Y) ** 2))
    available = np.ones(M, dtype=bool)
    support, proj_rows, res, dropped = [], [], [], []

    while len(support) < L_hat and qr.k < N and available.any():
        score = np.where(available, np.sum(np.abs(corr) ** 2, axis=1) / norms2, -np.inf)
        idx = int(np.argmax(score))
        available[idx] = False
        q = qr.try_add(A[:, idx])
        if q is None:
            dropped.append(idx)
            continue
        proj = q.conj() @ Y
        corr -= np.outer(A.conj().T @ q, proj)
        count(counter, "somp_correlation", M * N + M * Y.shape[1])
        energy = max(energy - float(np.sum(np.abs(proj) ** 2)), 0.0)
        support.append(idx)
        proj_rows.append(proj)
        res.append(np.sqrt(energy))

    k = len(support)
    gains = solve_triangular(qr.R[:k, :k], np.array(proj_rows).reshape(k, -1))
    support = np.array(support, dtype=int)
    cand = np.column_stack([dictionary.theta[support], dictionary.r[support]])
    return SompResult(support, cand, gains, np.array(res), dropped)


def _pairs_by_ue(pairs, gains, cand_dict: Dictionary, U: int) -> list[UePaths]:
    per_ue = []
    for u in range(U):
        sel = [j for j, (l, uu) in enumerate(pairs) if uu == u]
        ls = np.array([pairs[j][0] for j in sel], dtype=int)
        per_ue.append(UePaths(cand_dict.theta[ls], cand_dict.r[ls],
                              np.asarray(gains, dtype=complex)[sel], ls))
    return per_ue


def two_d_omp(Y: np.ndarray, cand_dict: Dictionary, X_p: np.ndarray, L_hat: int,
              counter: FlopCounter | None = None) -> PathEstimateSet:
    """Greedy UE-path pairing on ``Y ~ A Z X_p`` with ``nnz(Z) = L_hat``.

    The pair ``(l, u)`` maximising ``|a_l^H R conj(x_u)| / (||a_l|| ||x_u||)``
    is added each iteration and all gains are refit jointly. The Gram matrix
    of the implicit Kronecker columns factors as ``(a_i^H a_j)(x_i^H x_j)``,
    so the refit uses a growing Cholesky factor and the correlation update
    only needs the small Gram matrices of the atoms and the pilot rows.
    Flattening ties follow ``vec`` order, index ``u * L + l``.
    """
    A = cand_dict.atoms
    N, L = A.shape
    U, K_p = X_p.shape
    if Y.shape != (N, K_p):
        raise ValueError("Y must be N x K_p")
    Ga = A.conj().T @ A
    P = X_p @ X_p.conj().T
    B0 = A.conj().T @ Y @ X_p.conj().T
    count(counter, "pairing_correlation", L * N * K_p + L * K_p * U + L * L * N)
    scale = np.outer(np.sqrt(np.real(np.diag(Ga))), np.sqrt(np.real(np.diag(P))))
    scale[scale == 0] = np.inf
    available = np.ones((L, U), dtype=bool)
    same = np.isclose(cand_dict.theta[:, None], cand_dict.theta[None, :], rtol=0, atol=0) & \
        np.isclose(cand_dict.r[:, None], cand_dict.r[None, :], rtol=0, atol=0)

    max_pairs = min(L_hat, L * U, N * K_p)
    Lc = np.zeros((max_pairs, max_pairs), dtype=complex)
    rhs = np.zeros(max_pairs, dtype=complex)
    pairs: list[tuple[int, int]] = []
    z = np.zeros(0, dtype=complex)
    corr = B0.copy()
    y_energy = float(np.sum(np.abs(Y) ** 2))
    res = []

    while len(pairs) < max_pairs and available.any():
        score = np.where(available, np.abs(corr) / scale, -np.inf)
        flat = int(np.argmax(score.ravel(order="F")))
        l, u = flat % L, flat // L
        # exact duplicates of atom l paired with u are interchangeable with it
        available[same[l], u] = False
        k = len(pairs)
        g = np.array([Ga[lj, l] * P[u, uj] for lj, uj in pairs], dtype=complex)
        d = np.real(Ga[l, l] * P[u, u])
        w = solve_triangular(Lc[:k, :k], g, lower=True) if k else g
        dk2 = d - np.real(np.vdot(w, w))
        if dk2 <= SPAN_TOL * d:
            continue
        Lc[k, :k] = w.conj()
        Lc[k, k] = np.sqrt(dk2)
        rhs[k] = B0[l, u]
        pairs.append((l, u))
        k += 1
        t = solve_triangular(Lc[:k, :k], rhs[:k], lower=True)
        z = solve_triangular(Lc[:k, :k].conj().T, t, lower=False)
        ls = np.array([p[0] for p in pairs])
        us = np.array([p[1] for p in pairs])
        corr = B0 - (Ga[:, ls] * z) @ P[us, :]
        count(counter, "pairing_correlation", L * k * U + k * k)
        res.append(np.sqrt(max(y_energy - float(np.real(np.vdot(z, rhs[:k]))), 0.0)))

    per_ue = _pairs_by_ue(pairs, z, cand_dict, U)
    return PathEstimateSet(np.column_stack([cand_dict.theta, cand_dict.r]), per_ue,
                           pairs, np.array(res))


def reconstruct_initial(path_set: PathEstimateSet, geom: ArrayGeometry) -> InitialEstimate:
    """Channel columns ``A(theta_u, r_u) z_u``; UEs without paths get zeros."""
    U = len(path_set.per_ue)
    H = np.zeros((geom.N, U), dtype=complex)
    for u, p in enumerate(path_set.per_ue):
        if p.L:
            H[:, u] = np.atleast_2d(array_response(geom, p.theta, p.r).T).T @ p.z
    return InitialEstimate(H, path_set)


def estimate_initial(Y_p: np.ndarray, X_p: np.ndarray, full_dict: Dictionary,
                     geom: ArrayGeometry, L_hat: int, L_pairs: int | None = None,
                     counter: FlopCounter | None = None) -> InitialEstimate:
    """Two-stage estimate from the spatial-domain pilot block ``Y_p``."""
    stage1 = somp(Y_p, full_dict, L_hat, counter)
    cand_dict = build_candidate_dictionary(stage1.candidates, geom)
    paths = two_d_omp(Y_p, cand_dict, X_p, L_pairs or L_hat, counter)
    return reconstruct_initial(paths, geom)


def ls_baseline(Y_p: np.ndarray, X_p: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares channel ``Y_p pinv(X_p)``.

    This is the ``eps -> 0`` limit of ``Y X^H (X X^H + eps I)^-1`` and stays
    well defined when ``K_p < U``.
    """
    return Y_p @ np.linalg.pinv(X_p)


def psomp_baseline(Y_p: np.ndarray, X_p: np.ndarray, full_dict: Dictionary,
                   geom: ArrayGeometry, L_hat_u: int,
                   counter: FlopCounter | None = None) -> InitialEstimate:
    """Per-UE SOMP after matched filtering with each pilot row.

    The other UEs' pilots leak into ``Y_p conj(x_u) / ||x_u||^2`` whenever
    the rows are not orthogonal, and nothing here removes that leakage.
    """
    U = X_p.shape[0]
    per_ue = []
    cand = []
    for u in range(U):
        x = X_p[u]
        y_u = Y_p @ x.conj() / np.real(np.vdot(x, x))
        res = somp(y_u[:, None], full_dict, L_hat_u, counter)
        per_ue.append(UePaths(res.candidates[:, 0], res.candidates[:, 1], res.gains[:, 0],
                              res.support))
        cand.append(res.candidates)
    path_set = PathEstimateSet(np.vstack(cand), per_ue)
    return reconstruct_initial(path_set, geom)
