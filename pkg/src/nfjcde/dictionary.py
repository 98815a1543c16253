"""Polar-domain grids and steering-vector dictionaries.

Three dictionaries are used: the full angle-distance grid searched by SOMP,
the candidate dictionary holding the SOMP picks for UE-path pairing, and the
per-UE local grids that shrink around the current path estimates during the
JCDE iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .geometry import ArrayGeometry, array_response

R_MIN = 0.5
_COS2_FLOOR = 0.01


def max_grid_distance(num_antennas: int, wavelength: float, gamma_coh: float) -> float:
    """Largest distance ring ``2 N^2 lambda sqrt(0.001624 / (1 - gamma))``."""
    if not 0 < gamma_coh < 1:
        raise ValueError("gamma_coh must lie in (0, 1)")
    return 2 * num_antennas**2 * wavelength * np.sqrt(0.001624 / (1 - gamma_coh))


def fresnel_coherence(geom: ArrayGeometry, delta_inv_r: float, theta: float = 0.0) -> float:
    """Second-order (Fresnel) coherence of two atoms at angle ``theta`` whose
    reciprocal distances differ by ``delta_inv_r``."""
    y = geom.coords
    phase = np.pi * delta_inv_r * np.cos(theta) ** 2 * y**2 / geom.wavelength
    return float(np.abs(np.mean(np.exp(-1j * phase))))


def ring_spacing(geom: ArrayGeometry, gamma_coh: float) -> float:
    """Broadside step in ``1/r`` that gives Fresnel coherence ``gamma_coh``."""
    f = lambda d: fresnel_coherence(geom, d) - gamma_coh
    # first crossing below gamma: bracket it by doubling from a tiny step
    hi = geom.wavelength / (geom.coords[-1] ** 2)
    while f(hi) > 0:
        hi *= 1.5
        if hi > 1e12:
            raise ValueError("coherence target not reachable for this array")
    return brentq(f, 0.0, hi, xtol=1e-14 * hi)


@dataclass(frozen=True)
class PolarGrid:
    """Angle grid with per-angle distance rings.

    ``distances[g, s]`` is ring ``s`` at angle ``angles[g]``; ring 0 sits at
    ``r_max`` and further rings move towards the array in equal steps of
    ``1/r`` scaled by ``1/cos^2(theta)``.
    """

    angles: np.ndarray
    distances: np.ndarray
    gamma_coh: float
    r_max: float

    @property
    def G_theta(self) -> int:
        return len(self.angles)

    @property
    def G_r(self) -> int:
        return self.distances.shape[1]

    @property
    def size(self) -> int:
        return self.distances.size


@dataclass(frozen=True)
class Dictionary:
    """Steering-vector dictionary with per-atom ``(theta, r)`` tags.

    ``ue`` and ``path`` tag refinement atoms; ``block`` gives the atom range
    ``[start, stop)`` for each path block when the dictionary is blocked.
    """

    atoms: np.ndarray
    theta: np.ndarray
    r: np.ndarray
    ue: np.ndarray | None = None
    path: np.ndarray | None = None
    blocks: list = field(default_factory=list)

    @property
    def M(self) -> int:
        return self.atoms.shape[1]

    @property
    def meta(self) -> list[tuple]:
        ue = self.ue if self.ue is not None else [None] * self.M
        path = self.path if self.path is not None else [None] * self.M
        return [(float(t), float(r), u, l) for t, r, u, l in zip(self.theta, self.r, ue, path)]


def _next_ring(geom: ArrayGeometry, theta: float, inv_r: float, gamma_coh: float,
               step: float) -> float:
    """Smallest ``1/r`` beyond ``inv_r`` whose atom has coherence ``gamma_coh``
    with the atom at ``inv_r``; ``step`` is the Fresnel estimate of the gap."""
    a0 = array_response(geom, theta, 1.0 / inv_r)
    f = lambda d: abs(np.vdot(a0, array_response(geom, theta, 1.0 / (inv_r + d)))) / geom.N \
        - gamma_coh
    lo, hi = 0.0, step / 4
    for _ in range(400):
        if f(hi) <= 0:
            return inv_r + brentq(f, lo, hi, xtol=1e-12 * hi)
        lo, hi = hi, hi + step / 4
    raise ValueError("coherence target not reached between distance rings")


def build_polar_grid(geom: ArrayGeometry, G_theta: int, G_r: int, gamma_coh: float = 0.6,
                     theta_range_deg=(-90.0, 90.0)) -> PolarGrid:
    """Polar sampling: angles uniform in ``sin(theta)``, distances uniform in ``1/r``.

    Angles are the centres of ``G_theta`` equal cells of the sine interval, so
    the end points ``+-90 deg`` are never sampled twice. Ring 0 is at
    ``r_max``; each further ring is the nearest distance whose atom has
    coherence ``gamma_coh`` with the previous ring, which the Fresnel step
    ``ring_spacing / cos^2(theta)`` approximates away from endfire.
    """
    if G_theta < 1 or G_r < 1:
        raise ValueError("G_theta and G_r must be >= 1")
    lo, hi = np.sin(np.deg2rad(theta_range_deg))
    if not hi > lo:
        raise ValueError("theta range is empty")
    step = (hi - lo) / G_theta
    angles = np.arcsin(lo + (np.arange(G_theta) + 0.5) * step)
    r_max = max_grid_distance(geom.N, geom.wavelength, gamma_coh)
    inv_r = np.full((G_theta, G_r), 1.0 / r_max)
    if G_r > 1:
        dinv = ring_spacing(geom, gamma_coh)
        cos2 = np.maximum(np.cos(angles) ** 2, _COS2_FLOOR)
        done: dict[float, np.ndarray] = {}
        for g, th in enumerate(angles):
            # the array is symmetric, so +theta and -theta share their rings
            key = round(abs(float(th)), 12)
            if key not in done:
                row = inv_r[g].copy()
                for s in range(1, G_r):
                    row[s] = _next_ring(geom, abs(th), row[s - 1], gamma_coh, dinv / cos2[g])
                done[key] = row
            inv_r[g] = done[key]
    distances = np.minimum(1.0 / inv_r, r_max)
    return PolarGrid(angles, distances, gamma_coh, r_max)


def build_dictionary(geom: ArrayGeometry, grid: PolarGrid) -> Dictionary:
    """Full polar dictionary, angle-major: column ``g_theta * G_r + g_r``."""
    theta = np.repeat(grid.angles, grid.G_r)
    r = grid.distances.ravel()
    return Dictionary(array_response(geom, theta, r), theta, r)


def build_candidate_dictionary(candidates, geom: ArrayGeometry) -> Dictionary:
    """Dictionary of steering vectors at ``(theta, r)`` candidate points."""
    cand = np.asarray(candidates, dtype=float).reshape(-1, 2)
    if len(cand) == 0:
        raise ValueError("candidate list is empty")
    theta, r = cand[:, 0], cand[:, 1]
    return Dictionary(array_response(geom, theta, r), theta, r, path=np.arange(len(cand)))


def grid_width_schedule(first: float, last: float, T: int) -> np.ndarray:
    """Widths ``a exp(-t/2) + b`` for ``t = 1..T`` hitting ``first`` and ``last``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if T == 1:
        return np.array([float(first)])
    a = (first - last) / (np.exp(-0.5) - np.exp(-T / 2))
    b = first - a * np.exp(-0.5)
    w = a * np.exp(-np.arange(1, T + 1) / 2) + b
    w[0], w[-1] = first, last
    return w


def local_grid(center: float, width: float, count: int) -> np.ndarray:
    if count == 1 or width == 0:
        return np.full(count, float(center))
    return np.linspace(center - width, center + width, count)


def build_refinement_grid(theta_prev, r_prev, sigma_theta: float, sigma_r: float,
                          Gbar_theta: int, Gbar_r: int, geom: ArrayGeometry,
                          ue: int = 0, r_min: float = R_MIN) -> Dictionary:
    """Blocked dictionary of ``Gbar_theta x Gbar_r`` atoms around each path.

    ``sigma_theta`` is in radians. Angles are clipped to ``[-pi/2, pi/2]``
    and distances floored at ``r_min``.
    """
    theta_prev = np.atleast_1d(np.asarray(theta_prev, dtype=float))
    r_prev = np.atleast_1d(np.asarray(r_prev, dtype=float))
    if theta_prev.shape != r_prev.shape:
        raise ValueError("theta_prev and r_prev must have the same length")
    if sigma_theta < 0 or sigma_r < 0:
        raise ValueError("grid widths must be non-negative")
    thetas, rs, paths, blocks = [], [], [], []
    per_block = Gbar_theta * Gbar_r
    for l, (tc, rc) in enumerate(zip(theta_prev, r_prev)):
        t = np.clip(local_grid(tc, sigma_theta, Gbar_theta), -np.pi / 2, np.pi / 2)
        r = np.maximum(local_grid(rc, sigma_r, Gbar_r), r_min)
        tt, rr = np.meshgrid(t, r, indexing="ij")
        thetas.append(tt.ravel())
        rs.append(rr.ravel())
        paths.append(np.full(per_block, l))
        blocks.append((l * per_block, (l + 1) * per_block))
    theta = np.concatenate(thetas) if thetas else np.zeros(0)
    r = np.concatenate(rs) if rs else np.ones(0)
    atoms = array_response(geom, theta, r) if len(theta) else np.zeros((geom.N, 0), complex)
    return Dictionary(atoms, theta, r, ue=np.full(len(theta), ue),
                      path=np.concatenate(paths) if paths else np.zeros(0, int), blocks=blocks)
