"""Near-field ULA geometry, multipath channel generation and beam-domain transforms.

The base station array lies on the y-axis with elements centred on the
origin. A path at angle ``theta`` and distance ``r`` is seen by element
``n`` through the exact spherical-wavefront phase
``exp(-j 2 pi / lambda * (r_n - r))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array along the y-axis.

    Parameters
    ----------
    num_antennas : int
        Number of elements ``N``.
    wavelength : float
        Carrier wavelength in metres.
    spacing : float, optional
        Element spacing in metres; half a wavelength when omitted.
    """

    num_antennas: int
    wavelength: float
    spacing: float | None = None
    coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be >= 1")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        n = np.arange(self.num_antennas)
        d = self.spacing
        coords = n * d - (self.num_antennas - 1) * d / 2
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_carrier(cls, num_antennas: int, fc_ghz: float) -> "ArrayGeometry":
        return cls(num_antennas, SPEED_OF_LIGHT / (fc_ghz * 1e9))

    @property
    def N(self) -> int:
        return self.num_antennas

    @property
    def rayleigh_distance(self) -> float:
        aperture = (self.num_antennas - 1) * self.spacing
        return 2 * aperture**2 / self.wavelength


@dataclass(frozen=True)
class PathComponent:
    aoa: float
    distance: float
    gain: complex
    is_los: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.aoa) and abs(self.aoa) <= np.pi / 2):
            raise ValueError(f"aoa must lie in [-pi/2, pi/2], got {self.aoa}")
        if not self.distance > 0:
            raise ValueError(f"distance must be positive, got {self.distance}")


@dataclass
class ChannelRealization:
    per_ue_paths: list[list[PathComponent]]
    H_spatial: np.ndarray
    H_beam: np.ndarray
    rician_factor: float

    @property
    def num_ues(self) -> int:
        return self.H_spatial.shape[1]

    def path_params(self, u: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        paths = self.per_ue_paths[u]
        return (np.array([p.aoa for p in paths]),
                np.array([p.distance for p in paths]),
                np.array([p.gain for p in paths], dtype=complex))


def _path_length_difference(y, theta, r):
    # r_n - r rewritten as (y^2 - 2 r y sin) / (r_n + r) to avoid cancellation at large r
    s = np.sin(theta)
    with np.errstate(invalid="ignore"):
        rn = np.sqrt(r**2 + y**2 - 2 * r * y * s)
        delta = (y**2 - 2 * r * y * s) / (rn + r)
    far = np.isinf(r)
    if np.any(far):
        delta = np.where(far, -y * s, delta)
    return delta


def array_response(geom: ArrayGeometry, theta, r) -> np.ndarray:
    """Near-field steering vector(s).

    ``theta`` and ``r`` may be scalars or equal-shape 1-D arrays; the result
    has shape ``(N,)`` or ``(N, M)``. ``r = inf`` yields the far-field vector.
    """
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("distance must be positive")
    if np.any(np.abs(theta) > np.pi / 2 + 1e-12):
        raise ValueError("angle must lie in [-pi/2, pi/2]")
    scalar = theta.ndim == 0 and r.ndim == 0
    theta, r = np.broadcast_arrays(np.atleast_1d(theta), np.atleast_1d(r))
    y = geom.coords[:, None]
    delta = _path_length_difference(y, theta[None, :], r[None, :])
    a = np.exp(-2j * np.pi / geom.wavelength * delta)
    return a[:, 0] if scalar else a


def far_field_response(geom: ArrayGeometry, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phase = 2 * np.pi * np.multiply.outer(geom.coords, np.sin(theta)) / geom.wavelength
    return np.exp(1j * phase)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix ``D_N`` (``D @ h == beam_transform(h)``)."""
    return np.fft.fft(np.eye(n), axis=0, norm="ortho")


def beam_transform(H_spatial: np.ndarray) -> np.ndarray:
    return np.fft.fft(H_spatial, axis=0, norm="ortho")


def inverse_beam_transform(H_beam: np.ndarray) -> np.ndarray:
    return np.fft.ifft(H_beam, axis=0, norm="ortho")


def energy_bin_count(h_beam: np.ndarray, fraction: float = 0.95) -> int:
    """Smallest number of beam bins holding ``fraction`` of the vector energy."""
    p = np.sort(np.abs(np.ravel(h_beam)) ** 2)[::-1]
    cum = np.cumsum(p)
    return int(np.searchsorted(cum, fraction * cum[-1] * (1 - 1e-12)) + 1)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_channel(geom: ArrayGeometry, num_ues: int, paths_per_ue: int | Sequence[int],
                     theta_range_deg=(-60.0, 60.0), r_range=(1.0, 10.0),
                     rician_k_db: float = 10.0, seed=None,
                     nlos_normalization: str = "per_ue") -> ChannelRealization:
    """Draw a random multiuser near-field channel.

    Path 1 of every UE is the LoS component with variance ``K/(K+1)``; the
    remaining ``L_u - 1`` NLoS gains share ``1/(K+1)``. With
    ``nlos_normalization="total"`` the NLoS variance divides by the total
    path count minus one instead.
    """
    if nlos_normalization not in ("per_ue", "total"):
        raise ValueError(f"unknown nlos_normalization {nlos_normalization!r}")
    rng = _as_rng(seed)
    if np.isscalar(paths_per_ue):
        paths_per_ue = [int(paths_per_ue)] * num_ues
    paths_per_ue = [int(p) for p in paths_per_ue]
    if len(paths_per_ue) != num_ues or min(paths_per_ue) < 1:
        raise ValueError("need one path count >= 1 per UE")
    lo_r, hi_r = r_range
    if not (0 < lo_r <= hi_r < np.inf):
        raise ValueError("r_range must lie within (0, inf)")
    lo_t, hi_t = np.deg2rad(theta_range_deg)
    if not (-np.pi / 2 <= lo_t <= hi_t <= np.pi / 2):
        raise ValueError("theta range must lie within [-90, 90] degrees")

    kf = 10 ** (rician_k_db / 10) if np.isfinite(rician_k_db) else np.inf
    total_paths = sum(paths_per_ue)
    per_ue, columns = [], []
    for L_u in paths_per_ue:
        theta = rng.uniform(lo_t, hi_t, L_u)
        r = rng.uniform(lo_r, hi_r, L_u)
        g = (rng.standard_normal(L_u) + 1j * rng.standard_normal(L_u)) / np.sqrt(2)
        var = np.empty(L_u)
        var[0] = 1.0 if np.isinf(kf) else kf / (kf + 1)
        if L_u > 1:
            denom_paths = (L_u - 1) if nlos_normalization == "per_ue" else (total_paths - 1)
            var[1:] = 0.0 if np.isinf(kf) else 1.0 / ((kf + 1) * denom_paths)
        z = g * np.sqrt(var)
        paths = [PathComponent(float(theta[l]), float(r[l]), complex(z[l]), l == 0)
                 for l in range(L_u)]
        per_ue.append(paths)
        columns.append(array_response(geom, theta, r) @ z)
    H_s = np.stack(columns, axis=1)
    return ChannelRealization(per_ue, H_s, beam_transform(H_s), kf)


def los_beam_amplitude(geom: ArrayGeometry, theta: float, r: float) -> np.ndarray:
    """Beam-domain amplitude ``|D_N a(theta, r)|`` of a unit LoS path."""
    return np.abs(beam_transform(array_response(geom, theta, r)))
