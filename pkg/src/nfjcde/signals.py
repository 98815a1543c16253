"""Pilot and data frames, the received-signal model and hard decisions."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .geometry import _as_rng, beam_transform

PILOT_MODES = ("harmonic", "random", "orthogonal")


class Constellation:
    """Square Gray-mapped QAM with average energy ``energy``.

    Symbol index ``s`` carries ``log2(Q)`` bits, MSB first: the upper half
    select the in-phase level and the lower half the quadrature level, each
    through a reflected Gray code.
    """

    def __init__(self, order: int, energy: float = 1.0):
        m = int(round(np.log2(order)))
        if order < 4 or 2**m != order or m % 2:
            raise ValueError(f"square QAM needs order 4, 16, 64, 256, ...; got {order}")
        self.order = order
        self.bits_per_symbol = m
        self.energy = float(energy)
        half = m // 2
        side = 2**half
        levels = np.arange(-(side - 1), side, 2, dtype=float)
        gray = np.arange(side) ^ (np.arange(side) >> 1)
        level_of_code = np.empty(side, dtype=int)
        level_of_code[gray] = np.arange(side)
        idx = np.arange(order)
        i_code, q_code = idx >> half, idx & (side - 1)
        pts = levels[level_of_code[i_code]] + 1j * levels[level_of_code[q_code]]
        pts *= np.sqrt(self.energy / np.mean(np.abs(pts) ** 2))
        self.points = pts
        shifts = np.arange(m - 1, -1, -1)
        self.bit_table = ((idx[:, None] >> shifts) & 1).astype(np.uint8)

    def __repr__(self):
        return f"Constellation(order={self.order}, energy={self.energy})"

    @property
    def avg_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def bits(self, indices) -> np.ndarray:
        return self.bit_table[np.asarray(indices)]


@dataclass
class Frame:
    X_p: np.ndarray
    X_d: np.ndarray
    data_indices: np.ndarray | None = None

    @property
    def X(self) -> np.ndarray:
        return np.concatenate([self.X_p, self.X_d], axis=1)

    @property
    def K_p(self) -> int:
        return self.X_p.shape[1]

    @property
    def K_d(self) -> int:
        return self.X_d.shape[1]

    @property
    def pilot_index_set(self) -> np.ndarray:
        return np.arange(self.K_p)

    @property
    def data_index_set(self) -> np.ndarray:
        return np.arange(self.K_p, self.K_p + self.K_d)


@dataclass
class ReceivedSignal:
    Y_spatial: np.ndarray
    Y_beam: np.ndarray
    noise_var: float


def max_cross_correlation(X_p: np.ndarray) -> float:
    """Largest normalised inner product between distinct pilot rows."""
    G = X_p @ X_p.conj().T
    norms = np.sqrt(np.real(np.diag(G)))
    C = np.abs(G) / np.outer(norms, norms)
    np.fill_diagonal(C, 0.0)
    return float(C.max()) if len(C) > 1 else 0.0


def welch_bound(num_vectors: int, dim: int) -> float:
    if num_vectors <= dim:
        return 0.0
    return float(np.sqrt((num_vectors - dim) / (dim * (num_vectors - 1))))


def design_pilots(U: int, K_p: int, seed=None, mode: str = "harmonic",
                  energy: float = 1.0, candidates: int = 32) -> np.ndarray:
    """Unit-modulus pilot matrix ``X_p`` of shape ``(U, K_p)``.

    ``harmonic`` rows are a ``K_p``-subset of the columns of a ``U``-point
    DFT with a random phase per row; the subset with the lowest maximal row
    cross-correlation is kept (all subsets when few, else ``candidates``
    random draws). ``random`` draws QPSK rows with the same
    best-of selection. ``orthogonal`` needs ``K_p >= U`` and returns scaled
    DFT rows. Every row has norm ``sqrt(K_p * energy)``.
    """
    if U < 1 or K_p < 1:
        raise ValueError("U and K_p must be positive")
    if mode not in PILOT_MODES:
        raise ValueError(f"unknown pilot mode {mode!r}")
    rng = _as_rng(seed)
    amp = np.sqrt(energy)

    if mode == "orthogonal" or (mode == "harmonic" and K_p >= U):
        if K_p < U:
            raise ValueError("orthogonal pilots need K_p >= U")
        F = np.exp(-2j * np.pi * np.outer(np.arange(U), np.arange(K_p)) / K_p)
        return amp * F

    if mode == "harmonic":
        # row coherence depends only on the chosen DFT columns; scan them all when cheap
        if comb(U, K_p) <= 4 * candidates:
            subsets = [np.array(c) for c in combinations(range(U), K_p)]
        else:
            subsets = [np.sort(rng.choice(U, size=K_p, replace=False)) for _ in range(candidates)]
        best, best_score = None, np.inf
        for cols in subsets:
            X = np.exp(-2j * np.pi * np.outer(np.arange(U), cols) / U)
            score = max_cross_correlation(X)
            if score < best_score - 1e-12:
                best, best_score = X, score
        return amp * best * np.exp(2j * np.pi * rng.random(U))[:, None]

    best, best_score = None, np.inf
    for _ in range(candidates):
        X = np.exp(0.5j * np.pi * (rng.integers(0, 4, size=(U, K_p)) + 0.5))
        score = max_cross_correlation(X)
        if score < best_score - 1e-12:
            best, best_score = X, score
    return amp * best


def draw_data(U: int, K_d: int, constellation: Constellation, seed=None):
    """Uniform i.i.d. data symbols; returns ``(symbols, indices)``."""
    rng = _as_rng(seed)
    idx = rng.integers(0, constellation.order, size=(U, K_d))
    return constellation.points[idx], idx


def transmit(H_spatial: np.ndarray, X: np.ndarray, snr_db: float | None, seed=None,
             noise_var: float | None = None) -> ReceivedSignal:
    """Pass ``X`` through ``H_spatial`` and add calibrated complex AWGN.

    The noise variance is set per realisation so that
    ``||HX||_F^2 / (N K sigma^2)`` equals the linear SNR. ``snr_db=None`` or
    ``+inf`` switches the noise off.
    """
    HX = H_spatial @ X
    N, K = HX.shape
    if noise_var is None:
        if snr_db is None or snr_db == np.inf:
            noise_var = 0.0
        else:
            snr = 10 ** (snr_db / 10)
            if not snr > 0:
                raise ValueError("SNR must be positive in linear scale")
            noise_var = float(np.sum(np.abs(HX) ** 2) / (N * K * snr))
    rng = _as_rng(seed)
    if noise_var > 0:
        W = (rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K))) * np.sqrt(noise_var / 2)
        Y = HX + W
    else:
        Y = HX.copy()
    return ReceivedSignal(Y, beam_transform(Y), float(noise_var))


def hard_decision(x_hat, constellation: Constellation):
    """Nearest-point decisions; ties resolve to the lowest symbol index.

    Returns ``(indices, bits)`` where ``bits`` has a trailing axis of length
    ``log2(Q)``.
    """
    x_hat = np.asarray(x_hat)
    pts = constellation.points
    d = (x_hat.real[..., None] - pts.real) ** 2 + (x_hat.imag[..., None] - pts.imag) ** 2
    idx = np.argmin(d, axis=-1)
    return idx, constellation.bits(idx)
