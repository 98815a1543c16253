"""Error metrics and the reference detectors used as baselines."""

from __future__ import annotations

import numpy as np

from .signals import Constellation, hard_decision

NMSE_FLOOR_DB = -300.0


def nmse_linear(H_true: np.ndarray, H_est: np.ndarray) -> float:
    return float(np.sum(np.abs(H_true - H_est) ** 2) / np.sum(np.abs(H_true) ** 2))


def nmse(H_true: np.ndarray, H_est: np.ndarray) -> float:
    """``10 log10(||H - H_est||^2 / ||H||^2)`` floored at -300 dB."""
    e = nmse_linear(H_true, H_est)
    return NMSE_FLOOR_DB if e <= 10 ** (NMSE_FLOOR_DB / 10) else float(10 * np.log10(e))


def ber(X_true: np.ndarray, X_hat: np.ndarray, constellation: Constellation) -> float:
    """Fraction of Gray bits in error after nearest-point decisions.

    ``X_true`` may hold constellation points or integer symbol indices.
    """
    X_true = np.asarray(X_true)
    if np.issubdtype(X_true.dtype, np.integer):
        bits = constellation.bits(X_true)
    else:
        bits = hard_decision(X_true, constellation)[1]
    _, bits_hat = hard_decision(X_hat, constellation)
    return float(np.mean(bits != bits_hat))


def lmmse_detect(Y: np.ndarray, H: np.ndarray, noise_var: float, E_s: float = 1.0) -> np.ndarray:
    """Linear MMSE symbol estimates ``(H^H H + noise_var / E_s I)^-1 H^H Y``."""
    U = H.shape[1]
    G = H.conj().T @ H + (noise_var / E_s) * np.eye(U)
    return np.linalg.solve(G, H.conj().T @ Y)


def genie_csi_detector(Y_beam: np.ndarray, H_beam: np.ndarray, X_p: np.ndarray, K_d: int,
                       constellation: Constellation, noise_var: float, geom, config,
                       counter=None) -> np.ndarray:
    """Data half of the joint estimator with the channel revealed.

    Returns the ``(U, K_d)`` data estimates.
    """
    from .jcde import run_jcde

    U = H_beam.shape[1]
    out = run_jcde(Y_beam, X_p, K_d, H_beam, [((), (), ())] * U, constellation, noise_var,
                   geom, config, H_true=H_beam, genie="csi", counter=counter)
    return out.X_hat[:, X_p.shape[1]:]
