"""FLOP bookkeeping: kernel counters and closed-form complexity surrogates.

Counters are incremented by the kernels themselves with complex
multiply-accumulate counts of the dominant operations. The closed forms
evaluate the leading complexity terms of each method without constants,
which is enough to compare scaling across parameters.
"""

from __future__ import annotations

from collections import Counter


class FlopCounter(Counter):
    """Named tallies of kernel operations; ``None`` disables counting."""

    def add(self, name: str, amount) -> None:
        self[name] += int(amount)

    @property
    def total(self) -> int:
        return int(sum(self.values()))


def count(counter: FlopCounter | None, name: str, amount) -> None:
    if counter is not None:
        counter.add(name, amount)


def initial_flops(method: str, *, N: int, U: int, K_p: int, M: int, L_hat: int,
                  L_hat_u: int | None = None) -> float:
    """Leading-order cost of the initial estimators.

    ``M`` is the full dictionary size ``G_theta * G_r``.
    """
    if method == "proposed-initial":
        return (N * K_p * (M + L_hat + N * U)
                + L_hat**2 * (M * K_p + N * U + N * K_p) + L_hat**3 * K_p + L_hat**4)
    if method == "psomp":
        return N * U * (M + L_hat) + L_hat**2 * U * (N + M)
    if method == "ls":
        return N * K_p * U + U**3 + N * U * K_p
    raise ValueError(f"no closed form for {method!r}")


def jcde_flops(method: str, *, N: int, U: int, K_p: int, K_d: int, Q: int, T: int,
               N_c: int, L_hat_u: int, Gbar_theta: int, Gbar_r: int) -> float:
    """Leading-order cost of the joint estimators over ``T`` iterations.

    ``bigabp`` is the far-field bilinear Gaussian BP receiver with an
    antenna-wise denoiser, kept only as a reference cost.
    """
    K = K_p + K_d
    C = N // N_c
    G = Gbar_theta * Gbar_r
    if method == "jcde":
        per_iter = (C * U * K_d * N_c**2 + C * K_d * N_c**3 + U * K_d * Q + U * K * N
                    + U * N * G + U * L_hat_u**2 * N + U * L_hat_u * G)
    elif method == "bigabp":
        per_iter = U * K_d * N * Q + U * K * N + U * L_hat_u**2 * N**2 + U * N**2 * L_hat_u
    elif method == "lmmse":
        # one N x N solve shared by all data columns
        return float(N**3 + N**2 * U + N * U * K_d)
    else:
        raise ValueError(f"no closed form for {method!r}")
    return float(T * per_iter)
