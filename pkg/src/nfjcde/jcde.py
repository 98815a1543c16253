"""Joint channel and data estimation by expectation propagation.

The beam-domain channel is split as ``H = S + E``: ``S`` follows the
near-field path model and ``E`` is a sparse residual with per-entry
Gaussian priors whose variances are learned by EM. One iteration runs

1. data estimation: soft interference cancellation and a per-sub-array
   LMMSE filter, precision combining over sub-arrays, the QAM posterior,
   and the extrinsic replicas fed back to both halves;
2. residual-error estimation: scalar per-antenna cancellation, combining
   over all symbols, Gaussian shrinkage and extrinsic replicas;
3. the EM update of the residual prior variances;
4. a refit of ``S`` on shrinking local polar grids around the current
   path estimates.

Array layouts: data messages per sub-array are ``(C, U, K)``, error
messages per antenna are ``(N, U, K)``, posteriors are ``(U, K)`` and
``(N, U)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dictionary import R_MIN, build_refinement_grid, grid_width_schedule
from .flops import FlopCounter, count
from .geometry import ArrayGeometry, beam_transform, inverse_beam_transform
from .signals import Constellation, hard_decision


class JcdeDiverged(RuntimeError):
    """Raised when a message turns non-finite."""


@dataclass(frozen=True)
class SubArrayPartition:
    """Even split of ``N`` antennas into ``C`` contiguous sub-arrays."""

    N: int
    C: int

    def __post_init__(self):
        if self.C < 1 or self.N % self.C:
            raise ValueError(f"C={self.C} must divide N={self.N}")

    @property
    def N_c(self) -> int:
        return self.N // self.C

    @property
    def index_sets(self) -> list[np.ndarray]:
        return [np.arange(c * self.N_c, (c + 1) * self.N_c) for c in range(self.C)]

    @property
    def subarray_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.C), self.N_c)


@dataclass
class JcdeConfig:
    T: int = 30
    damping: float = 0.5
    C: int = 4
    Gbar_theta: int = 5
    Gbar_r: int = 5
    sigma_theta_first: float = 5.0
    sigma_theta_last: float = 0.1
    sigma_r_first: float = 5.0
    sigma_r_last: float = 1.0
    sigma_e0: float | None = None
    var_min: float = 1e-12
    var_max: float = 1e6
    eps_div: float = 1e-10
    reinforce: bool = True
    r_min: float = R_MIN

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not 0 < self.var_min < self.var_max:
            raise ValueError("need 0 < var_min < var_max")


@dataclass
class EPState:
    # data side
    xv: np.ndarray
    xiv: np.ndarray
    xw: np.ndarray
    xiw: np.ndarray
    xq_c: np.ndarray
    xiq_c: np.ndarray
    xq: np.ndarray
    xiq: np.ndarray
    xhat: np.ndarray
    xi: np.ndarray
    xb: np.ndarray
    xib: np.ndarray
    # error side
    eq_k: np.ndarray
    xieq_k: np.ndarray
    ev: np.ndarray
    xiev: np.ndarray
    eq: np.ndarray
    xieq: np.ndarray
    ehat: np.ndarray
    xie: np.ndarray
    eb: np.ndarray
    xieb: np.ndarray
    sigma_e: np.ndarray
    # model part
    S: np.ndarray
    theta: list
    r: list
    z: list
    pilot_cols: np.ndarray
    data_cols: np.ndarray

    @property
    def H_beam(self) -> np.ndarray:
        return self.S + self.ehat


@dataclass
class JcdeOutput:
    X_hat: np.ndarray
    H_beam: np.ndarray
    H_spatial: np.ndarray
    state: EPState
    trace: dict = field(default_factory=dict)


def gaussian_divide(mean_post, var_post, mean_msg, var_msg, var_min=1e-12, var_max=1e6,
                    scale=1.0):
    """Divide ``CN(mean_post, var_post)`` by ``CN(mean_msg, scale * var_msg)``.

    Returns ``(mean, var, valid)``. Where the resulting precision is not
    positive the division has no Gaussian answer: ``valid`` is False there,
    the variance is ``var_max`` and the mean falls back to ``mean_post``.
    """
    prec = 1.0 / var_post - 1.0 / (scale * var_msg)
    valid = prec > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(valid, 1.0 / np.where(valid, prec, 1.0), var_max)
        mean = np.where(valid, var * (mean_post / var_post - mean_msg / (scale * var_msg)),
                        mean_post)
    return mean, np.clip(var, var_min, var_max), valid


def _damp(new, old, delta):
    return delta * new + (1 - delta) * old


def _split_rows(a: np.ndarray, partition: SubArrayPartition) -> np.ndarray:
    """``(N, ...)`` -> ``(C, N_c, ...)``."""
    return a.reshape(partition.C, partition.N_c, *a.shape[1:])


def data_measurement_update(Y: np.ndarray, S: np.ndarray, ev: np.ndarray, xiev: np.ndarray,
                            xv: np.ndarray, xiv: np.ndarray, partition: SubArrayPartition,
                            noise_var: float, cols: np.ndarray,
                            counter: FlopCounter | None = None):
    """Soft-IC plus sub-array LMMSE for the columns ``cols``.

    Per sub-array ``c`` and column ``k`` the covariance
    ``Omega = sum_u xi_v h_v h_v^H + (xi_v + |x_v|^2) diag(xi_ve) + noise_var I``
    is factored once and reused for every user.

    Returns ``(xq, xiq)`` of shape ``(C, U, len(cols))``; ``xiq`` is not
    clamped.
    """
    C, N_c = partition.C, partition.N_c
    U = S.shape[1]
    nk = len(cols)
    Hv = _split_rows(ev[:, :, cols] + S[:, :, None], partition)          # C, N_c, U, k
    Hv = Hv.transpose(0, 3, 1, 2)                                        # C, k, N_c, U
    Xi_e = _split_rows(xiev[:, :, cols], partition).transpose(0, 3, 1, 2)
    xv_k = xv[:, :, cols].transpose(0, 2, 1)                             # C, k, U
    xiv_k = xiv[:, :, cols].transpose(0, 2, 1)
    y = _split_rows(Y[:, cols], partition).transpose(0, 2, 1)            # C, k, N_c

    Omega = (Hv * xiv_k[:, :, None, :]) @ Hv.conj().swapaxes(-1, -2)
    diag = np.einsum("cknu,cku->ckn", Xi_e, xiv_k + np.abs(xv_k) ** 2) + noise_var
    idx = np.arange(N_c)
    Omega[..., idx, idx] += diag
    rhs = np.concatenate([Hv, y[..., None]], axis=-1)
    sol = np.linalg.solve(Omega, rhs)
    count(counter, "lmmse_factorization", C * nk * N_c**3)
    count(counter, "lmmse_solve", C * nk * N_c**2 * (U + 1))

    HvH = Hv.conj().swapaxes(-1, -2)
    G = HvH @ sol[..., :U]
    b = (HvH @ sol[..., U:])[..., 0]
    gdiag = np.real(np.diagonal(G, axis1=-2, axis2=-1))
    num = b - (G @ xv_k[..., None])[..., 0] + np.diagonal(G, axis1=-2, axis2=-1) * xv_k
    with np.errstate(divide="ignore", invalid="ignore"):
        xq = num / gdiag
        xiq = 1.0 / gdiag - xiv_k
    return xq.transpose(0, 2, 1), xiq.transpose(0, 2, 1)


def combine_precision(means: np.ndarray, variances: np.ndarray, axis: int):
    """Product of Gaussians along ``axis``."""
    prec = np.sum(1.0 / variances, axis=axis)
    var = 1.0 / prec
    return var * np.sum(means / variances, axis=axis), var


def qam_denoise(xq, xiq, constellation: Constellation, counter: FlopCounter | None = None):
    """Posterior mean and variance of a uniform QAM symbol seen in ``CN(xq, xiq)``."""
    xq = np.asarray(xq)
    xiq = np.asarray(xiq, dtype=float)
    if xiq.size and np.all(np.isinf(xiq)):
        raise ValueError("all observation variances are infinite")
    pts = constellation.points
    d = np.abs(pts - xq[..., None]) ** 2
    with np.errstate(invalid="ignore"):
        logits = -d / xiq[..., None]
    logits = np.nan_to_num(logits, nan=0.0)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    mean = w @ pts
    var = np.maximum(w @ np.abs(pts) ** 2 - np.abs(mean) ** 2, 0.0)
    count(counter, "denoiser", xq.size * len(pts))
    return mean, var


def error_measurement_update(Y: np.ndarray, S: np.ndarray, ev: np.ndarray, xiev: np.ndarray,
                             xw: np.ndarray, xiw: np.ndarray, partition: SubArrayPartition,
                             noise_var: float, eps_div: float = 1e-10, var_max: float = 1e6,
                             counter: FlopCounter | None = None):
    """Per-antenna scalar measurements of the residual error entries.

    ``xw``/``xiw`` are per sub-array ``(C, U, K)`` and are broadcast to the
    antennas of each sub-array. Returns ``(eq, xieq)`` of shape ``(N, U, K)``;
    entries whose replica power is below ``eps_div`` carry no information
    (mean 0, variance ``var_max``).
    """
    sub = partition.subarray_of
    xw_n = xw[sub]
    xiw_n = xiw[sub]
    N, U, K = ev.shape
    pw = np.abs(xw_n) ** 2
    e_terms = xw_n * ev
    model = np.einsum("nuk,nu->nk", xw_n, S)
    y_tilde = Y[:, None, :] - (e_terms.sum(axis=1)[:, None, :] - e_terms) - model[:, None, :]
    shared = np.sum((np.abs(ev) ** 2 + np.abs(S)[:, :, None] ** 2 + xiev) * xiw_n, axis=1)
    leak = xiev * pw
    phi = shared[:, None, :] + (leak.sum(axis=1)[:, None, :] - leak) + noise_var
    ok = pw >= eps_div
    with np.errstate(divide="ignore", invalid="ignore"):
        eq = np.where(ok, xw_n.conj() * y_tilde / pw, 0.0)
        xieq = np.where(ok, phi / pw, var_max)
    count(counter, "error_update", N * U * K)
    return eq, np.minimum(xieq, var_max)


def error_denoise(eq_k, xieq_k, sigma_e):
    """Combine over symbols and shrink with the ``CN(0, sigma_e)`` prior.

    Returns ``(ehat, xie, eq, xieq)`` with the combined measurement last.
    """
    eq, xieq = combine_precision(eq_k, xieq_k, axis=2)
    ehat = sigma_e * eq / (sigma_e + xieq)
    xie = 1.0 / (1.0 / sigma_e + 1.0 / xieq)
    return ehat, xie, eq, xieq


def em_step(ehat, xie, var_min=1e-12):
    """Prior variance update ``|e|^2 + xi_e``, floored at ``var_min``."""
    return np.maximum(np.abs(ehat) ** 2 + xie, var_min)


def reinforce_model(H_beam_est: np.ndarray, S_prev: np.ndarray, theta_prev: list, r_prev: list,
                    z_prev: list, sigma_theta: float, sigma_r: float, Gbar_theta: int,
                    Gbar_r: int, geom: ArrayGeometry, r_min: float = R_MIN,
                    counter: FlopCounter | None = None):
    """Refit the model part on local grids around the previous path estimates.

    For each UE the spatial channel estimate is matched greedily, one atom
    per path block, with a joint LS refit of all gains after each pick.
    ``sigma_theta`` is in radians. A UE keeps its previous column and
    parameters when the refit is rank deficient.

    Returns ``(S, theta, r, z)``.
    """
    H_sp = inverse_beam_transform(H_beam_est)
    S = S_prev.copy()
    theta_out, r_out, z_out = [], [], []
    for u in range(H_sp.shape[1]):
        tp, rp = np.atleast_1d(theta_prev[u]), np.atleast_1d(r_prev[u])
        if len(tp) == 0:
            theta_out.append(tp), r_out.append(rp), z_out.append(np.atleast_1d(z_prev[u]))
            continue
        D = build_refinement_grid(tp, rp, sigma_theta, sigma_r, Gbar_theta, Gbar_r, geom,
                                  ue=u, r_min=r_min)
        fit = _block_omp(H_sp[:, u], D.atoms, D.blocks)
        count(counter, "reinforce", geom.N * D.M * len(tp) + geom.N * len(tp) ** 2)
        if fit is None:
            theta_out.append(tp), r_out.append(rp), z_out.append(np.atleast_1d(z_prev[u]))
            continue
        picks, z = fit
        theta_out.append(D.theta[picks])
        r_out.append(D.r[picks])
        z_out.append(z)
        S[:, u] = beam_transform(D.atoms[:, picks] @ z)
    return S, theta_out, r_out, z_out


def _block_omp(h: np.ndarray, atoms: np.ndarray, blocks: list):
    """OMP picking one atom per block, then one cyclic re-pick pass; picks in block order."""
    n_blocks = len(blocks)
    block_of = np.empty(atoms.shape[1], dtype=int)
    for b, (lo, hi) in enumerate(blocks):
        block_of[lo:hi] = b
    norms2 = np.sum(np.abs(atoms) ** 2, axis=0)
    open_block = np.ones(n_blocks, dtype=bool)
    chosen = {}
    resid = h.copy()
    z = None
    for _ in range(n_blocks):
        score = np.abs(atoms.conj().T @ resid) ** 2 / norms2
        score[~open_block[block_of]] = -np.inf
        j = int(np.argmax(score))
        chosen[block_of[j]] = j
        open_block[block_of[j]] = False
        sel = np.array([chosen[b] for b in sorted(chosen)])
        A = atoms[:, sel]
        z, _, rank, _ = np.linalg.lstsq(A, h, rcond=None)
        if rank < len(sel):
            return None
        resid = h - A @ z
    # one cyclic pass: re-pick each block's atom by exact LS fit with the others held fixed
    for b, (lo, hi) in enumerate(blocks):
        others = [chosen[c] for c in range(n_blocks) if c != b]
        cand, target = atoms[:, lo:hi], h
        if others:
            Q, _ = np.linalg.qr(atoms[:, others])
            cand = cand - Q @ (Q.conj().T @ cand)
            target = h - Q @ (Q.conj().T @ h)
        pn = np.sum(np.abs(cand) ** 2, axis=0)
        score = np.where(pn > 1e-12 * norms2[lo:hi],
                         np.abs(cand.conj().T @ target) ** 2 / np.maximum(pn, 1e-300), -np.inf)
        if np.isfinite(score).any():
            chosen[b] = lo + int(np.argmax(score))
    picks = np.array([chosen[b] for b in range(n_blocks)])
    z, _, rank, _ = np.linalg.lstsq(atoms[:, picks], h, rcond=None)
    if rank < n_blocks:
        return None
    return picks, z


def _initial_sigma_e(Y, S, X_p, pilot_cols, noise_var, E_s, N):
    """Residual-error prior from the pilot misfit of the initial model."""
    S_sp = S
    resid = Y[:, pilot_cols] - S_sp @ X_p
    U, K_p = X_p.shape
    excess = np.sum(np.abs(resid) ** 2) / (N * K_p) - noise_var
    fit = excess / (U * E_s)
    floor = 0.01 * np.mean(np.abs(S) ** 2) if np.any(S) else 1.0 / N
    return float(max(floor, fit))


def init_state(Y_beam: np.ndarray, X_p: np.ndarray, K_d: int, S0: np.ndarray, paths: list,
               constellation: Constellation, partition: SubArrayPartition, noise_var: float,
               config: JcdeConfig) -> EPState:
    """Starting messages: pilots pinned, data at the prior, error at zero mean."""
    N, U = S0.shape
    K_p = X_p.shape[1]
    K = K_p + K_d
    C = partition.C
    E_s = constellation.avg_energy
    pilot_cols, data_cols = np.arange(K_p), np.arange(K_p, K)
    eps = config.var_min

    xv = np.zeros((C, U, K), complex)
    xv[:, :, pilot_cols] = X_p
    xiv = np.full((C, U, K), E_s)
    xiv[:, :, pilot_cols] = eps
    xhat = np.zeros((U, K), complex)
    xhat[:, pilot_cols] = X_p
    xi = np.full((U, K), E_s)
    xi[:, pilot_cols] = eps

    if config.sigma_e0 is not None:
        s0 = float(config.sigma_e0)
    else:
        s0 = _initial_sigma_e(Y_beam, S0, X_p, pilot_cols, noise_var, E_s, N)
    sigma_e = np.full((N, U), s0)
    zeros_nuk = np.zeros((N, U, K), complex)
    theta = [np.asarray(p[0], float) for p in paths]
    r = [np.asarray(p[1], float) for p in paths]
    z = [np.asarray(p[2], complex) for p in paths]
    return EPState(
        xv=xv, xiv=xiv, xw=xv.copy(), xiw=xiv.copy(),
        xq_c=np.zeros((C, U, K_d), complex), xiq_c=np.full((C, U, K_d), config.var_max),
        xq=np.zeros((U, K_d), complex), xiq=np.full((U, K_d), config.var_max),
        xhat=xhat, xi=xi, xb=np.zeros((U, K), complex), xib=np.full((U, K), E_s),
        eq_k=zeros_nuk.copy(), xieq_k=np.full((N, U, K), config.var_max),
        ev=zeros_nuk, xiev=np.full((N, U, K), s0),
        eq=np.zeros((N, U), complex), xieq=np.full((N, U), config.var_max),
        ehat=np.zeros((N, U), complex), xie=sigma_e.copy(),
        eb=np.zeros((N, U), complex), xieb=sigma_e.copy(), sigma_e=sigma_e,
        S=S0.astype(complex).copy(), theta=theta, r=r, z=z,
        pilot_cols=pilot_cols, data_cols=data_cols)


def data_step(state: EPState, Y: np.ndarray, partition: SubArrayPartition, noise_var: float,
              constellation: Constellation, config: JcdeConfig,
              counter: FlopCounter | None = None) -> None:
    """One pass of the data half; updates ``state`` in place."""
    cols = state.data_cols
    vmin, vmax, delta = config.var_min, config.var_max, config.damping
    xq_c, xiq_c = data_measurement_update(Y, state.S, state.ev, state.xiev, state.xv,
                                          state.xiv, partition, noise_var, cols, counter)
    xiq_c = np.clip(np.nan_to_num(xiq_c, nan=vmax, posinf=vmax), vmin, vmax)
    xq_c = np.nan_to_num(xq_c)
    xq, xiq = combine_precision(xq_c, xiq_c, axis=0)
    post_m, post_v = qam_denoise(xq, xiq, constellation, counter)
    post_v = np.clip(post_v, vmin, vmax)

    N_c = partition.N_c
    vm, vv, ok_v = gaussian_divide(post_m[None], post_v[None], xq_c, xiq_c, vmin, vmax)
    wm, wv, ok_w = gaussian_divide(post_m[None], post_v[None], xq_c, xiq_c, vmin, vmax,
                                   scale=N_c)
    bm, bv, ok_b = gaussian_divide(post_m, post_v, xq, xiq, vmin, vmax)

    old = state.xv[:, :, cols], state.xiv[:, :, cols]
    state.xv[:, :, cols] = np.where(ok_v, _damp(vm, old[0], delta), old[0])
    state.xiv[:, :, cols] = np.where(ok_v, _damp(vv, old[1], delta), old[1])
    old = state.xw[:, :, cols], state.xiw[:, :, cols]
    state.xw[:, :, cols] = np.where(ok_w, _damp(wm, old[0], delta), old[0])
    state.xiw[:, :, cols] = np.where(ok_w, _damp(wv, old[1], delta), old[1])
    state.xb[:, cols] = np.where(ok_b, bm, state.xb[:, cols])
    state.xib[:, cols] = np.where(ok_b, bv, state.xib[:, cols])
    state.xhat[:, cols] = _damp(post_m, state.xhat[:, cols], delta)
    state.xi[:, cols] = _damp(post_v, state.xi[:, cols], delta)
    state.xq_c, state.xiq_c, state.xq, state.xiq = xq_c, xiq_c, xq, xiq


def error_step(state: EPState, Y: np.ndarray, partition: SubArrayPartition, noise_var: float,
               config: JcdeConfig, counter: FlopCounter | None = None) -> None:
    """One pass of the residual-error half followed by the EM update."""
    vmin, vmax, delta = config.var_min, config.var_max, config.damping
    eq_k, xieq_k = error_measurement_update(Y, state.S, state.ev, state.xiev, state.xw,
                                            state.xiw, partition, noise_var, config.eps_div,
                                            vmax, counter)
    xieq_k = np.clip(xieq_k, vmin, vmax)
    ehat, xie, eq, xieq = error_denoise(eq_k, xieq_k, state.sigma_e)
    xie = np.clip(xie, vmin, vmax)
    vm, vv, ok = gaussian_divide(ehat[:, :, None], xie[:, :, None], eq_k, xieq_k, vmin, vmax)
    state.ev = np.where(ok, _damp(vm, state.ev, delta), state.ev)
    state.xiev = np.where(ok, _damp(vv, state.xiev, delta), state.xiev)
    bm, bv, okb = gaussian_divide(ehat, xie, eq, xieq, vmin, vmax)
    state.eb = np.where(okb, bm, state.eb)
    state.xieb = np.where(okb, bv, state.xieb)
    state.eq_k, state.xieq_k, state.eq, state.xieq = eq_k, xieq_k, eq, xieq
    state.ehat, state.xie = ehat, xie
    state.sigma_e = em_step(ehat, xie, vmin)


def model_step(state: EPState, t: int, geom: ArrayGeometry, config: JcdeConfig,
               schedules, counter: FlopCounter | None = None) -> None:
    """Refit ``S`` and move the error messages so that ``S + E`` is unchanged."""
    sig_t, sig_r = schedules
    S_new, th, rr, zz = reinforce_model(state.H_beam, state.S, state.theta, state.r, state.z,
                                        np.deg2rad(sig_t[t - 1]), sig_r[t - 1],
                                        config.Gbar_theta, config.Gbar_r, geom,
                                        config.r_min, counter)
    shift = state.S - S_new
    state.ehat = state.ehat + shift
    state.ev = state.ev + shift[:, :, None]
    state.S, state.theta, state.r, state.z = S_new, th, rr, zz


def _check_finite(state: EPState, t: int) -> None:
    for name in ("xhat", "xi", "ehat", "xie", "S", "sigma_e"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise JcdeDiverged(f"non-finite {name} at iteration {t}")


def run_jcde(Y_beam: np.ndarray, X_p: np.ndarray, K_d: int, S0: np.ndarray, paths: list,
             constellation: Constellation, noise_var: float, geom: ArrayGeometry,
             config: JcdeConfig, *, H_true: np.ndarray | None = None,
             X_true: np.ndarray | None = None, data_indices: np.ndarray | None = None,
             genie: str | None = None, counter: FlopCounter | None = None) -> JcdeOutput:
    """Run ``T`` EP sweeps.

    Parameters
    ----------
    Y_beam : (N, K_p + K_d) beam-domain received block, pilots first.
    X_p : (U, K_p) pilot symbols.
    S0 : (N, U) initial beam-domain channel (model part).
    paths : per-UE ``(theta, r, z)`` of the initial path estimates.
    H_true, X_true : optional true beam-domain channel and ``(U, K)`` symbols;
        when given, per-iteration NMSE and BER traces are recorded.
    data_indices : optional true data symbol indices for the BER trace.
    genie : ``"csi"`` pins ``S`` to ``H_true`` and skips the error half;
        ``"data"`` pins all symbols to ``X_true`` and skips the data half.
    """
    N, U = S0.shape
    partition = SubArrayPartition(N, config.C)
    noise_var = max(float(noise_var), config.var_min)
    if genie not in (None, "csi", "data"):
        raise ValueError(f"unknown genie mode {genie!r}")
    if genie == "csi" and H_true is None:
        raise ValueError("genie CSI needs H_true")
    if genie == "data" and X_true is None:
        raise ValueError("genie data needs X_true")

    if genie == "csi":
        S0 = H_true
    state = init_state(Y_beam, X_p, K_d, S0, paths, constellation, partition, noise_var, config)
    if genie == "csi":
        state.xiev[:] = config.var_min
        state.sigma_e[:] = config.var_min
        state.xie[:] = config.var_min
    if genie == "data":
        X = X_true
        for arr in (state.xv, state.xw):
            arr[:] = X[None]
        for arr in (state.xiv, state.xiw):
            arr[:] = config.var_min
        state.xhat[:] = X
        state.xi[:] = config.var_min

    schedules = (grid_width_schedule(config.sigma_theta_first, config.sigma_theta_last, config.T),
                 grid_width_schedule(config.sigma_r_first, config.sigma_r_last, config.T))
    trace = {"nmse_db": [], "ber": []}
    for t in range(1, config.T + 1):
        if genie != "data":
            data_step(state, Y_beam, partition, noise_var, constellation, config, counter)
        if genie != "csi":
            error_step(state, Y_beam, partition, noise_var, config, counter)
            if config.reinforce:
                model_step(state, t, geom, config, schedules, counter)
        _check_finite(state, t)
        if H_true is not None:
            err = np.sum(np.abs(H_true - state.H_beam) ** 2) / np.sum(np.abs(H_true) ** 2)
            trace["nmse_db"].append(10 * np.log10(max(err, 1e-30)))
        if X_true is not None or data_indices is not None:
            if data_indices is None:
                data_indices = hard_decision(X_true[:, state.data_cols], constellation)[0]
            _, bits_hat = hard_decision(state.xhat[:, state.data_cols], constellation)
            trace["ber"].append(float(np.mean(bits_hat != constellation.bits(data_indices))))

    X_hat = state.xhat.copy()
    X_hat[:, state.pilot_cols] = X_p
    H_beam = state.H_beam
    return JcdeOutput(X_hat, H_beam, inverse_beam_transform(H_beam), state, trace)
