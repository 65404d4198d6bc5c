"""Independent reference implementations used only by the tests.

Nothing here imports the package's numerical code: each oracle is built from
definitions (explicit sums, loops, dense matrices) so it can catch errors in
the vectorised implementations.
"""

from __future__ import annotations

import numpy as np


def dft_row(k: int, n: int) -> np.ndarray:
    l = np.arange(n)
    return np.exp(-2j * np.pi * k * l / n) / np.sqrt(n)


def centered_frequencies(n_sel: int, n_full: int) -> list:
    """The n_sel rows with the smallest |signed frequency|; ties go to the positive one."""
    signed = [(abs(k if k < (n_full + 1) // 2 else k - n_full), 0 if k < (n_full + 1) // 2 else 1, k) for k in range(n_full)]
    return sorted(k for _, _, k in sorted(signed)[:n_sel])


def partial_dft(rows, n_full: int) -> np.ndarray:
    return np.array([dft_row(k, n_full) for k in rows])


def kron_forward(Fa_sel, Fr_sel, phases) -> np.ndarray:
    """Dense (Fr_sel kron diag(e^{j phi}) Fa_sel), acting on column-major vec(X)."""
    left = np.diag(np.exp(1j * np.asarray(phases))) @ Fa_sel
    out = np.zeros((left.shape[0] * Fr_sel.shape[0], left.shape[1] * Fr_sel.shape[1]), dtype=complex)
    for i in range(Fr_sel.shape[0]):
        for j in range(Fr_sel.shape[1]):
            out[i * left.shape[0] : (i + 1) * left.shape[0], j * left.shape[1] : (j + 1) * left.shape[1]] = Fr_sel[i, j] * left
    return out


def patch_loop(X, w: int, s: int) -> np.ndarray:
    side = X.shape[0]
    cols = []
    # column-major over window corners: the row offset varies fastest
    corners = [(r0, c0) for c0 in range(0, side - w + 1, s) for r0 in range(0, side - w + 1, s)]
    for r0, c0 in corners:
        block = X[r0 : r0 + w, c0 : c0 + w]
        cols.append(block.flatten(order="F"))
    return np.array(cols).T


def unpatch_loop(F, w: int, s: int, side: int) -> np.ndarray:
    acc = np.zeros((side, side), dtype=complex)
    cnt = np.zeros((side, side))
    corners = [(r0, c0) for c0 in range(0, side - w + 1, s) for r0 in range(0, side - w + 1, s)]
    for k, (r0, c0) in enumerate(corners):
        acc[r0 : r0 + w, c0 : c0 + w] += F[:, k].reshape((w, w), order="F")
        cnt[r0 : r0 + w, c0 : c0 + w] += 1
    return acc / cnt


def dense_E(forward, unpatch, nvar: int, var_shape) -> np.ndarray:
    """Columns of E = forward(unpatch(e_k)) for every unit vector e_k (column-major)."""
    cols = []
    for k in range(nvar):
        e = np.zeros(nvar, dtype=complex)
        e[k] = 1.0
        cols.append(forward(unpatch(e.reshape(var_shape, order="F"))).ravel(order="F"))
    return np.array(cols).T


def dense_EH(adjoint, patch, nmeas: int, data_shape) -> np.ndarray:
    cols = []
    for k in range(nmeas):
        e = np.zeros(nmeas, dtype=complex)
        e[k] = 1.0
        cols.append(patch(adjoint(e.reshape(data_shape, order="F"))).ravel(order="F"))
    return np.array(cols).T


def svt_oracle(M, tau):
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    return (U * np.maximum(s - tau, 0)) @ Vh


def svt_kkt_residual(M, Y, tau, tol=1e-9) -> float:
    """Violation of ``M - Y in tau * subdiff ||Y||_*``; zero when Y is the prox."""
    G = (M - Y) / tau
    U, s, Vh = np.linalg.svd(Y, full_matrices=False)
    r = int(np.sum(s > tol * max(1.0, s.max(initial=0))))
    U1, V1 = U[:, :r], Vh[:r].conj().T
    Wm = G - U1 @ V1.conj().T
    viol = 0.0
    if r:
        viol = max(viol, np.abs(U1.conj().T @ Wm).max(), np.abs(Wm @ V1).max())
    viol = max(viol, np.linalg.norm(Wm, 2) - 1.0 if Wm.size else 0.0)
    return float(viol)


def soft_oracle(m: complex, tau: float) -> complex:
    a = abs(m)
    return 0j if a <= tau else m * (a - tau) / a


def phase_update_loop(phi, Y, Rt, mu):
    """Per-pulse closed-form update written as an explicit double loop."""
    Ma, Mr = Y.shape
    out = np.array(phi, dtype=float)
    for i in range(Ma):
        acc = 0j
        for j in range(Mr):
            acc += (mu - (Y[i, j].conjugate() * Y[i, j]).real) * np.exp(1j * phi[i]) + Y[i, j].conjugate() * Rt[i, j]
        acc /= Mr
        if acc != 0:
            out[i] = np.angle(acc)
    return out


def entropy_oracle(X) -> float:
    e = np.abs(X) ** 2
    E = e.sum()
    tot = 0.0
    for v in e.ravel():
        if v > 0:
            tot -= v / E * np.log(v / E)
    return tot
