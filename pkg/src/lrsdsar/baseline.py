"""Conventional reference path.

Explicit-inverse ADMM updates for the low-rank and sparse components,
per-sample ADMM autofocus, and the matched-filter (RDA) image.  The fast
solver is verified against these at small sizes and benchmarked against them
at full size.

Vectors over the optimisation variable use column-major ``vec``; the data
vector is ``vec(R)`` column-major as well, so that
``vec(A X B^T) = (B kron A) vec(X)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .linops import (
    ForwardModel,
    ValidationError,
    apply_adjoint,
    apply_forward,
    as_complex_matrix,
    kronecker_matrix,
)
from .patch import PatchConfig, coverage, patchify
from .solver import (
    ISAR_SPARSE,
    AdmmState,
    NumericalError,
    SceneMap,
    SolveResult,
    SolverConfig,
    run_admm,
)
from . import autofocus as af

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096


def vec(M) -> np.ndarray:
    return np.asarray(M).ravel(order="F")


def unvec(v, shape) -> np.ndarray:
    return np.asarray(v).reshape(shape, order="F")


# ------------------------------------------------------------- dense operators


def patch_matrices(smap: SceneMap):
    """Dense ``G`` (scene -> variable) and ``G^-1`` (variable -> scene) on vec'd arrays."""
    side = smap.side
    npix = side * side
    if smap.patch_cfg is None:
        eye = np.eye(npix)
        return eye, eye
    cfg = smap.patch_cfg
    # pixel index (column-major) carried by every patch-matrix entry
    idx = np.arange(npix).reshape((side, side), order="F")
    pix = vec(patchify(idx, cfg).matrix.real).astype(int)
    nvar = pix.size
    G = np.zeros((nvar, npix))
    G[np.arange(nvar), pix] = 1.0
    cov = vec(coverage(cfg))
    Ginv = G.T / cov[:, None]
    return G, Ginv


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """``E = A G^-1`` and its pseudo-adjoint ``E^H = G A^H`` as explicit matrices."""

    E: np.ndarray
    EH: np.ndarray
    var_shape: tuple

    @property
    def gram(self) -> np.ndarray:
        return self.EH @ self.E


def dense_operator(model: ForwardModel, smap: SceneMap, limit: int = DENSE_LIMIT) -> DenseOperator:
    nvar = int(np.prod(smap.shape))
    if nvar > limit:
        raise ValidationError(
            f"dense operator needs {nvar} variables, above the limit of {limit}; "
            "use the fast path (solver.update_L_fast / update_S_fast) at this size"
        )
    A = kronecker_matrix(model)
    G, Ginv = patch_matrices(smap)
    return DenseOperator(A @ Ginv, G @ A.conj().T, smap.shape)


# ------------------------------------------------------------ direct updates


def _rhs(V, other, delta, dense: DenseOperator, R):
    # E^H r + delta V - E^H E other, with V = prox target - Z/delta
    r = vec(R)
    return dense.EH @ r + delta * vec(V) - dense.gram @ vec(other)


def _direct(V, other, delta, dense: DenseOperator, R):
    M = dense.gram + delta * np.eye(dense.gram.shape[0])
    x = np.linalg.solve(M, _rhs(V, other, delta, dense, R))
    return unvec(x, dense.var_shape)


def update_L_direct(state: AdmmState, cfg: SolverConfig, dense: DenseOperator, R) -> np.ndarray:
    """``(E^H E + delta1 I)^-1 (E^H r + delta1 W - Z1 - E^H E S)`` by dense solve."""
    return _direct(state.W - state.Z1 / cfg.delta1, state.S, cfg.delta1, dense, R)


def update_S_direct(state: AdmmState, cfg: SolverConfig, dense: DenseOperator, R) -> np.ndarray:
    return _direct(state.Q - state.Z2 / cfg.delta2, state.L, cfg.delta2, dense, R)


def _vector_form(V, other, delta, dense: DenseOperator, R):
    v = vec(V)
    x = v - dense.EH @ (dense.E @ (v + vec(other)) - vec(R)) / (1.0 + delta)
    return unvec(x, dense.var_shape)


def update_L_vector(state: AdmmState, cfg: SolverConfig, dense: DenseOperator, R) -> np.ndarray:
    """Inversion-free update on stacked vectors with dense ``E``."""
    return _vector_form(state.W - state.Z1 / cfg.delta1, state.S, cfg.delta1, dense, R)


def update_S_vector(state: AdmmState, cfg: SolverConfig, dense: DenseOperator, R) -> np.ndarray:
    return _vector_form(state.Q - state.Z2 / cfg.delta2, state.L, cfg.delta2, dense, R)


def inverse_by_lemma(dense: DenseOperator, delta: float) -> np.ndarray:
    """``(1/delta) (I - E^H E / (1 + delta))``; valid because ``E E^H = I``."""
    g = dense.gram
    return (np.eye(g.shape[0]) - g / (1.0 + delta)) / delta


# ---------------------------------------------- matrix-free conventional solve


def _iterative(V, other, delta, model, smap: SceneMap, R):
    shape = smap.shape

    def gram(x):
        X = smap.to_scene(unvec(x, shape))
        return vec(smap.to_var(apply_adjoint(model, apply_forward(model, X))))

    n = int(np.prod(shape))
    op = LinearOperator((n, n), matvec=lambda x: gram(x) + delta * x, dtype=np.complex128)
    b = vec(smap.to_var(apply_adjoint(model, R))) + delta * vec(V) - gram(vec(other))
    x, info = gmres(op, b, rtol=1e-10, atol=0.0, restart=20, maxiter=10)
    if info != 0:
        raise NumericalError(f"GMRES did not converge (info={info})")
    return unvec(x, shape)


class ConventionalAutofocus:
    """Per-sample ADMM over ``(w1, w2, p)``, reduced to one phase per pulse."""

    def __init__(self):
        self.p = None
        self.Y1 = None
        self.Y2 = None

    def reset(self, m: int):
        self.p = np.ones(m, dtype=np.complex128)
        self.Y1 = np.zeros(m, dtype=np.complex128)
        self.Y2 = np.zeros(m, dtype=np.complex128)


def _w2_prox(v, tau):
    # argmin_w  -tau |w| + 1/2 |w - v|^2  ->  push the magnitude out by tau
    mag = np.abs(v)
    unit = np.where(mag > 0, v / np.where(mag > 0, mag, 1.0), 1.0)
    return v + tau * unit


def conventional_autofocus_step(
    state: ConventionalAutofocus, cfg: SolverConfig, T_diag, r, dense_inverse: bool = False
) -> np.ndarray:
    """One ADMM step on the per-sample phase vector ``p``; returns the new ``p``.

    ``dense_inverse`` solves the ``p`` system with an explicit matrix instead
    of the reciprocal diagonal (same result; kept as a cross-check).
    """
    t = np.asarray(T_diag, dtype=np.complex128).ravel()
    r = np.asarray(r, dtype=np.complex128).ravel()
    if t.shape != r.shape:
        raise ValidationError(f"T_diag has {t.size} entries but r has {r.size}")
    if state.p is None:
        state.reset(t.size)
    rho1, rho2, lam = cfg.rho1, cfg.rho2, cfg.lambda_phi
    h = np.abs(t) ** 2 + rho1 + rho2
    if np.any(h == 0):
        raise ValidationError("zero diagonal entry in (T^H T + (rho1 + rho2) I)")
    w1 = rho1 / (rho1 + 2 * lam) * (state.p + state.Y1 / rho1)
    w2 = _w2_prox(state.p + state.Y2 / rho2, 2 * lam / rho2)
    rhs = np.conj(t) * r + rho1 * w1 + rho2 * w2 - state.Y1 - state.Y2
    if dense_inverse:
        p = np.linalg.solve(np.diag(np.abs(t) ** 2) + (rho1 + rho2) * np.eye(t.size), rhs)
    else:
        p = rhs / h
    state.Y1 = state.Y1 + rho1 * (p - w1)
    state.Y2 = state.Y2 + rho2 * (p - w2)
    state.p = p
    return p


def pulse_phases(p, data_shape, cells=None) -> np.ndarray:
    """One phase per pulse: argument of the sum of ``p`` over range cells."""
    P = unvec(p, data_shape)
    if cells is not None:
        P = P[:, cells]
    return np.angle(P.sum(axis=1))


class ConventionalSteps:
    """Update rules for :func:`solver.run_admm` using explicit inverses."""

    def __init__(self, dense: bool = False):
        self.dense = dense
        self.af = ConventionalAutofocus()
        self._op = None
        self._op_phase = None

    def _operator(self, model, smap) -> DenseOperator:
        # E carries the phase diagonal, so rebuild whenever it changes
        if self._op is None or self._op_phase is not model.phase:
            self._op = dense_operator(model, smap)
            self._op_phase = model.phase
        return self._op

    def _solve(self, V, other, delta, model, smap, R):
        if self.dense:
            return _direct(V, other, delta, self._operator(model, smap), R)
        return _iterative(V, other, delta, model, smap, R)

    def update_L(self, st, cfg, model, smap, R):
        return self._solve(st.W - st.Z1 / cfg.delta1, st.S, cfg.delta1, model, smap, R)

    def update_S(self, st, cfg, model, smap, R):
        return self._solve(st.Q - st.Z2 / cfg.delta2, st.L, cfg.delta2, model, smap, R)

    def phase(self, model: ForwardModel, st, R, R_tilde, cfg) -> ForwardModel:
        T = apply_forward(model.with_phases(np.zeros(model.sel_a.m)), st.X)
        # express rho and lambda_phi relative to the mean sample power of T
        rms = float(np.sqrt(np.mean(np.abs(T) ** 2)))
        if rms == 0:
            return model
        p = conventional_autofocus_step(self.af, cfg, vec(T) / rms, vec(R) / rms)
        cells = af.select_range_cells(st.X, cfg.cell_threshold) if cfg.mode == ISAR_SPARSE else None
        return model.with_phases(pulse_phases(p, R.shape, cells))


def solve_conventional(
    R,
    model: ForwardModel,
    patch_cfg: Optional[PatchConfig],
    cfg: Optional[SolverConfig] = None,
    *,
    dense: bool = False,
    phase_truth=None,
    callback=None,
) -> SolveResult:
    """Conventional ADMM: explicit (dense or Krylov) inverses and per-sample autofocus.

    ``dense=True`` materialises ``E`` (small sizes only); otherwise the same
    linear systems are solved to tight tolerance with GMRES.
    """
    return run_admm(R, model, patch_cfg, cfg, ConventionalSteps(dense), phase_truth=phase_truth, callback=callback)


def rda_image(model: ForwardModel, R) -> np.ndarray:
    """Matched-filter image with no phase correction."""
    R = as_complex_matrix(R, "phase history")
    return apply_adjoint(model.with_phases(np.zeros(model.sel_a.m)), R)
