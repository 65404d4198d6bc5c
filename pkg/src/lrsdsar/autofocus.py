"""Phase-error estimation by unimodular quadratic programming.

The residual phase error enters the data as ``r = T p + n`` with
``T = diag(t)`` the phase-free prediction and ``p`` unimodular.  Lifting
``p_tilde = [p, 1]`` turns the least-squares fit into maximising
``p_tilde^H U p_tilde`` with ``U = mu I - T_tilde`` positive definite, which
is attacked by power-method-like steps ``p_tilde <- exp(1j arg(U p_tilde))``.
Each step cannot decrease the objective when ``U`` is positive definite.

The per-range-cell averaged variant (``phase_update_simplified``) exploits
that a pulse carries one phase across all range cells.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linops import DimensionError, PhaseDiagonal, ValidationError, as_complex_matrix

log = logging.getLogger(__name__)

MU_MARGIN = 1.01


@dataclass
class AutofocusState:
    phases: np.ndarray
    mu: float
    objective_history: list = field(default_factory=list)
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class UqpProblem:
    U: np.ndarray
    mu: float

    @property
    def size(self) -> int:
        return self.U.shape[0] - 1


def lifted_matrix(t_diag, r) -> np.ndarray:
    """``[[T^H T, -T^H r], [-r^H T, 0]]`` for ``T = diag(t_diag)``."""
    t = np.asarray(t_diag, dtype=np.complex128).ravel()
    r = np.asarray(r, dtype=np.complex128).ravel()
    if t.shape != r.shape:
        raise DimensionError(f"t_diag has {t.size} entries but r has {r.size}")
    M = t.size
    Tt = np.zeros((M + 1, M + 1), dtype=np.complex128)
    Tt[np.arange(M), np.arange(M)] = np.abs(t) ** 2
    b = np.conj(t) * r
    Tt[:M, M] = -b
    Tt[M, :M] = -np.conj(b)
    return Tt


def default_mu(t_diag, r) -> float:
    """Cheap upper bound on the largest eigenvalue of the lifted matrix, padded."""
    t = np.asarray(t_diag).ravel()
    b = np.conj(t) * np.asarray(r).ravel()
    bound = float(np.max(np.abs(t) ** 2, initial=0.0) + np.linalg.norm(b))
    return MU_MARGIN * bound if bound > 0 else 1.0


def build_uqp(t_diag, r, mu: float | None = None) -> UqpProblem:
    Tt = lifted_matrix(t_diag, r)
    if mu is None:
        mu = default_mu(t_diag, r)
    U = mu * np.eye(Tt.shape[0]) - Tt
    lam_min = np.linalg.eigvalsh(U)[0]
    if not lam_min > 0:
        raise ValidationError(
            f"mu={mu:g} too small: U has minimum eigenvalue {lam_min:.3e}"
        )
    return UqpProblem(U=U, mu=float(mu))


def uqp_objective(prob: UqpProblem, p_tilde) -> float:
    p = np.asarray(p_tilde)
    return float(np.real(np.vdot(p, prob.U @ p)))


def power_step(prob: UqpProblem, p_tilde) -> np.ndarray:
    """One ``exp(1j * arg(U p))`` step; entries where ``U p`` vanishes keep their phase."""
    p = np.asarray(p_tilde, dtype=np.complex128)
    v = prob.U @ p
    mag = np.abs(v)
    out = p.copy()
    nz = mag > 0
    out[nz] = v[nz] / mag[nz]
    return out


def lift(phases) -> np.ndarray:
    return np.append(np.exp(1j * np.asarray(phases, dtype=float)), 1.0 + 0j)


def unlift(p_tilde) -> np.ndarray:
    """Phases of ``p`` after rotating the auxiliary entry back to 1."""
    p = np.asarray(p_tilde)
    return np.angle(p[:-1] * np.conj(p[-1]))


def _relative_phase_change(new, old) -> float:
    den = np.linalg.norm(old)
    num = np.linalg.norm(np.angle(np.exp(1j * (new - old))))
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return num / den


def solve_uqp(
    prob: UqpProblem, phases0=None, max_iter: int = 10, tol: float = 1e-4
) -> AutofocusState:
    """Inner power-iteration loop.

    Stops after ``max_iter`` steps or once the relative change of the phase
    vector drops below ``tol``.
    """
    M = prob.size
    phases = np.zeros(M) if phases0 is None else np.asarray(phases0, dtype=float)
    p = lift(phases)
    state = AutofocusState(phases=phases, mu=prob.mu)
    state.objective_history.append(uqp_objective(prob, p))
    for _ in range(max_iter):
        p = power_step(prob, p)
        new = unlift(p)
        state.objective_history.append(uqp_objective(prob, p))
        state.iterations += 1
        change = _relative_phase_change(new, state.phases)
        state.phases = new
        if change < tol:
            break
    return state


def default_mu_simplified(Y) -> float:
    peak = float(np.max(np.abs(Y) ** 2, initial=0.0))
    return MU_MARGIN * peak if peak > 0 else 1.0


def phase_update_simplified(phi, Y, R_tilde, mu=None, cells=None) -> PhaseDiagonal:
    """Range-averaged closed-form phase update.

    For every pulse ``i``::

        phi_i <- arg( sum_j (mu - |Y_ij|^2) exp(1j phi_i) + conj(Y_ij) R_tilde_ij )

    ``Y`` is the azimuth-transformed image ``Theta_a F_a X`` and ``R_tilde`` the
    range-compressed data.  ``mu`` may be a scalar or one value per pulse;
    ``cells`` restricts the sum to a subset of range cells.  Pulses whose sum
    vanishes keep their previous phase.
    """
    if isinstance(phi, PhaseDiagonal):
        phi = phi.phases
    phi = np.asarray(phi, dtype=float).ravel()
    Y = as_complex_matrix(Y, "Y")
    R_tilde = as_complex_matrix(R_tilde, "R_tilde")
    if Y.shape != R_tilde.shape:
        raise DimensionError(f"Y {Y.shape} and R_tilde {R_tilde.shape} differ")
    if phi.size != Y.shape[0]:
        raise DimensionError(f"{phi.size} phases for {Y.shape[0]} pulses")
    if cells is not None:
        Y = Y[:, cells]
        R_tilde = R_tilde[:, cells]
    if mu is None:
        mu = default_mu_simplified(Y)
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 1:
        mu = mu[:, None]
    power = np.abs(Y) ** 2
    total = np.sum(np.exp(1j * phi)[:, None] * (mu - power) + np.conj(Y) * R_tilde, axis=1)
    out = phi.copy()
    nz = total != 0
    out[nz] = np.angle(total[nz])
    return PhaseDiagonal(out)


def select_range_cells(X, threshold_frac: float) -> np.ndarray:
    """Range cells (columns) whose energy reaches ``threshold_frac`` of the strongest."""
    if not 0 < threshold_frac < 1:
        raise ValidationError("threshold_frac must lie in (0, 1)")
    X = as_complex_matrix(X, "image")
    energy = np.sum(np.abs(X) ** 2, axis=0)
    peak = energy.max()
    cells = np.flatnonzero(energy >= threshold_frac * peak) if peak > 0 else np.array([], int)
    if cells.size == 0:
        warnings.warn("no range cell above threshold; averaging over all cells", RuntimeWarning)
        cells = np.arange(X.shape[1])
    return cells
