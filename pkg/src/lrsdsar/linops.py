"""Factored SAR/ISAR observation operator.

The phase history of a square scene ``X`` is modelled as::

    R = Phi @ Theta_a @ F_a @ X @ F_r.T @ Theta_r.T

where ``F_a``/``F_r`` are row subsets of the unitary DFT, ``Theta_a``/``Theta_r``
keep a subset of those rows (undersampling) and ``Phi`` is the diagonal of
per-pulse phase errors.  Every matrix is kept in factored form; the Kronecker
(vectorised) operator is never built here.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not chain."""


class ValidationError(ValueError):
    """Invalid construction arguments."""


def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a 2-D complex128 array, rejecting empty or non-finite input."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def _index_list(rows, n: int, what: str) -> np.ndarray:
    idx = np.asarray(rows, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValidationError(f"{what} indices must lie in [0, {n})")
    if np.unique(idx).size != idx.size:
        raise ValidationError(f"duplicate {what} indices")
    if idx.size > 1 and np.any(np.diff(idx) <= 0):
        raise ValidationError(f"{what} indices must be strictly increasing")
    return idx


@dataclass(frozen=True, eq=False)
class FourierDictionary:
    """Rows ``selected_rows`` of the ``n_full``-point unitary DFT."""

    n_full: int
    selected_rows: np.ndarray

    def __post_init__(self):
        rows = _index_list(self.selected_rows, self.n_full, "dictionary row")
        if rows.size < 1:
            raise ValidationError("dictionary needs at least one row")
        rows.setflags(write=False)
        object.__setattr__(self, "selected_rows", rows)

    @property
    def n_selected(self) -> int:
        return int(self.selected_rows.size)

    @cached_property
    def matrix(self) -> np.ndarray:
        k = self.selected_rows[:, None]
        l = np.arange(self.n_full)[None, :]
        # reduce k*l mod n before scaling so large sizes keep full precision
        m = np.exp(-2j * np.pi * ((k * l) % self.n_full) / self.n_full)
        m /= np.sqrt(self.n_full)
        m.setflags(write=False)
        return m


def signed_frequencies(d: FourierDictionary) -> np.ndarray:
    """Signed DFT frequency of every selected row, in ``[-n_full/2, n_full/2)``."""
    k = d.selected_rows
    return np.where(k < (d.n_full + 1) // 2, k, k - d.n_full)


def centered_rows(n_selected: int, n_full: int) -> np.ndarray:
    """Indices of the ``n_selected`` lowest absolute DFT frequencies.

    Ties (``+n/2`` against ``-n/2``) go to the non-negative frequency.
    """
    k = np.arange(n_full)
    freq = np.minimum(k, n_full - k)
    order = np.lexsort((k, freq))
    return np.sort(order[:n_selected])


def build_partial_dft(
    n_selected: int,
    n_full: int,
    selection: Union[str, Sequence[int]] = "centered",
) -> FourierDictionary:
    """Partial unitary DFT dictionary.

    ``selection`` is ``"centered"`` (lowest absolute frequencies), ``"lowpass"``
    (rows ``0..n_selected-1``) or an explicit list of row indices.
    """
    if n_full < 1 or n_selected < 1:
        raise DimensionError("dictionary sizes must be positive")
    if n_selected > n_full:
        raise DimensionError(f"n_selected={n_selected} exceeds n_full={n_full}")
    if isinstance(selection, str):
        if selection == "centered":
            rows = centered_rows(n_selected, n_full)
        elif selection == "lowpass":
            rows = np.arange(n_selected)
        else:
            raise ValidationError(f"unknown selection {selection!r}")
    else:
        rows = _index_list(selection, n_full, "dictionary row")
        if rows.size != n_selected:
            raise ValidationError(
                f"explicit selection has {rows.size} rows, expected {n_selected}"
            )
    return FourierDictionary(n_full=n_full, selected_rows=rows)


@dataclass(frozen=True, eq=False)
class Selector:
    """Row selector: keeps ``kept_rows`` of an ``n``-row identity."""

    n: int
    kept_rows: np.ndarray

    def __post_init__(self):
        rows = _index_list(self.kept_rows, self.n, "selector")
        if rows.size < 1:
            raise ValidationError("selector must keep at least one row")
        rows.setflags(write=False)
        object.__setattr__(self, "kept_rows", rows)

    @classmethod
    def identity(cls, n: int) -> "Selector":
        return cls(n, np.arange(n))

    @property
    def m(self) -> int:
        return int(self.kept_rows.size)

    @property
    def is_identity(self) -> bool:
        return self.m == self.n

    def matrix(self) -> np.ndarray:
        return np.eye(self.n)[self.kept_rows]


@dataclass(frozen=True, eq=False)
class PhaseDiagonal:
    """Diagonal of unit-modulus phase factors ``exp(1j * phases)``."""

    phases: np.ndarray

    def __post_init__(self):
        ph = np.array(self.phases, dtype=np.float64).ravel()
        if not np.all(np.isfinite(ph)):
            raise ValidationError("phases must be finite")
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)

    @classmethod
    def zeros(cls, m: int) -> "PhaseDiagonal":
        return cls(np.zeros(m))

    def __len__(self):
        return self.phases.size

    @cached_property
    def factors(self) -> np.ndarray:
        f = np.exp(1j * self.phases)
        f.setflags(write=False)
        return f

    def apply(self, R: np.ndarray) -> np.ndarray:
        return self.factors[:, None] * R

    def apply_conj(self, R: np.ndarray) -> np.ndarray:
        return np.conj(self.factors)[:, None] * R


@dataclass(frozen=True, eq=False)
class ForwardModel:
    dict_a: FourierDictionary
    dict_r: FourierDictionary
    sel_a: Selector
    sel_r: Selector
    phase: PhaseDiagonal = field(default=None)

    def __post_init__(self):
        if self.phase is None:
            object.__setattr__(self, "phase", PhaseDiagonal.zeros(self.sel_a.m))
        if self.sel_a.n != self.dict_a.n_selected:
            raise DimensionError(
                f"azimuth selector expects {self.sel_a.n} rows but dictionary "
                f"has {self.dict_a.n_selected}"
            )
        if self.sel_r.n != self.dict_r.n_selected:
            raise DimensionError(
                f"range selector expects {self.sel_r.n} rows but dictionary "
                f"has {self.dict_r.n_selected}"
            )
        if len(self.phase) != self.sel_a.m:
            raise DimensionError(
                f"phase diagonal has {len(self.phase)} entries, expected {self.sel_a.m}"
            )
        if self.dict_a.n_full != self.dict_r.n_full:
            raise DimensionError("scene must be square: azimuth and range n_full differ")

    @classmethod
    def full(cls, side: int) -> "ForwardModel":
        """Fully sampled, phase-free model for a ``side x side`` scene."""
        d = build_partial_dft(side, side, "centered")
        return cls(d, d, Selector.identity(side), Selector.identity(side))

    @property
    def scene_side(self) -> int:
        return self.dict_a.n_full

    @property
    def scene_shape(self) -> tuple:
        return (self.scene_side, self.scene_side)

    @property
    def data_shape(self) -> tuple:
        return (self.sel_a.m, self.sel_r.m)

    def with_phases(self, phases) -> "ForwardModel":
        return dataclasses.replace(self, phase=PhaseDiagonal(phases))

    def pulse_order(self) -> np.ndarray:
        """Kept azimuth rows (positions in the data) sorted into slow-time order.

        Slow time runs with the signed azimuth frequency, so the middle of the
        aperture is the zero-frequency pulse.
        """
        freq = signed_frequencies(self.dict_a)[self.sel_a.kept_rows]
        return np.argsort(freq, kind="stable")

    @cached_property
    def azimuth_matrix(self) -> np.ndarray:
        """``Theta_a F_a`` (no phase), shape ``(M_a, side)``."""
        a = self.dict_a.matrix[self.sel_a.kept_rows]
        a.setflags(write=False)
        return a

    @cached_property
    def range_matrix(self) -> np.ndarray:
        """``Theta_r F_r``, shape ``(M_r, side)``."""
        r = self.dict_r.matrix[self.sel_r.kept_rows]
        r.setflags(write=False)
        return r


def apply_forward(model: ForwardModel, X) -> np.ndarray:
    """Noise-free phase history ``Phi Theta_a F_a X F_r^T Theta_r^T``."""
    X = as_complex_matrix(X, "scene")
    if X.shape != model.scene_shape:
        raise DimensionError(
            f"scene shape {X.shape} does not match dictionaries n_full={model.scene_side}"
        )
    Y = model.azimuth_matrix @ X
    return model.phase.apply(Y @ model.range_matrix.T)


def apply_adjoint(model: ForwardModel, R) -> np.ndarray:
    """Adjoint ``F_a^H Theta_a^T Phi^H R Theta_r F_r^*``."""
    R = as_complex_matrix(R, "phase history")
    if R.shape != model.data_shape:
        raise DimensionError(
            f"phase history shape {R.shape} does not match selectors {model.data_shape}"
        )
    return model.azimuth_matrix.conj().T @ model.phase.apply_conj(R) @ model.range_matrix.conj()


def composite_gram(model: ForwardModel, M) -> np.ndarray:
    """``adjoint(forward(M))``: an orthogonal projector on the scene space."""
    return apply_adjoint(model, apply_forward(model, M))


def range_compress(model: ForwardModel, R) -> np.ndarray:
    """``R Theta_r F_r^*``: phase history taken back to range cells."""
    R = as_complex_matrix(R, "phase history")
    if R.shape != model.data_shape:
        raise DimensionError(
            f"phase history shape {R.shape} does not match selectors {model.data_shape}"
        )
    return R @ model.range_matrix.conj()


def kronecker_matrix(model: ForwardModel) -> np.ndarray:
    """Dense ``(Theta_r F_r) kron (Phi Theta_a F_a)`` acting on column-major vec(X).

    Only for small test sizes.
    """
    left = model.phase.factors[:, None] * model.azimuth_matrix
    return np.kron(model.range_matrix, left)
