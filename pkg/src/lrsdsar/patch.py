"""Casorati patch operator.

``patchify`` stacks every sliding window of a square scene as a column of an
``n x K`` matrix (``n = window**2``); ``unpatchify`` maps such a matrix back to
a scene by averaging all window entries that cover each pixel.

Windows are enumerated column-major over their top-left corners and each
window is vectorised column-major.  ``unpatchify`` is a left inverse only:
``patchify(unpatchify(F))`` projects ``F`` onto consistent patch matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .linops import DimensionError, ValidationError, as_complex_matrix


@dataclass(frozen=True)
class PatchConfig:
    window: int
    step: int
    scene_side: int

    def __post_init__(self):
        w, s, side = self.window, self.step, self.scene_side
        if not (1 <= s <= w <= side):
            raise ValidationError(
                f"need 1 <= step <= window <= scene_side, got step={s}, window={w}, "
                f"scene_side={side}"
            )
        if (side - w) % s:
            raise ValidationError(
                f"windows do not tile: (scene_side - window) = {side - w} "
                f"is not divisible by step {s}"
            )

    @property
    def n(self) -> int:
        return self.window * self.window

    @property
    def per_axis(self) -> int:
        return (self.scene_side - self.window) // self.step + 1

    @property
    def K(self) -> int:
        return self.per_axis**2

    @property
    def shape(self) -> tuple:
        return (self.n, self.K)


@dataclass(frozen=True, eq=False)
class PatchMatrix:
    matrix: np.ndarray
    config: PatchConfig

    def __post_init__(self):
        if self.matrix.shape != self.config.shape:
            raise DimensionError(
                f"patch matrix shape {self.matrix.shape} inconsistent with "
                f"config shape {self.config.shape}"
            )


def patchify(X, cfg: PatchConfig) -> PatchMatrix:
    X = as_complex_matrix(X, "scene")
    side = cfg.scene_side
    if X.shape != (side, side):
        raise DimensionError(f"scene shape {X.shape} but config expects {side}x{side}")
    w, p = cfg.window, cfg.per_axis
    V = sliding_window_view(X, (w, w))[:: cfg.step, :: cfg.step]  # [r, c, i, j]
    # F[i + j*w, r + c*p] = V[r, c, i, j]
    F = V.transpose(3, 2, 1, 0).reshape(cfg.n, p * p)
    return PatchMatrix(np.ascontiguousarray(F), cfg)


@lru_cache(maxsize=32)
def coverage(cfg: PatchConfig) -> np.ndarray:
    """Number of windows covering each pixel."""
    cnt = np.zeros((cfg.scene_side, cfg.scene_side))
    w, s = cfg.window, cfg.step
    for c in range(cfg.per_axis):
        for r in range(cfg.per_axis):
            cnt[r * s : r * s + w, c * s : c * s + w] += 1
    cnt.setflags(write=False)
    return cnt


def unpatchify(F, cfg: PatchConfig | None = None) -> np.ndarray:
    if isinstance(F, PatchMatrix):
        cfg = cfg or F.config
        F = F.matrix
    if cfg is None:
        raise ValidationError("unpatchify needs a PatchConfig for a bare array")
    F = as_complex_matrix(F, "patch matrix")
    if F.shape != cfg.shape:
        raise DimensionError(f"patch matrix shape {F.shape} but config expects {cfg.shape}")
    w, s, p = cfg.window, cfg.step, cfg.per_axis
    blocks = F.reshape(w, w, p, p)  # [j, i, c, r]
    out = np.zeros((cfg.scene_side, cfg.scene_side), dtype=np.complex128)
    if cfg.K <= cfg.n:
        for c in range(p):
            for r in range(p):
                out[r * s : r * s + w, c * s : c * s + w] += blocks[:, :, c, r].T
    else:
        span = (p - 1) * s + 1
        for j in range(w):
            for i in range(w):
                out[i : i + span : s, j : j + span : s] += blocks[j, i].T
    return out / coverage(cfg)
