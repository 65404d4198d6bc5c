"""Synthetic ground truth: scenes, phase errors, noise and undersampling masks.

Everything is driven by explicit integer seeds; identical seeds reproduce
bit-identical arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linops import (
    ForwardModel,
    PhaseDiagonal,
    Selector,
    ValidationError,
    apply_forward,
    as_complex_matrix,
    build_partial_dft,
)


@dataclass(frozen=True)
class SceneSpec:
    side: int
    n_targets: int = 4
    target_amp: float = 10.0
    background: str = "smooth"  # "smooth" | "none"
    rank: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.side < 1:
            raise ValidationError("side must be >= 1")
        if not 0 <= self.n_targets <= self.side**2:
            raise ValidationError("n_targets must lie in [0, side**2]")
        if self.background not in ("smooth", "none"):
            raise ValidationError(f"unknown background {self.background!r}")
        if self.background == "smooth" and not 1 <= self.rank <= self.side:
            raise ValidationError("rank must lie in [1, side]")


@dataclass(frozen=True)
class RadarParams:
    """Nominal radar parameters (metadata only; the discrete model needs counts)."""

    fc: float = 10e9
    bandwidth: float = 500e6
    prf: float = 50.0
    n_range: int = 64
    n_pulses: int = 64

    def __post_init__(self):
        for name in ("fc", "bandwidth", "prf", "n_range", "n_pulses"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")


@dataclass
class SceneTruth:
    target_pixels: list
    target_values: np.ndarray
    background: np.ndarray

    def to_json(self) -> dict:
        return {
            "target_pixels": [list(p) for p in self.target_pixels],
            "target_values": [[float(v.real), float(v.imag)] for v in self.target_values],
        }


def _smooth_factor(rng: np.random.Generator, side: int, n_modes: int = 3) -> np.ndarray:
    # positive profile built from a few low-frequency cosines
    t = np.arange(side) / side
    f = np.ones(side)
    for m in range(1, n_modes + 1):
        f += rng.uniform(0.2, 0.6) / m * np.cos(2 * np.pi * m * t + rng.uniform(0, 2 * np.pi))
    return f - f.min() + 0.2


def gen_scene(spec: SceneSpec):
    """Low-rank smooth background plus point targets at distinct random pixels.

    The background is a sum of ``rank`` outer products of smooth positive
    profiles, scaled to unit RMS.  Targets have magnitude ``target_amp`` and a
    random phase and are added on top of the background.
    """
    rng = np.random.default_rng(spec.seed)
    side = spec.side
    bg = np.zeros((side, side))
    if spec.background == "smooth":
        for _ in range(spec.rank):
            bg += np.outer(_smooth_factor(rng, side), _smooth_factor(rng, side))
        bg /= np.sqrt(np.mean(bg**2))
    flat = rng.choice(side * side, size=spec.n_targets, replace=False)
    pix = [(int(i // side), int(i % side)) for i in flat]
    vals = spec.target_amp * np.exp(1j * rng.uniform(0, 2 * np.pi, spec.n_targets))
    X = bg.astype(np.complex128)
    for (r, c), v in zip(pix, vals):
        X[r, c] += v
    return X, SceneTruth(pix, vals, bg.astype(np.complex128))


PHASE_KINDS = ("quadratic", "random_walk", "sinusoidal")


def gen_phase_error(kind: str, peak: float, m: int, seed: int = 0) -> np.ndarray:
    """Per-pulse phase error in radians.

    ``quadratic``: ``peak * ((i - m/2) / (m/2))**2``; ``random_walk``: a seeded
    Gaussian walk rescaled so its largest excursion is ``peak``;
    ``sinusoidal``: ``peak * sin(2 pi f i / m + theta)`` with seeded ``f`` in
    [1, 3] and ``theta``.
    """
    if m < 2:
        raise ValidationError("m must be >= 2")
    i = np.arange(m)
    if kind == "quadratic":
        return peak * ((i - m / 2) / (m / 2)) ** 2
    rng = np.random.default_rng(seed)
    if kind == "random_walk":
        w = np.cumsum(rng.standard_normal(m))
        w -= w[0]
        top = np.max(np.abs(w))
        return peak * w / top if top > 0 else np.zeros(m)
    if kind == "sinusoidal":
        f = rng.uniform(1.0, 3.0)
        return peak * np.sin(2 * np.pi * f * i / m + rng.uniform(0, 2 * np.pi))
    raise ValidationError(f"unknown phase error kind {kind!r}")


def add_noise(R, snr_db: float, seed: int = 0) -> np.ndarray:
    """Add circular complex Gaussian noise at exactly ``snr_db`` (per realisation)."""
    R = as_complex_matrix(R, "phase history")
    if math.isinf(snr_db) and snr_db > 0:
        return R.copy()
    sig = float(np.sum(np.abs(R) ** 2))
    if sig == 0:
        raise ValidationError("cannot set an SNR on an all-zero signal")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal(R.shape) + 1j * rng.standard_normal(R.shape)
    Z *= math.sqrt(sig / (10 ** (snr_db / 10) * float(np.sum(np.abs(Z) ** 2))))
    return R + Z


def gen_undersampler(full: int, ratio: float, mode: str = "uniform_random", seed: int = 0) -> Selector:
    if not 0 < ratio <= 1:
        raise ValidationError("ratio must lie in (0, 1]")
    m = int(math.floor(ratio * full + 1e-9))
    if m < 1:
        raise ValidationError(f"ratio {ratio} keeps no rows of {full}")
    if m == full:
        return Selector.identity(full)
    if mode == "uniform_random":
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.choice(full, size=m, replace=False))
    elif mode == "decimate":
        rows = np.floor(np.arange(m) * full / m).astype(int)
    else:
        raise ValidationError(f"unknown undersampling mode {mode!r}")
    return Selector(full, rows)


@dataclass
class Dataset:
    """A simulated acquisition with everything needed to score a reconstruction."""

    scene: np.ndarray
    truth: SceneTruth
    model: ForwardModel  # carries the true phase errors
    R: np.ndarray
    phase_truth: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def model_nominal(self) -> ForwardModel:
        """The model with phase errors removed (what an imager is handed)."""
        return self.model.with_phases(np.zeros(self.model.sel_a.m))


def simulate(
    scene: SceneSpec,
    *,
    n_azimuth: Optional[int] = None,
    n_range: Optional[int] = None,
    azimuth_ratio: float = 1.0,
    range_ratio: float = 1.0,
    sampling_mode: str = "uniform_random",
    phase_kind: str = "quadratic",
    phase_peak: float = math.pi / 2,
    snr_db: float = math.inf,
    seed: Optional[int] = None,
) -> Dataset:
    """Scene -> phase history with phase errors, undersampling and noise.

    Sub-seeds for the sampling masks, phase error and noise are derived from
    ``seed`` (default ``scene.seed``).
    """
    seed = scene.seed if seed is None else seed
    ss = np.random.SeedSequence(seed).spawn(4)
    sub = [int(s.generate_state(1)[0]) for s in ss]
    X, truth = gen_scene(scene)
    side = scene.side
    n_az = n_azimuth or side
    n_rg = n_range or side
    dict_a = build_partial_dft(n_az, side, "centered")
    dict_r = build_partial_dft(n_rg, side, "centered")
    sel_a = gen_undersampler(n_az, azimuth_ratio, sampling_mode, sub[0])
    sel_r = gen_undersampler(n_rg, range_ratio, sampling_mode, sub[1])
    model = ForwardModel(dict_a, dict_r, sel_a, sel_r)
    # the error is generated in slow-time order, then mapped onto data rows
    phases = np.empty(sel_a.m)
    phases[model.pulse_order()] = gen_phase_error(phase_kind, phase_peak, sel_a.m, sub[2])
    model = model.with_phases(phases)
    R = apply_forward(model, X)
    if not (math.isinf(snr_db) and snr_db > 0):
        R = add_noise(R, snr_db, sub[3])
    meta = {
        "seed": seed,
        "side": side,
        "n_azimuth": n_az,
        "n_range": n_rg,
        "azimuth_rows": sel_a.kept_rows.tolist(),
        "range_rows": sel_r.kept_rows.tolist(),
        "phase_kind": phase_kind,
        "phase_peak": phase_peak,
        "snr_db": snr_db if math.isfinite(snr_db) else None,
    }
    return Dataset(X, truth, model, R, phases, meta)
