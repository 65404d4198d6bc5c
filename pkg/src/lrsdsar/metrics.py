"""Image and phase-estimate quality measures, plus a wall-clock harness."""

from __future__ import annotations

import statistics
import time
from typing import Callable

import numpy as np

from .linops import DimensionError, ValidationError


def image_entropy(X) -> float:
    """Shannon entropy (natural log) of the normalised pixel energies."""
    p = np.abs(np.asarray(X)) ** 2
    total = p.sum()
    if not total > 0:
        raise ValidationError("entropy of an all-zero image is undefined")
    p = p[p > 0] / total
    return float(-np.sum(p * np.log(p)))


def wrap(phi):
    return np.angle(np.exp(1j * np.asarray(phi, dtype=float)))


def phase_residual(phi_est, phi_true) -> np.ndarray:
    """Wrapped estimate-minus-truth residual with the common offset removed.

    The offset is the circular mean of the residual, so the result does not
    depend on 2*pi wraps of either input.
    """
    a = np.asarray(phi_est, dtype=float).ravel()
    b = np.asarray(phi_true, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"phase vectors differ in length: {a.size} vs {b.size}")
    d = wrap(a - b)
    offset = np.angle(np.mean(np.exp(1j * d)))
    return wrap(d - offset)


def phase_mse(phi_est, phi_true) -> float:
    r = phase_residual(phi_est, phi_true)
    return float(np.mean(r**2))


def detected_pixels(image, rel_threshold: float) -> set:
    mag = np.abs(np.asarray(image))
    peak = mag.max() if mag.size else 0.0
    if not peak > 0:
        return set()
    rows, cols = np.nonzero(mag >= rel_threshold * peak)
    return set(zip(rows.tolist(), cols.tolist()))


def support_f1(S_est, truth_pixels, rel_threshold: float = 0.5) -> float:
    """F1 score of the thresholded support of ``S_est`` against true target pixels."""
    found = detected_pixels(S_est, rel_threshold)
    truth = {tuple(int(v) for v in p) for p in truth_pixels}
    tp = len(found & truth)
    denom = 2 * tp + len(found - truth) + len(truth - found)
    return 2 * tp / denom if denom else 1.0


def magnitude_correlation(a, b) -> float:
    """Pearson correlation between ``|a|`` and ``|b|``."""
    x = np.abs(np.asarray(a)).ravel()
    y = np.abs(np.asarray(b)).ravel()
    x = x - x.mean()
    y = y - y.mean()
    den = np.linalg.norm(x) * np.linalg.norm(y)
    return float(x @ y / den) if den > 0 else 0.0


def bench(run: Callable[[], object], repeats: int = 5, warmup: int = 1) -> dict:
    """Median wall-clock of ``run()`` over ``repeats`` timed calls.

    ``warmup`` untimed calls go first.  If the run's result exposes an
    ``iterations`` count, ``per_iter_ms`` divides the median by it.
    """
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    for _ in range(warmup):
        run()
    times, iters = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = run()
        times.append((time.perf_counter() - t0) * 1e3)
        iters = getattr(out, "iterations", iters)
    med = statistics.median(times)
    return {
        "median_ms": med,
        "per_iter_ms": med / iters if iters else None,
        "times_ms": times,
        "iterations": iters,
    }
