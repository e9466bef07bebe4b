"""Evaluation statistics: success intervals, latency summaries, smoothness."""

from __future__ import annotations

import numpy as np


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        raise ValueError("no trials")
    p = successes / n
    denom = 1.0 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def latency_summary(latencies_s: np.ndarray) -> dict:
    """Mean/std/percentiles in milliseconds; std is None for a single sample."""
    lat = np.asarray(latencies_s, dtype=np.float64) * 1e3
    if lat.size == 0:
        raise ValueError("no latency samples")
    return {
        "n": int(lat.size),
        "mean_ms": float(lat.mean()),
        "std_ms": float(lat.std(ddof=1)) if lat.size > 1 else None,
        "p50_ms": float(np.percentile(lat, 50)),
        "p95_ms": float(np.percentile(lat, 95)),
        "min_ms": float(lat.min()),
        "max_ms": float(lat.max()),
    }


def integrated_squared_jerk(velocities: np.ndarray, dt: float) -> float:
    """Integral of squared jerk from a velocity-command sequence.

    Jerk is the second difference of velocity over dt^2; sequences shorter
    than three samples have no curvature and score zero.
    """
    v = np.atleast_2d(np.asarray(velocities, dtype=np.float64))
    if v.shape[0] < 3:
        return 0.0
    jerk = np.diff(v, n=2, axis=0) / dt**2
    return float(np.sum(jerk**2) * dt)


def energy_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Energy distance between two samples of points (rows)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))

    def mean_pdist(a, b):
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        return d.mean()

    return 2 * mean_pdist(x, y) - mean_pdist(x, x) - mean_pdist(y, y)
