"""Shared helpers for the test suite."""

import numpy as np


def relative_error(a, b, floor=1e-8):
    """Elementwise |a-b| / max(|a|, |b|, floor), reduced to the worst case."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def max_relative_error(analytic, numeric, floor=1e-8):
    """Worst relative error across a list of paired gradient arrays."""
    return max(
        relative_error(a, n, floor) for a, n in zip(analytic, numeric)
    )
