"""Shared helpers for the test suite."""

import numpy as np

from lqlearn.lemmas import random_psd
from lqlearn.linalg import spectral_norm


def drain(gen):
    """Exhaust a run generator; returns (last_record, final_estimate)."""
    last = None
    while True:
        try:
            last = next(gen)
        except StopIteration as stop:
            return last, stop.value


def collect(gen):
    """All records plus the final estimate."""
    records = []
    while True:
        try:
            records.append(next(gen))
        except StopIteration as stop:
            return records, stop.value


def bounded_skew_inflation(rng, dim, floor=0.1, ceil=5.0, skew=0.3):
    """PSD inflation ``c * (I + E)`` with the skew part capped in norm.

    Keeps the inflated matrix well-conditioned relative to its size; heavily
    skewed inflations break the norm-form stability margins (the closed loop
    stays stable, but only its spectral radius is bounded).
    """
    c = float(rng.uniform(floor, ceil))
    e = random_psd(rng, dim, scale=skew)
    nrm = spectral_norm(e)
    if nrm > skew:
        e *= skew / nrm
    return c * (np.eye(dim) + e)


def batch_means_stderr(values, batches=50):
    """Standard error of the mean for an autocorrelated sequence."""
    values = np.asarray(values, dtype=float)
    usable = (values.size // batches) * batches
    means = values[:usable].reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(batches))
