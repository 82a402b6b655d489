"""Compensated summation helpers and small statistical utilities.

All large weighted sums in the simulation engine go through :func:`csum`,
which reduces fixed-size blocks with pairwise summation and combines the
block sums with ``math.fsum`` (exact up to the final rounding).  For
streaming scalar accumulation there is a Neumaier-compensated accumulator.
"""

from __future__ import annotations

import math

import numpy as np

_BLOCK = 4096


def csum(values) -> float:
    """Compensated sum of a 1-D array (or iterable) of floats."""
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    if a.size <= _BLOCK:
        return math.fsum(a)
    nblocks = -(-a.size // _BLOCK)
    offsets = np.arange(nblocks) * _BLOCK
    blocks = np.add.reduceat(a, offsets)
    return math.fsum(blocks)


def csum_rows(matrix) -> np.ndarray:
    """Compensated row sums of a 2-D array."""
    m = np.asarray(matrix, dtype=np.float64)
    return np.array([math.fsum(row) for row in m])


class KahanAccumulator:
    """Streaming Neumaier-compensated scalar accumulator."""

    __slots__ = ("total", "carry")

    def __init__(self) -> None:
        self.total = 0.0
        self.carry = 0.0

    def add(self, value: float) -> None:
        t = self.total + value
        if abs(self.total) >= abs(value):
            self.carry += (self.total - t) + value
        else:
            self.carry += (value - t) + self.total
        self.total = t

    @property
    def value(self) -> float:
        return self.total + self.carry


def running_mean_std(values) -> tuple[float, float]:
    """Mean and standard error of the mean for a 1-D sample."""
    a = np.asarray(values, dtype=np.float64)
    n = a.size
    if n == 0:
        return math.nan, math.nan
    mean = csum(a) / n
    if n == 1:
        return mean, math.inf
    var = csum((a - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)
