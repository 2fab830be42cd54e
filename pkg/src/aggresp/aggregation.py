"""Local linear aggregation of a daily series with normalized kernel weights.

An aggregated value is ``sum_i w_i * y[t + i]`` over a window of offsets.
Future windows use offsets ``0..H-1``; centered windows use
``-(H-1)/2..(H-1)/2``.  Kernel shapes are registered by name, so a different
asymmetric kernel can be dropped in without touching callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DataError
from .series import DailySeries


@dataclass(frozen=True)
class Kernel:
    name: str
    shape: Callable[[np.ndarray], np.ndarray]
    symmetric: bool


def _uniform(u):
    return np.ones_like(u)


def _epanechnikov(u):
    return 0.75 * (1.0 - u**2)


def _michels(u):
    # Beta(2, 3)-shaped: zero at both ends, mode at u = 1/3.
    return u * (1.0 - u) ** 2


KERNELS: dict[str, Kernel] = {}

_ALIASES = {
    "ma": "ma", "moving_average": "ma",
    "epan": "epanechnikov", "epanechnikov": "epanechnikov",
    "michels": "michels",
}


def register_kernel(kernel: Kernel, *aliases: str) -> None:
    KERNELS[kernel.name] = kernel
    _ALIASES[kernel.name] = kernel.name
    for alias in aliases:
        _ALIASES[alias.lower()] = kernel.name


register_kernel(Kernel("ma", _uniform, True))
register_kernel(Kernel("epanechnikov", _epanechnikov, True))
register_kernel(Kernel("michels", _michels, False))


def canonical_kernel(kind: str) -> str:
    try:
        return _ALIASES[str(kind).lower()]
    except KeyError:
        raise ConfigError(f"unknown kernel {kind!r}; expected one of {sorted(KERNELS)}") from None


@dataclass(frozen=True)
class AggregationSpec:
    kind: str
    H: int
    mode: str = "future"

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kernel(self.kind))
        if isinstance(self.H, bool) or int(self.H) != self.H:
            raise ConfigError(f"window size must be an integer, got {self.H!r}")
        object.__setattr__(self, "H", int(self.H))
        if self.H < 1:
            raise ConfigError(f"window size must be >= 1, got {self.H}")
        if self.mode not in ("future", "centered"):
            raise ConfigError(f"unknown window mode {self.mode!r}")
        if self.mode == "centered":
            if self.H % 2 == 0:
                raise ConfigError("centered windows need an odd window size")
            if not KERNELS[self.kind].symmetric:
                raise ConfigError(f"kernel {self.kind!r} has no centered variant")

    @property
    def lookahead(self) -> int:
        """Largest positive offset touched by the window."""
        return self.H - 1 if self.mode == "future" else (self.H - 1) // 2


@dataclass(frozen=True, eq=False)
class WeightVector:
    offsets: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.weights.size


def kernel_weights(spec: AggregationSpec) -> WeightVector:
    """Normalized weights for ``spec``.

    Future windows evaluate the kernel at the interval midpoints
    ``u_i = (i + 0.5) / H``; centered windows at ``u_i = i / ((H + 1) / 2)``.
    """
    H = spec.H
    kernel = KERNELS[spec.kind]
    if spec.mode == "future":
        offsets = np.arange(H)
        u = (offsets + 0.5) / H
    else:
        half = (H - 1) // 2
        offsets = np.arange(-half, half + 1)
        u = offsets / ((H + 1) / 2)
    if spec.kind == "ma":
        w = np.full(H, 1.0 / H)
    else:
        raw = np.asarray(kernel.shape(u), dtype=float)
        if np.any(raw < 0) or raw.sum() <= 0:
            raise ConfigError(f"kernel {spec.kind!r} produced invalid weights")
        w = raw / raw.sum()
    w.setflags(write=False)
    offsets.setflags(write=False)
    return WeightVector(offsets, w)


def aggregate_array(y: np.ndarray, weights: WeightVector) -> np.ndarray:
    """Array form of :func:`aggregate`; NaN marks missing input and output."""
    y = np.asarray(y, dtype=float)
    n = y.size
    lo, hi = int(weights.offsets[0]), int(weights.offsets[-1])
    if n < hi - lo + 1:
        raise DataError(f"series of length {n} is shorter than the window ({hi - lo + 1})")
    out = np.zeros(n)
    valid = np.ones(n, dtype=bool)
    idx = np.arange(n)
    for off, w in zip(weights.offsets.tolist(), weights.weights.tolist()):
        src = idx + off
        inside = (src >= 0) & (src < n)
        valid &= inside
        shifted = np.full(n, np.nan)
        shifted[inside] = y[src[inside]]
        out += w * shifted
    valid &= ~np.isnan(out)
    out[~valid] = np.nan
    return out


def aggregate(series: DailySeries, weights: WeightVector) -> DailySeries:
    return series.with_values(aggregate_array(series.values, weights))


def aggregate_blocks(y: np.ndarray, blocks, weights: WeightVector) -> np.ndarray:
    """Aggregate each half-open ``(start, stop)`` block using only its own values.

    Positions outside every block, and positions whose window leaves their
    block, are NaN.  Blocks shorter than the window come back all-NaN.
    """
    y = np.asarray(y, dtype=float)
    out = np.full(y.size, np.nan)
    span = int(weights.offsets[-1] - weights.offsets[0]) + 1
    for start, stop in blocks:
        if stop - start >= span:
            out[start:stop] = aggregate_array(y[start:stop], weights)
    return out
