"""Flat model-weight vectors and their l2 geometry.

A :class:`ParameterVector` is an immutable flat float64 array plus a layout
of named segments, so weights can round-trip between the flat view used by
projections/noise and the per-matrix view used by models.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .rng import RngStream

Layout = tuple[tuple[str, tuple[int, ...]], ...]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def normalize_layout(layout) -> Layout:
    return tuple((str(name), tuple(int(s) for s in shape)) for name, shape in layout)


@dataclass(frozen=True)
class ParameterVector:
    """Immutable flat float64 weights with a named-segment layout."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(np.ravel(self.values)))
        object.__setattr__(self, "layout", normalize_layout(self.layout))
        expected = sum(int(np.prod(shape, dtype=np.int64)) for _, shape in self.layout)
        if self.values.size != expected:
            raise ShapeError(
                f"layout describes {expected} elements, got {self.values.size}"
            )
        if not np.isfinite(self.values).all():
            raise DomainError("parameter vector contains non-finite values")

    @classmethod
    def from_segments(cls, segments: dict, layout) -> "ParameterVector":
        layout = normalize_layout(layout)
        parts = []
        for name, shape in layout:
            seg = np.asarray(segments[name], dtype=np.float64)
            if seg.shape != shape:
                raise ShapeError(f"segment '{name}': expected {shape}, got {seg.shape}")
            parts.append(seg.ravel())
        return cls(np.concatenate(parts) if parts else np.empty(0), layout)

    def segments(self) -> dict:
        """Named read-only views, reshaped per the layout."""
        out = {}
        offset = 0
        for name, shape in self.layout:
            size = int(np.prod(shape, dtype=np.int64))
            view = self.values[offset : offset + size].reshape(shape)
            out[name] = view
            offset += size
        return out

    def segment(self, name: str) -> np.ndarray:
        return self.segments()[name]

    @property
    def size(self) -> int:
        return self.values.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def distance(self, other: "ParameterVector") -> float:
        self._check_layout(other)
        return float(np.linalg.norm(self.values - other.values))

    def with_values(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(values, self.layout)

    def zeros_like(self) -> "ParameterVector":
        return self.with_values(np.zeros(self.size))

    def _check_layout(self, other: "ParameterVector"):
        if self.layout != other.layout:
            raise ShapeError("parameter layouts differ")

    def __add__(self, other: "ParameterVector") -> "ParameterVector":
        self._check_layout(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ParameterVector") -> "ParameterVector":
        self._check_layout(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float) -> "ParameterVector":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def layout_hash(self) -> str:
        blob = json.dumps([[n, list(s)] for n, s in self.layout]).encode()
        return hashlib.sha256(blob).hexdigest()


def l2_project(
    v: ParameterVector, center: ParameterVector, radius: float
) -> ParameterVector:
    """Project v onto the closed l2 ball of the given radius around center.

    Points already inside the ball (within 1e-12 relative slack, so the
    projection is exactly idempotent) are returned unchanged, bitwise.
    """
    if radius < 0:
        raise DomainError(f"radius must be non-negative, got {radius}")
    v._check_layout(center)
    diff = v.values - center.values
    dist = float(np.linalg.norm(diff))
    if dist <= radius * (1.0 + 1e-12):
        return v
    return v.with_values(center.values + diff * (radius / dist))


def gaussian_perturb(
    theta: ParameterVector, sigma: float, rng: RngStream
) -> ParameterVector:
    """theta + kappa with kappa ~ N(0, sigma^2 I), drawn from rng's origin."""
    if not (sigma > 0) or not math.isfinite(sigma):
        raise DomainError(f"sigma must be positive and finite, got {sigma}")
    kappa = rng.generator().normal(0.0, sigma, size=theta.size)
    return theta.with_values(theta.values + kappa)
