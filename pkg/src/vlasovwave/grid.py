"""Uniform cubic node grid on [-X, X]^3."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import SupportExceedsDomain


@dataclass(frozen=True)
class Grid:
    n: int
    half_width: float

    def __post_init__(self):
        if self.n < 5:
            raise ValueError("grid needs at least 5 nodes per axis")
        if not self.half_width > 0:
            raise ValueError("box half-width must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def lo(self) -> float:
        return -self.half_width

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @cached_property
    def x(self) -> np.ndarray:
        return self.lo + self.h * np.arange(self.n)

    def axes(self):
        """Broadcastable coordinate arrays (n,1,1), (1,n,1), (1,1,n)."""
        x = self.x
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    @classmethod
    def with_spacing(cls, h: float, min_half_width: float) -> "Grid":
        n = int(np.ceil(2 * min_half_width / h)) + 1
        return cls(n, 0.5 * h * (n - 1))

    def contains_ball(self, center, radius: float) -> bool:
        """Ball strictly inside the interior (one cell away from the frame)."""
        c = np.atleast_2d(np.asarray(center, dtype=float))
        return bool(np.all(np.abs(c) + radius < self.half_width - self.h))

    def require_ball(self, center, radius: float):
        if not self.contains_ball(center, radius):
            raise SupportExceedsDomain(
                f"ball of radius {radius} around {np.asarray(center).tolist()} leaves the box "
                f"[-{self.half_width}, {self.half_width}]^3")

    def index_of(self, pts):
        return (np.asarray(pts, dtype=float) - self.lo) / self.h

    def interpolate(self, g: np.ndarray, pts) -> np.ndarray:
        """Trilinear interpolation of node data at points of shape (m, 3)."""
        idx = self.index_of(np.atleast_2d(pts)).T
        return map_coordinates(g, idx, order=1, mode="nearest")

    def gradient(self, g: np.ndarray):
        """Second-order centered differences (one-sided on the frame)."""
        return np.gradient(g, self.h, edge_order=2)

    def node(self, i, j, k):
        return np.array([self.x[i], self.x[j], self.x[k]])
