"""Radio maps: an RSS tensor bound to a rectangular grid of reference points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import read_json, read_tns3, write_json, write_tns3
from .tensor import as_tensor3

RSS_FLOOR = -110.0


@dataclass
class RadioMap:
    """RSS tensor ``n1 x n2 x n_ap`` over a grid of reference points (RPs).

    RP ``(i, j)`` covers the cell whose lower corner is
    ``origin + (i * dx, j * dy)``; its location is the cell center.
    ``units="dBm"`` enforces the ``[-110, 0]`` range; any other value skips it
    (used for normalized or synthetic non-RSS data).
    """

    tensor: np.ndarray
    origin: tuple = (0.0, 0.0)
    spacing: tuple = (1.0, 1.0)
    units: str = "dBm"

    def __post_init__(self):
        self.tensor = as_tensor3(self.tensor, "radio map")
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.spacing = (float(self.spacing[0]), float(self.spacing[1]))
        if min(self.spacing) <= 0:
            raise ValueError("grid spacing must be positive")
        if self.units == "dBm":
            lo, hi = self.tensor.min(initial=0.0), self.tensor.max(initial=RSS_FLOOR)
            if lo < RSS_FLOOR - 1e-9 or hi > 1e-9:
                raise ValueError(f"RSS values must lie in [{RSS_FLOOR}, 0] dBm, got [{lo}, {hi}]")

    @property
    def shape(self):
        return self.tensor.shape

    @property
    def n_aps(self):
        return self.tensor.shape[2]

    def centers(self):
        """``(n1 * n2, 2)`` array of RP cell centers in row-major RP order."""
        n1, n2 = self.tensor.shape[:2]
        xs = self.origin[0] + (np.arange(n1) + 0.5) * self.spacing[0]
        ys = self.origin[1] + (np.arange(n2) + 0.5) * self.spacing[1]
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def fingerprints(self):
        """``(n1 * n2, n_ap)`` matrix, one fingerprint per RP, same order as :meth:`centers`."""
        return self.tensor.reshape(-1, self.n_aps)

    def with_tensor(self, tensor, units=None):
        return RadioMap(tensor, self.origin, self.spacing, self.units if units is None else units)

    def geometry(self):
        return {
            "shape": list(self.tensor.shape),
            "origin": list(self.origin),
            "spacing": list(self.spacing),
            "units": self.units,
        }

    def save(self, stem):
        write_tns3(f"{stem}.tns3", self.tensor)
        write_json(f"{stem}.json", self.geometry())

    @classmethod
    def load(cls, stem):
        geo = read_json(f"{stem}.json")
        tensor = read_tns3(f"{stem}.tns3")
        if list(tensor.shape) != list(geo["shape"]):
            raise ValueError(f"{stem}: sidecar shape {geo['shape']} does not match tensor {tensor.shape}")
        return cls(tensor, tuple(geo["origin"]), tuple(geo["spacing"]), geo.get("units", "dBm"))
