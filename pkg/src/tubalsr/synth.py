"""Synthetic ground truth: planted low-tubal-rank tensors and path-loss radio maps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .radiomap import RSS_FLOOR, RadioMap
from .tensor import tprod

__all__ = ["PathLossParams", "gen_low_tubal_rank", "gen_radiomap", "paper_scenario", "random_aps"]


def gen_low_tubal_rank(n1, n2, n3, r, seed=0):
    """``G1 * G2`` for seeded Gaussian ``G1 (n1 x r x n3)`` and ``G2 (r x n2 x n3)``."""
    if not 0 <= r <= min(n1, n2):
        raise ValueError(f"r must lie in [0, {min(n1, n2)}], got {r}")
    if r == 0:
        return np.zeros((n1, n2, n3))
    rng = np.random.default_rng(seed)
    g1 = rng.standard_normal((n1, r, n3))
    g2 = rng.standard_normal((r, n2, n3))
    return tprod(g1, g2)


@dataclass
class PathLossParams:
    """Log-distance path loss with spatially correlated log-normal shadowing.

    ``RSS = tx_power_dbm - 10 * gamma * log10(max(d, d0) / d0) + shadowing``.
    """

    ap_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    tx_power_dbm: float = -30.0
    gamma: float = 2.7
    d0: float = 1.0
    sigma_db: float = 4.0
    corr_length: float = 3.0
    seed: int = 0

    def __post_init__(self):
        self.ap_positions = np.atleast_2d(np.asarray(self.ap_positions, dtype=float))
        if not self.gamma > 0:
            raise ValueError("path loss exponent must be positive")
        if self.sigma_db < 0:
            raise ValueError("shadowing sigma must be non-negative")
        if self.d0 <= 0:
            raise ValueError("reference distance must be positive")


def random_aps(region_dims, n_aps, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform((0.0, 0.0), region_dims, size=(n_aps, 2))


def _shadowing(shape, spacing, corr_length, rng):
    # white noise smoothed by a Gaussian kernel, rescaled to unit variance
    noise = rng.standard_normal(shape)
    sig = (corr_length / spacing[0], corr_length / spacing[1])
    field_ = gaussian_filter(noise, sigma=sig, mode="reflect")
    std = field_.std()
    return field_ / std if std > 0 else field_


def gen_radiomap(region_dims, grid_spacing, params):
    """Sample RSS on a grid of cell centers covering ``region_dims`` meters.

    The map has ``round(W / dx) x round(H / dy)`` reference points and one
    depth slice per AP. Values are clamped to ``[-110, 0]`` dBm.
    """
    if params.ap_positions.shape[0] == 0 or params.ap_positions.shape[1] != 2:
        raise ValueError("need at least one AP position (x, y)")
    dx, dy = (grid_spacing, grid_spacing) if np.isscalar(grid_spacing) else grid_spacing
    n1 = int(round(region_dims[0] / dx))
    n2 = int(round(region_dims[1] / dy))
    if n1 < 1 or n2 < 1:
        raise ValueError("region smaller than one grid cell")
    xs = (np.arange(n1) + 0.5) * dx
    ys = (np.arange(n2) + 0.5) * dy
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    rng = np.random.default_rng(params.seed)
    n_ap = params.ap_positions.shape[0]
    rss = np.empty((n1, n2, n_ap))
    for a, (ax, ay) in enumerate(params.ap_positions):
        d = np.hypot(gx - ax, gy - ay)
        rss[:, :, a] = params.tx_power_dbm - 10.0 * params.gamma * np.log10(np.maximum(d, params.d0) / params.d0)
        if params.sigma_db > 0:
            rss[:, :, a] += params.sigma_db * _shadowing((n1, n2), (dx, dy), params.corr_length, rng)
    rss = np.clip(rss, RSS_FLOOR, 0.0)
    return RadioMap(rss, origin=(0.0, 0.0), spacing=(dx, dy))


def paper_scenario(seed=0, sigma_db=4.0, spacing=1.0):
    """6 m x 16 m region with 14 APs inside; the 1 m grid gives a 6 x 16 x 14 map.

    A finer ``spacing`` samples the same APs and the same propagation
    parameters on a denser grid (the shadowing field is drawn per grid).
    """
    region = (6.0, 16.0)
    aps = random_aps(region, 14, seed)
    return gen_radiomap(region, spacing, PathLossParams(ap_positions=aps, sigma_db=sigma_db, seed=seed))
