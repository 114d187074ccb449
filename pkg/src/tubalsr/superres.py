"""Patch-based super-resolution of radio maps with a coupled dictionary pair.

A spatial ``p1 x p2`` patch spanning all APs becomes one lateral slice of
length ``p1 * p2`` with the APs along the tube axis, so a batch of patches is
a ``(p1 p2) x N x n_ap`` tensor. APs are never interpolated or patched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import DictionaryPair, train_joint
from .radiomap import RSS_FLOOR, RadioMap
from .sparse import IstaConfig, ista_t
from .tensor import tprod

__all__ = [
    "PatchGrid",
    "downsample",
    "upsample_interp",
    "extract_patches",
    "assemble_patches",
    "normalize",
    "denormalize",
    "super_resolve",
    "patch_means",
    "psnr",
    "consistency_error",
    "block_mask",
    "training_pairs",
    "pair_samples",
    "train_sr_pair",
]


@dataclass(frozen=True)
class PatchGrid:
    """Patch placement over an ``n1 x n2`` map.

    Patches start every ``stride`` cells; when the stride does not land on the
    last row/column an extra patch flush with the edge is added. The stride
    may not exceed the patch size, so every cell is covered.
    """

    map_dims: tuple
    patch_dims: tuple
    stride: tuple

    def __post_init__(self):
        for n, p, s in zip(self.map_dims, self.patch_dims, self.stride):
            if p < 1 or s < 1 or p > n or s > p:
                raise ValueError(f"invalid patch grid: map {self.map_dims}, patch {self.patch_dims}, stride {self.stride}")

    @classmethod
    def for_map(cls, m, patch_dims, stride):
        stride = (stride, stride) if np.isscalar(stride) else tuple(stride)
        return cls(tuple(m.shape[:2]), tuple(patch_dims), stride)

    @staticmethod
    def _starts(n, p, s):
        starts = list(range(0, n - p + 1, s))
        if starts[-1] != n - p:
            starts.append(n - p)
        return starts

    def positions(self):
        rows = self._starts(self.map_dims[0], self.patch_dims[0], self.stride[0])
        cols = self._starts(self.map_dims[1], self.patch_dims[1], self.stride[1])
        return [(i, j) for i in rows for j in cols]

    def scaled(self, s):
        return PatchGrid(
            (self.map_dims[0] * s, self.map_dims[1] * s),
            (self.patch_dims[0] * s, self.patch_dims[1] * s),
            (self.stride[0] * s, self.stride[1] * s),
        )


def downsample(m, s):
    """Mean over ``s x s`` blocks of RPs, separately for every AP."""
    n1, n2, n3 = m.shape
    if s < 1 or n1 % s or n2 % s:
        raise ValueError(f"map dims {n1}x{n2} not divisible by {s}")
    coarse = m.tensor.reshape(n1 // s, s, n2 // s, s, n3).mean(axis=(1, 3))
    return RadioMap(coarse, m.origin, (m.spacing[0] * s, m.spacing[1] * s), m.units)


def _interp_matrix(n, s, align):
    """``(s n) x n`` linear interpolation weights along one axis."""
    out = np.arange(n * s)
    if align == "corner":
        x = np.minimum(out / s, n - 1)
    elif align == "center":
        x = (out + 0.5) / s - 0.5
    else:
        raise ValueError(f"align must be 'corner' or 'center', got {align!r}")
    W = np.zeros((n * s, n))
    if n == 1:
        W[:, 0] = 1.0
        return W
    # center alignment extrapolates linearly past the outermost samples
    i0 = np.clip(np.floor(x).astype(int), 0, n - 2)
    frac = x - i0
    W[out, i0] = 1.0 - frac
    W[out, i0 + 1] += frac
    return W


def upsample_interp(m, s, align="corner"):
    """Per-AP bilinear up-sampling by ``s``; the baseline for super-resolution.

    ``align="corner"`` puts fine sample ``o`` at coarse coordinate ``o / s``
    and replicates the last sample past the edge. ``align="center"`` aligns
    cell centers and extrapolates linearly, which makes it an exact inverse
    of :func:`downsample` on bilinear fields.
    """
    if s < 2:
        raise ValueError("up-sampling factor must be >= 2")
    n1, n2, _ = m.shape
    wx, wy = _interp_matrix(n1, s, align), _interp_matrix(n2, s, align)
    fine = np.einsum("ai,ijk,bj->abk", wx, m.tensor, wy)
    if m.units == "dBm":
        fine = np.clip(fine, RSS_FLOOR, 0.0)
    return RadioMap(fine, m.origin, (m.spacing[0] / s, m.spacing[1] / s), m.units)


def extract_patches(m, grid):
    """Stack the grid's patches as lateral slices: ``(p1 p2) x N x n_ap``."""
    t = m.tensor if isinstance(m, RadioMap) else np.asarray(m, dtype=float)
    if tuple(t.shape[:2]) != tuple(grid.map_dims):
        raise ValueError(f"grid built for {grid.map_dims}, map is {t.shape[:2]}")
    p1, p2 = grid.patch_dims
    pos = grid.positions()
    out = np.empty((p1 * p2, len(pos), t.shape[2]))
    for n, (i, j) in enumerate(pos):
        out[:, n, :] = t[i:i + p1, j:j + p2, :].reshape(p1 * p2, -1)
    return out


def assemble_patches(samples, grid):
    """Inverse of :func:`extract_patches`; overlapping cells are averaged."""
    p1, p2 = grid.patch_dims
    pos = grid.positions()
    if samples.shape[0] != p1 * p2 or samples.shape[1] != len(pos):
        raise ValueError(f"samples {samples.shape} do not fit grid with {len(pos)} patches of {grid.patch_dims}")
    n3 = samples.shape[2]
    acc = np.zeros(tuple(grid.map_dims) + (n3,))
    count = np.zeros(tuple(grid.map_dims) + (1,))
    for n, (i, j) in enumerate(pos):
        acc[i:i + p1, j:j + p2, :] += samples[:, n, :].reshape(p1, p2, n3)
        count[i:i + p1, j:j + p2, :] += 1.0
    return acc / count


def normalize(t, value_range):
    if value_range is None:
        return t
    lo, hi = value_range
    return (t - lo) / (hi - lo)


def denormalize(t, value_range):
    if value_range is None:
        return t
    lo, hi = value_range
    return t * (hi - lo) + lo


def super_resolve(coarse, pair, cfg=None, s=None, generator=None):
    """Super-resolve ``coarse`` patch by patch with the coupled dictionaries.

    Each coarse patch is coded against ``pair.coarse`` by ISTA-T and the fine
    patch is ``pair.fine * code``; overlapping fine patches are averaged. A
    ``generator`` callable, if given, maps normalized coarse patch samples
    to normalized fine samples in place of the ISTA-T path.
    """
    cfg = cfg or IstaConfig()
    s = pair.scale if s is None else s
    if s != pair.scale:
        raise ValueError(f"dictionary pair was trained for scale {pair.scale}, got {s}")
    grid = PatchGrid.for_map(coarse, pair.coarse_patch, pair.stride)
    y = normalize(extract_patches(coarse, grid), pair.value_range)
    if y.shape[0] != pair.coarse.atoms.shape[0] or y.shape[2] != pair.coarse.atoms.shape[2]:
        raise ValueError(f"coarse patches {y.shape} do not match dictionary {pair.coarse.atoms.shape}")
    mu = patch_means(y) if pair.center else 0.0
    if generator is None:
        code, _ = ista_t(pair.coarse.atoms, y - mu, cfg)
        x = tprod(pair.fine.atoms, code.code)
    else:
        x = generator(y - mu)
    x = x + mu
    fine = denormalize(assemble_patches(x, grid.scaled(s)), pair.value_range)
    if not np.all(np.isfinite(fine)):
        raise FloatingPointError("super-resolved map is not finite")
    if coarse.units == "dBm":
        fine = np.clip(fine, RSS_FLOOR, 0.0)
    return RadioMap(fine, coarse.origin, (coarse.spacing[0] / s, coarse.spacing[1] / s), coarse.units)


def patch_means(samples):
    """Per-patch, per-AP mean of a ``(p1 p2) x N x n_ap`` sample tensor (kept as one row)."""
    return samples.mean(axis=0, keepdims=True)


def psnr(reference, estimate, mask=None):
    """``20 log10(MAX_I / RMSE)`` with ``MAX_I`` the reference's dynamic range.

    ``mask`` (``n1 x n2`` booleans) restricts the comparison to some RPs.
    Identical inputs give ``inf``.
    """
    ref = reference.tensor if isinstance(reference, RadioMap) else np.asarray(reference, dtype=float)
    est = estimate.tensor if isinstance(estimate, RadioMap) else np.asarray(estimate, dtype=float)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {est.shape}")
    if mask is not None:
        ref, est = ref[mask], est[mask]
    rmse = np.sqrt(np.mean((ref - est) ** 2))
    if rmse == 0.0:
        return float("inf")
    peak = ref.max() - ref.min()
    return float(20.0 * np.log10(peak / rmse))


def consistency_error(coarse, fine):
    """RMSE between ``coarse`` and the block mean of ``fine`` at the same scale.

    A super-resolved map is not forced to average back to its input; this
    reports how far it strays.
    """
    s = fine.shape[0] // coarse.shape[0]
    if s < 1 or fine.shape != (coarse.shape[0] * s, coarse.shape[1] * s, coarse.shape[2]):
        raise ValueError(f"{fine.shape} is not an integer upscaling of {coarse.shape}")
    return float(np.sqrt(np.mean((downsample(fine, s).tensor - coarse.tensor) ** 2)))


def block_mask(dims, block, train_frac, seed):
    """Boolean RP mask marking blocks kept at fine granularity.

    ``dims`` is divided into ``block x block`` tiles; ``round(train_frac *
    tiles)`` of them, chosen by ``seed``, are True. The rest are held out.
    """
    b1, b2 = dims[0] // block, dims[1] // block
    if b1 * block != dims[0] or b2 * block != dims[1]:
        raise ValueError(f"map dims {dims} not divisible into {block}x{block} blocks")
    rng = np.random.default_rng(seed)
    n_blocks = b1 * b2
    chosen = np.zeros(n_blocks, dtype=bool)
    chosen[rng.permutation(n_blocks)[: int(round(train_frac * n_blocks))]] = True
    return np.kron(chosen.reshape(b1, b2), np.ones((block, block), dtype=bool)).astype(bool)


def _block_mean(t, s):
    n1, n2, n3 = t.shape
    return t.reshape(n1 // s, s, n2 // s, s, n3).mean(axis=(1, 3))


def training_pairs(fine_map, s, coarse_patch, mask=None, stride=1, dense=False):
    """Co-located fine/coarse patch samples for dictionary training.

    By default coarse patches are taken every ``stride`` coarse cells from
    ``downsample(fine_map, s)``. With ``dense=True`` fine windows start every
    ``stride`` fine cells, at any phase relative to the coarse grid, and the
    coarse partner is the block mean of the window; this multiplies the
    number of pairs on small maps. A position is kept only when its fine
    footprint lies entirely inside ``mask``.
    """
    coarse = downsample(fine_map, s)
    grid = PatchGrid.for_map(coarse, coarse_patch, stride)
    fgrid = grid.scaled(s)
    if dense:
        fgrid = PatchGrid.for_map(fine_map, fgrid.patch_dims, stride)
    keep = []
    for n, (i, j) in enumerate(fgrid.positions()):
        if mask is None or mask[i:i + fgrid.patch_dims[0], j:j + fgrid.patch_dims[1]].all():
            keep.append(n)
    if not keep:
        raise ValueError("no training patch lies inside the fine-granularity mask")
    fine_s = extract_patches(fine_map, fgrid)[:, keep, :]
    if dense:
        p1, p2 = fgrid.patch_dims
        windows = fine_s.reshape(p1, p2, len(keep), -1).transpose(0, 1, 3, 2)
        coarse_s = np.stack(
            [_block_mean(windows[..., n], s).reshape(-1, windows.shape[2]) for n in range(len(keep))], axis=1
        )
    else:
        coarse_s = extract_patches(coarse, grid)[:, keep, :]
    return fine_s, coarse_s


def pair_samples(fine_map, pair, mask=None, stride=1):
    """Training samples in the pair's coding domain (normalized, centered if the pair is)."""
    fine_s, coarse_s = training_pairs(fine_map, pair.scale, pair.coarse_patch, mask, stride)
    fine_s, coarse_s = normalize(fine_s, pair.value_range), normalize(coarse_s, pair.value_range)
    if pair.center:
        mu = patch_means(coarse_s)
        fine_s, coarse_s = fine_s - mu, coarse_s - mu
    return fine_s, coarse_s


def train_sr_pair(fine_map, s=2, mask=None, coarse_patch=(4, 4), stride=2, r=32, lam=0.05,
                  iters=20, seed=0, train_stride=1, ista=None, dense=False, center=False, callback=None):
    """Train a :class:`DictionaryPair` from the fine-granularity part of a map.

    Values are normalized to [0, 1] over the dynamic range of the training
    region before coding. With ``center`` both patches of a pair lose the
    coarse patch's per-AP mean (for block-mean data it is also the fine
    patch's mean), so the dictionaries only model structure around it.
    """
    fine_s, coarse_s = training_pairs(fine_map, s, coarse_patch, mask, train_stride, dense)
    vals = fine_map.tensor[mask] if mask is not None else fine_map.tensor
    value_range = (float(vals.min()), float(vals.max()))
    if value_range[1] <= value_range[0]:
        value_range = (value_range[0], value_range[0] + 1.0)
    fine_s, coarse_s = normalize(fine_s, value_range), normalize(coarse_s, value_range)
    if center:
        mu = patch_means(coarse_s)
        fine_s, coarse_s = fine_s - mu, coarse_s - mu
    return train_joint(
        fine_s, coarse_s, r, lam, iters, seed=seed, ista=ista, callback=callback,
        coarse_patch=tuple(coarse_patch), scale=s, stride=stride, value_range=value_range, center=center,
    )
