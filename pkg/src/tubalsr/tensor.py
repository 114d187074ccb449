"""Third-order tensor algebra under the DFT-based t-product.

Tensors are plain ``float64`` numpy arrays of shape ``(n1, n2, n3)``; the
third axis is the tube axis. Frequency-domain tensors are complex arrays of
the same shape where slice ``k`` holds the k-th DFT coefficient of every tube.

The forward DFT is unnormalized and the inverse carries the ``1/n3`` factor
(numpy's default), so ``||T||_F**2 == sum_k ||T_hat[:, :, k]||_F**2 / n3``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TSvdFactors",
    "as_tensor3",
    "dft3",
    "idft3",
    "tprod",
    "ttranspose",
    "identity_tensor",
    "fro_norm",
    "l1_norm",
    "tsvd",
    "tube_norms",
    "tubal_rank",
    "energy_cdf",
    "unfolding_energy_cdf",
    "components_for_energy",
]

# idft3 discards imaginary residue up to this level (relative to the data scale)
IMAG_TOL = 1e-10


def as_tensor3(t, name="tensor"):
    """Validate ``t`` as a finite real third-order tensor and return it as float64."""
    arr = np.asarray(t, dtype=float)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def dft3(t):
    """Unnormalized DFT of every tube (along axis 2)."""
    return np.fft.fft(as_tensor3(t), axis=2)


def idft3(f):
    """Inverse of :func:`dft3`, returning a real tensor.

    Raises ``ValueError`` if the input is not (numerically) conjugate
    symmetric along the tube axis, since its inverse would then be complex.
    """
    f = np.asarray(f, dtype=complex)
    if f.ndim != 3:
        raise ValueError(f"frequency tensor must be 3-dimensional, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("frequency tensor contains non-finite entries")
    t = np.fft.ifft(f, axis=2)
    scale = max(1.0, float(np.max(np.abs(t.real), initial=0.0)))
    imag = float(np.max(np.abs(t.imag), initial=0.0))
    if imag > IMAG_TOL * scale:
        raise ValueError(
            f"inverse DFT has imaginary part {imag:.3e}; input is not conjugate symmetric"
        )
    return np.ascontiguousarray(t.real)


def _fprod(a_hat, b_hat):
    # slice-wise matrix product in the frequency domain
    return np.einsum("ilk,ljk->ijk", a_hat, b_hat)


def tprod(a, b):
    """t-product ``C = A * B`` of ``A (n1, n2, n3)`` and ``B (n2, n4, n3)``.

    Each tube of ``C`` is ``sum_l A(i, l, :) circconv B(l, j, :)``; computed as
    slice-wise matrix products of the DFTs.
    """
    a = as_tensor3(a, "a")
    b = as_tensor3(b, "b")
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ValueError(f"t-product dimension mismatch: {a.shape} * {b.shape}")
    if a.shape[2] == 1:
        return (a[:, :, 0] @ b[:, :, 0])[:, :, None]
    c_hat = _fprod(np.fft.fft(a, axis=2), np.fft.fft(b, axis=2))
    return np.ascontiguousarray(np.fft.ifft(c_hat, axis=2).real)


def ttranspose(t):
    """Tensor transpose: transpose each frontal slice, reverse slices 2..n3.

    In the frequency domain this is the conjugate transpose of every slice.
    """
    t = as_tensor3(t)
    n3 = t.shape[2]
    order = (-np.arange(n3)) % n3
    return np.ascontiguousarray(t.transpose(1, 0, 2)[:, :, order])


def identity_tensor(n, n3):
    """Identity tensor: first frontal slice is ``I_n``, the rest are zero."""
    eye = np.zeros((n, n, n3))
    eye[:, :, 0] = np.eye(n)
    return eye


def fro_norm(t):
    return float(np.linalg.norm(np.asarray(t, dtype=float).ravel()))


def l1_norm(t):
    return float(np.abs(np.asarray(t, dtype=float)).sum())


@dataclass(frozen=True)
class TSvdFactors:
    """Factors of ``T = U * Theta * V^T``.

    ``U`` is ``n1 x n1 x n3``, ``Theta`` is f-diagonal ``n1 x n2 x n3`` and
    ``V`` is ``n2 x n2 x n3``. Singular tubes ``Theta[i, i, :]`` come in
    non-increasing order of Frobenius norm.
    """

    U: np.ndarray
    Theta: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return tprod(tprod(self.U, self.Theta), ttranspose(self.V))

    def singular_tubes(self):
        m = min(self.Theta.shape[0], self.Theta.shape[1])
        idx = np.arange(m)
        return self.Theta[idx, idx, :]


def _slice_svds(t):
    """Full SVD of each frequency slice, exploiting conjugate symmetry."""
    n1, n2, n3 = t.shape
    f = np.fft.fft(t, axis=2)
    m = min(n1, n2)
    u_hat = np.empty((n1, n1, n3), dtype=complex)
    s_hat = np.zeros((m, n3))
    vh_hat = np.empty((n2, n2, n3), dtype=complex)
    for k in range(n3 // 2 + 1):
        self_conj = k == 0 or 2 * k == n3
        # self-conjugate slices are real: keep real factors so the inverse is real
        mat = f[:, :, k].real if self_conj else f[:, :, k]
        u, s, vh = np.linalg.svd(mat, full_matrices=True)
        u_hat[:, :, k], s_hat[:, k], vh_hat[:, :, k] = u, s, vh
        if not self_conj:
            u_hat[:, :, n3 - k] = u.conj()
            s_hat[:, n3 - k] = s
            vh_hat[:, :, n3 - k] = vh.conj()
    return u_hat, s_hat, vh_hat


def tsvd(t):
    """t-SVD of a real tensor via per-frequency-slice matrix SVDs.

    Each slice's singular values are already sorted, so the tube energies
    ``sum_k s_k[i]**2 / n3`` are non-increasing in ``i`` without reordering.
    """
    t = as_tensor3(t)
    n1, n2, n3 = t.shape
    u_hat, s_hat, vh_hat = _slice_svds(t)
    theta_hat = np.zeros((n1, n2, n3), dtype=complex)
    m = s_hat.shape[0]
    theta_hat[np.arange(m), np.arange(m), :] = s_hat
    v_hat = vh_hat.conj().transpose(1, 0, 2)
    U = np.ascontiguousarray(np.fft.ifft(u_hat, axis=2).real)
    V = np.ascontiguousarray(np.fft.ifft(v_hat, axis=2).real)
    Theta = np.zeros((n1, n2, n3))
    # off-diagonals are exactly zero; only transform the diagonal tubes
    Theta[np.arange(m), np.arange(m), :] = np.fft.ifft(s_hat, axis=1).real
    return TSvdFactors(U=U, Theta=Theta, V=V)


def tube_norms(t):
    """Frobenius norms of the singular tubes, largest first.

    Uses Parseval on the per-slice singular values, so no inverse transform
    is needed.
    """
    t = as_tensor3(t)
    _, s_hat, _ = _slice_svds(t)
    return np.sqrt(np.sum(s_hat**2, axis=1) / t.shape[2])


def tubal_rank(t, tol=1e-8):
    """Number of singular tubes with norm above ``tol`` times the largest one."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    norms = tube_norms(t)
    if norms.size == 0 or norms[0] == 0.0:
        return 0
    return int(np.count_nonzero(norms > tol * norms[0]))


def _cdf(energies):
    total = energies.sum()
    if total <= 0.0:
        raise ValueError("energy CDF undefined for a zero tensor")
    cdf = np.cumsum(energies) / total
    cdf[-1] = 1.0
    return cdf


def _centered(t, center):
    t = as_tensor3(t)
    return t - t.mean() if center else t


def energy_cdf(t, center=False):
    """Cumulative normalized squared singular-tube energies.

    ``center=True`` removes the global mean first. On RSS maps the common dBm
    offset otherwise carries nearly all the energy and hides the structure.
    """
    return _cdf(tube_norms(_centered(t, center)) ** 2)


def unfolding_energy_cdf(t, mode=1, center=False):
    """Energy CDF of the singular values of a matrix unfolding of ``t``.

    ``mode=1`` unfolds to ``n1 x (n2 n3)`` (same component count as the
    t-SVD); ``mode=3`` unfolds to ``n3 x (n1 n2)``, one row per AP.
    """
    t = _centered(t, center)
    if mode == 1:
        mat = t.transpose(0, 2, 1).reshape(t.shape[0], -1)
    elif mode == 2:
        mat = t.transpose(1, 0, 2).reshape(t.shape[1], -1)
    elif mode == 3:
        mat = t.transpose(2, 0, 1).reshape(t.shape[2], -1)
    else:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    s = np.linalg.svd(mat, compute_uv=False)
    return _cdf(s**2)


def components_for_energy(cdf, level=0.95):
    """Smallest number of leading components whose cumulative energy reaches ``level``."""
    cdf = np.asarray(cdf)
    return int(np.searchsorted(cdf, level - 1e-12) + 1)
