"""
Galerkin-truncated vorticity transport term
B_k(w) = sum_l (k x l) |l|^{-2} w_{k-l} w_l with l, k-l and k all in the
truncation, evaluated by direct convolution (oracle) or on a 2/3-rule
padded FFT grid (fast path)
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
import scipy.fft

from lattice_field import Truncation, VorticityField, hermitian_deviation, symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BilinearResult:
    """Values N_k = B_k(w, w) as a hermitian field"""
    field: VorticityField

    @property
    def amplitudes(self) -> np.ndarray:
        return self.field.amplitudes


def min_grid_size(k_max: int) -> int:
    """Smallest grid that dealiases quadratic products exactly (M >= 3 k_max + 1)."""
    return 3 * k_max + 1


def convolution_direct(field: VorticityField) -> BilinearResult:
    """Double-loop evaluation: loop over l, vectorized over k."""
    trunc = field.truncation
    K = trunc.k_max
    n = trunc.size
    lat = trunc.lattice
    a = field.amplitudes
    # padded[q + 2K] = w_q for |q_i| <= 2K
    padded = np.zeros((4 * K + 1, 4 * K + 1), dtype=complex)
    padded[K:3 * K + 1, K:3 * K + 1] = a
    out = np.zeros(trunc.shape, dtype=complex)
    for i, j in zip(*np.nonzero(trunc.mask & (a != 0))):
        lx, ly = int(i) - K, int(j) - K
        shifted = padded[K - lx:K - lx + n, K - ly:K - ly + n]
        cross = (lat.kx * ly - lx * lat.ky) / float(lx * lx + ly * ly)
        out += cross * shifted * a[i, j]
    out = np.where(trunc.mask, out, 0.0)
    return BilinearResult(VorticityField.from_array(trunc, out))


@lru_cache(maxsize=None)
def _grid_indices(k_max: int, grid_size: int) -> Tuple[np.ndarray, np.ndarray]:
    trunc = Truncation(k_max)
    lat = trunc.lattice
    ix = (lat.kx[trunc.mask] % grid_size).astype(np.intp)
    iy = (lat.ky[trunc.mask] % grid_size).astype(np.intp)
    ix.setflags(write=False)
    iy.setflags(write=False)
    return ix, iy


def bilinear_array(amplitudes: np.ndarray, truncation: Truncation,
                   grid_size: Optional[int] = None) -> np.ndarray:
    """
    FFT evaluation of B on raw arrays; leading axes are batch axes.

    w(x) = sum_k w_k e^{-ik.x}, so the forward synthesis is fft2 and the
    analysis is ifft2. The product u.grad(w) is formed on an M x M grid
    with M >= 3 k_max + 1 and projected back onto the truncation.
    """
    K = truncation.k_max
    M = grid_size or scipy.fft.next_fast_len(min_grid_size(K))
    if M < min_grid_size(K):
        raise ValueError(f"grid size {M} cannot dealias k_max={K}; need at least {min_grid_size(K)}")
    lat = truncation.lattice
    mask = truncation.mask
    ix, iy = _grid_indices(K, M)
    lead = amplitudes.shape[:-2]
    w = amplitudes[..., mask]
    inv_k2 = lat.inv_k2[mask]
    kx = lat.kx[mask]
    ky = lat.ky[mask]
    # u_k = i(-ky, kx)/|k|^2 w_k ; grad w <-> -i k w_k
    spectral = np.stack([
        -1j * ky * inv_k2 * w,
        1j * kx * inv_k2 * w,
        -1j * kx * w,
        -1j * ky * w,
    ])
    grid = np.zeros((4,) + lead + (M, M), dtype=complex)
    grid[..., ix, iy] = spectral
    physical = scipy.fft.fft2(grid, axes=(-2, -1)).real
    advection = physical[0] * physical[2] + physical[1] * physical[3]
    coeffs = scipy.fft.ifft2(advection, axes=(-2, -1))
    out = np.zeros(lead + truncation.shape, dtype=complex)
    out[..., mask] = -coeffs[..., ix, iy]
    deviation = hermitian_deviation(out)
    if deviation > 0:
        logger.debug(f"Bilinear term hermitian deviation {deviation:.3e} removed")
    return symmetrize(out, truncation)


def convolution_fft(field: VorticityField, grid_size: Optional[int] = None) -> BilinearResult:
    """Same truncated term as convolution_direct, via the dealiased FFT grid."""
    out = bilinear_array(field.amplitudes, field.truncation, grid_size)
    return BilinearResult(VorticityField(field.truncation, out))


def quadratic_invariants(field: VorticityField, b: BilinearResult) -> Tuple[float, float]:
    """(Re sum conj(w_k) N_k, Re sum |k|^{-2} conj(w_k) N_k); both vanish for the Galerkin term."""
    if b.field.truncation != field.truncation:
        raise ValueError("bilinear result and field use different truncations")
    product = np.conj(field.amplitudes) * b.amplitudes
    enstrophy_flux = float(np.sum(product).real)
    energy_flux = float(np.sum(field.truncation.lattice.inv_k2 * product).real)
    return enstrophy_flux, energy_flux


def max_relative_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| / max |b| (0 when both vanish)."""
    scale = float(np.max(np.abs(b)))
    diff = float(np.max(np.abs(a - b)))
    if scale == 0.0:
        return diff
    return diff / scale
