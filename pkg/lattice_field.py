"""
Truncated Fourier vorticity fields on the unit torus
Scalar functionals: enstrophy, analyticity norm, region membership,
minimal admissible D, shell spectrum, and velocity recovery
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import config
from exceptions import InitialDataError
from rng_streams import complex_normal

logger = logging.getLogger(__name__)

# relative slack on the two region inequalities; absorbs rounding at the boundary
REGION_RTOL = 1.0e-12


@dataclass(frozen=True)
class WaveVector:
    """Integer lattice vector k = (kx, ky), never the zero mode"""
    kx: int
    ky: int

    def __post_init__(self):
        if self.kx == 0 and self.ky == 0:
            raise ValueError("k = (0, 0) is not an active mode (zero-mean field)")

    @property
    def magnitude(self) -> float:
        return math.hypot(self.kx, self.ky)

    def __neg__(self) -> "WaveVector":
        return WaveVector(-self.kx, -self.ky)

    def as_tuple(self) -> Tuple[int, int]:
        return (self.kx, self.ky)


ModeKey = Union[WaveVector, Tuple[int, int]]


def as_pair(k: ModeKey) -> Tuple[int, int]:
    if isinstance(k, WaveVector):
        return k.as_tuple()
    kx, ky = k
    return int(kx), int(ky)


class _Lattice(NamedTuple):
    kx: np.ndarray
    ky: np.ndarray
    k2: np.ndarray
    kabs: np.ndarray
    inv_k2: np.ndarray
    mask: np.ndarray
    half: Tuple[np.ndarray, np.ndarray]


@lru_cache(maxsize=None)
def _lattice(k_max: int) -> _Lattice:
    axis = np.arange(-k_max, k_max + 1)
    kx, ky = np.meshgrid(axis, axis, indexing='ij')
    k2 = (kx * kx + ky * ky).astype(float)
    mask = (k2 > 0) & (k2 <= k_max * k_max)
    inv_k2 = np.zeros_like(k2)
    inv_k2[mask] = 1.0 / k2[mask]
    half_mask = mask & ((kx > 0) | ((kx == 0) & (ky > 0)))
    half = np.nonzero(half_mask)
    kabs = np.sqrt(k2)
    for a in (kx, ky, k2, kabs, inv_k2, mask, half[0], half[1]):
        a.setflags(write=False)
    return _Lattice(kx, ky, k2, kabs, inv_k2, mask, (half[0], half[1]))


@dataclass(frozen=True)
class Truncation:
    """Sharp spectral cutoff: active set {k : 0 < |k| <= k_max}"""
    k_max: int

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be a positive integer, got {self.k_max}")

    @property
    def size(self) -> int:
        return 2 * self.k_max + 1

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.size, self.size)

    @property
    def lattice(self) -> _Lattice:
        return _lattice(int(self.k_max))

    @property
    def mask(self) -> np.ndarray:
        return self.lattice.mask

    @property
    def half_indices(self) -> Tuple[np.ndarray, np.ndarray]:
        """Array indices of the half-lattice kx > 0 or (kx = 0, ky > 0), row-major order."""
        return self.lattice.half

    @property
    def n_half(self) -> int:
        return len(self.lattice.half[0])

    def index(self, k: ModeKey) -> Tuple[int, int]:
        kx, ky = as_pair(k)
        if kx * kx + ky * ky > self.k_max ** 2 or (kx == 0 and ky == 0):
            raise ValueError(f"mode {(kx, ky)} is not active for k_max={self.k_max}")
        return kx + self.k_max, ky + self.k_max

    def contains(self, k: ModeKey) -> bool:
        kx, ky = as_pair(k)
        return 0 < kx * kx + ky * ky <= self.k_max ** 2

    def modes(self) -> List[WaveVector]:
        kx, ky, mask = self.lattice.kx, self.lattice.ky, self.lattice.mask
        return [WaveVector(int(a), int(b)) for a, b in zip(kx[mask], ky[mask])]

    def half_modes(self) -> List[WaveVector]:
        i, j = self.half_indices
        return [WaveVector(int(a) - self.k_max, int(b) - self.k_max) for a, b in zip(i, j)]

    def zeros(self, dtype=complex) -> np.ndarray:
        return np.zeros(self.shape, dtype=dtype)


def mirror(arr: np.ndarray) -> np.ndarray:
    """Values at -k, conjugated: the hermitian partner of every entry (last two axes)."""
    return np.conj(arr[..., ::-1, ::-1])


def hermitian_deviation(arr: np.ndarray) -> float:
    """Relative deviation from a[-k] = conj(a[k])."""
    scale = float(np.max(np.abs(arr))) if arr.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(arr - mirror(arr)))) / scale


def symmetrize(arr: np.ndarray, truncation: Truncation) -> np.ndarray:
    """Project onto hermitian, zero-mean arrays supported on the active set."""
    out = 0.5 * (arr + mirror(arr))
    out = np.where(truncation.mask, out, 0.0)
    return out


def complete_from_half(truncation: Truncation, half_values: np.ndarray) -> np.ndarray:
    """Full hermitian array from values on the half-lattice (last axis = half-lattice order)."""
    half_values = np.asarray(half_values)
    lead = half_values.shape[:-1]
    out = np.zeros(lead + truncation.shape, dtype=complex)
    i, j = truncation.half_indices
    n = truncation.size - 1
    out[..., i, j] = half_values
    out[..., n - i, n - j] = np.conj(half_values)
    return out


@dataclass(frozen=True, eq=False)
class VorticityField:
    """Hermitian, zero-mean Fourier amplitudes omega_k on a truncated lattice"""
    truncation: Truncation
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex, copy=True)
        if a.shape != self.truncation.shape:
            raise ValueError(f"amplitude array has shape {a.shape}, expected {self.truncation.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("amplitudes must be finite")
        if np.any(a[~self.truncation.mask] != 0):
            raise ValueError("nonzero amplitude outside the active set (or at k = 0)")
        deviation = hermitian_deviation(a)
        if deviation > config.HERMITIAN_TOL:
            raise ValueError(f"amplitudes are not hermitian (relative deviation {deviation:.3e})")
        a.setflags(write=False)
        object.__setattr__(self, 'amplitudes', a)

    @classmethod
    def zeros(cls, k_max: int) -> "VorticityField":
        trunc = Truncation(k_max)
        return cls(trunc, trunc.zeros())

    @classmethod
    def from_modes(cls, k_max: int, modes: Mapping[ModeKey, complex]) -> "VorticityField":
        """Build a field from a partial mode map; omega_{-k} is completed as conj(omega_k)."""
        trunc = Truncation(k_max)
        a = trunc.zeros()
        given = np.zeros(trunc.shape, dtype=bool)
        for k, value in modes.items():
            i, j = trunc.index(k)
            mi, mj = trunc.size - 1 - i, trunc.size - 1 - j
            value = complex(value)
            if given[mi, mj] and a[mi, mj] != np.conj(value):
                raise ValueError(f"mode {as_pair(k)} conflicts with its conjugate partner")
            a[i, j] = value
            a[mi, mj] = np.conj(value)
            given[i, j] = given[mi, mj] = True
        return cls(trunc, a)

    @classmethod
    def from_array(cls, truncation: Truncation, arr: np.ndarray) -> "VorticityField":
        """Re-symmetrize an array produced by a numerical update, logging the drift."""
        deviation = hermitian_deviation(arr)
        if deviation > 0:
            logger.debug(f"Hermitian drift {deviation:.3e} removed")
        return cls(truncation, symmetrize(arr, truncation))

    @property
    def k_max(self) -> int:
        return self.truncation.k_max

    def amplitude(self, k: ModeKey) -> complex:
        return complex(self.amplitudes[self.truncation.index(k)])

    def scaled(self, c: float) -> "VorticityField":
        """Real rescaling c * omega (complex factors would break hermitian symmetry)."""
        return VorticityField(self.truncation, float(c) * self.amplitudes)

    def is_zero(self) -> bool:
        return not np.any(self.amplitudes)


@dataclass(frozen=True)
class NormParams:
    """(r, alpha, D) of the analyticity norm ||.||_D and region U_D"""
    r: float
    alpha: float
    D: float

    def __post_init__(self):
        if not self.r > 1:
            raise ValueError(f"r must exceed 1, got {self.r}")
        if not self.alpha > max(2.0, 1.0 + self.r):
            raise ValueError(f"alpha must exceed max(2, 1 + r) = {max(2.0, 1.0 + self.r)}, got {self.alpha}")
        if not self.D > 0:
            raise ValueError(f"D must be positive, got {self.D}")

    def with_D(self, D: float) -> "NormParams":
        return NormParams(self.r, self.alpha, D)


class Shell(NamedTuple):
    k: float
    e_k: float
    mode_count: int


@dataclass
class SpectrumEstimate:
    """Shell-binned energy spectrum e(k), shells in increasing k"""
    shells: List[Shell]

    @property
    def k(self) -> np.ndarray:
        return np.array([s.k for s in self.shells])

    @property
    def e(self) -> np.ndarray:
        return np.array([s.e_k for s in self.shells])

    def value(self, k: float) -> float:
        for s in self.shells:
            if s.k == k:
                return s.e_k
        raise KeyError(k)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.shells, columns=['k', 'e_k', 'mode_count'])


def enstrophy(field: VorticityField) -> float:
    """Phi = 1/2 sum_k |omega_k|^2 over all active modes."""
    a = field.amplitudes
    return 0.5 * float(np.sum(a.real ** 2 + a.imag ** 2))


def _norm_weights(truncation: Truncation, r: float, alpha: float, D: float) -> np.ndarray:
    kabs = truncation.lattice.kabs
    with np.errstate(over='ignore'):
        rate = np.power(np.float64(D), -float(alpha))
        return np.where(truncation.mask, kabs ** r * np.exp(rate * kabs), 0.0)


def d_norm_array(amplitudes: np.ndarray, truncation: Truncation, p: NormParams) -> np.ndarray:
    """||.||_D of one array or of a stack of arrays (leading axes kept)."""
    mag = np.abs(amplitudes)
    weights = _norm_weights(truncation, p.r, p.alpha, p.D)
    with np.errstate(invalid='ignore', over='ignore'):
        terms = np.where(mag > 0, mag * weights, 0.0)
    return np.max(terms, axis=(-2, -1))


def d_norm(field: VorticityField, p: NormParams) -> float:
    """sup_k |omega_k| |k|^r exp(D^{-alpha} |k|); 0 for the zero field."""
    return float(d_norm_array(field.amplitudes, field.truncation, p))


def in_region_U(field: VorticityField, p: NormParams) -> bool:
    """Membership in U_D = {||omega||_D <= D^alpha and Phi <= D^2}, boundary included."""
    with np.errstate(over='ignore'):
        norm_cap = np.power(np.float64(p.D), p.alpha)
    norm_ok = d_norm(field, p) <= norm_cap * (1.0 + REGION_RTOL)
    return bool(norm_ok and enstrophy(field) <= p.D * p.D * (1.0 + REGION_RTOL))


def minimal_D(field: VorticityField, r: float, alpha: float,
              tol: float = config.MINIMAL_D_TOL,
              ceiling: float = config.D_CEILING) -> float:
    """
    Smallest D (to absolute tolerance tol) with the field inside U_D.

    Both region conditions are monotone in D, so bisection on [0, ceiling]
    is valid. Returns math.inf when even the ceiling does not admit the
    field.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if field.is_zero():
        return 0.0
    base = NormParams(r, alpha, ceiling)
    if not in_region_U(field, base):
        logger.warning(f"Field lies outside U_D for every D <= {ceiling:g}")
        return math.inf
    lo, hi = 0.0, float(ceiling)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= 0 or mid == lo or mid == hi:
            break
        if in_region_U(field, base.with_D(mid)):
            hi = mid
        else:
            lo = mid
    return hi


def analyticity_radius(field: VorticityField, r: float, alpha: float,
                       tol: float = config.MINIMAL_D_TOL) -> float:
    """Width D_t^{-alpha} of the analyticity strip certified by the smallest admissible D."""
    d_min = minimal_D(field, r, alpha, tol)
    if d_min == 0.0:
        return math.inf
    if math.isinf(d_min):
        return 0.0
    return d_min ** (-alpha)


def shell_index(truncation: Truncation, binning: str = "nearest") -> np.ndarray:
    """Integer shell label of every lattice entry (0 outside the active set)."""
    kabs = truncation.lattice.kabs
    if binning == "nearest":
        shells = np.floor(kabs + 0.5)
    elif binning == "floor":
        shells = np.floor(kabs)
    else:
        raise ValueError(f"unknown binning rule '{binning}'")
    return np.where(truncation.mask, shells, 0).astype(int)


def energy_spectrum(ensemble: Sequence[VorticityField], binning: str = "nearest") -> SpectrumEstimate:
    """
    e(k) = k^{-1} * ensemble mean of the shell sum of |omega_k'|^2.

    With nearest-integer binning shell k collects |k'| in [k - 1/2, k + 1/2).
    """
    if len(ensemble) == 0:
        raise ValueError("energy_spectrum needs a nonempty ensemble")
    trunc = ensemble[0].truncation
    if any(f.truncation != trunc for f in ensemble):
        raise ValueError("all fields in the ensemble must share a truncation")
    labels = shell_index(trunc, binning).ravel()
    active = trunc.mask.ravel()
    n_shells = int(labels.max()) + 1
    power = np.zeros(n_shells)
    for f in ensemble:
        a = f.amplitudes.ravel()
        power += np.bincount(labels[active], weights=np.abs(a[active]) ** 2, minlength=n_shells)
    power /= len(ensemble)
    counts = np.bincount(labels[active], minlength=n_shells)
    shells = [
        Shell(float(k), float(power[k] / k), int(counts[k]))
        for k in range(1, n_shells) if counts[k] > 0
    ]
    return SpectrumEstimate(shells)


def velocity_from_vorticity(field: VorticityField) -> np.ndarray:
    """u_k = i(-k2, k1)/|k|^2 omega_k, returned as array (2, n, n) of (u1, u2)."""
    lat = field.truncation.lattice
    w = 1j * lat.inv_k2 * field.amplitudes
    return np.stack([-lat.ky * w, lat.kx * w])


# --- initial data -----------------------------------------------------------

def smooth_profile(truncation: Truncation, p: NormParams, exponent: Optional[float] = None) -> np.ndarray:
    """Real positive profile |k|^{-s} exp(-D^{-alpha}|k|), s = r + 1 by default."""
    s = p.r + 1.0 if exponent is None else exponent
    kabs = truncation.lattice.kabs
    with np.errstate(divide='ignore'):
        prof = np.where(truncation.mask, kabs ** (-s) * np.exp(-p.D ** (-p.alpha) * kabs), 0.0)
    return prof.astype(complex)


def _norm_caps(truncation: Truncation, p: NormParams) -> np.ndarray:
    """Largest |omega_k| compatible with ||omega||_D <= D^alpha, per mode."""
    weights = _norm_weights(truncation, p.r, p.alpha, p.D)
    caps = np.zeros(truncation.shape)
    caps[truncation.mask] = p.D ** p.alpha / weights[truncation.mask]
    return caps


def saturating_field(truncation: Truncation, p: NormParams, profile: str = "smooth",
                     fill: float = 1.0) -> VorticityField:
    """
    Deterministic initial data on the boundary of U_D, scaled by fill.

    "smooth" rescales the smooth profile until the binding constraint is
    met. "ascending" / "descending" raise half-lattice pairs to their norm
    cap in order of increasing / decreasing |k| until Phi = D^2, so both
    constraints are saturated when the caps allow it.
    """
    if profile == "smooth":
        prof = smooth_profile(truncation, p)
        phi = 0.5 * float(np.sum(np.abs(prof) ** 2))
        norm = float(d_norm_array(prof, truncation, p))
        scale = min(p.D / math.sqrt(phi), p.D ** p.alpha / norm)
        arr = scale * prof
    elif profile in ("ascending", "descending"):
        caps = _norm_caps(truncation, p)
        i, j = truncation.half_indices
        kabs = truncation.lattice.kabs[i, j]
        order = np.argsort(kabs, kind='stable')
        if profile == "descending":
            order = order[::-1]
        half = np.zeros(len(i))
        target = p.D * p.D
        phi = 0.0
        for idx in order:
            c = caps[i[idx], j[idx]]
            if phi + c * c >= target:
                half[idx] = math.sqrt(max(target - phi, 0.0))
                phi = target
                break
            half[idx] = c
            phi += c * c
        arr = complete_from_half(truncation, half)
    else:
        raise ValueError(f"unknown profile '{profile}'")
    field = VorticityField.from_array(truncation, fill * arr)
    if not in_region_U(field, p):
        raise InitialDataError(f"profile '{profile}' with fill {fill} is not inside U_D (D={p.D})")
    return field


def saturating_family(truncation: Truncation, p: NormParams) -> Dict[str, VorticityField]:
    """The boundary-saturating initial data used in place of a sup over U_D."""
    return {name: saturating_field(truncation, p, name) for name in ("smooth", "ascending", "descending")}


def random_field(truncation: Truncation, rng: np.random.Generator,
                 amplitude: float = 1.0, decay: float = 1.0) -> VorticityField:
    """Random hermitian field with complex Gaussian modes of envelope amplitude * |k|^{-decay}."""
    i, j = truncation.half_indices
    envelope = amplitude * truncation.lattice.kabs[i, j] ** (-decay)
    half = envelope * complex_normal(rng, len(i))
    return VorticityField(truncation, complete_from_half(truncation, half))
