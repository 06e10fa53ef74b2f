"""
Stochastic forcing
Noise covariance gamma_k, Reynolds number, nondimensionalization, and exact
sampling of the hermitian Ornstein-Uhlenbeck mode processes z_k(t)
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

import config
from confidence import EnsembleResult
from exceptions import ConfigError
from lattice_field import ModeKey, Truncation, as_pair, complete_from_half
from rng_streams import complex_normal, stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Per-mode forcing intensities gamma_k on a truncated lattice"""
    truncation: Truncation
    gamma: np.ndarray = field(repr=False)
    c_gamma: float = config.C_GAMMA

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float, copy=True)
        if g.shape != self.truncation.shape:
            raise ValueError(f"gamma has shape {g.shape}, expected {self.truncation.shape}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValueError("gamma must be finite and nonnegative")
        if np.any(g[~self.truncation.mask] != 0):
            raise ValueError("gamma must vanish at k = 0 and outside the truncation")
        if not np.array_equal(g, g[::-1, ::-1]):
            raise ValueError("gamma must satisfy gamma_k = gamma_{-k}")
        R = 0.5 * float(np.sum(g))
        bound = self.c_gamma * R * np.exp(-self.truncation.lattice.kabs)
        violated = self.truncation.mask & (g > bound * (1.0 + 1e-12))
        if np.any(violated):
            i, j = np.argwhere(violated)[0]
            k = (int(i) - self.truncation.k_max, int(j) - self.truncation.k_max)
            raise ValueError(
                f"gamma at {k} = {g[i, j]:.6g} exceeds the decay bound "
                f"C_gamma*R*exp(-|k|) = {bound[i, j]:.6g}"
            )
        g.setflags(write=False)
        object.__setattr__(self, 'gamma', g)

    @classmethod
    def zeros(cls, k_max: int, c_gamma: float = config.C_GAMMA) -> "NoiseSpec":
        trunc = Truncation(k_max)
        return cls(trunc, np.zeros(trunc.shape), c_gamma)

    @classmethod
    def from_modes(cls, k_max: int, modes: Mapping[ModeKey, float],
                   c_gamma: float = config.C_GAMMA) -> "NoiseSpec":
        """Build a spec from (kx, ky) -> gamma; giving gamma_k implies gamma_{-k}."""
        trunc = Truncation(k_max)
        g = np.zeros(trunc.shape)
        given = np.zeros(trunc.shape, dtype=bool)
        for k, value in modes.items():
            i, j = trunc.index(k)
            mi, mj = trunc.size - 1 - i, trunc.size - 1 - j
            value = float(value)
            if given[mi, mj] and g[mi, mj] != value:
                raise ValueError(f"gamma at {as_pair(k)} conflicts with its reflection")
            g[i, j] = g[mi, mj] = value
            given[i, j] = given[mi, mj] = True
        return cls(trunc, g, c_gamma)

    @classmethod
    def band(cls, k_max: int, reynolds: float, radius: float = config.FORCING_RADIUS,
             c_gamma: float = config.C_GAMMA) -> "NoiseSpec":
        """Equal gamma on every mode with |k| <= radius, normalized to the given R."""
        trunc = Truncation(k_max)
        band = trunc.mask & (trunc.lattice.kabs <= radius)
        n_modes = int(np.count_nonzero(band))
        if n_modes == 0:
            raise ValueError(f"no active modes with |k| <= {radius}")
        g = np.where(band, 2.0 * reynolds / n_modes, 0.0)
        return cls(trunc, g, c_gamma)

    @property
    def reynolds(self) -> float:
        return reynolds(self)

    def gamma_at(self, k: ModeKey) -> float:
        return float(self.gamma[self.truncation.index(k)])

    def scaled(self, s: float) -> "NoiseSpec":
        return NoiseSpec(self.truncation, s * self.gamma, self.c_gamma)


@dataclass(frozen=True)
class OUState:
    """Current values z_k(t) of the mode processes"""
    z: np.ndarray = field(repr=False)
    t: float = 0.0

    @classmethod
    def zero(cls, truncation: Truncation) -> "OUState":
        return cls(truncation.zeros(), 0.0)


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity, box scale and forcing strength in physical units"""
    nu: float
    L: float
    Gamma0: float
    gamma_shape: Mapping[ModeKey, float]
    k_max: int

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.Gamma0 < 0:
            raise ValueError(f"Gamma0 must be nonnegative, got {self.Gamma0}")


@dataclass(frozen=True)
class OUPath:
    """OU values on a uniform time grid: z has shape (n_times, n, n)"""
    times: np.ndarray
    z: np.ndarray

    @property
    def tau(self) -> float:
        return float(self.times[-1] - self.times[0])


def reynolds(spec: NoiseSpec) -> float:
    """R = 1/2 sum_k gamma_k."""
    return 0.5 * float(np.sum(spec.gamma))


def nondimensionalize(p: PhysicalParams, c_gamma: float = config.C_GAMMA) -> NoiseSpec:
    """gamma_k = (L^2 / nu^3) * Gamma0 * shape(k), with the shape summing to 1."""
    shape = NoiseSpec.from_modes(p.k_max, p.gamma_shape, c_gamma=math.inf)
    total = float(np.sum(shape.gamma))
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"gamma_shape must sum to 1 over the lattice, got {total}")
    scale = p.L ** 2 / p.nu ** 3 * p.Gamma0
    return NoiseSpec(shape.truncation, scale * shape.gamma, c_gamma)


def ou_variance(spec: NoiseSpec, k: ModeKey, t: float) -> float:
    """E|z_k(t)|^2 from z_k(0) = 0."""
    kx, ky = as_pair(k)
    k2 = kx * kx + ky * ky
    return spec.gamma_at(k) * (-math.expm1(-2.0 * k2 * t)) / (2.0 * k2)


def ou_covariance(spec: NoiseSpec, k: ModeKey, t: float, s: float) -> float:
    """E z_k(t) z_{-k}(s) from z(0) = 0."""
    kx, ky = as_pair(k)
    k2 = kx * kx + ky * ky
    return spec.gamma_at(k) / (2.0 * k2) * (math.exp(-abs(t - s) * k2) - math.exp(-(t + s) * k2))


@lru_cache(maxsize=64)
def _ou_coefficients(spec: NoiseSpec, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Decay factor on the full lattice and increment std on the half-lattice."""
    lat = spec.truncation.lattice
    decay = np.where(lat.mask, np.exp(-lat.k2 * h), 0.0)
    variance = spec.gamma * (-np.expm1(-2.0 * lat.k2 * h)) * 0.5 * lat.inv_k2
    i, j = spec.truncation.half_indices
    std = np.sqrt(variance[i, j])
    decay.setflags(write=False)
    std.setflags(write=False)
    return decay, std


def ou_step(state: OUState, spec: NoiseSpec, h: float, rng: np.random.Generator) -> OUState:
    """
    Exact OU update z_k(t+h) = e^{-|k|^2 h} z_k(t) + xi_k.

    xi is drawn on the half-lattice only (one complex normal per mode, in
    half-lattice order) and mirrored, so hermitian symmetry is exact.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    decay, std = _ou_coefficients(spec, float(h))
    xi = complete_from_half(spec.truncation, std * complex_normal(rng, spec.truncation.n_half))
    return OUState(decay * state.z + xi, state.t + h)


def sample_ou_path(spec: NoiseSpec, tau: float, n_substeps: int, seed: int,
                   lane: int = 0, step_offset: int = 0,
                   start: Optional[OUState] = None) -> OUPath:
    """OU values on n_substeps + 1 uniform grid points over [0, tau]."""
    state = start or OUState.zero(spec.truncation)
    t0 = state.t
    h = tau / n_substeps
    z = np.empty((n_substeps + 1,) + spec.truncation.shape, dtype=complex)
    z[0] = state.z
    for s in range(1, n_substeps + 1):
        state = ou_step(state, spec, h, stream(seed, lane, step_offset + s))
        z[s] = state.z
    times = t0 + np.linspace(0.0, tau, n_substeps + 1)
    return OUPath(times, z)


def ou_sup_block(spec: NoiseSpec, tau: float, n_substeps: int, n_paths: int,
                 seed: int, lane: int) -> np.ndarray:
    """
    Grid sup of |z_k| over [0, tau] from z(0) = 0 for a block of paths.

    Returns shape (n_paths, n_half), one column per half-lattice mode.
    """
    h = tau / n_substeps
    decay_full, std = _ou_coefficients(spec, float(h))
    i, j = spec.truncation.half_indices
    decay = decay_full[i, j]
    z = np.zeros((n_paths, len(i)), dtype=complex)
    sup = np.zeros((n_paths, len(i)))
    for s in range(1, n_substeps + 1):
        rng = stream(seed, lane, s)
        z = decay * z + std * complex_normal(rng, (n_paths, len(i)))
        np.maximum(sup, np.abs(z), out=sup)
    return sup


def path_blocks(n_traj: int, block_size: int = config.BLOCK_SIZE):
    lane = 0
    for start in range(0, n_traj, block_size):
        yield lane, min(block_size, n_traj - start)
        lane += 1


def ou_sup_tail_estimate(spec: NoiseSpec, k: ModeKey, tau: float, B: float,
                         n_traj: int, n_substeps: int, seed: int,
                         config_digest: str = "") -> EnsembleResult:
    """
    Empirical Prob{max over the grid of |z_k(t)| >= B sqrt(tau)}, t in [0, tau].

    The grid sup underestimates the continuous sup, so p_hat is a lower
    estimate of the continuous-time probability.
    """
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    if n_substeps < 100:
        raise ValueError(f"n_substeps must be at least 100, got {n_substeps}")
    kx, ky = as_pair(k)
    k2 = kx * kx + ky * ky
    gamma = spec.gamma_at(k)
    h = tau / n_substeps
    decay = math.exp(-k2 * h)
    std = math.sqrt(gamma * (-math.expm1(-2.0 * k2 * h)) / (2.0 * k2))
    threshold = B * math.sqrt(tau)
    hits = []
    for lane, size in path_blocks(n_traj):
        z = np.zeros(size, dtype=complex)
        sup = np.zeros(size)
        for s in range(1, n_substeps + 1):
            z = decay * z + std * complex_normal(stream(seed, lane, s), size)
            np.maximum(sup, np.abs(z), out=sup)
        hits.append(sup >= threshold)
    return EnsembleResult.from_hits(
        np.concatenate(hits), seed, config_digest, event_kind="ou_sup",
        parameters={"k": [kx, ky], "tau": tau, "B": B, "n_substeps": n_substeps, "gamma": gamma},
    )


def a_d_bound(truncation: Truncation, D: float, tau: float) -> np.ndarray:
    """tau^{1/2} D e^{-|k|/4} on the full lattice."""
    return math.sqrt(tau) * D * np.exp(-truncation.lattice.kabs / 4.0)


def event_A_D_indicator(ou_path: Union[OUPath, np.ndarray], D: float, tau: float,
                        truncation: Optional[Truncation] = None) -> bool:
    """True iff every mode's grid sup of |z_k| stays below tau^{1/2} D e^{-|k|/4}."""
    z = ou_path.z if isinstance(ou_path, OUPath) else np.asarray(ou_path)
    if truncation is None:
        truncation = Truncation((z.shape[-1] - 1) // 2)
    sup = np.max(np.abs(z), axis=0)
    bound = a_d_bound(truncation, D, tau)
    return bool(np.all(sup[truncation.mask] <= bound[truncation.mask]))


# --- noise spec files ---------------------------------------------------------

def load_noise_spec(path: Union[str, Path]) -> NoiseSpec:
    """
    Read a key-value noise file:

        k_max = 8
        c_gamma = 10.0
        mode = 1 0 0.5     # kx ky gamma; the reflection -k is implied
    """
    path = Path(path)
    k_max = None
    c_gamma = config.C_GAMMA
    modes: Dict[Tuple[int, int], float] = {}
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read noise file: {e}", key='noise_file')
    for lineno, raw in enumerate(lines, 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'", key='noise_file')
        key, value = (part.strip() for part in line.split('=', 1))
        try:
            if key == 'k_max':
                k_max = int(value)
            elif key == 'c_gamma':
                c_gamma = float(value)
            elif key == 'mode':
                kx, ky, g = value.split()
                k = (int(kx), int(ky))
                mirror = (-k[0], -k[1])
                if mirror in modes and modes[mirror] != float(g):
                    raise ConfigError(f"{path}:{lineno}: gamma{k} conflicts with gamma{mirror}", key='noise_file')
                modes[k] = float(g)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'", key='noise_file')
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: {e}", key='noise_file')
    if k_max is None:
        raise ConfigError(f"{path}: missing k_max", key='noise_file')
    try:
        spec = NoiseSpec.from_modes(k_max, modes, c_gamma)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}", key='noise_file')
    logger.info(f"Loaded noise spec from {path}: {len(modes)} entries, R = {spec.reynolds:.6g}")
    return spec


def save_noise_spec(spec: NoiseSpec, path: Union[str, Path]) -> Path:
    """Write the half-lattice entries with gamma > 0 in the key-value format."""
    path = Path(path)
    lines = [f"k_max = {spec.truncation.k_max}", f"c_gamma = {spec.c_gamma!r}"]
    for k in spec.truncation.half_modes():
        g = spec.gamma_at(k)
        if g > 0:
            lines.append(f"mode = {k.kx} {k.ky} {g!r}")
    path.write_text("\n".join(lines) + "\n", encoding='utf-8')
    return path
