"""
Time integration of the stochastic vorticity equation
Production path: exponential (integrating-factor) Euler / Heun steps with
exact OU increments. Certified path: Picard iteration of the Duhamel
integral equation on short intervals of length tau = delta * D^{-4 alpha}.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import config
from exceptions import CertificationFailure, NumericalAbort
from field_checkpoint import CheckpointWriter
from lattice_field import (
    REGION_RTOL, ModeKey, NormParams, Truncation, VorticityField, as_pair,
    d_norm, d_norm_array, enstrophy, in_region_U, minimal_D, symmetrize,
)
from nonlinear_term import bilinear_array, convolution_fft, quadratic_invariants
from rng_streams import stream
from stochastic_forcing import NoiseSpec, OUPath, OUState, ou_step, sample_ou_path

logger = logging.getLogger(__name__)

SCHEMES = ("euler", "heun")
TAU_MODES = ("production", "certified")


@dataclass(frozen=True)
class StepParams:
    """Step size and Picard settings for both integration paths"""
    h: float = config.STEP_H
    delta: float = config.DELTA
    tau_mode: str = "production"
    picard_max_iter: int = config.PICARD_MAX_ITER
    picard_tol: float = config.PICARD_TOL
    picard_grid: int = config.PICARD_GRID
    scheme: str = config.SCHEME
    nonlinear: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.picard_tol > 0:
            raise ValueError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.picard_max_iter < 1:
            raise ValueError(f"picard_max_iter must be at least 1, got {self.picard_max_iter}")
        if self.picard_grid < 1:
            raise ValueError(f"picard_grid must be at least 1, got {self.picard_grid}")
        if self.tau_mode not in TAU_MODES:
            raise ValueError(f"tau_mode must be one of {TAU_MODES}, got '{self.tau_mode}'")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")


@dataclass
class Trajectory:
    """Sampled fields with one observable record per sample time"""
    times: List[float] = field(default_factory=list)
    fields: List[VorticityField] = field(default_factory=list)
    observables: List[Dict] = field(default_factory=list)

    def append(self, t: float, f: VorticityField, record: Dict):
        if self.times and not t > self.times[-1]:
            raise ValueError(f"trajectory times must increase: {t} after {self.times[-1]}")
        self.times.append(float(t))
        self.fields.append(f)
        self.observables.append(record)

    @property
    def final(self) -> VorticityField:
        return self.fields[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([rec[name] for rec in self.observables])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.observables)


@dataclass
class PicardResult:
    """Outcome of one certified interval"""
    trajectory: Trajectory
    iterations: int
    distances: List[float]
    ratios: List[float]
    ball_distance: float
    short_time_bounds_hold: bool
    improved_bound_holds: bool
    D: float = 0.0

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0


def certified_timestep(D: float, alpha: float, delta: float) -> float:
    """tau = delta * D^{-4 alpha}."""
    if not D > 0:
        raise ValueError(f"D must be positive, got {D}")
    return delta * D ** (-4.0 * alpha)


def phi1(x: np.ndarray) -> np.ndarray:
    """(e^x - 1)/x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid='ignore', divide='ignore'):
        out = np.where(x == 0, 1.0, np.expm1(x) / np.where(x == 0, 1.0, x))
    return out


def phi2(x: np.ndarray) -> np.ndarray:
    """(e^x - 1 - x)/x^2, series near 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    series = 0.5 + x / 6.0 + x * x / 24.0 + x ** 3 / 120.0 + x ** 4 / 720.0
    safe = np.where(small, 1.0, x)
    return np.where(small, series, (np.expm1(safe) - safe) / (safe * safe))


@lru_cache(maxsize=32)
def _etd_coefficients(k_max: int, h: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(e^{-k^2 h}, h phi1(-k^2 h), h phi2(-k^2 h)) masked to the active set."""
    trunc = Truncation(k_max)
    mask = trunc.mask
    x = -trunc.lattice.k2 * h
    decay = np.where(mask, np.exp(x), 0.0)
    w1 = np.where(mask, h * phi1(x), 0.0)
    w2 = np.where(mask, h * phi2(x), 0.0)
    for a in (decay, w1, w2):
        a.setflags(write=False)
    return decay, w1, w2


def _noise_array(z: Union[OUState, np.ndarray, None], trunc: Truncation) -> np.ndarray:
    if z is None:
        return trunc.zeros()
    return z.z if isinstance(z, OUState) else np.asarray(z)


def _check_finite(arr: np.ndarray, t: float, step: int):
    if not np.all(np.isfinite(arr)):
        raise NumericalAbort("NaN/Inf in vorticity amplitudes", time=t, step=step)


def _advance(w: np.ndarray, dz: np.ndarray, trunc: Truncation, h: float,
             scheme: str, nonlinear: bool) -> np.ndarray:
    decay, w1, w2 = _etd_coefficients(trunc.k_max, float(h))
    if not nonlinear:
        return decay * w + dz
    n0 = bilinear_array(w, trunc)
    predicted = decay * w + w1 * n0 + dz
    if scheme == "euler":
        return predicted
    return predicted + w2 * (bilinear_array(predicted, trunc) - n0)


def step_exponential(field: VorticityField, z_start: Union[OUState, np.ndarray, None],
                     z_end: Union[OUState, np.ndarray, None], h: float,
                     scheme: str = config.SCHEME, nonlinear: bool = True,
                     t: float = 0.0, step: int = 0) -> VorticityField:
    """
    One exponential-integrator step
    w <- e^{-k^2 h} w + h phi1(-k^2 h) N(w) + dz, dz = z_end - e^{-k^2 h} z_start.

    scheme "heun" adds the second-stage correction h phi2(-k^2 h)(N(w*) - N(w)).
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme '{scheme}'")
    trunc = field.truncation
    decay = _etd_coefficients(trunc.k_max, float(h))[0]
    dz = _noise_array(z_end, trunc) - decay * _noise_array(z_start, trunc)
    out = _advance(field.amplitudes, dz, trunc, h, scheme, nonlinear)
    _check_finite(out, t + h, step)
    return VorticityField.from_array(trunc, out)


def linear_mode_variance(omega0: VorticityField, spec: NoiseSpec, k: ModeKey, t: float) -> float:
    """E|w_k(t)|^2 for the linear equation: e^{-2k^2 t}|w_k(0)|^2 + gamma_k (1 - e^{-2k^2 t})/(2k^2)."""
    kx, ky = as_pair(k)
    k2 = kx * kx + ky * ky
    a = abs(omega0.amplitude(k)) ** 2
    return math.exp(-2.0 * k2 * t) * a + spec.gamma_at(k) * (-math.expm1(-2.0 * k2 * t)) / (2.0 * k2)


# --- observables ---------------------------------------------------------------

def observe(f: VorticityField, t: float, p: Optional[NormParams] = None,
            d_grid: Sequence[float] = (), track_minimal_d: bool = False,
            track_flux: bool = False) -> Dict:
    """Per-sample record: Phi, region flags, minimal D, flux residual."""
    phi = enstrophy(f)
    record = {"t": float(t), "Phi": phi}
    if p is not None:
        record["in_U_decay"] = in_region_U(f, p.with_D(math.sqrt(2.0 * math.exp(-t)) * p.D))
        if track_minimal_d:
            record["minimal_D"] = minimal_D(f, p.r, p.alpha)
        for D in d_grid:
            record[f"in_U_{D:g}"] = in_region_U(f, p.with_D(D))
    if track_flux:
        flux, _ = quadratic_invariants(f, convolution_fft(f))
        record["enstrophy_flux_residual"] = abs(flux) / phi ** 1.5 if phi > 0 else abs(flux)
    return record


# --- certified path ------------------------------------------------------------

def _xd_norm(stack: np.ndarray, trunc: Truncation, p: NormParams, times: np.ndarray) -> float:
    """sup_j ||v_j||_{D(t_j)}, D(t) = e^{-t/2} D."""
    values = [float(d_norm_array(stack[j], trunc, p.with_D(math.exp(-0.5 * t) * p.D)))
              for j, t in enumerate(times)]
    return max(values)


def _duhamel(nonlin: np.ndarray, trunc: Truncation, h: float) -> np.ndarray:
    """Discrete Duhamel integral with the phi1/phi2 (trapezoid-exponential) weights."""
    decay, w1, w2 = _etd_coefficients(trunc.k_max, float(h))
    out = np.zeros_like(nonlin)
    for j in range(len(nonlin) - 1):
        out[j + 1] = decay * out[j] + w1 * nonlin[j] + w2 * (nonlin[j + 1] - nonlin[j])
    return out


def picard_solve(omega0: VorticityField, ou_path: OUPath, p: NormParams,
                 step: StepParams) -> PicardResult:
    """
    Fixed point of F(v) = w0 + N(v) on the grid of ou_path, iterated from v = w0.

    w0(t) = e^{-t k^2} w(0) + z(t) - e^{-t k^2} z(0) is the free evolution.
    Raises CertificationFailure on violated hypotheses, non-contraction,
    leaving the ball ||v - w0|| <= 1, iteration exhaustion or a violated
    conclusion at a grid time.
    """
    trunc = omega0.truncation
    D, alpha = p.D, p.alpha
    phi0 = enstrophy(omega0)
    if d_norm(omega0, p) > D ** alpha * (1.0 + REGION_RTOL) or phi0 > 1.5 * D * D * (1.0 + REGION_RTOL):
        raise CertificationFailure(
            f"initial field violates the hypotheses (norm {d_norm(omega0, p):.6g} vs {D ** alpha:.6g}, "
            f"Phi {phi0:.6g} vs {1.5 * D * D:.6g})",
            reason="hypotheses",
        )
    times = np.asarray(ou_path.times, dtype=float) - float(ou_path.times[0])
    n = len(times) - 1
    if n < 1:
        raise ValueError("ou_path needs at least two grid points")
    h = times[-1] / n
    if not np.allclose(np.diff(times), h, rtol=1e-9, atol=0.0):
        raise ValueError("ou_path grid must be uniform")

    decay_t = np.where(trunc.mask, np.exp(-trunc.lattice.k2[None] * times[:, None, None]), 0.0)
    z = np.asarray(ou_path.z)
    free = decay_t * omega0.amplitudes + z - decay_t * z[0]

    v = free
    distances: List[float] = []
    ratios: List[float] = []
    ball = 0.0
    iterations = 0
    converged = False
    for iterations in range(1, step.picard_max_iter + 1):
        nonlin = bilinear_array(v, trunc) if step.nonlinear else np.zeros_like(v)
        v_new = symmetrize(free + _duhamel(nonlin, trunc, h), trunc)
        _check_finite(v_new, float(ou_path.times[-1]), iterations)
        dist = _xd_norm(v_new - v, trunc, p, times)
        ball = _xd_norm(v_new - free, trunc, p, times)
        if distances and distances[-1] > 0:
            ratios.append(dist / distances[-1])
        distances.append(dist)
        logger.debug(f"Picard iteration {iterations}: distance {dist:.3e}, ball {ball:.3e}")
        v = v_new
        if ball > 1.0:
            raise CertificationFailure(f"iterate left the ball (distance {ball:.6g} > 1)",
                                       reason="ball", ratio=ratios[-1] if ratios else None,
                                       iteration=iterations)
        if dist <= step.picard_tol:
            converged = True
            break
        if ratios and ratios[-1] >= 1.0:
            raise CertificationFailure(f"Picard map is not contracting (ratio {ratios[-1]:.6g})",
                                       reason="non-contraction", ratio=ratios[-1], iteration=iterations)
    if not converged:
        raise CertificationFailure(
            f"no convergence after {step.picard_max_iter} iterations (last distance {distances[-1]:.3e})",
            reason="max-iterations", ratio=max(ratios) if ratios else None, iteration=iterations,
        )

    traj = Trajectory()
    bounds_hold = True
    for j, t in enumerate(times):
        f = VorticityField.from_array(trunc, v[j])
        D_t = math.exp(-0.5 * t) * D
        widened = p.with_D(math.sqrt(2.0) * D_t)
        holds = bool(d_norm(f, widened) <= widened.D ** alpha * (1.0 + REGION_RTOL)
                     and enstrophy(f) <= 2.0 * D_t * D_t * (1.0 + REGION_RTOL))
        bounds_hold = bounds_hold and holds
        traj.append(float(ou_path.times[j]), f, {"t": float(ou_path.times[j]), "Phi": enstrophy(f),
                                                  "short_time_bounds_hold": holds})
    D_end = math.exp(-0.5 * times[-1]) * D
    improved = bool(d_norm(traj.final, p.with_D(D_end)) <= D_end ** alpha * (1.0 + REGION_RTOL))
    if not bounds_hold:
        raise CertificationFailure("fixed point violates the short-time bounds at a grid time",
                                   reason="conclusion", ratio=max(ratios) if ratios else None,
                                   iteration=iterations)
    logger.debug(f"Picard converged in {iterations} iterations, max ratio {max(ratios) if ratios else 0.0:.3e}")
    return PicardResult(traj, iterations, distances, ratios, ball, bounds_hold, improved, D)


# --- trajectories --------------------------------------------------------------

def _step_count(T: float, h: float) -> Tuple[int, float]:
    n_steps = max(1, int(math.ceil(T / h - 1e-9)))
    return n_steps, T / n_steps


def evolve(omega0: VorticityField, T: float, spec: NoiseSpec, p: Optional[NormParams],
           step: StepParams, seed: int, trajectory_index: int = 0,
           sample_every: int = 1, d_grid: Sequence[float] = (),
           track_minimal_d: bool = False, track_flux: bool = False,
           checkpoint_writer: Optional[CheckpointWriter] = None,
           certificates: Optional[List[PicardResult]] = None) -> Trajectory:
    """
    Advance omega0 over [0, T].

    Noise draws come from stream(seed, trajectory_index, step), so the
    result depends only on (seed, trajectory_index, inputs).
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if spec.truncation != omega0.truncation:
        raise ValueError("noise spec and initial field use different truncations")
    if sample_every < 1:
        raise ValueError("sample_every must be at least 1")

    def record(t: float, f: VorticityField) -> Dict:
        return observe(f, t, p, d_grid, track_minimal_d, track_flux)

    traj = Trajectory()
    traj.append(0.0, omega0, record(0.0, omega0))
    if step.tau_mode == "certified":
        return _evolve_certified(omega0, T, spec, p, step, seed, trajectory_index, traj, record,
                                 checkpoint_writer, certificates)

    trunc = omega0.truncation
    n_steps, h = _step_count(T, step.h)
    if h != step.h:
        logger.debug(f"Step adjusted from {step.h} to {h} to land on T = {T}")
    noisy = bool(np.any(spec.gamma > 0))
    decay = _etd_coefficients(trunc.k_max, float(h))[0]
    w = omega0.amplitudes
    z = OUState.zero(trunc)
    for s in range(1, n_steps + 1):
        if noisy:
            z_new = ou_step(z, spec, h, stream(seed, trajectory_index, s))
            dz = z_new.z - decay * z.z
            z = z_new
        else:
            dz = 0.0
        w = _advance(w, dz, trunc, h, step.scheme, step.nonlinear)
        _check_finite(w, s * h, s)
        w = symmetrize(w, trunc)
        if s % sample_every == 0 or s == n_steps:
            f = VorticityField(trunc, w)
            traj.append(s * h, f, record(s * h, f))
        if checkpoint_writer is not None and checkpoint_writer.enabled and s % checkpoint_writer.interval == 0:
            checkpoint_writer.maybe_write(s, VorticityField(trunc, w))
    return traj


def _evolve_certified(omega0, T, spec, p, step, seed, trajectory_index, traj, record,
                      checkpoint_writer, certificates) -> Trajectory:
    if p is None:
        raise ValueError("certified mode needs norm parameters")
    # tau(D(0)) <= tau(D(t_n)) on every later interval
    tau = certified_timestep(p.D, p.alpha, step.delta)
    n_intervals = max(1, int(math.ceil(T / tau - 1e-9)))
    logger.info(f"Certified evolution: tau = {tau:.6g}, {n_intervals} intervals")
    trunc = omega0.truncation
    current = omega0
    t = 0.0
    for i in range(n_intervals):
        length = min(tau, T - t)
        if length <= 0:
            break
        start = OUState(trunc.zeros(), t)
        path = sample_ou_path(spec, length, step.picard_grid, seed, lane=trajectory_index,
                              step_offset=i * step.picard_grid, start=start)
        # each interval restarts the time weight at D(t_n) = e^{-t_n/2} D
        result = picard_solve(current, path, p.with_D(math.exp(-0.5 * t) * p.D), step)
        if certificates is not None:
            certificates.append(result)
        current = result.trajectory.final
        t = float(path.times[-1])
        traj.append(t, current, record(t, current))
        if checkpoint_writer is not None:
            checkpoint_writer.maybe_write(i + 1, current)
    return traj
