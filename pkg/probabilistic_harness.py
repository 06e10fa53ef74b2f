"""
Monte Carlo harness for the probabilistic long-time bounds
Tail probabilities, exponential moments, region escape, ladder transition
estimates, time-averaged mode bounds, spectrum fits and A_D events, each
reported with exact binomial confidence intervals
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, TypeVar

import numpy as np
import scipy.integrate
import scipy.special
import scipy.stats

import config
from confidence import EnsembleResult, curve_rows, log_linear_slope
from exceptions import InsufficientShellsError
from integrator import StepParams, evolve
from lattice_field import (
    ModeKey, NormParams, SpectrumEstimate, Truncation, VorticityField, as_pair,
    energy_spectrum, enstrophy, in_region_U, saturating_family, saturating_field,
    smooth_profile,
)
from stochastic_forcing import NoiseSpec, path_blocks, a_d_bound, ou_sup_block, ou_sup_tail_estimate

logger = logging.getLogger(__name__)

Result = TypeVar('Result')

# sample stride that records only the initial and final states
FINAL_ONLY = 2 ** 62

EVENT_PARAMETERS = {
    "enstrophy_tail": ("Phi0", "t", "D"),
    "region_escape": ("D", "n_checks"),
    "region_membership": ("D",),
    "ou_sup": ("k", "tau", "B"),
    "time_avg_mode": ("k", "t", "T", "D"),
    "A_D": ("D", "tau"),
}


@dataclass(frozen=True)
class EventSpec:
    """Event kind plus the parameters it needs"""
    kind: str
    parameters: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_PARAMETERS:
            raise ValueError(f"unknown event kind '{self.kind}'")
        missing = [key for key in EVENT_PARAMETERS[self.kind] if key not in self.parameters]
        if missing:
            raise ValueError(f"event '{self.kind}' is missing parameters {missing}")

    def result(self, hits: Sequence[bool], seed: int, config_digest: str = "",
               started: Optional[float] = None, **extra) -> EnsembleResult:
        parameters = dict(self.parameters)
        parameters.update(extra)
        wall = time.perf_counter() - started if started is not None else 0.0
        return EnsembleResult.from_hits(hits, seed, config_digest, self.kind, parameters, wall)


@dataclass(frozen=True)
class LadderSpec:
    """Level geometry D_n^2 = 2 a_hat^{-1} R (e/2)^n, n = 0..levels"""
    a_hat: float = 1.0
    R: float = config.REYNOLDS
    levels: int = 5

    def __post_init__(self):
        if not self.a_hat > 0:
            raise ValueError(f"a_hat must be positive, got {self.a_hat}")
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if self.levels < 0:
            raise ValueError(f"levels must be nonnegative, got {self.levels}")

    def check_index(self, n: int):
        if not 0 <= n <= self.levels:
            raise ValueError(f"ladder index {n} outside 0..{self.levels}")

    def level(self, n: int) -> float:
        self.check_index(n)
        return math.sqrt(2.0 * self.R * (math.e / 2.0) ** n / self.a_hat)

    @staticmethod
    def pi(n: int) -> float:
        """pi_n = exp(-(e/2)^n)."""
        return math.exp(-(math.e / 2.0) ** n)

    def inclusion_holds(self, m: int, n: int) -> bool:
        """sqrt(2 e^{-1}) D_m <= D_n, so unit-time decay maps U_m into U_n."""
        return math.sqrt(2.0 / math.e) * self.level(m) <= self.level(n) * (1.0 + 1e-12)


@dataclass
class TailCurve:
    """Tail probabilities on a D^2 grid with the fitted log-slope"""
    d_squared: List[float]
    results: List[EnsembleResult]
    slope: float

    def rows(self) -> List[Dict]:
        return curve_rows(self.d_squared, self.results)


@dataclass
class MomentCheck:
    lhs: float
    rhs: float
    std_error: float
    passed: bool

    @property
    def upper(self) -> float:
        return self.lhs + 1.96 * self.std_error

    def to_dict(self) -> Dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "std_error": self.std_error,
                "upper": self.upper, "pass": self.passed}


@dataclass
class SpectrumReport:
    exponent: float
    intercept: float
    c_hat: float
    holds: bool
    bound_exponent: float
    shells_used: List[float]
    spectrum: SpectrumEstimate

    def to_dict(self) -> Dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "c_hat": self.c_hat,
            "holds": self.holds,
            "bound_exponent": self.bound_exponent,
            "shells_used": self.shells_used,
        }


@dataclass
class DecayLevelResult:
    joint: EnsembleResult
    per_time: List[EnsembleResult]
    check_times: List[float]

    @property
    def union_bound_holds(self) -> bool:
        return self.joint.p_hat >= 1.0 - sum(1.0 - r.p_hat for r in self.per_time) - 1e-12


# --- ensemble driver -------------------------------------------------------------

def run_trajectories(task: Callable[[int], Result], n_traj: int, threads: int = 1) -> List[Result]:
    """
    Run task(i) for i = 0..n_traj-1 on a thread pool.

    Results come back in index order, so reductions over them do not
    depend on the number of threads.
    """
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    if threads <= 1:
        return [task(i) for i in range(n_traj)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(task, range(n_traj)))


def field_with_enstrophy(truncation: Truncation, Phi0: float,
                         p: Optional[NormParams] = None) -> VorticityField:
    """Smooth deterministic profile rescaled to Phi = Phi0 exactly."""
    if Phi0 < 0:
        raise ValueError(f"Phi0 must be nonnegative, got {Phi0}")
    if Phi0 == 0:
        return VorticityField(truncation, truncation.zeros())
    p = p or NormParams(config.NORM_R, config.NORM_ALPHA, math.sqrt(Phi0))
    prof = smooth_profile(truncation, p)
    phi = 0.5 * float(np.sum(np.abs(prof) ** 2))
    return VorticityField.from_array(truncation, math.sqrt(Phi0 / phi) * prof)


def _final_enstrophies(omega0: VorticityField, t: float, spec: NoiseSpec, n_traj: int,
                       seed: int, step: StepParams, threads: int) -> np.ndarray:
    if t == 0:
        return np.full(n_traj, enstrophy(omega0))

    def task(i: int) -> float:
        return enstrophy(evolve(omega0, t, spec, None, step, seed, trajectory_index=i,
                                sample_every=FINAL_ONLY).final)

    return np.array(run_trajectories(task, n_traj, threads))


# --- enstrophy tails ---------------------------------------------------------------

def lemma1_tail(Phi0: float, t: float, D_grid: Sequence[float], spec: NoiseSpec, n_traj: int,
                seed: int, step: StepParams = StepParams(), threads: int = 1,
                config_digest: str = "") -> TailCurve:
    """Prob{Phi(t) >= D^2} on a D grid, from one ensemble, plus the slope of log p_hat vs D^2."""
    if len(D_grid) == 0:
        raise ValueError("D_grid must not be empty")
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    started = time.perf_counter()
    omega0 = field_with_enstrophy(spec.truncation, Phi0)
    phis = _final_enstrophies(omega0, t, spec, n_traj, seed, step, threads)
    d_squared = [float(D) ** 2 for D in D_grid]
    results = [
        EventSpec("enstrophy_tail", {"Phi0": Phi0, "t": t, "D": float(D)}).result(
            phis >= d2, seed, config_digest, started, R=spec.reynolds)
        for D, d2 in zip(D_grid, d_squared)
    ]
    slope = log_linear_slope(d_squared, [r.p_hat for r in results])
    logger.info(f"Enstrophy tail at t={t}: slope of log p vs D^2 = {slope:.4g}")
    return TailCurve(d_squared, results, slope)


def exp_moment_check(Phi0: float, t: float, spec: NoiseSpec, n_traj: int, seed: int,
                     step: StepParams = StepParams(), threads: int = 1,
                     reynolds: Optional[float] = None) -> MomentCheck:
    """
    E exp((c/R) Phi(t) e^t) against 3 exp((c/R) Phi0), c = e^{-1}/4.

    The mean is formed with logsumexp. Zero-noise runs need an explicit
    reynolds value since R = 0 there.
    """
    R = spec.reynolds if reynolds is None else reynolds
    if not R > 0:
        raise ValueError("exp_moment_check needs R > 0; pass reynolds for zero-noise runs")
    c = config.EXP_MOMENT_C
    omega0 = field_with_enstrophy(spec.truncation, Phi0)
    phis = _final_enstrophies(omega0, t, spec, n_traj, seed, step, threads)
    exponents = (c / R) * phis * math.exp(t)
    log_mean = float(scipy.special.logsumexp(exponents)) - math.log(n_traj)
    top = float(np.max(exponents))
    scaled = np.exp(exponents - top)
    spread = float(np.std(scaled, ddof=1)) if n_traj > 1 else 0.0
    with np.errstate(over='ignore'):
        lhs = float(np.exp(log_mean))
        std_error = float(np.exp(top) * spread / math.sqrt(n_traj))
        rhs = float(3.0 * np.exp((c / R) * Phi0))
    slack = 1.96 * std_error / lhs if lhs > 0 else 0.0
    passed = bool(lhs <= rhs * (1.0 + slack))
    logger.info(f"Exponential moment: lhs={lhs:.6g}, rhs={rhs:.6g}, pass={passed}")
    return MomentCheck(lhs, rhs, std_error, passed)


def enstrophy_corollary(Phi0: float, spec: NoiseSpec, n_checks: int, n_traj: int, seed: int,
                        step: StepParams = StepParams(), threads: int = 1,
                        config_digest: str = "") -> DecayLevelResult:
    """
    With D^2 = Phi0 and D(t) = e^{-t/2} D: Prob{Phi(t_i) <= 3/2 D(t_i)^2 for all checks}
    together with each per-time probability, on one sample set.
    """
    if not Phi0 > 0:
        raise ValueError("Phi0 must be positive")
    if n_checks < 1:
        raise ValueError("n_checks must be at least 1")
    started = time.perf_counter()
    omega0 = field_with_enstrophy(spec.truncation, Phi0)
    check_times = [float(t) for t in np.linspace(0.0, 1.0, n_checks + 1)[1:]]

    def task(i: int) -> np.ndarray:
        traj = evolve(omega0, 1.0, spec, None, step, seed, trajectory_index=i)
        times = np.array(traj.times)
        phi = traj.column("Phi")
        picks = [int(np.argmin(np.abs(times - t))) for t in check_times]
        return np.array([phi[j] <= 1.5 * math.exp(-times[j]) * Phi0 for j in picks])

    inside = np.array(run_trajectories(task, n_traj, threads))
    per_time = [
        EventSpec("enstrophy_tail", {"Phi0": Phi0, "t": t, "D": math.sqrt(1.5 * math.exp(-t) * Phi0)}).result(
            inside[:, i], seed, config_digest, started, event="below")
        for i, t in enumerate(check_times)
    ]
    joint = EventSpec("enstrophy_tail", {"Phi0": Phi0, "t": 1.0, "D": math.sqrt(Phi0)}).result(
        np.all(inside, axis=1), seed, config_digest, started, event="below_all", n_checks=n_checks)
    result = DecayLevelResult(joint, per_time, check_times)
    if not result.union_bound_holds:
        logger.warning("Joint probability falls below the union bound")
    return result


# --- OU sups and A_D --------------------------------------------------------------

def ou_sup_curve(spec: NoiseSpec, k: ModeKey, tau: float, B_grid: Sequence[float], n_traj: int,
                 n_substeps: int, seed: int, config_digest: str = "") -> TailCurve:
    """Prob{sup |z_k| >= B sqrt(tau)} over a B grid; slope is taken against B^2."""
    if len(B_grid) == 0:
        raise ValueError("B_grid must not be empty")
    results = [ou_sup_tail_estimate(spec, k, tau, B, n_traj, n_substeps, seed, config_digest)
               for B in B_grid]
    b_squared = [float(B) ** 2 for B in B_grid]
    return TailCurve(b_squared, results, log_linear_slope(b_squared, [r.p_hat for r in results]))


def a_d_probability(spec: NoiseSpec, D: float, tau: float, n_traj: int, n_substeps: int,
                    seed: int, config_digest: str = "") -> EnsembleResult:
    """Prob(A_D): every mode's grid sup of |z_k| on [0, tau] stays below tau^{1/2} D e^{-|k|/4}."""
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    started = time.perf_counter()
    trunc = spec.truncation
    i, j = trunc.half_indices
    bound = a_d_bound(trunc, D, tau)[i, j]
    hits = []
    for lane, size in path_blocks(n_traj):
        sup = ou_sup_block(spec, tau, n_substeps, size, seed, lane)
        hits.append(np.all(sup <= bound, axis=1))
    return EventSpec("A_D", {"D": D, "tau": tau}).result(
        np.concatenate(hits), seed, config_digest, started, n_substeps=n_substeps)


# --- region escape and ladder -----------------------------------------------------

def _check_stride(h: float, n_checks: int) -> int:
    n_steps = max(1, int(math.ceil(1.0 / h - 1e-9)))
    return max(1, int(round(n_steps / n_checks)))


def proposition_escape(D: float, spec: NoiseSpec, p: NormParams, n_traj: int, n_checks: int,
                       seed: int, step: StepParams = StepParams(), threads: int = 1,
                       profile: str = "smooth", fill: float = 1.0, D_prime: Optional[float] = None,
                       config_digest: str = "") -> EnsembleResult:
    """
    Prob{w(t) leaves U_{sqrt(2 e^{-t}) D'} at some check time in [0, 1]}, w(0) on the
    boundary of U_D (scaled by fill). D' defaults to D and must not be below it.
    The staying probability is 1 - p_hat.
    """
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    if n_checks < 1:
        raise ValueError("n_checks must be at least 1")
    D_prime = D if D_prime is None else D_prime
    if D_prime < D:
        raise ValueError(f"D_prime must be at least D, got D_prime={D_prime}, D={D}")
    started = time.perf_counter()
    params = p.with_D(D)
    omega0 = saturating_field(spec.truncation, params, profile, fill)
    stride = _check_stride(step.h, n_checks)
    watched = p.with_D(D_prime)

    def task(i: int) -> bool:
        traj = evolve(omega0, 1.0, spec, watched, step, seed, trajectory_index=i, sample_every=stride)
        return not bool(np.all(traj.column("in_U_decay")))

    escaped = run_trajectories(task, n_traj, threads)
    result = EventSpec("region_escape", {"D": D, "D_prime": D_prime, "n_checks": n_checks}).result(
        escaped, seed, config_digest, started, r=p.r, alpha=p.alpha, profile=profile, fill=fill,
        R=spec.reynolds)
    logger.info(f"Escape from U at D={D:g}, D'={D_prime:g}: p_hat={result.p_hat:.4g} {result.ci95}")
    return result


def transition_estimate(ladder: LadderSpec, m: int, n: int, spec: NoiseSpec, r: float, alpha: float,
                        n_traj: int, seed: int, step: StepParams = StepParams(), threads: int = 1,
                        config_digest: str = "") -> EnsembleResult:
    """
    Estimate of p(w, U_n^c) over unit time, maximized over the boundary-saturating
    family in U_m (a lower bound on the sup over U_m).
    """
    ladder.check_index(m)
    ladder.check_index(n)
    if m > n + 1:
        raise ValueError(f"transition estimate needs m <= n + 1, got m={m}, n={n}")
    started = time.perf_counter()
    D_m, D_n = ladder.level(m), ladder.level(n)
    family = saturating_family(spec.truncation, NormParams(r, alpha, D_m))
    target = NormParams(r, alpha, D_n)
    best: Optional[EnsembleResult] = None
    by_profile = {}
    for name, omega0 in family.items():
        def task(i: int, omega0=omega0) -> bool:
            final = evolve(omega0, 1.0, spec, None, step, seed, trajectory_index=i,
                           sample_every=FINAL_ONLY).final
            return not in_region_U(final, target)

        outside = run_trajectories(task, n_traj, threads)
        result = EventSpec("region_membership", {"D": D_n}).result(
            outside, seed, config_digest, started, event="outside", m=m, n=n, D_m=D_m,
            pi_n=ladder.pi(n), profile=name, a_hat=ladder.a_hat, R_ladder=ladder.R)
        by_profile[name] = result.p_hat
        if best is None or result.p_hat > best.p_hat:
            best = result
    best.parameters["family"] = by_profile
    logger.info(f"Transition U_{m} -> U_{n}^c: p_hat={best.p_hat:.4g}, pi_n={ladder.pi(n):.4g}")
    return best


# --- time averages and spectra -----------------------------------------------------

def mode_threshold(k: ModeKey, D: float, r: float, alpha: float) -> float:
    """D^{2 alpha} |k|^{-2r} exp(-2 D^{-alpha} |k|)."""
    kx, ky = as_pair(k)
    kabs = math.hypot(kx, ky)
    return D ** (2.0 * alpha) * kabs ** (-2.0 * r) * math.exp(-2.0 * D ** (-alpha) * kabs)


def time_average_mode(k: ModeKey, t: float, T: float, D: float, p: NormParams, spec: NoiseSpec,
                      n_traj: int, seed: int, step: StepParams = StepParams(), threads: int = 1,
                      omega0: Optional[VorticityField] = None,
                      config_digest: str = "") -> EnsembleResult:
    """Prob{(1/T) int_t^{t+T} |w_k(s)|^2 ds > threshold(D)}, trapezoid over the step grid."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    started = time.perf_counter()
    trunc = spec.truncation
    omega0 = omega0 if omega0 is not None else VorticityField(trunc, trunc.zeros())
    index = trunc.index(k)
    threshold = mode_threshold(k, D, p.r, p.alpha)

    def task(i: int) -> bool:
        traj = evolve(omega0, t + T, spec, None, step, seed, trajectory_index=i)
        times = np.array(traj.times)
        keep = times >= t - 1e-12
        power = np.array([abs(f.amplitudes[index]) ** 2 for f in traj.fields])[keep]
        average = scipy.integrate.trapezoid(power, times[keep]) / (times[keep][-1] - times[keep][0])
        return bool(average > threshold)

    hits = run_trajectories(task, n_traj, threads)
    return EventSpec("time_avg_mode", {"k": list(as_pair(k)), "t": t, "T": T, "D": D}).result(
        hits, seed, config_digest, started, threshold=threshold, r=p.r, alpha=p.alpha)


def spectrum_bound_report(ensemble: Sequence[VorticityField], r: float, alpha_tilde: float, R: float,
                          k_range=(4, 20), slack: float = config.SPECTRUM_SLACK,
                          binning: str = "nearest") -> SpectrumReport:
    """
    Fit log e(k) against log k on the shells in k_range with e(k) > 0 and
    compare the exponent with -(2r + 1) + slack. c_hat is the smallest
    constant with e(k) <= c_hat R^{alpha_tilde} k^{-(2r+1)} on every shell.
    """
    spectrum = energy_spectrum(ensemble, binning)
    k = spectrum.k
    e = spectrum.e
    lo, hi = k_range
    use = (k >= lo) & (k <= hi) & (e > 0)
    if np.count_nonzero(use) < config.MIN_FIT_SHELLS:
        raise InsufficientShellsError(
            f"{int(np.count_nonzero(use))} nonzero shells in [{lo}, {hi}], need {config.MIN_FIT_SHELLS}")
    fit = scipy.stats.linregress(np.log(k[use]), np.log(e[use]))
    bound_exponent = -(2.0 * r + 1.0)
    positive = e > 0
    c_hat = float(np.max(e[positive] * k[positive] ** (2.0 * r + 1.0)) / R ** alpha_tilde) if R > 0 else math.inf
    holds = bool(fit.slope <= bound_exponent + slack)
    if not holds:
        logger.warning(f"Fitted spectrum exponent {fit.slope:.3f} exceeds {bound_exponent + slack:.3f}")
    return SpectrumReport(float(fit.slope), float(fit.intercept), c_hat, holds, bound_exponent,
                          [float(x) for x in k[use]], spectrum)


def region_membership_curve(fields: Sequence[VorticityField], p: NormParams, D_grid: Sequence[float],
                            seed: int = 0, config_digest: str = "") -> List[EnsembleResult]:
    """Fraction of a fixed ensemble inside U_D for each D (nondecreasing in D)."""
    if len(fields) == 0:
        raise ValueError("fields must not be empty")
    return [
        EventSpec("region_membership", {"D": float(D)}).result(
            [in_region_U(f, p.with_D(D)) for f in fields], seed, config_digest)
        for D in D_grid
    ]


def stationary_snapshots(spec: NoiseSpec, T_burn: float, n_snapshots: int, n_traj: int, spacing: float,
                         seed: int, step: StepParams = StepParams(), threads: int = 1,
                         omega0: Optional[VorticityField] = None) -> List[VorticityField]:
    """
    Run up to n_traj independent trajectories past T_burn and take evenly spaced
    snapshots from each, trajectory-major, until n_snapshots are collected.
    Only the trajectories needed for n_snapshots are evolved.
    """
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be at least 1")
    if not T_burn > 0 or not spacing > 0:
        raise ValueError("T_burn and spacing must be positive")
    trunc = spec.truncation
    omega0 = omega0 if omega0 is not None else VorticityField(trunc, trunc.zeros())
    per_traj = int(math.ceil(n_snapshots / n_traj))
    n_run = min(n_traj, int(math.ceil(n_snapshots / per_traj)))
    targets = [T_burn + j * spacing for j in range(per_traj)]
    stride = max(1, int(round(spacing / step.h)))

    def task(i: int) -> List[VorticityField]:
        traj = evolve(omega0, targets[-1], spec, None, step, seed, trajectory_index=i,
                      sample_every=stride)
        times = np.array(traj.times)
        return [traj.fields[int(np.argmin(np.abs(times - target)))] for target in targets]

    snapshots = [f for batch in run_trajectories(task, n_run, threads) for f in batch]
    return snapshots[:n_snapshots]
