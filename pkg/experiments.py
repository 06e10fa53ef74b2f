"""
Experiments
Each CLI experiment is a BaseExperiment subclass whose run() writes its
CSV/JSON artifacts into the output directory and returns their paths
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from confidence import EnsembleResult, curve_rows
from exceptions import CertificationFailure
from field_checkpoint import CheckpointWriter, save_checkpoint_csv
from integrator import PicardResult, certified_timestep, evolve, linear_mode_variance, picard_solve, step_exponential
from lattice_field import (
    VorticityField, analyticity_radius, enstrophy, minimal_D, random_field, saturating_field,
)
from nonlinear_term import convolution_direct, convolution_fft, max_relative_deviation, quadratic_invariants
from probabilistic_harness import (
    FINAL_ONLY, LadderSpec, a_d_probability, enstrophy_corollary, exp_moment_check,
    field_with_enstrophy, lemma1_tail, ou_sup_curve, proposition_escape, region_membership_curve,
    run_trajectories, spectrum_bound_report, stationary_snapshots, time_average_mode,
    transition_estimate,
)
from rng_streams import stream
from run_config import RunConfig
from run_manifest import write_json
from stochastic_forcing import OUState, sample_ou_path

logger = logging.getLogger(__name__)

# relative deviation / flux bounds for the conservation suite
ORACLE_TOL = 1e-12
FLUX_TOL = 1e-10


def build_initial_field(cfg: RunConfig) -> VorticityField:
    """Initial data named by [experiment] init; random draws use step 0 of lane 0."""
    ex = cfg.experiment
    trunc = cfg.truncation
    if ex.init == "zero":
        return VorticityField(trunc, trunc.zeros())
    if ex.init == "pair":
        k = (int(ex.init_mode[0]), int(ex.init_mode[1]))
        return VorticityField.from_modes(trunc.k_max, {k: ex.init_amplitude})
    if ex.init == "random":
        return random_field(trunc, stream(cfg.mc.seed, 0, 0), amplitude=ex.init_amplitude)
    if ex.init == "saturating":
        return saturating_field(trunc, cfg.norm_params(), ex.profile, ex.fill)
    return field_with_enstrophy(trunc, ex.Phi0)


class BaseExperiment:
    """Base class for experiments"""
    name = ""

    def __init__(self, cfg: RunConfig, out_dir: Path):
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.artifacts: List[Path] = []
        self.spec = cfg.noise_spec()
        self.step = cfg.step_params()
        self.seed = cfg.mc.seed
        self.threads = cfg.mc.threads
        self.digest = cfg.digest()

    def run(self) -> List[Path]:
        """Run the experiment. Must be implemented by subclasses."""
        raise NotImplementedError

    @property
    def d_grid(self) -> List[float]:
        return list(self.cfg.experiment.D_grid) or [self.cfg.physics.D]

    @property
    def mode_list(self) -> List[Tuple[int, int]]:
        k = self.cfg.experiment.mode_k
        return [(int(k[i]), int(k[i + 1])) for i in range(0, len(k), 2)]

    @property
    def mode_k(self) -> Tuple[int, int]:
        return self.mode_list[0]

    def write_csv(self, frame: pd.DataFrame, name: str) -> Path:
        path = self.out_dir / name
        frame.to_csv(path, index=False, float_format='%.17g')
        self.artifacts.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_json(self, data: Dict, name: str) -> Path:
        path = write_json(data, self.out_dir / name)
        self.artifacts.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_results(self, results: List[EnsembleResult], grid: List[float], stem: str):
        self.write_csv(pd.DataFrame(curve_rows(grid, results)), f"{stem}.csv")
        self.write_json({"results": [r.to_dict() for r in results]}, f"{stem}.json")


class SimulateExperiment(BaseExperiment):
    """One trajectory with its observables and checkpoints"""
    name = "simulate"

    def run(self) -> List[Path]:
        omega0 = build_initial_field(self.cfg)
        writer = CheckpointWriter(self.out_dir / "checkpoints", self.cfg.io.checkpoint_interval)
        certificates: List[PicardResult] = []
        traj = evolve(
            omega0, self.cfg.numerics.T, self.spec, self.cfg.norm_params(), self.step, self.seed,
            sample_every=self.cfg.numerics.sample_every, d_grid=self.d_grid,
            track_minimal_d=True, track_flux=True, checkpoint_writer=writer,
            certificates=certificates,
        )
        self.write_csv(traj.to_frame(), "trajectory.csv")
        final = self.out_dir / "final_field.csv"
        save_checkpoint_csv(traj.final, final)
        self.artifacts.append(final)
        self.artifacts.extend(writer.written)
        if certificates:
            rows = [{"interval": i, "D": c.D, "iterations": c.iterations, "max_ratio": c.max_ratio,
                     "ball_distance": c.ball_distance, "short_time_bounds_hold": c.short_time_bounds_hold,
                     "improved_bound_holds": c.improved_bound_holds}
                    for i, c in enumerate(certificates)]
            self.write_csv(pd.DataFrame(rows), "certificates.csv")
        return self.artifacts


class EnsembleExperiment(BaseExperiment):
    """Independent trajectories to time T: terminal enstrophy, region membership, mode variances"""
    name = "ensemble"

    def run(self) -> List[Path]:
        omega0 = build_initial_field(self.cfg)
        T = self.cfg.numerics.T
        p = self.cfg.norm_params()
        times = sorted(set(self.cfg.experiment.sample_times)) or [T]
        sample_every = FINAL_ONLY if times == [T] else 1

        def task(i: int) -> List[VorticityField]:
            traj = evolve(omega0, T, self.spec, None, self.step, self.seed, trajectory_index=i,
                          sample_every=sample_every)
            grid = np.array(traj.times)
            return [traj.fields[int(np.argmin(np.abs(grid - s)))] for s in times]

        samples = run_trajectories(task, self.cfg.mc.n_traj, self.threads)
        finals = [batch[-1] for batch in samples]
        self.write_csv(pd.DataFrame({
            "trajectory": np.arange(len(finals)),
            "Phi": [enstrophy(f) for f in finals],
        }), "ensemble.csv")
        curve = region_membership_curve(finals, p, self.d_grid, self.seed, self.digest)
        self.write_results(curve, self.d_grid, "region_membership")
        n = len(samples)
        rows = []
        for k in self.mode_list:
            index = self.cfg.truncation.index(k)
            for j, s in enumerate(times):
                power = np.array([abs(batch[j].amplitudes[index]) ** 2 for batch in samples])
                std_error = float(np.std(power, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
                oracle = linear_mode_variance(omega0, self.spec, k, s)
                rows.append({
                    "kx": k[0], "ky": k[1], "t": s,
                    "mean_mode_power": float(np.mean(power)),
                    "std_error": std_error,
                    "linear_oracle": oracle,
                    "z_score": (float(np.mean(power)) - oracle) / std_error if std_error > 0 else 0.0,
                })
        self.write_csv(pd.DataFrame(rows), "mode_variance.csv")
        self.write_json({
            "T": T,
            "n_traj": n,
            "nonlinear": self.step.nonlinear,
            "max_abs_z": max(abs(row["z_score"]) for row in rows),
            "rows": rows,
        }, "mode_variance.json")
        return self.artifacts


class VerifyConservationExperiment(BaseExperiment):
    """Direct vs FFT bilinear term and the two quadratic fluxes on random fields"""
    name = "verify-conservation"

    def run(self) -> List[Path]:
        trunc = self.cfg.truncation
        rows = []
        for i in range(self.cfg.experiment.n_fields):
            f = random_field(trunc, stream(self.seed, i, 0), amplitude=self.cfg.experiment.init_amplitude)
            fast = convolution_fft(f)
            direct = convolution_direct(f)
            flux, energy_flux = quadratic_invariants(f, fast)
            scale = enstrophy(f) ** 1.5
            rows.append({
                "field": i,
                "Phi": enstrophy(f),
                "oracle_deviation": max_relative_deviation(fast.amplitudes, direct.amplitudes),
                "enstrophy_flux": flux / scale,
                "energy_flux": energy_flux / scale,
            })
        frame = pd.DataFrame(rows)
        self.write_csv(frame, "conservation.csv")
        summary = {
            "n_fields": len(rows),
            "k_max": trunc.k_max,
            "max_oracle_deviation": float(frame["oracle_deviation"].max()),
            "max_enstrophy_flux": float(frame["enstrophy_flux"].abs().max()),
            "max_energy_flux": float(frame["energy_flux"].abs().max()),
        }
        summary["pass"] = bool(summary["max_oracle_deviation"] <= ORACLE_TOL
                               and summary["max_enstrophy_flux"] <= FLUX_TOL
                               and summary["max_energy_flux"] <= FLUX_TOL)
        self.write_json(summary, "conservation.json")
        if not summary["pass"]:
            raise CertificationFailure("conservation suite exceeded its tolerances", reason="verify-conservation")
        return self.artifacts


class EnstrophyTailExperiment(BaseExperiment):
    """Enstrophy tail curve, exponential moment and the decaying-level corollary"""
    name = "lemma1"

    def run(self) -> List[Path]:
        ex = self.cfg.experiment
        n_traj = self.cfg.mc.n_traj
        tail = lemma1_tail(ex.Phi0, ex.t, self.d_grid, self.spec, n_traj, self.seed, self.step,
                           self.threads, self.digest)
        self.write_csv(pd.DataFrame(tail.rows()), "lemma1_tail.csv")
        self.write_json({"slope": tail.slope, "results": [r.to_dict() for r in tail.results]},
                        "lemma1_tail.json")
        R = self.spec.reynolds or self.cfg.physics.reynolds
        if R > 0:
            moment = exp_moment_check(ex.Phi0, ex.t, self.spec, n_traj, self.seed, self.step, self.threads,
                                      reynolds=R)
            self.write_json({**moment.to_dict(), "Phi0": ex.Phi0, "t": ex.t}, "exp_moment.json")
        else:
            logger.warning("Exponential moment check skipped: no Reynolds number to scale by")
        if ex.Phi0 > 0:
            corollary = enstrophy_corollary(ex.Phi0, self.spec, ex.n_checks, n_traj, self.seed,
                                            self.step, self.threads, self.digest)
            self.write_json({
                "joint": corollary.joint.to_dict(),
                "per_time": [r.to_dict() for r in corollary.per_time],
                "union_bound_holds": corollary.union_bound_holds,
            }, "corollary.json")
        return self.artifacts


class OUSupExperiment(BaseExperiment):
    """OU sup tails for one mode and the A_D probability"""
    name = "lemma2"

    def run(self) -> List[Path]:
        ex = self.cfg.experiment
        n_traj, n_sub = self.cfg.mc.n_traj, self.cfg.numerics.n_substeps
        curve = ou_sup_curve(self.spec, self.mode_k, ex.tau, list(ex.B_grid), n_traj, n_sub,
                             self.seed, self.digest)
        self.write_results(curve.results, list(ex.B_grid), "ou_sup")
        a_d = [a_d_probability(self.spec, D, ex.tau, n_traj, n_sub, self.seed, self.digest)
               for D in self.d_grid]
        self.write_results(a_d, self.d_grid, "a_d")
        return self.artifacts


class RegionEscapeExperiment(BaseExperiment):
    """Escape probability from the decaying region family across a D grid"""
    name = "proposition"

    def run(self) -> List[Path]:
        ex = self.cfg.experiment
        results = [
            proposition_escape(D, self.spec, self.cfg.norm_params(), self.cfg.mc.n_traj, ex.n_checks,
                               self.seed, self.step, self.threads, profile=ex.profile, fill=ex.fill,
                               D_prime=ex.D_prime_ratio * D, config_digest=self.digest)
            for D in self.d_grid
        ]
        self.write_results(results, self.d_grid, "proposition")
        return self.artifacts


class LadderExperiment(BaseExperiment):
    """Transition estimates U_m -> U_n^c at m = n + offset along the ladder"""
    name = "theorem-ladder"

    def run(self) -> List[Path]:
        ex = self.cfg.experiment
        ph = self.cfg.physics
        R = self.spec.reynolds or ph.reynolds
        ladder = LadderSpec(ex.a_hat, R, ex.levels)
        rows, results = [], []
        for n in range(ladder.levels + 1):
            m = n + ex.ladder_offset
            if not 0 <= m <= ladder.levels or m > n + 1:
                continue
            result = transition_estimate(ladder, m, n, self.spec, ph.r, ph.alpha, self.cfg.mc.n_traj,
                                         self.seed, self.step, self.threads, self.digest)
            results.append(result)
            rows.append({"n": n, "m": m, "D_n": ladder.level(n), "pi_n": ladder.pi(n),
                         "p_hat": result.p_hat, "ci_lo": result.ci95[0], "ci_hi": result.ci95[1],
                         "profile": result.parameters["profile"],
                         "inclusion_holds": ladder.inclusion_holds(m, n)})
        self.write_csv(pd.DataFrame(rows), "ladder.csv")
        self.write_json({"results": [r.to_dict() for r in results]}, "ladder.json")
        return self.artifacts


class TimeAverageExperiment(BaseExperiment):
    """Time-averaged mode power exceedance over [t, t + T] across a D grid"""
    name = "time-average"

    def run(self) -> List[Path]:
        ex = self.cfg.experiment
        results = [
            time_average_mode(self.mode_k, ex.t, self.cfg.numerics.T, D, self.cfg.norm_params(), self.spec,
                              self.cfg.mc.n_traj, self.seed, self.step, self.threads,
                              build_initial_field(self.cfg), self.digest)
            for D in self.d_grid
        ]
        self.write_results(results, self.d_grid, "time_average")
        return self.artifacts


class SpectrumExperiment(BaseExperiment):
    """Energy spectrum of post-burn-in snapshots and its fitted tail exponent"""
    name = "spectrum"

    def run(self) -> List[Path]:
        ex = self.cfg.experiment
        ph = self.cfg.physics
        snapshots = stationary_snapshots(self.spec, ex.T_burn, ex.n_snapshots, self.cfg.mc.n_traj,
                                         ex.spacing, self.seed, self.step, self.threads,
                                         build_initial_field(self.cfg))
        report = spectrum_bound_report(snapshots, ph.r, ex.alpha_tilde, self.spec.reynolds,
                                       (ex.k_lo, ex.k_hi))
        self.write_csv(report.spectrum.to_frame(), "spectrum.csv")
        self.write_json(report.to_dict(), "spectrum_report.json")
        self.write_csv(pd.DataFrame({
            "snapshot": np.arange(len(snapshots)),
            "Phi": [enstrophy(f) for f in snapshots],
            "minimal_D": [minimal_D(f, ph.r, ph.alpha) for f in snapshots],
            "analyticity_radius": [analyticity_radius(f, ph.r, ph.alpha) for f in snapshots],
        }), "analyticity.csv")
        return self.artifacts


class PicardCertifyExperiment(BaseExperiment):
    """One certified interval, cross-checked against the production stepper"""
    name = "picard-certify"

    def run(self) -> List[Path]:
        ph = self.cfg.physics
        p = self.cfg.norm_params()
        omega0 = build_initial_field(self.cfg)
        tau = certified_timestep(p.D, p.alpha, ph.delta)
        path = sample_ou_path(self.spec, tau, self.step.picard_grid, self.seed, lane=0,
                              start=OUState(self.cfg.truncation.zeros(), 0.0))
        result = picard_solve(omega0, path, p, self.step)
        w = omega0
        h = tau / self.step.picard_grid
        for j in range(self.step.picard_grid):
            w = step_exponential(w, path.z[j], path.z[j + 1], h, self.step.scheme, self.step.nonlinear,
                                 t=float(path.times[j]), step=j + 1)
        deviation = float(np.max(np.abs(w.amplitudes - result.trajectory.final.amplitudes)))
        self.write_csv(result.trajectory.to_frame(), "picard_trajectory.csv")
        self.write_json({
            "tau": tau,
            "iterations": result.iterations,
            "distances": result.distances,
            "ratios": result.ratios,
            "max_ratio": result.max_ratio,
            "contraction_ok": result.max_ratio <= 0.5,
            "ball_distance": result.ball_distance,
            "short_time_bounds_hold": result.short_time_bounds_hold,
            "improved_bound_holds": result.improved_bound_holds,
            "production_deviation": deviation,
        }, "picard.json")
        logger.info(f"Certified interval: {result.iterations} iterations, max ratio {result.max_ratio:.3e}, "
                    f"production deviation {deviation:.3e}")
        return self.artifacts


EXPERIMENT_CLASSES = {
    cls.name: cls for cls in (
        SimulateExperiment, EnsembleExperiment, VerifyConservationExperiment, EnstrophyTailExperiment,
        OUSupExperiment, RegionEscapeExperiment, LadderExperiment, TimeAverageExperiment,
        SpectrumExperiment, PicardCertifyExperiment,
    )
}


def create_experiment(cfg: RunConfig, out_dir: Path) -> BaseExperiment:
    return EXPERIMENT_CLASSES[cfg.experiment.name](cfg, out_dir)
