"""
Run configuration
INI sections [physics], [numerics], [mc], [io], [experiment]; unknown keys
are rejected and every value is validated against the owning module
"""

import configparser
import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import config
from exceptions import ConfigError
from integrator import StepParams
from lattice_field import NormParams, Truncation
from stochastic_forcing import NoiseSpec, PhysicalParams, load_noise_spec, nondimensionalize

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    "simulate", "ensemble", "verify-conservation", "lemma1", "lemma2", "proposition",
    "theorem-ladder", "time-average", "spectrum", "picard-certify",
)
INITIAL_DATA = ("zero", "pair", "random", "saturating", "enstrophy")
PROFILES = ("smooth", "ascending", "descending")


@dataclass(frozen=True)
class PhysicsConfig:
    k_max: int = config.K_MAX
    r: float = config.NORM_R
    alpha: float = config.NORM_ALPHA
    D: float = config.NORM_D
    delta: float = config.DELTA
    reynolds: float = config.REYNOLDS
    forcing_radius: float = config.FORCING_RADIUS
    c_gamma: float = config.C_GAMMA
    noise_file: str = ""
    nu: float = 0.0
    L: float = 1.0
    Gamma0: float = 0.0


@dataclass(frozen=True)
class NumericsConfig:
    h: float = config.STEP_H
    T: float = 1.0
    scheme: str = config.SCHEME
    mode: str = "production"
    nonlinear: bool = True
    sample_every: int = 1
    n_substeps: int = config.N_SUBSTEPS
    picard_max_iter: int = config.PICARD_MAX_ITER
    picard_tol: float = config.PICARD_TOL
    picard_grid: int = config.PICARD_GRID


@dataclass(frozen=True)
class MonteCarloConfig:
    n_traj: int = config.N_TRAJ
    seed: int = config.SEED
    threads: int = config.THREADS


@dataclass(frozen=True)
class IOConfig:
    out: str = ""
    checkpoint_interval: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "simulate"
    init: str = "zero"
    init_amplitude: float = 1.0
    init_mode: Tuple[float, ...] = (1.0, 0.0)
    profile: str = "smooth"
    fill: float = 1.0
    Phi0: float = 0.0
    t: float = 1.0
    D_grid: Tuple[float, ...] = ()
    B_grid: Tuple[float, ...] = (1.0, 2.0, 3.0)
    mode_k: Tuple[float, ...] = (1.0, 0.0)
    sample_times: Tuple[float, ...] = ()
    tau: float = 1.0
    n_checks: int = 20
    # watched region level D' = D_prime_ratio * D
    D_prime_ratio: float = 1.0
    levels: int = 5
    a_hat: float = 1.0
    ladder_offset: int = 1
    T_burn: float = 5.0
    n_snapshots: int = 200
    spacing: float = 0.5
    k_lo: float = 4.0
    k_hi: float = 20.0
    alpha_tilde: float = config.NORM_ALPHA
    n_fields: int = 100


SECTIONS = {
    "physics": PhysicsConfig,
    "numerics": NumericsConfig,
    "mc": MonteCarloConfig,
    "io": IOConfig,
    "experiment": ExperimentConfig,
}

# keys that never change results; left out of the digest
_DIGEST_EXCLUDED = {("mc", "threads"), ("io", "out")}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(raw: str, kind, key: str):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: '{raw}'")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        # Tuple[float, ...]
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as e:
        raise ConfigError(str(e), key=key)


def _field_types(cls) -> Dict[str, type]:
    return {f.name: f.type if f.type in (int, float, str, bool) else tuple for f in dataclasses.fields(cls)}


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one run"""
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    io: IOConfig = field(default_factory=IOConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def __post_init__(self):
        self.validate()

    # --- validation ---------------------------------------------------------

    def validate(self):
        ph, nm, mc, ex = self.physics, self.numerics, self.mc, self.experiment
        if ex.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment '{ex.name}'", key="experiment.name")
        if ph.k_max < 1:
            raise ConfigError(f"must be at least 1, got {ph.k_max}", key="physics.k_max")
        try:
            NormParams(ph.r, ph.alpha, ph.D)
        except ValueError as e:
            key = "physics.r" if "r must" in str(e) else "physics.alpha" if "alpha" in str(e) else "physics.D"
            raise ConfigError(str(e), key=key)
        try:
            self.step_params()
        except ValueError as e:
            raise ConfigError(str(e), key="numerics")
        if not nm.T > 0:
            raise ConfigError(f"must be positive, got {nm.T}", key="numerics.T")
        if nm.n_substeps < 100:
            raise ConfigError(f"must be at least 100, got {nm.n_substeps}", key="numerics.n_substeps")
        if nm.sample_every < 1:
            raise ConfigError(f"must be at least 1, got {nm.sample_every}", key="numerics.sample_every")
        if mc.n_traj < 1:
            raise ConfigError(f"must be at least 1, got {mc.n_traj}", key="mc.n_traj")
        if mc.seed < 0:
            raise ConfigError(f"must be nonnegative, got {mc.seed}", key="mc.seed")
        if mc.threads < 1:
            raise ConfigError(f"must be at least 1, got {mc.threads}", key="mc.threads")
        if self.io.checkpoint_interval < 0:
            raise ConfigError("must be nonnegative", key="io.checkpoint_interval")
        if ph.reynolds < 0 or ph.c_gamma <= 0:
            raise ConfigError("reynolds must be nonnegative and c_gamma positive", key="physics.reynolds")
        if ph.nu < 0:
            raise ConfigError(f"must be nonnegative, got {ph.nu}", key="physics.nu")
        if ex.init not in INITIAL_DATA:
            raise ConfigError(f"must be one of {INITIAL_DATA}", key="experiment.init")
        if ex.profile not in PROFILES:
            raise ConfigError(f"must be one of {PROFILES}", key="experiment.profile")
        trunc = Truncation(ph.k_max)
        for key, n_max in (("init_mode", 1), ("mode_k", None)):
            value = getattr(ex, key)
            pairs = [value[i:i + 2] for i in range(0, len(value), 2)]
            if (not value or len(value) % 2 or (n_max is not None and len(pairs) > n_max)
                    or any(v != int(v) for v in value)
                    or not all(trunc.contains((int(a), int(b))) for a, b in pairs)):
                raise ConfigError(f"must list active modes 'kx, ky, ...', got {value}", key=f"experiment.{key}")
        if any(not 0 < s <= nm.T for s in ex.sample_times):
            raise ConfigError(f"entries must lie in (0, T], got {ex.sample_times}", key="experiment.sample_times")
        if ex.t < 0:
            raise ConfigError("must be nonnegative", key="experiment.t")
        if ex.Phi0 < 0:
            raise ConfigError("must be nonnegative", key="experiment.Phi0")
        if any(D <= 0 for D in ex.D_grid):
            raise ConfigError("entries must be positive", key="experiment.D_grid")
        if not ex.D_prime_ratio >= 1:
            raise ConfigError(f"must be at least 1, got {ex.D_prime_ratio}", key="experiment.D_prime_ratio")
        if ex.n_checks < 1 or ex.levels < 0 or ex.n_snapshots < 1 or ex.n_fields < 1:
            raise ConfigError("counts must be positive", key="experiment")
        if not ex.tau > 0 or not ex.spacing > 0 or not ex.T_burn > 0 or not ex.a_hat > 0:
            raise ConfigError("tau, spacing, T_burn and a_hat must be positive", key="experiment")

    # --- derived objects ------------------------------------------------------

    @property
    def truncation(self) -> Truncation:
        return Truncation(self.physics.k_max)

    def norm_params(self, D: Optional[float] = None) -> NormParams:
        return NormParams(self.physics.r, self.physics.alpha, self.physics.D if D is None else D)

    def step_params(self) -> StepParams:
        nm = self.numerics
        return StepParams(
            h=nm.h, delta=self.physics.delta, tau_mode=nm.mode,
            picard_max_iter=nm.picard_max_iter, picard_tol=nm.picard_tol,
            picard_grid=nm.picard_grid, scheme=nm.scheme, nonlinear=nm.nonlinear,
        )

    def noise_spec(self) -> NoiseSpec:
        """noise_file, else physical parameters (nu > 0), else band forcing at the configured R."""
        ph = self.physics
        if ph.noise_file:
            spec = load_noise_spec(ph.noise_file)
            if spec.truncation.k_max != ph.k_max:
                raise ConfigError(f"noise file k_max {spec.truncation.k_max} differs from {ph.k_max}",
                                  key="physics.noise_file")
            return spec
        try:
            if ph.nu > 0:
                band = NoiseSpec.band(ph.k_max, 0.5, ph.forcing_radius, c_gamma=math.inf)
                shape = {k.as_tuple(): band.gamma_at(k) for k in band.truncation.modes()}
                return nondimensionalize(PhysicalParams(ph.nu, ph.L, ph.Gamma0, shape, ph.k_max), ph.c_gamma)
            if ph.reynolds == 0:
                return NoiseSpec.zeros(ph.k_max, ph.c_gamma)
            return NoiseSpec.band(ph.k_max, ph.reynolds, ph.forcing_radius, ph.c_gamma)
        except ValueError as e:
            raise ConfigError(str(e), key="physics")

    def output_dir(self) -> Path:
        return Path(self.io.out or config.OUTPUT_ROOT)

    # --- serialization --------------------------------------------------------

    def to_ini(self, for_digest: bool = False) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section in SECTIONS:
            part = getattr(self, section)
            parser[section] = {
                f.name: _format(getattr(part, f.name))
                for f in dataclasses.fields(part)
                if not (for_digest and (section, f.name) in _DIGEST_EXCLUDED)
            }
        buffer = StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse configuration: {e}")
        parts = {}
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError("unknown section", key=section)
            cls_ = SECTIONS[section]
            types = _field_types(cls_)
            values = {}
            for key, raw in parser[section].items():
                if key not in types:
                    raise ConfigError("unknown key", key=f"{section}.{key}")
                values[key] = _parse(raw, types[key], f"{section}.{key}")
            parts[section] = cls_(**values)
        return cls(**parts)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"cannot read configuration: {e}", key="config")
        return cls.from_ini(text)

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None,
                       threads: Optional[int] = None) -> "RunConfig":
        """Command-line flags take precedence over file keys."""
        mc, io_ = self.mc, self.io
        if seed is not None:
            mc = dataclasses.replace(mc, seed=seed)
        if threads is not None:
            mc = dataclasses.replace(mc, threads=threads)
        if out is not None:
            io_ = dataclasses.replace(io_, out=str(out))
        return dataclasses.replace(self, mc=mc, io=io_)

    def digest(self) -> str:
        """SHA-256 of the canonical INI text, without keys that cannot change results."""
        return hashlib.sha256(self.to_ini(for_digest=True).encode('utf-8')).hexdigest()

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)
