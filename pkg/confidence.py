"""
Confidence interval calculations for Monte Carlo event probabilities
Uses the exact (Clopper-Pearson) binomial interval throughout
"""

import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.stats


def clopper_pearson(n_hits: int, n_traj: int, alpha: float = 0.05) -> Tuple[float, float]:
    """
    Exact confidence interval for a binomial proportion.

    Args:
        n_hits: Number of trajectories where the event occurred
        n_traj: Total number of trajectories
        alpha: One minus the confidence level (0.05 gives 95%)

    Returns:
        Tuple of (lower_bound, upper_bound) for the true probability
    """
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    if not 0 <= n_hits <= n_traj:
        raise ValueError(f"n_hits={n_hits} outside [0, {n_traj}]")
    b = scipy.stats.beta.ppf
    lo = b(alpha / 2, n_hits, n_traj - n_hits + 1)
    hi = b(1 - alpha / 2, n_hits + 1, n_traj - n_hits)
    lo = 0.0 if n_hits == 0 or math.isnan(lo) else float(lo)
    hi = 1.0 if n_hits == n_traj or math.isnan(hi) else float(hi)
    return lo, hi


@dataclass
class EnsembleResult:
    """Empirical probability of one event with its provenance"""
    n_traj: int
    n_hits: int
    p_hat: float
    ci95: Tuple[float, float]
    seed: int
    config_digest: str = ""
    event_kind: str = ""
    parameters: Dict = field(default_factory=dict)
    wall_time: float = 0.0

    @classmethod
    def from_hits(cls, hits: Sequence[bool], seed: int, config_digest: str = "",
                  event_kind: str = "", parameters: Optional[Dict] = None,
                  wall_time: float = 0.0) -> "EnsembleResult":
        """Build a result from per-trajectory indicators (in trajectory order)."""
        n_traj = len(hits)
        if n_traj == 0:
            raise ValueError("n_traj must be positive")
        n_hits = int(np.count_nonzero(np.asarray(hits, dtype=bool)))
        return cls(
            n_traj=n_traj,
            n_hits=n_hits,
            p_hat=n_hits / n_traj,
            ci95=clopper_pearson(n_hits, n_traj),
            seed=seed,
            config_digest=config_digest,
            event_kind=event_kind,
            parameters=dict(parameters or {}),
            wall_time=wall_time,
        )

    @property
    def ci_width(self) -> float:
        return self.ci95[1] - self.ci95[0]

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['ci95'] = list(self.ci95)
        return data


def log_linear_slope(x: Sequence[float], p: Sequence[float]) -> float:
    """
    Least-squares slope of log p against x, over the points with p > 0.

    Returns NaN when fewer than two usable points remain.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    keep = p > 0
    if np.count_nonzero(keep) < 2:
        return float('nan')
    fit = scipy.stats.linregress(x[keep], np.log(p[keep]))
    return float(fit.slope)


def curve_rows(grid: Sequence[float], results: List[EnsembleResult]) -> List[Dict]:
    """Plot-ready rows (grid value, p_hat, ci_lo, ci_hi)."""
    return [
        {"grid": float(g), "p_hat": r.p_hat, "ci_lo": r.ci95[0], "ci_hi": r.ci95[1]}
        for g, r in zip(grid, results)
    ]
