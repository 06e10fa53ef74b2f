"""
Counter-based random streams

Every random draw in a run comes from a Philox generator keyed by
(master seed, lane) with the counter positioned by the step index, so a
stream depends only on those three integers and never on which worker
thread asks for it. Lanes are trajectory indices for single-trajectory
simulation and path-block indices for vectorized estimators. Inside one
step the draws follow the fixed half-lattice mode order.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, lane: int = 0, step: int = 0) -> np.random.Generator:
    """Return the generator for (seed, lane, step)."""
    if seed < 0 or lane < 0 or step < 0:
        raise ValueError(f"seed, lane and step must be nonnegative, got {seed}, {lane}, {step}")
    key = np.array([seed & _MASK64, lane & _MASK64], dtype=np.uint64)
    # steps are 2**128 counter blocks apart
    counter = np.array([0, 0, step & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard complex Gaussians with E|xi|^2 = 1 (independent N(0, 1/2) parts)."""
    parts = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    return (parts[0] + 1j * parts[1]) * np.sqrt(0.5)
