"""Custom exceptions for the simulator"""


class StochNSError(Exception):
    """Base class for errors the runner turns into exit codes"""
    exit_code = 1

    def details(self) -> dict:
        return {}


class ConfigError(StochNSError):
    """Raised when a run configuration is invalid or has unknown keys"""
    exit_code = 2

    def __init__(self, message: str, key: str = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)

    def details(self) -> dict:
        return {"key": self.key}


class NumericalAbort(StochNSError):
    """Raised when a trajectory produces NaN or Inf amplitudes"""
    exit_code = 3

    def __init__(self, message: str, time: float = None, step: int = None):
        self.time = time
        self.step = step
        super().__init__(f"{message} (t={time}, step={step})")

    def details(self) -> dict:
        return {"time": self.time, "step": self.step}


class CertificationFailure(StochNSError):
    """Raised when the Picard fixed-point argument cannot be certified"""
    exit_code = 4

    def __init__(self, message: str, reason: str = "", ratio: float = None, iteration: int = None):
        self.reason = reason or message
        self.ratio = ratio
        self.iteration = iteration
        super().__init__(f"Certification failed: {message}")

    def details(self) -> dict:
        return {"reason": self.reason, "ratio": self.ratio, "iteration": self.iteration}


class ReplayMismatch(StochNSError):
    """Raised when a replayed artifact does not reproduce its recorded digest"""
    exit_code = 5

    def __init__(self, artifact: str, expected: str, actual: str):
        self.artifact = artifact
        self.expected = expected
        self.actual = actual
        super().__init__(f"Replay mismatch in {artifact}: expected {expected}, got {actual}")

    def details(self) -> dict:
        return {"artifact": self.artifact, "expected": self.expected, "actual": self.actual}


class InitialDataError(ValueError):
    """Raised when initial data inside the requested region cannot be built"""


class InsufficientShellsError(ValueError):
    """Raised when a spectrum fit has fewer nonzero shells than required"""
