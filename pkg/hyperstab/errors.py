class HyperstabError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(HyperstabError, ValueError):
    pass


class SingularSubmatrix(HyperstabError, ValueError):
    def __init__(self, index: int, sigma_ratio: float):
        self.index = index
        self.sigma_ratio = sigma_ratio
        super().__init__(
            f"trailing {index}x{index} block of the coupling matrix is singular "
            f"(sigma_min / sigma_max = {sigma_ratio:.3e})"
        )


class NoConvergence(HyperstabError):
    pass


class CalibrationFailed(HyperstabError):
    pass


class CFLViolation(HyperstabError):
    pass


class BlowUp(HyperstabError):
    pass


class SchemaError(HyperstabError, ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid scenario:\n" + "\n".join(f"  {e}" for e in errors))


class IoError(HyperstabError, OSError):
    pass
