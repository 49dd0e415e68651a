"""Exception hierarchy shared by all modules."""


class CocycleLabError(Exception):
    """Base class for every error raised by the package."""


class NonSymmetric(CocycleLabError):
    pass


class SingularMass(CocycleLabError):
    pass


class DimensionMismatch(CocycleLabError):
    pass


class NoNegativeSpace(CocycleLabError):
    pass


class BadParams(CocycleLabError):
    pass


class PoleAt(CocycleLabError):
    pass


class NearSingular(CocycleLabError):
    pass


class BadRange(CocycleLabError):
    pass


class Infeasible(CocycleLabError):
    pass


class HamiltonianImaginaryAxis(Infeasible):
    """The Hamiltonian has eigenvalues on (or numerically near) the imaginary axis."""


class StepTooLarge(CocycleLabError):
    pass


class NonFiniteState(CocycleLabError):
    pass


class GridMismatch(CocycleLabError):
    pass


class BracketFailure(CocycleLabError):
    def __init__(self, message, monotone=None):
        super().__init__(message)
        self.monotone = monotone


class NotConverged(CocycleLabError):
    def __init__(self, message, d_tail=None, pi_sequence=None):
        super().__init__(message)
        self.d_tail = d_tail
        self.pi_sequence = pi_sequence


class NotContracting(CocycleLabError):
    pass


class ConfigError(CocycleLabError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, key=None):
        loc = "".join([f" (line {line})" if line else "", f" (key {key!r})" if key else ""])
        super().__init__(message + loc)
        self.line, self.key = line, key


class ValidationError(ConfigError):
    def __init__(self, violations):
        super().__init__("invalid config:\n  " + "\n  ".join(violations))
        self.violations = list(violations)
