"""Exception hierarchy for the package.

Errors are grouped so the CLI can map them to exit codes:
ConfigError -> 2, NumericalConnection -> 3, BudgetExceeded subclasses -> 4.
"""


class GietLabError(Exception):
    """Base class for all package errors."""


class ConfigError(GietLabError):
    """Invalid configuration or user input."""


class NotAPermutation(ConfigError):
    """A combinatorial row is not a bijection of {1..d}."""


class Reducible(ConfigError):
    """The combinatorial datum splits at a proper prefix."""

    def __init__(self, k):
        self.k = k
        super().__init__(f"combinatorial datum is reducible at prefix length {k}")


class NotADiffeo(ConfigError):
    """A candidate conjugacy fails the positive-derivative certificate."""


class AtSingularity(GietLabError):
    """Evaluation requested within tolerance of a branch endpoint."""

    def __init__(self, index, point=None):
        self.index = index
        self.point = point
        super().__init__(f"point within tolerance of singularity u_{index}")


class OnBoundary(GietLabError):
    """Locate requested within tolerance of a floor endpoint."""


class OrbitHitsSingularity(GietLabError):
    """An orbit passed within tolerance of an interior singularity."""

    def __init__(self, step):
        self.step = step
        super().__init__(f"orbit hits a singularity at step {step}")


class NumericalConnection(GietLabError):
    """Last top/bottom lengths tie within tolerance: induction cannot proceed."""

    def __init__(self, step=None):
        self.step = step
        msg = "numerical connection (length tie within tolerance)"
        if step is not None:
            msg += f" at elementary step {step}"
        super().__init__(msg)


class BudgetExceeded(GietLabError):
    """A configured desk-scale budget was hit."""


class RunLimitExceeded(BudgetExceeded):
    """A single constant-winner induction run exceeded its cap."""


class PositivityTimeout(BudgetExceeded):
    """Accumulated incidence product failed to positivize within the cap."""


class FloorBudgetExceeded(BudgetExceeded):
    """Total floor count of a partition would exceed the configured cap."""


class DepthBudget(BudgetExceeded):
    """A requested chain/certificate depth exceeds the configured budget."""


class WindowExhausted(GietLabError):
    """Orbit search failed inside a window that theory guarantees sufficient.

    Indicates an implementation or precision fault, not a data problem.
    """


class ScaleNotFound(GietLabError):
    """Partition mesh has not dropped below the pair separation at available depth."""


class RangeError(GietLabError):
    """Index range invalid for the available induction records."""


class PartitionMismatch(GietLabError):
    """Two maps diverged combinatorially: partitions cannot be matched."""


class NotSameFloor(GietLabError):
    """Two orbit points do not share a floor at the requested level."""


class DegenerateSeries(GietLabError):
    """A series has zero variance where a nontrivial fit was requested."""
