"""Exception and warning types raised across the package."""


class DesignError(ValueError):
    """Base class for invalid inputs and infeasible designs."""


class NonPositiveFluctuation(DesignError):
    pass


class DuplicateEdge(DesignError):
    pass


class IndexOutOfRange(DesignError):
    pass


class MissingCost(DesignError):
    pass


class AllKnown(DesignError):
    pass


class Disconnected(DesignError):
    """Some quantity has no path of available edges to the origin."""


class SingularInformation(DesignError):
    """The Fisher matrix is numerically singular.

    Pure difference measurements are invariant under a common shift of all
    quantities, so any quantity without a measured path to the origin makes
    the information matrix rank deficient.
    """


class NotPositiveDefinite(DesignError):
    pass


class Infeasible(DesignError):
    pass


class BudgetMismatch(DesignError):
    pass


class ZeroAllocationOnTreeEdge(DesignError):
    pass


class NotSorted(DesignError):
    pass


class InfeasibleSpec(DesignError):
    pass


class InfiniteDivergence(DesignError):
    pass


class TruthMissing(DesignError):
    pass


class TooFewSamples(DesignError):
    pass


class NotConverged(RuntimeWarning):
    """Emitted when an optimizer hits its iteration cap."""
