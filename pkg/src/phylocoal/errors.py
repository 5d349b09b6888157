"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems (bad genealogies, bad
files) exit 3, numerical failures exit 4, I/O problems exit 5.
"""


class PhylocoalError(Exception):
    """Base class for all package-specific errors."""


class DataError(PhylocoalError):
    """Invalid input data (genealogies, traces, file contents)."""


class NumericalError(PhylocoalError):
    """Numerical failure during computation or sampling."""


# -- genealogy ---------------------------------------------------------------

class NonAscendingTimes(DataError):
    """Coalescent or sampling times are not strictly ascending."""


class CountMismatch(DataError):
    """Sample counts do not match the number of coalescent events."""


class LineageDeficit(DataError):
    """A coalescent event occurs with fewer than two extant lineages."""


class ParseError(DataError):
    """Malformed Newick or genealogy file input."""


class NegativeBranch(DataError):
    """Newick branch length is negative."""


class PolytomyError(DataError):
    """Newick tree contains a non-binary internal node."""


# -- grid / likelihood -------------------------------------------------------

class DegenerateSpan(DataError):
    """Genealogy spans no positive time interval."""


class DimensionMismatch(DataError):
    """Vector length does not match the expected dimension."""


class CoverageError(DataError):
    """Piecewise-constant breakpoints do not span the genealogy."""


class NonAscending(DataError):
    """Index points are not strictly ascending."""


# -- samplers ----------------------------------------------------------------

class NonFiniteEnergy(NumericalError):
    """Hamiltonian trajectory diverged to a non-finite energy."""


class CholeskyFailure(NumericalError):
    """Metric matrix is not positive definite."""


class SliceStall(NumericalError):
    """Elliptical slice bracket shrank below tolerance."""


# -- simulation / diagnostics ------------------------------------------------

class NonterminatingCoalescent(NumericalError):
    """Coalescent hazard failed to accumulate; pathological trajectory."""


class DegenerateSeries(DataError):
    """Constant series has no meaningful effective sample size."""
