"""Exception types shared across the package.

Every error that stems from user-supplied data (as opposed to programmer
misuse) derives from :class:`VolscaleError` and carries a short machine-
parseable ``code`` that the CLI echoes in its single-line error output.
"""


class VolscaleError(Exception):
    """Base class for data and validation errors raised by this package."""

    code = "data"


class DataFormatError(VolscaleError):
    """Malformed or inconsistent input file content."""

    code = "data-format"


class DegenerateDesignError(VolscaleError):
    """Regression design with an unidentifiable exponent (constant or collinear column)."""

    code = "degenerate-design"


class InfeasibleGridError(VolscaleError):
    """No offset on the grid keeps all accuracies strictly above the offset."""

    code = "infeasible-grid"


class PositivityError(VolscaleError):
    """A record's accuracy does not exceed the candidate offset by the required margin."""

    code = "positivity"


class ExcludedPointError(VolscaleError):
    """Token efficiency is undefined for a record whose accuracy does not exceed the offset."""

    code = "excluded-point"


class VolumeMismatchError(VolscaleError):
    """A fixed-volume ablation group whose volumes differ beyond tolerance."""

    code = "volume-mismatch"


class OutputExistsError(VolscaleError):
    """Refusing to overwrite existing output files without --force."""

    code = "output-exists"
