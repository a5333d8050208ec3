"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation problems exit 2, numeric
solver failures exit 3, size guards exit 4.
"""


class RsmdpError(Exception):
    """Base class for all toolkit errors."""


class ProblemFormatError(RsmdpError):
    """A problem or policy file could not be parsed."""


class ValidationError(RsmdpError):
    """Model data violates an invariant; message names the offending index."""


class SolverError(RsmdpError):
    """A numeric procedure failed (non-convergence, stall, certificate miss).

    `payload` optionally carries the best-so-far state for post-mortems.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class GuardExceeded(RsmdpError):
    """A brute-force size guard was exceeded."""
