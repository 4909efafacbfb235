"""Exception hierarchy.

The CLI maps :class:`ValidationError` to exit code 1 and every
:class:`NumericSingularityError` to exit code 3.
"""


class FKError(Exception):
    """Base class for all package errors."""


class ValidationError(FKError, ValueError):
    """Invalid user input: malformed config, bad parameters, bad flags."""


class NumericSingularityError(FKError, ArithmeticError):
    """A computation hit a zero normalizer or an all-zero weight vector."""


class DegenerateFlowError(NumericSingularityError):
    def __init__(self, p, message=None):
        self.p = p
        super().__init__(message or f"degenerate flow: eta_{p}(G_{p}) = 0 at time p={p}")


class ParticleCollapseError(NumericSingularityError):
    def __init__(self, p, replicate=None):
        self.p = p
        self.replicate = replicate
        where = f"time p={p}" if replicate is None else f"time p={p} (replicate {replicate})"
        super().__init__(f"particle collapse: all potentials are zero at {where}")


class SingularKernelError(NumericSingularityError):
    def __init__(self, q, state=None, message=None):
        self.q = q
        self.state = state
        if message is None:
            message = f"singular backward kernel at q={q}"
            if state is not None:
                message += f", target state {state}"
        super().__init__(message)


class OracleInconsistencyError(FKError, AssertionError):
    """Two routes of an exact computation disagree beyond tolerance."""
