"""Exception hierarchy shared by the micro and macro solvers."""

import sys


class FembemError(Exception):
    """Base class for all package errors.

    Context notes added with ``add_note`` (backported before Python 3.11)
    are appended to the message.
    """

    if sys.version_info < (3, 11):
        def add_note(self, note):
            self.__notes__ = [*getattr(self, "__notes__", []), note]

        def __str__(self):
            return "\n".join([super().__str__(), *getattr(self, "__notes__", [])])


class ParameterError(FembemError, ValueError):
    """Non-physical or out-of-range input parameter."""


class SurfaceShapeError(FembemError, ValueError):
    """Two surfaces that must share a grid do not."""


class SurfaceFormatError(FembemError, ValueError):
    """Malformed x/y/z surface file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContactSolverError(FembemError, RuntimeError):
    """The non-negative contact solver did not converge."""

    def __init__(self, message, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")


class CorrectionError(FembemError, RuntimeError):
    """The elastic-compliance correction loop did not converge."""

    def __init__(self, message, history):
        self.history = list(history)
        super().__init__(f"{message} after {len(self.history)} iterations")


class MeshError(FembemError, ValueError):
    """Degenerate element geometry."""


class NonConvergenceError(FembemError, RuntimeError):
    """Newton-Raphson failed to reach the residual tolerance."""

    def __init__(self, message, step, residuals):
        self.step = step
        self.residuals = list(residuals)
        super().__init__(f"{message} at step {step}; residual trace: "
                         + ", ".join(f"{r:.3e}" for r in self.residuals))


class FitError(FembemError, RuntimeError):
    """Degenerate data for the power-law regression."""
