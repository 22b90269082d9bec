"""Exception types raised by the solvers."""

from __future__ import annotations


class LagMFGError(Exception):
    """Base class for all package errors."""


class DomainError(LagMFGError, ValueError):
    """Argument outside the domain of an operation (e.g. time outside [0, T])."""


class SolverError(LagMFGError):
    """An inner iterative solve did not converge."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(LagMFGError):
    """State blow-up during integration."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NoCandidateError(LagMFGError):
    """Shooting found no PMP-stationary trajectory."""


class BestReplyError(LagMFGError):
    """A player's optimal control problem failed inside the best-reply map."""

    def __init__(self, message: str, player: int | None = None, iteration: int | None = None):
        super().__init__(message)
        self.player = player
        self.iteration = iteration


class PreconditionError(LagMFGError):
    """An operation was called on input that fails its stated precondition."""
