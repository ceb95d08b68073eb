"""Exception hierarchy.

Every error carries ``where``, a ``module.operation`` string naming the
routine that failed, so command-line front ends can report it verbatim.
"""

from __future__ import annotations


class GridLearnError(Exception):
    """Base class for all library errors."""

    def __init__(self, message: str, *, where: str = ""):
        super().__init__(message)
        self.where = where

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.where}] {msg}" if self.where else msg


class MalformedGraphError(GridLearnError, ValueError):
    pass


class DimensionError(GridLearnError, ValueError):
    pass


class ConnectivityError(GridLearnError, ValueError):
    pass


class InfiniteResistanceError(ConnectivityError):
    pass


class SolverDivergenceError(GridLearnError, RuntimeError):
    def __init__(self, message: str, residual: float, *, where: str = ""):
        super().__init__(message, where=where)
        self.residual = residual


class InconsistentRhsError(GridLearnError, ValueError):
    pass


class EigensolverError(GridLearnError, RuntimeError):
    pass


class WeightOverflowError(GridLearnError, ValueError):
    def __init__(self, message: str, pair: tuple[int, int], *, where: str = ""):
        super().__init__(message, where=where)
        self.pair = pair


class TooFewNodesError(GridLearnError, ValueError):
    pass


class InvalidMeasurementError(GridLearnError, ValueError):
    pass


class DegeneratePairError(GridLearnError, ValueError):
    pass


class HierarchyError(GridLearnError, RuntimeError):
    pass


class CoarseningStallError(HierarchyError):
    pass


class FloatingIslandError(GridLearnError, ValueError):
    def __init__(self, message: str, nodes: list[int], *, where: str = ""):
        super().__init__(message, where=where)
        self.nodes = nodes


class UnsupportedConstraintsError(GridLearnError, ValueError):
    pass


class ConnectivityWarning(UserWarning):
    pass


def add_context(exc: GridLearnError, prefix: str) -> GridLearnError:
    """Prefix the message of ``exc`` in place (e.g. with a level or node id) and return it."""
    if exc.args:
        exc.args = (f"{prefix}: {exc.args[0]}",) + exc.args[1:]
    return exc
