"""Exception types shared across the library."""

from __future__ import annotations


class BasinIdError(Exception):
    """Base class for library errors."""


class SimulationDivergedError(BasinIdError):
    """A simulated state became non-finite.

    ``step`` is the 1-based index of the offending step; ``trajectory`` is
    the trajectory index within a batch (None for single simulations).
    """

    def __init__(self, step: int, trajectory: int | None = None):
        self.step = step
        self.trajectory = trajectory
        where = f"step {step}" if trajectory is None else f"trajectory {trajectory}, step {step}"
        super().__init__(f"simulation diverged to a non-finite state at {where}")


class NumericFailureError(BasinIdError):
    """A network forward/backward pass produced non-finite values."""


class InsufficientPairsError(BasinIdError):
    """A risk-matrix cell has fewer held-out pairs than required."""

    def __init__(self, cell: tuple[int, int], have: int, need: int):
        self.cell = cell
        super().__init__(f"cell {cell} has {have} eval pairs, need at least {need}")
