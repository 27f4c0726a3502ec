"""Shared error types for calibration and simulation failures."""


class CalibrationError(RuntimeError):
    """A threshold or RCS calibration could not be completed."""


class SimulationError(RuntimeError):
    """A Monte Carlo run failed beyond the tolerated trial-failure budget."""
