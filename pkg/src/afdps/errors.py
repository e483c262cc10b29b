"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: configuration problems exit with 2,
numerical divergence with 3, and I/O failures with 4.
"""

from __future__ import annotations


class AfdpsError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AfdpsError):
    """Invalid configuration: bad value, unknown key, or inconsistent fields."""


class NumericalDivergenceError(AfdpsError):
    """A particle position or weight became non-finite during a run."""

    def __init__(self, step_index: int, particle_ids, what: str):
        self.step_index = step_index
        self.particle_ids = list(particle_ids)
        self.what = what
        # Attached by run_sampler so callers can flush the partial trace.
        self.partial_trace = None
        super().__init__(
            f"non-finite {what} at step {step_index} "
            f"for particle(s) {self.particle_ids}"
        )


class DegeneracyError(AfdpsError):
    """All particle weights collapsed to zero (after clamping)."""

    def __init__(self, step_index: int | None = None):
        self.step_index = step_index
        where = f" at step {step_index}" if step_index is not None else ""
        super().__init__(f"all particle weights are zero{where}")
