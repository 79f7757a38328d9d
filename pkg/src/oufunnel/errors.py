"""Exceptions shared across the solvers and the scenario runner."""

__all__ = ["FunnelViolation", "SolverAbort", "ConfigError"]


class FunnelViolation(RuntimeError):
    """The scaled error left the funnel; carries the offending time and margin."""

    def __init__(self, t, margin):
        self.t = t
        self.margin = margin
        super().__init__(
            f"funnel violated at t={t:.6g} (margin {margin:.3e}); this is a "
            "numerical failure of the discretization or an infeasible design "
            "triple, not a property of the continuous closed loop"
        )


class SolverAbort(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, t, detail=""):
        self.t = t
        super().__init__(f"integration aborted at t={t:.6g}: non-finite state {detail}")


class ConfigError(ValueError):
    """Scenario configuration rejected; carries the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field {field!r}: {message}")
