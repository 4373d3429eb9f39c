"""Exception hierarchy shared across the package."""


class LtaError(Exception):
    """Base class for all package errors."""


class MapValidationError(LtaError):
    """A map document violates a structural invariant.

    ``problems`` lists every violation found, each naming the offending
    node or edge id.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnknownNodeError(LtaError):
    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"unknown node: {node_id!r}")


class UnknownEdgeError(LtaError):
    def __init__(self, edge_id):
        self.edge_id = edge_id
        super().__init__(f"unknown edge: {edge_id!r}")


class RouteNotFoundError(LtaError):
    def __init__(self, source, target):
        self.source = source
        self.target = target
        super().__init__(f"no enabled route from {source!r} to {target!r}")


class EmptyModelError(LtaError):
    """Prediction or rebuild requested on a model with zero observations."""


class StaleModelError(LtaError):
    """Prediction requested before rebuilding over pending observations."""


class SolveError(LtaError):
    """Value iteration failed to converge."""

    def __init__(self, residual, sweeps):
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(
            f"value iteration did not converge: residual {residual:.3e} "
            f"after {sweeps} sweeps"
        )


class EventSchemaError(LtaError):
    """An event payload failed validation against its category schema."""


class EventOrderError(LtaError):
    """Event timestamps regressed within a run segment."""


class ReplayError(LtaError):
    """A log line could not be parsed or replayed."""

    def __init__(self, line_number, reason):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class ConfigError(LtaError):
    """A scenario configuration is invalid; ``problems`` itemises why."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class WorldError(LtaError):
    """The simulated world was driven outside its contract."""


class DegenerateTrajectoryError(LtaError):
    """A trajectory cannot be encoded (no motion relative to any landmark)."""
