"""Exception hierarchy shared across the package."""


class SelfHealError(Exception):
    pass


class OrderingError(SelfHealError, ValueError):
    """A timestamp went backwards (heartbeat arrival, sample time, trace order)."""


class ArityError(SelfHealError, ValueError):
    pass


class PolicyConflictError(SelfHealError, ValueError):
    def __init__(self, message, rule_name=None):
        super().__init__(message)
        self.rule_name = rule_name


class InfeasibleCommunicationError(SelfHealError):
    """An allocation routes a recipe edge between two disconnected nodes."""

    def __init__(self, edge, nodes):
        self.edge = edge
        self.nodes = nodes
        super().__init__(
            f"recipe edge {edge[0]}->{edge[1]} mapped to disconnected nodes "
            f"{nodes[0]} and {nodes[1]}"
        )


class InstanceTooLargeError(SelfHealError, ValueError):
    pass


class ShapeError(SelfHealError, ValueError):
    pass


class GraphFormatError(SelfHealError, ValueError):
    pass
