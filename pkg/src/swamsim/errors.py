"""Exception hierarchy shared across the simulator."""


class SwamError(Exception):
    """Base class for all simulator errors."""


class CapacityExceeded(SwamError):
    """No VLAN id left in the allocator's usable range."""


class EncodingOverflow(SwamError):
    """Digit-encoded VLAN ids require tenant and node indices <= 9."""


class UnknownVlan(SwamError):
    """VLAN id was never allocated to a tunnel."""


class StackOverflow(SwamError):
    """Frames carry at most two stacked VLAN tags."""


class StackUnderflow(SwamError):
    """Pop from an untagged frame."""


class MalformedFrame(SwamError):
    """A pop rule matched a frame without an inner tag."""


class NoRoute(SwamError):
    """No backhaul rule for the frame's tunnel VLAN."""


class UnknownVport(SwamError):
    """Virtual port is not attached to this mux."""


class UnknownOuterTag(SwamError):
    """Radio frame is not addressed to this node's link."""


class UnknownLink(SwamError):
    """Link does not exist in the topology."""


class NoSuchVap(SwamError):
    """Node hosts no vap for the requested tenant."""


class VapCapExceeded(SwamError):
    """Per-radio vap limit reached on the node."""


class NotAGateway(SwamError):
    """Requested root is not a gateway of the tenant."""


class Disconnected(SwamError):
    """No path exists between the two nodes over UP links."""


class NoSamples(SwamError):
    """Metric query over a flow that produced no samples."""


class CopyBudgetExceeded(SwamError):
    """Network-wide frame copy budget exhausted (loop guard)."""


class ScenarioError(SwamError):
    """Problem in a scenario file; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(ScenarioError):
    """Scenario text could not be parsed."""


class ValidationError(ScenarioError):
    """Scenario parsed but references or constraints do not hold."""
