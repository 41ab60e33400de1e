class ConsensusLabError(Exception):
    """Base class for every error raised by the simulator and its analyses."""

    kind = "error"


class SizeTooSmall(ConsensusLabError):
    kind = "size-too-small"


class MalformedEdge(ConsensusLabError):
    kind = "malformed-edge"


class DuplicateEdge(ConsensusLabError):
    kind = "duplicate-edge"


class TopologyNotBiconnected(ConsensusLabError):
    kind = "topology-not-biconnected"


class ProtocolOverrun(ConsensusLabError):
    kind = "protocol-overrun"


class IllegalSend(ConsensusLabError):
    kind = "illegal-send"


class EnumerationCapExceeded(ConsensusLabError):
    kind = "enumeration-cap-exceeded"

    def __init__(self, size: int, cap: int):
        super().__init__(f"enumeration of {size} executions exceeds cap {cap}")
        self.size = size
        self.cap = cap


class UnknownAgent(ConsensusLabError):
    kind = "unknown-agent"


class UnsupportedTopology(ConsensusLabError):
    kind = "unsupported-topology"


class OutOfRangeRandom(ConsensusLabError):
    kind = "out-of-range-random"


class EmptyUniverse(ConsensusLabError):
    kind = "empty-universe"


class SolutionPreferenceViolated(ConsensusLabError):
    kind = "solution-preference-violated"


class MessageNotInTrace(ConsensusLabError):
    kind = "message-not-in-trace"


class NotAXorProtocol(ConsensusLabError):
    kind = "not-a-xor-protocol"


class NondeterministicProtocol(ConsensusLabError):
    kind = "nondeterministic-protocol"


class AmbiguousDecoding(ConsensusLabError):
    kind = "ambiguous-decoding"


class DecodingMismatch(ConsensusLabError):
    kind = "decoding-mismatch"


class ConfigInvalid(ConsensusLabError):
    kind = "config-invalid"


class InvalidInput(ConsensusLabError, ValueError):
    kind = "invalid-input"


class InconsistentObservation(ConsensusLabError, ValueError):
    kind = "inconsistent-observation"
