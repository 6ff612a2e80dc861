"""Exception hierarchy shared by every anchor module."""


class AnchorError(Exception):
    """Base class for all anchor errors."""


# entropy
class EntropyError(AnchorError):
    pass


class EmptySample(EntropyError, ValueError):
    pass


class UnknownSource(EntropyError, KeyError):
    pass


class InsufficientEntropy(EntropyError):
    pass


# prg
class PrgError(AnchorError):
    pass


class SeedTooShort(PrgError, ValueError):
    pass


class ReseedRequired(PrgError):
    pass


# idvv
class IdvvError(AnchorError):
    pass


class BadLength(IdvvError, ValueError):
    pass


class CounterExhausted(IdvvError):
    pass


class LabelTooLong(IdvvError, ValueError):
    pass


class WindowExceeded(IdvvError):
    pass


class Backward(IdvvError):
    pass


# protocol: framing
class FrameError(AnchorError, ValueError):
    """Structural problem with a wire frame, detected before the MAC is checked."""


class BadMagic(FrameError):
    pass


class BadVersion(FrameError):
    pass


class LengthMismatch(FrameError):
    pass


class Truncated(FrameError):
    pass


# protocol: handshakes and sessions
class ProtocolError(AnchorError):
    pass


class UnknownDevice(ProtocolError):
    pass


class OtkConsumed(ProtocolError):
    pass


class DeviceRevoked(ProtocolError):
    pass


class BadMac(ProtocolError):
    pass


class BadConfirm(ProtocolError):
    pass


class Unauthorized(ProtocolError):
    pass


class TicketExpired(ProtocolError):
    pass


class NonceMismatch(ProtocolError):
    pass


class Aborted(ProtocolError):
    pass


class ReplayDetected(ProtocolError):
    pass


class NotEstablished(ProtocolError):
    pass


class UnexpectedMessage(ProtocolError):
    """Frame type does not fit the receiving machine's current phase."""


# service
class CorruptLine(AnchorError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class BindError(AnchorError, OSError):
    pass


# harness / bench
class UnknownScenario(AnchorError, KeyError):
    pass


class DepthTooLarge(AnchorError, ValueError):
    pass


class HandshakeFailed(AnchorError):
    pass


class MalformedPayload(FrameError):
    pass
