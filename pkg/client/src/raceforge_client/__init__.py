"""Client SDK for the raceforge simulator's NDJSON/TCP protocol."""

from .session import (
    ClientSession,
    ConnectionFailed,
    HandshakeError,
    ProtocolDecodeError,
    SessionClosed,
    connect,
    decode_line,
)

__version__ = "0.1.0"

__all__ = [
    "ClientSession",
    "ConnectionFailed",
    "HandshakeError",
    "ProtocolDecodeError",
    "SessionClosed",
    "connect",
    "decode_line",
]
