"""
📡 Wire Transport
=================

Newline-delimited JSON frames between the asset and twin endpoints.

    {"t": 5, "type": "sensor", "strain": [..24 numbers..]}
    {"load_factor": "3g", "t": 5, "type": "control"}
    {"type": "shutdown"}

Two carriers with identical framing: an in-process queue pair (frames
travel as encoded text) and a local TCP connection on 127.0.0.1.
"""

import json
import logging
import queue
import socket
from contextlib import closing
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from digital_state import ControlInput, N_SENSORS
from twin_errors import FrameError, InputError, TransportError

logger = logging.getLogger(__name__)

RECV_TIMEOUT_S = 30.0

# =============================================
# 1. 메시지 (Messages)
# =============================================

@dataclass(frozen=True)
class SensorFrame:
    t: int
    strain: Tuple[float, ...]

    def __post_init__(self):
        strain = tuple(float(v) for v in self.strain)
        if len(strain) != N_SENSORS:
            raise InputError(f"sensor frame needs {N_SENSORS} strains, got {len(strain)}")
        if not all(np.isfinite(strain)):
            raise InputError("sensor frame contains non-finite strain")
        object.__setattr__(self, "strain", strain)


@dataclass(frozen=True)
class ControlFrame:
    t: int
    control: ControlInput


@dataclass(frozen=True)
class ShutdownFrame:
    pass


WireMessage = Union[SensorFrame, ControlFrame, ShutdownFrame]


def encode(msg: WireMessage) -> str:
    """One JSON object plus the terminating newline"""
    if isinstance(msg, SensorFrame):
        payload = {"type": "sensor", "t": msg.t, "strain": list(msg.strain)}
    elif isinstance(msg, ControlFrame):
        payload = {"type": "control", "t": msg.t, "load_factor": msg.control.value}
    elif isinstance(msg, ShutdownFrame):
        payload = {"type": "shutdown"}
    else:
        raise InputError(f"not a wire message: {msg!r}")
    return json.dumps(payload, sort_keys=True) + "\n"


def decode(line: str) -> WireMessage:
    """Inverse of encode; anything malformed raises FrameError"""
    if not line.endswith("\n"):
        raise FrameError("truncated frame (missing newline)", frame=line)
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameError(f"malformed frame: {exc}", frame=line) from exc
    if not isinstance(payload, dict):
        raise FrameError("frame must be a JSON object", frame=line)

    kind = payload.get("type")
    try:
        if kind == "sensor":
            return SensorFrame(t=_frame_time(payload), strain=tuple(payload["strain"]))
        if kind == "control":
            return ControlFrame(t=_frame_time(payload), control=ControlInput.parse(payload["load_factor"]))
        if kind == "shutdown":
            return ShutdownFrame()
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise FrameError(f"invalid {kind} frame: {exc}", frame=line) from exc
    raise FrameError(f"unknown frame type {kind!r}", frame=line)


def _frame_time(payload: dict) -> int:
    t = payload["t"]
    if isinstance(t, bool) or not isinstance(t, int):
        raise TypeError(f"t must be an integer, got {t!r}")
    return t


def transport_roundtrip(msg: WireMessage) -> WireMessage:
    return decode(encode(msg))


# =============================================
# 2. 채널 (Channels)
# =============================================

class QueueChannel:
    """In-process endpoint; frames cross as encoded text"""

    def __init__(self, outbox: "queue.Queue[str]", inbox: "queue.Queue[str]", timeout: float = RECV_TIMEOUT_S):
        self._outbox = outbox
        self._inbox = inbox
        self._timeout = timeout

    def send(self, msg: WireMessage) -> None:
        self._outbox.put(encode(msg))

    def recv(self) -> WireMessage:
        try:
            line = self._inbox.get(timeout=self._timeout)
        except queue.Empty as exc:
            raise TransportError(f"no frame within {self._timeout:.0f} s") from exc
        return decode(line)

    def close(self) -> None:
        pass


class SocketChannel:
    """TCP endpoint; a bad frame closes the connection (no resync)"""

    def __init__(self, sock: socket.socket, timeout: float = RECV_TIMEOUT_S):
        self._sock = sock
        self._sock.settimeout(timeout)
        self._reader = sock.makefile("r", encoding="utf-8", newline="\n")

    def send(self, msg: WireMessage) -> None:
        try:
            self._sock.sendall(encode(msg).encode("utf-8"))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def recv(self) -> WireMessage:
        try:
            line = self._reader.readline()
        except (OSError, socket.timeout) as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        if line == "":
            raise TransportError("connection closed by peer")
        try:
            return decode(line)
        except FrameError:
            self.close()
            raise

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            self._sock.close()


Channel = Union[QueueChannel, SocketChannel]

# =============================================
# 3. 전송 계층 (Transports)
# =============================================

class InProcTransport:
    name = "inproc"

    def open(self) -> Tuple[QueueChannel, QueueChannel]:
        """(asset endpoint, twin endpoint)"""
        to_twin: "queue.Queue[str]" = queue.Queue()
        to_asset: "queue.Queue[str]" = queue.Queue()
        return QueueChannel(to_twin, to_asset), QueueChannel(to_asset, to_twin)


class SocketTransport:
    """Twin listens on 127.0.0.1 (ephemeral port by default); asset connects"""
    name = "socket"

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self.port = port
        self.bound_port: Optional[int] = None

    def open(self) -> Tuple[SocketChannel, SocketChannel]:
        try:
            with closing(socket.create_server((self.host, self.port))) as server:
                self.bound_port = server.getsockname()[1]
                client = socket.create_connection((self.host, self.bound_port), timeout=RECV_TIMEOUT_S)
                conn, _ = server.accept()
        except OSError as exc:
            raise TransportError(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        for sock in (client, conn):
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        logger.debug("socket transport connected on port %d", self.bound_port)
        return SocketChannel(client), SocketChannel(conn)


def make_transport(name: str) -> Union[InProcTransport, SocketTransport]:
    if name == "inproc":
        return InProcTransport()
    if name == "socket":
        return SocketTransport()
    raise InputError(f"unknown transport {name!r} (expected 'inproc' or 'socket')")
