"""Telemetry wire formats: sample datagrams, directory rendezvous and RTSP setup.

Samples travel as fixed 16-byte UDP datagrams, big endian::

    tti_index (u64) | b_alloc (u32) | b_spare (u32)

The directory server and RTSP handshake run over TCP with asyncio.
"""

from __future__ import annotations

import asyncio
import enum
import json
import logging
import math
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .capacity import TelemetrySample
from .errors import (
    BadLength,
    InvalidCoordinates,
    MalformedMessage,
    OutOfOrderMethod,
    RtspError,
    SubscriberGone,
    UnsupportedMethod,
)

log = logging.getLogger(__name__)

DATAGRAM = struct.Struct("!QII")
DATAGRAM_SIZE = DATAGRAM.size  # 16
DEFAULT_CADENCE_MS = 0.5
CLEAN_RUN_TO_FORGIVE = 100
EARTH_RADIUS_KM = 6371.0088


def encode_sample(sample: TelemetrySample) -> bytes:
    try:
        return DATAGRAM.pack(sample.tti_index, sample.b_alloc, sample.b_spare)
    except struct.error as exc:
        raise BadLength(f"sample field out of range: {exc}") from None


def decode_sample(data: bytes) -> TelemetrySample:
    if len(data) != DATAGRAM_SIZE:
        raise BadLength(f"sample datagram is {DATAGRAM_SIZE} bytes, got {len(data)}")
    return TelemetrySample(*DATAGRAM.unpack(data))


# --- sample streaming ---------------------------------------------------------


@dataclass
class Subscriber:
    """One UE's sample stream to one endpoint.

    ``sink`` is either a ``(host, port)`` UDP address or a callable taking the
    datagram bytes (in-process consumers and tests).
    """

    rnti: int
    sink: tuple[str, int] | Callable[[bytes], None]
    retry_budget: int = 3
    failures: int = 0
    sent: int = 0
    # consecutive good sends; failures are forgiven only after a clean run,
    # since UDP reports ICMP unreachable on every other send
    clean: int = 0
    _sock: socket.socket | None = field(default=None, repr=False)

    def open(self):
        if not callable(self.sink) and self._sock is None:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            # connected so ICMP unreachable surfaces as an error on send
            sock.connect(self.sink)
            self._sock = sock

    def deliver(self, datagram: bytes):
        if callable(self.sink):
            self.sink(datagram)
        else:
            self._sock.send(datagram)
        self.sent += 1

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None


class SampleStreamer:
    """Sends one datagram per subscriber every cadence interval on a thread.

    ``source(rnti)`` returns the current ``TelemetrySample``. Deadlines are
    absolute, so a late wakeup does not shift later sends; the thread sleeps
    until just before each deadline and spins the remainder.
    """

    def __init__(
        self,
        source: Callable[[int], TelemetrySample],
        cadence_ms: float = DEFAULT_CADENCE_MS,
        spin_ns: int = 150_000,
        on_gone: Callable[[Subscriber, SubscriberGone], None] | None = None,
    ):
        self.source = source
        self.cadence_ns = int(cadence_ms * 1e6)
        self.spin_ns = spin_ns
        self.on_gone = on_gone
        self._subs: tuple[Subscriber, ...] = ()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.gone: list[SubscriberGone] = []
        self.send_times_ns: list[int] = []
        self.record_times = False

    def add(self, sub: Subscriber) -> Subscriber:
        sub.open()
        with self._lock:
            self._subs = self._subs + (sub,)
        return sub

    def remove(self, sub: Subscriber):
        with self._lock:
            self._subs = tuple(s for s in self._subs if s is not sub)
        sub.close()

    @property
    def subscribers(self) -> tuple[Subscriber, ...]:
        return self._subs

    def tick(self):
        """Send one round of samples to every subscriber."""
        cache: dict[int, bytes] = {}
        for sub in self._subs:
            datagram = cache.get(sub.rnti)
            if datagram is None:
                datagram = cache[sub.rnti] = encode_sample(self.source(sub.rnti))
            try:
                sub.deliver(datagram)
                sub.clean += 1
                if sub.clean >= CLEAN_RUN_TO_FORGIVE:
                    sub.failures = 0
            except (OSError, ConnectionError) as exc:
                sub.clean = 0
                sub.failures += 1
                if sub.failures > sub.retry_budget:
                    err = SubscriberGone(f"subscriber for {sub.rnti:#06x} gone after {sub.failures} failures: {exc}")
                    self.gone.append(err)
                    self.remove(sub)
                    if self.on_gone:
                        self.on_gone(sub, err)

    def _loop(self):
        deadline = time.perf_counter_ns()
        while not self._stop.is_set():
            deadline += self.cadence_ns
            remaining = deadline - time.perf_counter_ns()
            if remaining > self.spin_ns:
                time.sleep((remaining - self.spin_ns) / 1e9)
            while time.perf_counter_ns() < deadline:
                pass
            if self.record_times:
                self.send_times_ns.append(time.perf_counter_ns())
            self.tick()
            # after a long stall, resynchronize instead of bursting
            if time.perf_counter_ns() - deadline > 20 * self.cadence_ns:
                deadline = time.perf_counter_ns()

    def start(self):
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, name="sample-streamer", daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        for sub in self._subs:
            sub.close()


# --- directory rendezvous -----------------------------------------------------


@dataclass(frozen=True)
class ServerEntry:
    host: str
    port: int
    latitude: float
    longitude: float


def _check_coordinates(lat, lon):
    for v in (lat, lon):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise InvalidCoordinates(f"coordinates must be finite numbers, got ({lat!r}, {lon!r})")
    if not -90 <= lat <= 90 or not -180 <= lon <= 180:
        raise InvalidCoordinates(f"({lat}, {lon}) outside valid latitude/longitude ranges")


def haversine_km(lat1, lon1, lat2, lon2) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


class Directory:
    """Static registry of telemetry servers, answered nearest first."""

    def __init__(self, servers: Iterable[ServerEntry] = ()):
        self.servers = list(servers)
        for s in self.servers:
            _check_coordinates(s.latitude, s.longitude)

    @classmethod
    def load(cls, path) -> "Directory":
        with open(path) as fh:
            data = json.load(fh)
        return cls(ServerEntry(s["host"], int(s["port"]), float(s["latitude"]), float(s["longitude"])) for s in data.get("servers", []))

    def lookup(self, latitude, longitude) -> list[dict]:
        _check_coordinates(latitude, longitude)
        ranked = sorted(
            self.servers,
            key=lambda s: (haversine_km(latitude, longitude, s.latitude, s.longitude), s.host, s.port),
        )
        return [{"host": s.host, "port": s.port} for s in ranked]

    def handle_line(self, line: bytes) -> bytes:
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise InvalidCoordinates("request must be an object")
            servers = self.lookup(req.get("latitude"), req.get("longitude"))
            resp = {"servers": servers}
        except (ValueError, InvalidCoordinates) as exc:
            resp = {"error": str(exc)}
        return (json.dumps(resp) + "\n").encode()

    async def serve(self, host: str = "127.0.0.1", port: int = 0) -> asyncio.AbstractServer:
        async def client(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
            try:
                while line := await reader.readline():
                    writer.write(self.handle_line(line))
                    await writer.drain()
            finally:
                writer.close()

        return await asyncio.start_server(client, host, port)


def directory_query(host: str, port: int, latitude: float, longitude: float, timeout: float = 5.0) -> list[dict]:
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall((json.dumps({"latitude": latitude, "longitude": longitude}) + "\n").encode())
        buf = b""
        while not buf.endswith(b"\n"):
            chunk = sock.recv(4096)
            if not chunk:
                break
            buf += chunk
    resp = json.loads(buf)
    if "error" in resp:
        raise InvalidCoordinates(resp["error"])
    return resp["servers"]


# --- RTSP -----------------------------------------------------------------------

RTSP_VERSION = "RTSP/1.0"
SUPPORTED_METHODS = ("OPTIONS", "DESCRIBE", "SETUP", "ANNOUNCE", "PLAY")
METHOD_ALIASES = {"ANNOUNC": "ANNOUNCE", "OPTION": "OPTIONS"}
PUBLIC_HEADER = "DESCRIBE, SETUP, ANNOUNC, PLAY"
STREAM_CATALOG = ("video", "audio", "input", "feedback")
_REASONS = {200: "OK", 400: "Bad Request", 404: "Not Found", 455: "Method Not Valid in This State", 501: "Not Implemented"}


@dataclass
class RtspMessage:
    method: str | None = None
    uri: str = "*"
    cseq: int = 0
    headers: dict[str, str] = field(default_factory=dict)
    body: str = ""
    status: int | None = None
    reason: str = ""

    @property
    def is_response(self) -> bool:
        return self.status is not None

    def encode(self) -> bytes:
        headers = dict(self.headers)
        headers["CSeq"] = str(self.cseq)
        if self.body:
            headers["Content-Length"] = str(len(self.body.encode()))
        start = f"{RTSP_VERSION} {self.status} {self.reason}" if self.is_response else f"{self.method} {self.uri} {RTSP_VERSION}"
        lines = [start] + [f"{k}: {v}" for k, v in headers.items()]
        return ("\r\n".join(lines) + "\r\n\r\n" + self.body).encode()


def parse_message(raw: bytes | str) -> RtspMessage:
    text = raw.decode("utf-8", "replace") if isinstance(raw, bytes) else raw
    head, sep, body = text.partition("\r\n\r\n")
    if not sep:
        head, sep, body = text.partition("\n\n")
    lines = head.replace("\r\n", "\n").split("\n")
    parts = lines[0].split(" ", 2)
    if len(parts) != 3:
        raise MalformedMessage(f"bad start line {lines[0]!r}")
    headers = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        name, colon, value = line.partition(":")
        if not colon:
            raise MalformedMessage(f"bad header line {line!r}")
        headers[name.strip()] = value.strip()
    cseq_text = next((v for k, v in headers.items() if k.lower() == "cseq"), None)
    if cseq_text is None or not cseq_text.isdigit():
        raise MalformedMessage("missing or invalid CSeq header")
    headers = {k: v for k, v in headers.items() if k.lower() not in ("cseq", "content-length")}
    if parts[0].startswith("RTSP/"):
        if not parts[1].isdigit():
            raise MalformedMessage(f"bad status code {parts[1]!r}")
        return RtspMessage(cseq=int(cseq_text), headers=headers, body=body, status=int(parts[1]), reason=parts[2])
    if parts[2] != RTSP_VERSION:
        raise MalformedMessage(f"unsupported protocol version {parts[2]!r}")
    return RtspMessage(method=parts[0], uri=parts[1], cseq=int(cseq_text), headers=headers, body=body)


class SessionState(str, enum.Enum):
    INIT = "init"
    DESCRIBED = "described"
    READY = "ready"
    ANNOUNCED = "announced"
    PLAYING = "playing"


# (state, method) -> next state; any pair missing here is answered 455
_TRANSITIONS = {
    **{(s, "OPTIONS"): s for s in SessionState},
    **{(s, "DESCRIBE"): (SessionState.DESCRIBED if s is SessionState.INIT else s) for s in SessionState},
    (SessionState.INIT, "SETUP"): SessionState.READY,
    (SessionState.DESCRIBED, "SETUP"): SessionState.READY,
    (SessionState.READY, "SETUP"): SessionState.READY,
    (SessionState.ANNOUNCED, "SETUP"): SessionState.ANNOUNCED,
    (SessionState.READY, "ANNOUNCE"): SessionState.ANNOUNCED,
    (SessionState.ANNOUNCED, "ANNOUNCE"): SessionState.ANNOUNCED,
    (SessionState.READY, "PLAY"): SessionState.PLAYING,
    (SessionState.ANNOUNCED, "PLAY"): SessionState.PLAYING,
    (SessionState.PLAYING, "PLAY"): SessionState.PLAYING,
}


class PortAllocator:
    def __init__(self, first: int = 47998):
        self._next = first
        self._lock = threading.Lock()

    def __call__(self, stream: str) -> int:
        with self._lock:
            port, self._next = self._next, self._next + 1
            return port


class RtspSession:
    """Per-connection RTSP state machine. Pure apart from port allocation."""

    _ids = 0

    def __init__(self, allocate_port: Callable[[str], int] | None = None, on_play: Callable[["RtspSession"], None] | None = None):
        RtspSession._ids += 1
        self.id = f"{RtspSession._ids:08X}"
        self.state = SessionState.INIT
        self.ports: dict[str, int] = {}
        self.allocate_port = allocate_port or PortAllocator()
        self.on_play = on_play
        self.announce: dict[str, str] = {}

    def _reply(self, req: RtspMessage, status: int, headers: dict | None = None, body: str = "") -> RtspMessage:
        return RtspMessage(cseq=req.cseq, headers=headers or {}, body=body, status=status, reason=_REASONS.get(status, ""))

    def handle(self, req: RtspMessage) -> RtspMessage:
        method = METHOD_ALIASES.get(req.method, req.method)
        if method not in SUPPORTED_METHODS:
            return self._reply(req, UnsupportedMethod.status)
        nxt = _TRANSITIONS.get((self.state, method))
        if nxt is None:
            return self._reply(req, OutOfOrderMethod.status)
        headers: dict[str, str] = {}
        body = ""
        if method == "OPTIONS":
            headers["Public"] = PUBLIC_HEADER
        elif method == "DESCRIBE":
            headers["Content-Type"] = "application/sdp"
            body = "".join(f"m={name}\r\n" for name in STREAM_CATALOG)
        elif method == "SETUP":
            stream = req.uri.rstrip("/").rsplit("streamid=", 1)[-1] if "streamid=" in req.uri else req.headers.get("Stream", "")
            if stream not in STREAM_CATALOG:
                return self._reply(req, 404)
            if stream not in self.ports:
                self.ports[stream] = self.allocate_port(stream)
            headers["Transport"] = f"server_port={self.ports[stream]}"
        elif method == "ANNOUNCE":
            self.announce = dict(line.split("=", 1) for line in req.body.splitlines() if "=" in line)
        if self.state is not SessionState.INIT or method == "SETUP":
            headers["Session"] = self.id
        prev, self.state = self.state, nxt
        if method == "PLAY" and prev is not SessionState.PLAYING and self.on_play:
            self.on_play(self)
        return self._reply(req, 200, headers, body)


async def _read_message(reader: asyncio.StreamReader) -> bytes | None:
    try:
        head = await reader.readuntil(b"\r\n\r\n")
    except asyncio.IncompleteReadError as exc:
        if exc.partial.strip():
            raise MalformedMessage("connection closed mid-message") from None
        return None
    length = 0
    for line in head.split(b"\r\n"):
        if line.lower().startswith(b"content-length:"):
            try:
                length = int(line.split(b":", 1)[1])
            except ValueError:
                raise MalformedMessage("bad Content-Length") from None
    body = await reader.readexactly(length) if length else b""
    return head + body


class RtspServer:
    """Event-driven RTSP server: every connection gets its own session."""

    def __init__(self, allocate_port: Callable[[str], int] | None = None, on_play: Callable[[RtspSession], None] | None = None):
        self.allocate_port = allocate_port or PortAllocator()
        self.on_play = on_play
        self.sessions: list[RtspSession] = []
        self._server: asyncio.AbstractServer | None = None

    async def _client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        session = RtspSession(self.allocate_port, self.on_play)
        self.sessions.append(session)
        try:
            while True:
                try:
                    raw = await _read_message(reader)
                    if raw is None:
                        break
                    reply = session.handle(parse_message(raw))
                except MalformedMessage:
                    reply = RtspMessage(status=400, reason=_REASONS[400], cseq=0)
                writer.write(reply.encode())
                await writer.drain()
        except (ConnectionError, asyncio.LimitOverrunError):
            pass
        finally:
            writer.close()

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        self._server = await asyncio.start_server(self._client, host, port)
        return self._server.sockets[0].getsockname()[:2]

    async def close(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()


_STATUS_ERRORS = {400: MalformedMessage, 455: OutOfOrderMethod, 501: UnsupportedMethod}


class RtspClient:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter, base_uri: str):
        self.reader, self.writer, self.base_uri = reader, writer, base_uri
        self.cseq = 0
        self.session: str | None = None

    @classmethod
    async def connect(cls, host: str, port: int) -> "RtspClient":
        reader, writer = await asyncio.open_connection(host, port)
        return cls(reader, writer, f"rtsp://{host}:{port}")

    async def request(self, method: str, path: str = "", headers: dict | None = None, body: str = "") -> RtspMessage:
        self.cseq += 1
        hdrs = dict(headers or {})
        if self.session:
            hdrs["Session"] = self.session
        msg = RtspMessage(method=method, uri=f"{self.base_uri}/{path}" if path else self.base_uri, cseq=self.cseq, headers=hdrs, body=body)
        self.writer.write(msg.encode())
        await self.writer.drain()
        raw = await _read_message(self.reader)
        if raw is None:
            raise MalformedMessage("server closed the connection")
        reply = parse_message(raw)
        if reply.status != 200:
            raise _STATUS_ERRORS.get(reply.status, RtspError)(f"{method} -> {reply.status} {reply.reason}")
        if reply.cseq != self.cseq:
            raise MalformedMessage(f"CSeq {reply.cseq} does not echo {self.cseq}")
        self.session = reply.headers.get("Session", self.session)
        return reply

    async def close(self):
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except ConnectionError:
            pass


@dataclass
class HandshakeResult:
    public: list[str]
    catalog: list[str]
    ports: dict[str, int]
    session: str | None


async def rtsp_handshake(client: RtspClient, role: str = "client", announce: dict | None = None) -> HandshakeResult:
    """OPTIONS, DESCRIBE, SETUP per stream, ANNOUNCE, PLAY.

    A gaming client sets up the media streams; a telemetry server sets up
    only the feedback stream.
    """
    if role not in ("client", "telemetry-server"):
        raise ValueError(f"unknown role {role!r}")
    opts = await client.request("OPTIONS")
    desc = await client.request("DESCRIBE")
    catalog = [line[2:] for line in desc.body.splitlines() if line.startswith("m=")]
    wanted = ["feedback"] if role == "telemetry-server" else [s for s in catalog if s != "feedback"]
    ports = {}
    for stream in wanted:
        reply = await client.request("SETUP", f"streamid={stream}")
        ports[stream] = int(reply.headers["Transport"].split("server_port=", 1)[1])
    body = "".join(f"{k}={v}\n" for k, v in (announce or {}).items())
    await client.request("ANNOUNCE", body=body)
    await client.request("PLAY")
    return HandshakeResult(
        public=[m.strip() for m in opts.headers.get("Public", "").split(",")],
        catalog=catalog,
        ports=ports,
        session=client.session,
    )
