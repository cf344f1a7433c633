"""Telemetry server: replays a DCI trace in TTI time and streams samples to subscribers.

A subscriber asks over line-delimited JSON on TCP::

    {"rnti": "0x4296", "rtsp": "host:port"}

The service then runs the telemetry-server RTSP handshake against the gaming
server at ``rtsp``, learns the feedback port from SETUP and starts sending
sample datagrams for that UE to it.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
import time
from typing import Callable

from .capacity import TelemetrySample
from .dci import TraceRecord
from .pipeline import ObserverPipeline
from .rrc import CellCommonConfig
from .wire import DEFAULT_CADENCE_MS, RtspClient, SampleStreamer, Subscriber, rtsp_handshake

log = logging.getLogger(__name__)


class TelemetryService:
    def __init__(
        self,
        cell: CellCommonConfig,
        records: list[TraceRecord],
        doc_loader: Callable[[str], str],
        tdd_pattern: str | None = None,
        cadence_ms: float = DEFAULT_CADENCE_MS,
        realtime: bool = True,
        loop_trace: bool = False,
    ):
        self.pipeline = ObserverPipeline(cell, doc_loader=doc_loader, tdd_pattern=tdd_pattern, keep_decoded=False)
        self.records = records
        self.realtime = realtime
        self.loop_trace = loop_trace
        self.tti_ns = int(cell.tti_duration_ms * 1_000_000)
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._replay: threading.Thread | None = None
        self.streamer = SampleStreamer(self.sample, cadence_ms, on_gone=self._gone)
        self.replayed_ttis = 0

    def sample(self, rnti: int) -> TelemetrySample:
        with self._lock:
            if rnti not in self.pipeline.registry:
                last = self.pipeline.estimator.last_record
                return TelemetrySample(last.tti_index if last else 0, 0, 0)
            return self.pipeline.sample(rnti)

    def _gone(self, sub: Subscriber, err):
        log.warning("%s", err)

    def _replay_loop(self):
        by_tti: dict[int, list[TraceRecord]] = {}
        for rec in self.records:
            by_tti.setdefault(rec.tti, []).append(rec)
        last = max(by_tti, default=-1)
        offset = 0
        deadline = time.perf_counter_ns()
        while not self._stop.is_set():
            for tti in range(last + 1):
                if self._stop.is_set():
                    return
                with self._lock:
                    self.pipeline.process_tti(offset + tti, [] if offset else by_tti.get(tti, []))
                self.replayed_ttis += 1
                if self.realtime:
                    deadline += self.tti_ns
                    remaining = deadline - time.perf_counter_ns()
                    if remaining > 0:
                        time.sleep(remaining / 1e9)
            if not self.loop_trace:
                return
            # after the first pass keep time moving with empty TTIs
            offset += last + 1

    def start(self):
        self._stop.clear()
        self._replay = threading.Thread(target=self._replay_loop, name="trace-replay", daemon=True)
        self._replay.start()
        self.streamer.start()

    def stop(self):
        self._stop.set()
        self.streamer.stop()
        if self._replay is not None:
            self._replay.join()
            self._replay = None

    async def subscribe(self, rnti: int, rtsp_host: str, rtsp_port: int) -> int:
        client = await RtspClient.connect(rtsp_host, rtsp_port)
        try:
            result = await rtsp_handshake(client, role="telemetry-server", announce={"rnti": f"{rnti:#06x}"})
        finally:
            await client.close()
        port = result.ports["feedback"]
        self.streamer.add(Subscriber(rnti, (rtsp_host, port)))
        return port

    async def handle_line(self, line: bytes) -> dict:
        try:
            req = json.loads(line)
            rnti = int(str(req["rnti"]), 0)
            host, _, port = str(req["rtsp"]).rpartition(":")
            feedback = await self.subscribe(rnti, host, int(port))
            return {"ok": True, "rnti": f"{rnti:#06x}", "feedback_port": feedback}
        except Exception as exc:  # report any failure back to the requester
            return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}

    async def serve(self, host: str = "127.0.0.1", port: int = 0) -> asyncio.AbstractServer:
        async def client(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
            try:
                while line := await reader.readline():
                    writer.write((json.dumps(await self.handle_line(line)) + "\n").encode())
                    await writer.drain()
            finally:
                writer.close()

        return await asyncio.start_server(client, host, port)
