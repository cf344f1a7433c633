import asyncio
import json
import socket
import statistics
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import haversine_oracle_km
from rantelemetry.capacity import TelemetrySample
from rantelemetry.errors import BadLength, InvalidCoordinates, MalformedMessage, OutOfOrderMethod, UnsupportedMethod
from rantelemetry.wire import (
    DATAGRAM_SIZE,
    PUBLIC_HEADER,
    STREAM_CATALOG,
    SUPPORTED_METHODS,
    Directory,
    RtspClient,
    RtspMessage,
    RtspServer,
    RtspSession,
    SampleStreamer,
    ServerEntry,
    SessionState,
    Subscriber,
    decode_sample,
    directory_query,
    encode_sample,
    haversine_km,
    parse_message,
    rtsp_handshake,
)

U32, U64 = 2**32 - 1, 2**64 - 1


def be_bytes(tti, alloc, spare):
    return tti.to_bytes(8, "big") + alloc.to_bytes(4, "big") + spare.to_bytes(4, "big")


class TestDatagram:
    def test_zero(self):
        assert encode_sample(TelemetrySample(0, 0, 0)) == bytes(16)

    def test_golden(self):
        raw = encode_sample(TelemetrySample(12345, 6_480_000, 0))
        assert raw == be_bytes(12345, 6_480_000, 0)
        # 6,480,000 = 0x0062E080
        assert raw.hex() == "0000000000003039" "0062e080" "00000000"

    @pytest.mark.parametrize("n", [0, 15, 17])
    def test_bad_length(self, n):
        with pytest.raises(BadLength):
            decode_sample(bytes(n))

    def test_field_overflow(self):
        with pytest.raises(BadLength):
            encode_sample(TelemetrySample(0, U32 + 1, 0))

    @pytest.mark.parametrize("tti", [0, 1, U64])
    @pytest.mark.parametrize("alloc", [0, U32])
    @pytest.mark.parametrize("spare", [0, U32])
    def test_boundaries(self, tti, alloc, spare):
        s = TelemetrySample(tti, alloc, spare)
        assert encode_sample(s) == be_bytes(tti, alloc, spare)
        assert decode_sample(encode_sample(s)) == s

    @settings(max_examples=2**16, deadline=None)
    @given(st.integers(0, U64), st.integers(0, U32), st.integers(0, U32))
    def test_round_trip(self, tti, alloc, spare):
        raw = encode_sample(TelemetrySample(tti, alloc, spare))
        assert len(raw) == DATAGRAM_SIZE
        assert decode_sample(raw) == TelemetrySample(tti, alloc, spare)


class TestStreamer:
    def test_steady_fanout(self):
        got_a, got_b = [], []
        streamer = SampleStreamer(lambda rnti: TelemetrySample(7, 6_480_000, 0))
        streamer.add(Subscriber(0x4296, got_a.append))
        streamer.add(Subscriber(0x4296, got_b.append))
        for _ in range(50):
            streamer.tick()
        assert got_a == got_b
        assert len(got_a) == 50
        assert {decode_sample(d).b_alloc for d in got_a} == {6_480_000}

    def test_per_ue(self):
        got = {1: [], 2: []}
        streamer = SampleStreamer(lambda rnti: TelemetrySample(0, rnti, 0))
        for r in got:
            streamer.add(Subscriber(r, got[r].append))
        streamer.tick()
        assert decode_sample(got[1][0]).b_alloc == 1
        assert decode_sample(got[2][0]).b_alloc == 2

    def test_subscriber_gone(self):
        calls = []

        def broken(_):
            raise ConnectionResetError("peer went away")

        streamer = SampleStreamer(lambda rnti: TelemetrySample(0, 0, 0), on_gone=lambda s, e: calls.append(e))
        ok = []
        bad = streamer.add(Subscriber(1, broken, retry_budget=2))
        streamer.add(Subscriber(1, ok.append))
        for _ in range(5):
            streamer.tick()
        assert bad not in streamer.subscribers
        assert len(streamer.gone) == 1 and calls == streamer.gone
        assert len(ok) == 5

    def test_transient_failures_forgiven(self):
        from rantelemetry.wire import CLEAN_RUN_TO_FORGIVE

        state = {"n": 0}

        def flaky(_):
            state["n"] += 1
            # two failures, then a long clean run, then two more
            if state["n"] in (1, 2, CLEAN_RUN_TO_FORGIVE + 4, CLEAN_RUN_TO_FORGIVE + 5):
                raise OSError("transient")

        streamer = SampleStreamer(lambda rnti: TelemetrySample(0, 0, 0))
        sub = streamer.add(Subscriber(1, flaky, retry_budget=3))
        for _ in range(CLEAN_RUN_TO_FORGIVE + 10):
            streamer.tick()
        assert sub in streamer.subscribers and not streamer.gone

    def test_udp_delivery(self):
        rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        rx.bind(("127.0.0.1", 0))
        rx.settimeout(2)
        streamer = SampleStreamer(lambda rnti: TelemetrySample(3, 4, 5))
        sub = streamer.add(Subscriber(9, rx.getsockname()))
        streamer.tick()
        assert decode_sample(rx.recv(64)) == TelemetrySample(3, 4, 5)
        streamer.remove(sub)
        rx.close()

    def test_udp_unreachable_ends_stream(self):
        probe = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        probe.bind(("127.0.0.1", 0))
        addr = probe.getsockname()
        probe.close()
        streamer = SampleStreamer(lambda rnti: TelemetrySample(0, 0, 0))
        streamer.add(Subscriber(1, addr, retry_budget=1))
        for _ in range(20):
            streamer.tick()
            time.sleep(0.001)
            if not streamer.subscribers:
                break
        assert not streamer.subscribers and streamer.gone

    def test_concurrent_add_remove(self):
        streamer = SampleStreamer(lambda rnti: TelemetrySample(0, 0, 0))
        streamer.start()
        try:
            for _ in range(200):
                s = streamer.add(Subscriber(1, lambda d: None))
                streamer.remove(s)
        finally:
            streamer.stop()
        assert not streamer.gone

    def test_cadence(self):
        streamer = SampleStreamer(lambda rnti: TelemetrySample(0, 0, 0))
        streamer.add(Subscriber(1, lambda d: None))
        streamer.record_times = True
        streamer.start()
        time.sleep(10)
        streamer.stop()
        gaps = [(b - a) / 1e6 for a, b in zip(streamer.send_times_ns, streamer.send_times_ns[1:])]
        assert len(gaps) > 15_000
        assert 0.4 <= statistics.median(gaps) <= 0.6


SERVERS = [
    ServerEntry("madrid", 9000, 40.4168, -3.7038),
    ServerEntry("paris", 9000, 48.8566, 2.3522),
    ServerEntry("boston", 9000, 42.3601, -71.0589),
]


class TestDirectory:
    def test_exact_match_first(self):
        assert Directory(SERVERS).lookup(48.8566, 2.3522)[0]["host"] == "paris"

    def test_empty(self):
        assert Directory().lookup(0, 0) == []

    @pytest.mark.parametrize("lat,lon", [(41.0, -8.6), (51.5, -0.1), (40.7, -74.0), (-33.9, 151.2)])
    def test_oracle_order(self, lat, lon):
        expect = sorted(SERVERS, key=lambda s: haversine_oracle_km(lat, lon, s.latitude, s.longitude))
        assert [s["host"] for s in Directory(SERVERS).lookup(lat, lon)] == [s.host for s in expect]

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-90, 90), st.floats(-180, 180), st.floats(-90, 90), st.floats(-180, 180))
    def test_haversine_oracle(self, a, b, c, d):
        assert haversine_km(a, b, c, d) == pytest.approx(haversine_oracle_km(a, b, c, d), abs=1e-6)

    @pytest.mark.parametrize("lat,lon", [(91, 0), (0, 181), (float("nan"), 0), ("x", 0), (None, 0)])
    def test_invalid(self, lat, lon):
        with pytest.raises(InvalidCoordinates):
            Directory(SERVERS).lookup(lat, lon)

    def test_load(self, tmp_path):
        path = tmp_path / "reg.json"
        path.write_text(json.dumps({"servers": [vars(s) for s in SERVERS]}))
        assert Directory.load(path).servers == SERVERS

    def test_over_tcp(self):
        async def main():
            server = await Directory(SERVERS).serve()
            host, port = server.sockets[0].getsockname()[:2]
            loop = asyncio.get_running_loop()
            near = await loop.run_in_executor(None, directory_query, host, port, 40.0, -4.0)
            with pytest.raises(InvalidCoordinates):
                await loop.run_in_executor(None, directory_query, host, port, 100.0, 0.0)
            server.close()
            await server.wait_closed()
            return near

        assert [s["host"] for s in asyncio.run(main())] == ["madrid", "paris", "boston"]


def req(method, cseq=1, uri="rtsp://h/", **headers):
    return RtspMessage(method=method, uri=uri, cseq=cseq, headers=headers)


def drive(session, *methods):
    out = []
    for i, m in enumerate(methods, 1):
        uri = "rtsp://h/streamid=feedback" if m == "SETUP" else "rtsp://h/"
        out.append(session.handle(req(m, i, uri)))
    return out


REACH = {
    SessionState.INIT: (),
    SessionState.DESCRIBED: ("DESCRIBE",),
    SessionState.READY: ("SETUP",),
    SessionState.ANNOUNCED: ("SETUP", "ANNOUNCE"),
    SessionState.PLAYING: ("SETUP", "PLAY"),
}


class TestRtspStateMachine:
    def test_full_flow(self):
        s = RtspSession()
        replies = drive(s, "OPTION", "DESCRIBE", "SETUP", "ANNOUNC", "PLAY")
        assert [r.status for r in replies] == [200] * 5
        assert replies[0].headers["Public"] == PUBLIC_HEADER
        assert "m=feedback" in replies[1].body
        assert "server_port=" in replies[2].headers["Transport"]
        assert s.state is SessionState.PLAYING
        assert "feedback" in s.ports
        assert [r.cseq for r in replies] == [1, 2, 3, 4, 5]

    def test_play_before_setup(self):
        s = RtspSession()
        assert s.handle(req("PLAY")).status == OutOfOrderMethod.status == 455
        assert s.state is SessionState.INIT

    def test_unsupported(self):
        assert RtspSession().handle(req("TEARDOWN")).status == UnsupportedMethod.status == 501

    def test_unknown_stream(self):
        assert RtspSession().handle(req("SETUP", uri="rtsp://h/streamid=smell")).status == 404

    @pytest.mark.parametrize("state", list(SessionState))
    @pytest.mark.parametrize("method", [*SUPPORTED_METHODS, "ANNOUNC", "OPTION", "PAUSE", "GET"])
    def test_every_state_method_pair(self, state, method):
        s = RtspSession()
        drive(s, *REACH[state])
        assert s.state is state
        reply = s.handle(req(method, 99, "rtsp://h/streamid=video"))
        assert reply.status in (200, 455, 501)
        assert reply.cseq == 99
        if reply.status != 200:
            assert s.state is state

    def test_on_play_once(self):
        played = []
        s = RtspSession(on_play=played.append)
        drive(s, "SETUP", "PLAY", "PLAY")
        assert played == [s]


class TestRtspParsing:
    def test_round_trip(self):
        m = RtspMessage(method="ANNOUNCE", uri="rtsp://h/", cseq=4, headers={"Session": "X"}, body="rnti=0x4296\n")
        assert parse_message(m.encode()) == m

    def test_response_round_trip(self):
        m = RtspMessage(cseq=2, status=200, reason="OK", headers={"Public": PUBLIC_HEADER})
        assert parse_message(m.encode()) == m

    @pytest.mark.parametrize(
        "raw",
        [
            b"PLAY\r\nCSeq: 1\r\n\r\n",
            b"PLAY rtsp://h/ RTSP/1.0\r\n\r\n",
            b"PLAY rtsp://h/ RTSP/1.0\r\nCSeq: one\r\n\r\n",
            b"PLAY rtsp://h/ HTTP/1.1\r\nCSeq: 1\r\n\r\n",
            b"PLAY rtsp://h/ RTSP/1.0\r\nCSeq 1\r\n\r\n",
            b"RTSP/1.0 abc OK\r\nCSeq: 1\r\n\r\n",
        ],
    )
    def test_malformed(self, raw):
        with pytest.raises(MalformedMessage):
            parse_message(raw)


async def _raw_exchange(host, port, payload: bytes) -> bytes:
    reader, writer = await asyncio.open_connection(host, port)
    writer.write(payload)
    await writer.drain()
    data = await reader.readuntil(b"\r\n\r\n")
    writer.close()
    return data


class TestRtspServer:
    def test_interleaved_handshakes(self):
        async def main():
            server = RtspServer()
            host, port = await server.start()
            gamer = await RtspClient.connect(host, port)
            telem = await RtspClient.connect(host, port)
            # telemetry messages land between every step of the client handshake
            await gamer.request("OPTIONS")
            await telem.request("OPTIONS")
            await gamer.request("DESCRIBE")
            await telem.request("DESCRIBE")
            await telem.request("SETUP", "streamid=feedback")
            await gamer.request("SETUP", "streamid=video")
            await telem.request("ANNOUNCE", body="rnti=0x4296\n")
            await gamer.request("SETUP", "streamid=audio")
            await gamer.request("ANNOUNCE")
            await telem.request("PLAY")
            await gamer.request("PLAY")
            states = [s.state for s in server.sessions]
            feedback = server.sessions[1].ports
            await gamer.close()
            await telem.close()
            await server.close()
            return states, feedback, server.sessions[1].announce

        states, feedback, announce = asyncio.run(main())
        assert states == [SessionState.PLAYING, SessionState.PLAYING]
        assert list(feedback) == ["feedback"]
        assert announce == {"rnti": "0x4296"}

    def test_helper_roles(self):
        async def main():
            server = RtspServer()
            host, port = await server.start()
            a, b = await RtspClient.connect(host, port), await RtspClient.connect(host, port)
            results = await asyncio.gather(rtsp_handshake(a), rtsp_handshake(b, role="telemetry-server"))
            for c in (a, b):
                await c.close()
            await server.close()
            return results

        client, telem = asyncio.run(main())
        assert client.public == ["DESCRIBE", "SETUP", "ANNOUNC", "PLAY"]
        assert client.catalog == list(STREAM_CATALOG)
        assert set(client.ports) == {"video", "audio", "input"}
        assert set(telem.ports) == {"feedback"}
        assert telem.ports["feedback"] not in client.ports.values()

    def test_errors_over_the_wire(self):
        async def main():
            server = RtspServer()
            host, port = await server.start()
            c = await RtspClient.connect(host, port)
            with pytest.raises(OutOfOrderMethod):
                await c.request("PLAY")
            with pytest.raises(UnsupportedMethod):
                await c.request("TEARDOWN")
            await c.request("OPTIONS")
            bad = await _raw_exchange(host, port, b"garbage\r\n\r\n")
            await c.close()
            await server.close()
            return bad

        assert asyncio.run(main()).startswith(b"RTSP/1.0 400")
