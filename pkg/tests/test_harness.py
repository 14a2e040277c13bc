import pytest
from hypothesis import given
from hypothesis import strategies as st

from polyshare.harness import (
    COLLECTOR,
    DISTRIBUTOR,
    ChannelError,
    FrameError,
    MalformedMessageError,
    Message,
    Session,
    collect_metrics,
    open_session,
)
from polyshare.harness.wire import decode_body, encode_body, frame, frame_size, read_frame
from polyshare.polyctrl import N_PARTY, SCHEMES, THREE_PARTY, encode_state, evaluate_secure, plan_evaluation

TRANSPORTS = ("in-memory", "framed-stream")


def run_steps(qlaw, scheme, seed, steps=3, **kw):
    plan = plan_evaluation(qlaw, scheme, zero_mode=kw.pop("zero_mode", "communication"))
    with open_session(plan, seed=seed, **kw) as s:
        us = [evaluate_secure(qlaw, plan, encode_state((0.5 * k, -1.25), qlaw.fmt), s) for k in range(steps)]
        return us, s.log, collect_metrics(s), s


payloads = st.lists(st.tuples(st.integers(0, 2**64 - 1), st.integers(0, 255)), max_size=5)


class TestWire:
    @given(st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1), st.integers(0, 2**16 - 1),
           st.integers(0, 2**16 - 1), st.integers(0, 255), st.integers(0, 255), payloads)
    def test_round_trip(self, session, step, summand, rnd, sender, receiver, payload):
        msg = Message(session, step, summand, rnd, sender, receiver, tuple(payload))
        body = encode_body(msg)
        assert decode_body(body) == msg
        assert len(frame(body)) == frame_size(msg)

    def test_layout_big_endian(self):
        body = encode_body(Message(1, 2, 3, 4, 5, 6, ((7, 8),)))
        assert body.hex() == "0000000000000001" "00000002" "0003" "0004" "05" "06" "0001" "0000000000000007" "08"

    def test_truncated_body(self):
        body = encode_body(Message(1, 2, 3, 4, 5, 6, ((7, 8),)))
        with pytest.raises(FrameError):
            decode_body(body[:-1])
        with pytest.raises(FrameError):
            decode_body(body[:5])

    def test_read_frame(self):
        raw = frame(b"abc") + frame(b"")
        pos = 0

        def read_exactly(n):
            nonlocal pos
            pos += n
            return raw[pos - n:pos]

        assert read_frame(read_exactly) == b"abc"
        assert read_frame(read_exactly) == b""

    def test_kinds(self):
        assert Message(0, 0, 0, 0, DISTRIBUTOR, 1).kind == "share"
        assert Message(0, 0, 0, 0, DISTRIBUTOR, COLLECTOR).kind == "constant"
        assert Message(0, 0, 0, 0, 2, COLLECTOR).kind == "result"
        assert Message(0, 0, 0, 0x8001, 2, 3).kind == "zero"
        assert Message(0, 0, 0, 1, 2, 3).kind == "reshare"


class TestSession:
    @pytest.mark.parametrize("transport", TRANSPORTS)
    def test_ping(self, transport):
        with Session(5, 101, transport=transport, seed=0) as s:
            assert sorted(s.ping()) == [1, 2, 3, 4, 5, COLLECTOR]

    def test_seed_determinism(self, cubic_qlaw):
        for scheme in SCHEMES:
            a = run_steps(cubic_qlaw, scheme, seed=11)
            b = run_steps(cubic_qlaw, scheme, seed=11)
            assert a[0] == b[0] and a[1] == b[1]

    def test_distinct_seeds_distinct_sessions(self):
        with Session(3, 101, seed=1) as a, Session(3, 101, seed=2) as b:
            assert a.session_id != b.session_id
            assert a.rng(1).random() != b.rng(1).random()

    def test_per_party_streams_independent(self):
        with Session(3, 101, seed=1) as s:
            assert s.rng(1).random() != s.rng(2).random()

    @pytest.mark.parametrize("transport", TRANSPORTS)
    def test_fifo_per_channel(self, transport):
        with Session(3, 101, transport=transport, seed=0) as s:
            for k in range(5):
                s.send(s.message(0, k, 1, 2, [(k, 0)]))
            s.send(s.message(0, 0, 3, 2, [(99, 0)]))
            got = s.deliver(2)
            assert [m.payload[0][0] for m in got if m.sender == 1] == [0, 1, 2, 3, 4]
            assert [m.sender for m in got] == [1] * 5 + [3]

    def test_payload_outside_ring_rejected(self):
        with Session(3, 101, seed=0) as s:
            with pytest.raises(MalformedMessageError):
                s.send(s.message(0, 0, 1, 2, [(101, 0)]))

    def test_duplicate_rejected(self):
        with Session(3, 101, seed=0) as s:
            s.send(s.message(0, 0, 1, 2, [(1, 0)]))
            with pytest.raises(MalformedMessageError):
                s.send(s.message(0, 0, 1, 2, [(2, 0)]))

    def test_foreign_session_rejected(self):
        with Session(3, 101, seed=0) as s:
            with pytest.raises(MalformedMessageError):
                s.send(Message(s.session_id + 1, 0, 0, 0, 1, 2))

    def test_closed(self):
        s = Session(3, 101, seed=0)
        s.close()
        with pytest.raises(Exception):
            s.send(s.message(0, 0, 1, 2))

    def test_tampered_frame_rejected(self):
        with Session(3, 101, transport="framed-stream", seed=0) as s:
            def flip(raw):
                return raw[:-1] + bytes([raw[-1] ^ 1])

            s.transport.tamper = flip
            with pytest.raises(ChannelError):
                s.send(s.message(0, 0, 1, 2, [(5, 0)]))

    def test_truncated_frame_rejected(self):
        with Session(3, 101, transport="framed-stream", seed=0) as s:
            s.transport.tamper = lambda raw: raw[:-3]
            with pytest.raises(ChannelError):
                s.send(s.message(0, 0, 1, 2, [(5, 0)]))


class TestProtocolTraffic:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_transport_transparent(self, cubic_qlaw, scheme):
        a = run_steps(cubic_qlaw, scheme, seed=4, transport="in-memory")
        b = run_steps(cubic_qlaw, scheme, seed=4, transport="framed-stream")
        assert a[0] == b[0]
        assert a[1] == b[1]

    @pytest.mark.parametrize("zero_mode", ["communication", "correlated-randomness"])
    def test_n_party_has_no_server_links(self, cubic_qlaw, zero_mode):
        _, log, metrics, _ = run_steps(cubic_qlaw, N_PARTY, seed=0, zero_mode=zero_mode)
        assert not [e for e in log if 1 <= e.sender <= 254 and 1 <= e.receiver <= 254]
        assert set(metrics.kinds) == {"share", "result"}

    def test_three_party_rounds(self, cubic_qlaw):
        _, log, metrics, _ = run_steps(cubic_qlaw, THREE_PARTY, seed=0, steps=1, zero_mode="correlated-randomness")
        plan = plan_evaluation(cubic_qlaw, THREE_PARTY)
        for inst in plan.instances:
            rounds = {e.round for e in log if e.summand == inst.summand and e.kind == "reshare"}
            assert len(rounds) == len(inst.factors) - 2
        # three reshare frames per round, and no rho frames with correlated keys
        assert metrics.kinds["reshare"] == 3 * plan.circular_rounds()
        assert metrics.kinds["zero"] == 0

    def test_communication_mode_sends_rho(self, cubic_qlaw):
        _, _, metrics, _ = run_steps(cubic_qlaw, THREE_PARTY, seed=0, steps=1)
        plan = plan_evaluation(cubic_qlaw, THREE_PARTY)
        assert metrics.kinds["zero"] == 3 * plan.circular_rounds()

    def test_audit_records_views(self, cubic_qlaw):
        plan = plan_evaluation(cubic_qlaw, N_PARTY)
        with open_session(plan, seed=0, audit=True) as s:
            evaluate_secure(cubic_qlaw, plan, encode_state((1, 1), cubic_qlaw.fmt), s)
            assert s.views[1] and s.views[COLLECTOR]
            assert all(m.receiver == 1 for m in s.views[1])

    def test_metrics_do_not_depend_on_seed(self, cubic_qlaw):
        for scheme in SCHEMES:
            rows = [run_steps(cubic_qlaw, scheme, seed=seed)[2].rows() for seed in (0, 1, 2)]
            assert rows[0] == rows[1] == rows[2]

    def test_metric_totals(self, cubic_qlaw):
        metrics = run_steps(cubic_qlaw, N_PARTY, seed=0, steps=2)[2]
        rows = {r["role"]: r for r in metrics.rows()}
        for k in ("adds", "muls", "draws", "messages", "bytes"):
            assert rows["total"][k] == sum(rows[r][k] for r in ("distributor", "server", "collector"))
        assert rows["collector"]["messages"] == 0
