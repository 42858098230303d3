import json

import pytest

from mmlab.errors import LogParseError, MessageInvariantError, SequenceError, SnapshotError
from mmlab.messages import (
    BookSnapshot,
    Level3Message,
    count_gaps,
    load_snapshot,
    replay_log,
    save_snapshot,
    write_log,
)


def msg(seq, msg_type="open", **kw):
    defaults = dict(
        sequence=seq,
        timestamp_ms=1000 + seq,
        msg_type=msg_type,
        order_id=f"o{seq}",
        side="bid",
        price=100.0,
        size=1.0,
    )
    defaults.update(kw)
    return Level3Message(**defaults)


class TestValidation:
    def test_open_requires_positive_price_and_size(self):
        with pytest.raises(MessageInvariantError):
            msg(1, price=-1.0).validate()
        with pytest.raises(MessageInvariantError):
            msg(1, size=0.0).validate()

    def test_done_requires_reason(self):
        with pytest.raises(MessageInvariantError):
            msg(1, msg_type="done", reason=None).validate()
        msg(1, msg_type="done", reason="canceled").validate()

    def test_received_and_open_reject_reason(self):
        with pytest.raises(MessageInvariantError):
            msg(1, reason="canceled").validate()
        with pytest.raises(MessageInvariantError):
            msg(1, msg_type="received", price=None, size=None, reason="filled").validate()

    def test_unknown_type_and_side(self):
        with pytest.raises(MessageInvariantError):
            msg(1, msg_type="trade").validate()
        with pytest.raises(MessageInvariantError):
            msg(1, side="buy").validate()


class TestLogRoundTrip:
    def test_empty_file_empty_stream(self, tmp_path):
        path = tmp_path / "log.ndjson"
        path.write_text("")
        assert list(replay_log(str(path))) == []

    def test_round_trip_field_equality(self, tmp_path):
        messages = [
            msg(1, msg_type="received", price=None, size=None),
            msg(2),
            msg(3, msg_type="match", side="ask", price=100.5, size=0.25),
            msg(5, msg_type="done", reason="canceled", size=0.75),
        ]
        path = tmp_path / "log.ndjson"
        with open(path, "w") as fh:
            assert write_log(messages, fh) == 4
        replayed = list(replay_log(str(path)))
        assert replayed == messages

    def test_round_trip_byte_identical(self, tmp_path):
        messages = [msg(i) for i in range(1, 50)]
        p1, p2 = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        with open(p1, "w") as fh:
            write_log(messages, fh)
        with open(p2, "w") as fh:
            write_log(replay_log(str(p1)), fh)
        assert p1.read_bytes() == p2.read_bytes()

    def test_negative_size_names_line(self, tmp_path):
        path = tmp_path / "log.ndjson"
        with open(path, "w") as fh:
            write_log([msg(1), msg(2)], fh)
            fh.write(
                json.dumps(
                    {
                        "sequence": 3,
                        "timestamp_ms": 1,
                        "msg_type": "open",
                        "order_id": "x",
                        "side": "bid",
                        "price": 100.0,
                        "size": -1.0,
                        "reason": None,
                        "exchange_time_ms": None,
                    }
                )
                + "\n"
            )
        with pytest.raises(LogParseError) as exc:
            list(replay_log(str(path)))
        assert exc.value.line_no == 3

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "log.ndjson"
        path.write_text('{"sequence": 1,\n')
        with pytest.raises(LogParseError) as exc:
            list(replay_log(str(path)))
        assert exc.value.line_no == 1

    def test_non_monotone_sequence_rejected_unless_permissive(self, tmp_path):
        path = tmp_path / "log.ndjson"
        with open(path, "w") as fh:
            write_log([msg(5), msg(3)], fh)
        with pytest.raises(SequenceError):
            list(replay_log(str(path)))
        assert len(list(replay_log(str(path), permissive=True))) == 2


class TestSnapshot:
    def test_crossed_snapshot_rejected(self):
        snap = BookSnapshot(1, bids=[("a", 101.0, 1.0)], asks=[("b", 100.0, 1.0)])
        with pytest.raises(SnapshotError):
            snap.validate()

    def test_duplicate_order_id_rejected(self):
        snap = BookSnapshot(1, bids=[("a", 99.0, 1.0)], asks=[("a", 100.0, 1.0)])
        with pytest.raises(SnapshotError):
            snap.validate()

    def test_snapshot_file_round_trip(self, tmp_path):
        snap = BookSnapshot(
            7, bids=[("a", 99.5, 1.5)], asks=[("b", 100.5, 2.0), ("c", 101.0, 0.25)]
        )
        path = tmp_path / "snap.json"
        save_snapshot(snap, str(path))
        loaded = load_snapshot(str(path))
        assert loaded == snap


class TestGapCount:
    def test_no_gaps(self):
        assert count_gaps(range(5, 105)) == 0

    def test_single_dropped_sequence(self):
        seqs = [s for s in range(1, 1001) if s != 500]
        assert count_gaps(seqs) == 1

    def test_multiple_gaps(self):
        assert count_gaps([1, 3, 4, 10, 11]) == 2
