import json
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from servicemonitor.catalog import load_catalog
from servicemonitor.errors import (
    ResolutionError,
    TokenBoundsError,
    TraceFormatError,
    TraceTruncationError,
)
from servicemonitor.rng import Xoshiro256StarStar
from servicemonitor.trace import (
    BC_TRANSACTION,
    TransactionRecord,
    parse_trace,
    resolve_events,
    write_trace,
)

CATALOG = load_catalog(
    (
        "com.android.internal.telephony.ISms\t1\tsendText\tTelephonyManager\n"
        "android.location.ILocationManager\t2\trequestLocationUpdates\tLocationManager\n"
        "com.android.internal.telephony.IPhoneSubInfo\t4\tgetSubscriberId\tTelephonyManager\n"
    ).encode()
)

SEND_TEXT = TransactionRecord(10, 1234, BC_TRANSACTION, "com.android.internal.telephony.ISms", 1)


def random_records(seed: int, count: int) -> list[TransactionRecord]:
    rng = Xoshiro256StarStar(seed)
    tokens = ["a.I", "com.android.internal.telephony.ISms", "x.y.IThing", "", "ünicøde.I"]
    return [
        TransactionRecord(
            timestamp_us=rng.next_uint64(),
            pid=rng.randbelow(2**32),
            command=rng.randbelow(8),
            interface_token=tokens[rng.randbelow(len(tokens))],
            function_code=rng.randbelow(2**32),
        )
        for _ in range(count)
    ]


def test_single_transaction_round_trip():
    data = write_trace([SEND_TEXT])
    records = parse_trace(data)
    assert records == [SEND_TEXT]
    assert records[0].command == 0
    assert records[0].is_transaction


def test_empty_stream_round_trip():
    data = write_trace([])
    assert parse_trace(data) == []
    assert len(data) == 10  # header only


def test_write_is_deterministic():
    records = random_records(7, 50)
    assert write_trace(records) == write_trace(records)


def test_random_round_trips():
    for seed in range(20):
        records = random_records(seed, 100)
        assert parse_trace(write_trace(records)) == records


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(0, 2**64 - 1),
            st.integers(0, 2**32 - 1),
            st.integers(0, 2**32 - 1),
            st.text(max_size=40),
            st.integers(0, 2**32 - 1),
        ),
        max_size=20,
    )
)
def test_round_trip_property(raw):
    records = [TransactionRecord(*fields) for fields in raw]
    assert parse_trace(write_trace(records)) == records


def test_bad_magic_and_version():
    good = write_trace([SEND_TEXT])
    with pytest.raises(TraceFormatError, match="magic"):
        parse_trace(b"XXXX" + good[4:])
    bad_version = good[:4] + struct.pack("<H", 9) + good[6:]
    with pytest.raises(TraceFormatError, match="version"):
        parse_trace(bad_version)


def test_truncation_mid_fixed_fields_reports_offset():
    good = write_trace([SEND_TEXT])
    cut = 10 + 6  # header plus part of the timestamp
    with pytest.raises(TraceTruncationError) as exc_info:
        parse_trace(good[:cut])
    assert exc_info.value.offset == cut


def test_token_overrun_is_bounds_error():
    good = write_trace([SEND_TEXT])
    # cut inside the token bytes: fixed fields intact, token_len overruns
    cut = 10 + 18 + 5
    with pytest.raises(TokenBoundsError):
        parse_trace(good[:cut])


def test_any_cut_is_a_truncation_error():
    good = write_trace(random_records(3, 4))
    for cut in range(len(good)):
        with pytest.raises(TraceTruncationError):
            parse_trace(good[:cut])


def test_trailing_garbage_rejected():
    with pytest.raises(TraceFormatError, match="trailing"):
        parse_trace(write_trace([SEND_TEXT]) + b"junk")


def test_jsonl_parse():
    lines = [
        json.dumps({"ts": 1, "pid": 2, "cmd": 0, "iface": "com.android.internal.telephony.ISms", "code": 1}),
        json.dumps({"ts": 2, "pid": 2, "cmd": 7, "iface": "other.I", "code": 9}),
    ]
    records = parse_trace("\n".join(lines).encode())
    assert len(records) == 2
    assert records[0] == TransactionRecord(1, 2, 0, "com.android.internal.telephony.ISms", 1)
    assert records[1].command == 7


def test_jsonl_bad_line():
    with pytest.raises(TraceFormatError, match="line 2"):
        parse_trace(b'{"ts":1,"pid":2,"cmd":0,"iface":"a.I","code":1}\n{"ts":}\n')


def test_resolve_drops_non_transactions():
    other = TransactionRecord(11, 1234, 7, "some.I", 3)
    trace = resolve_events([SEND_TEXT, other, SEND_TEXT], CATALOG)
    assert trace.events == [0, 0]


def test_resolve_all_non_transactions():
    records = [TransactionRecord(1, 2, c, "a.I", 0) for c in (1, 2, 3)]
    assert resolve_events(records, CATALOG).events == []


def test_resolve_skip_vs_error_policy():
    unknown = TransactionRecord(5, 9, BC_TRANSACTION, "unknown.Interface", 1)
    sub_info = TransactionRecord(
        6, 9, BC_TRANSACTION, "com.android.internal.telephony.IPhoneSubInfo", 4
    )
    records = [SEND_TEXT, unknown, sub_info]
    assert resolve_events(records, CATALOG, "skip").events == [0, 2]
    with pytest.raises(ResolutionError, match="record 1.*unknown.Interface"):
        resolve_events(records, CATALOG, "error")


def test_resolve_preserves_order_and_metadata():
    loc = TransactionRecord(7, 9, BC_TRANSACTION, "android.location.ILocationManager", 2)
    trace = resolve_events([loc, SEND_TEXT], CATALOG, app_id="app7", label="benign")
    assert trace.events == [1, 0]
    assert trace.app_id == "app7"
    assert trace.label == "benign"


def test_resolution_is_idempotent_on_filtered_streams():
    records = random_records(11, 60)
    first = resolve_events(records, CATALOG)
    kept = [
        r for r in records
        if r.command == BC_TRANSACTION and CATALOG.resolve(r.interface_token, r.function_code) is not None
    ]
    assert resolve_events(kept, CATALOG).events == first.events
    assert len(first.events) <= sum(1 for r in records if r.command == BC_TRANSACTION)
