"""Recorded transaction logs and their resolution into function-event traces.

The SMTR binary format captures one logical Binder transaction per
record. Only command 0 (an outbound request transaction) feeds the
behavioral model; other command values are kept in the log for tooling
but dropped during resolution. A JSONL debug form is accepted on parse
when the stream starts with '{'.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from .catalog import ServiceCatalog
from .errors import (
    ResolutionError,
    TokenBoundsError,
    TraceFormatError,
    TraceTruncationError,
)

SMTR_MAGIC = b"SMTR"
SMTR_VERSION = 1
BC_TRANSACTION = 0

_HEADER = struct.Struct("<4sHI")
_FIXED = struct.Struct("<QIIH")  # timestamp_us, pid, command, token_len
_CODE = struct.Struct("<I")

_U64_MAX = 2**64 - 1
_U32_MAX = 2**32 - 1


@dataclass(frozen=True)
class TransactionRecord:
    """One raw IPC record as captured by the (out-of-scope) logger."""

    timestamp_us: int
    pid: int
    command: int
    interface_token: str
    function_code: int

    @property
    def is_transaction(self) -> bool:
        return self.command == BC_TRANSACTION


@dataclass
class FunctionTrace:
    """Chronological sequence of resolved function ids for one application."""

    app_id: str
    events: list[int] = field(default_factory=list)
    label: str | None = None

    def __len__(self) -> int:
        return len(self.events)


def write_trace(records: list[TransactionRecord] | tuple[TransactionRecord, ...]) -> bytes:
    """Canonical SMTR encoding; identical inputs yield identical bytes."""
    parts = [_HEADER.pack(SMTR_MAGIC, SMTR_VERSION, len(records))]
    for rec in records:
        token = rec.interface_token.encode("utf-8")
        if len(token) > 0xFFFF:
            raise TraceFormatError(
                f"interface token of {len(token)} bytes exceeds the u16 length field"
            )
        if not 0 <= rec.timestamp_us <= _U64_MAX:
            raise TraceFormatError(f"timestamp {rec.timestamp_us} outside u64 range")
        if not 0 <= rec.pid <= _U32_MAX or not 0 <= rec.command <= _U32_MAX:
            raise TraceFormatError("pid/command outside u32 range")
        if not 0 <= rec.function_code <= _U32_MAX:
            raise TraceFormatError(f"function code {rec.function_code} outside u32 range")
        parts.append(_FIXED.pack(rec.timestamp_us, rec.pid, rec.command, len(token)))
        parts.append(token)
        parts.append(_CODE.pack(rec.function_code))
    return b"".join(parts)


def _parse_jsonl(data: bytes) -> list[TransactionRecord]:
    records = []
    for lineno, raw in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            records.append(
                TransactionRecord(
                    timestamp_us=int(obj["ts"]),
                    pid=int(obj["pid"]),
                    command=int(obj["cmd"]),
                    interface_token=str(obj["iface"]),
                    function_code=int(obj["code"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"JSONL record on line {lineno} is invalid: {exc}") from exc
    return records


def parse_trace(data: bytes) -> list[TransactionRecord]:
    """Decode an SMTR (or JSONL debug) stream into records, in file order."""
    if data[:1] == b"{":
        return _parse_jsonl(data)

    if len(data) < _HEADER.size:
        raise TraceTruncationError("stream shorter than the SMTR header", offset=len(data))
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != SMTR_MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {SMTR_MAGIC!r}")
    if version != SMTR_VERSION:
        raise TraceFormatError(f"unsupported SMTR version {version}")

    records: list[TransactionRecord] = []
    pos = _HEADER.size
    for _ in range(count):
        if pos + _FIXED.size > len(data):
            raise TraceTruncationError("record cut inside fixed fields", offset=len(data))
        ts, pid, command, token_len = _FIXED.unpack_from(data, pos)
        pos += _FIXED.size
        if pos + token_len + _CODE.size > len(data):
            raise TokenBoundsError(
                f"token length {token_len} overruns the stream", offset=len(data)
            )
        token_bytes = data[pos : pos + token_len]
        pos += token_len
        try:
            token = token_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError(f"interface token is not valid UTF-8: {exc}", offset=pos) from exc
        (code,) = _CODE.unpack_from(data, pos)
        pos += _CODE.size
        records.append(TransactionRecord(ts, pid, command, token, code))
    if pos != len(data):
        raise TraceFormatError(f"{len(data) - pos} trailing bytes after the last record", offset=pos)
    return records


def resolve_events(
    records,
    catalog: ServiceCatalog,
    unknown_policy: str = "skip",
    app_id: str = "",
    label: str | None = None,
) -> FunctionTrace:
    """Filter to command-0 records and map each onto its catalog id.

    Record order is preserved. Under the default skip policy,
    uncataloged (interface, code) pairs are silently dropped; under
    error policy the first one aborts resolution.
    """
    if unknown_policy not in ("skip", "error"):
        raise ValueError(f"unknown_policy must be 'skip' or 'error', got {unknown_policy!r}")
    events: list[int] = []
    for index, rec in enumerate(records):
        if rec.command != BC_TRANSACTION:
            continue
        fid = catalog.resolve(rec.interface_token, rec.function_code)
        if fid is None:
            if unknown_policy == "error":
                raise ResolutionError(
                    f"record {index}: ({rec.interface_token!r}, code {rec.function_code}) "
                    "is not in the catalog"
                )
            continue
        events.append(fid)
    return FunctionTrace(app_id=app_id, events=events, label=label)
