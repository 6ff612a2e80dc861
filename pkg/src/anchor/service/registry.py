"""Device registry backed by an append-only, per-line MAC'd JSON log.

Each line is ``{"mac": <hex>, "record": {...}}`` where the MAC is
HMAC-SHA-256 under the anchor storage key over the canonical JSON of the
record. The long-term key inside the record is sealed under the same storage
key. Loading replays the log with last-writer-wins per device id; lines that
fail to parse or authenticate are reported and skipped.
"""
from __future__ import annotations

import enum
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from ..crypto import H, ct_equal, mac, open_blob, seal_blob
from ..errors import AnchorError, CorruptLine, DeviceRevoked, OtkConsumed, UnknownDevice

log = logging.getLogger(__name__)

MAX_ID = 64
STORAGE_KEY_ENV = "ANCHOR_STORAGE_KEY"


class Kind(enum.Enum):
    CONTROLLER = "controller"
    SWITCH = "switch"


class RecordStatus(enum.Enum):
    PROVISIONED = "Provisioned"
    ACTIVE = "Active"
    REVOKED = "Revoked"


@dataclass(frozen=True)
class DeviceRecord:
    device_id: str
    kind: Kind
    k_long_term: bytes
    otk_consumed: bool = False
    status: RecordStatus = RecordStatus.PROVISIONED
    registered_at: int = 0

    def __post_init__(self):
        if not self.device_id or len(self.device_id.encode()) > MAX_ID:
            raise ValueError(f"device id must be 1..{MAX_ID} bytes")
        if len(self.k_long_term) != 32:
            raise ValueError("k_long_term must be 32 bytes")
        if self.status is RecordStatus.ACTIVE and not self.otk_consumed:
            raise ValueError("an Active record must have its OTK consumed")

    def __repr__(self) -> str:
        return (f"DeviceRecord({self.device_id!r}, {self.kind.value}, status={self.status.value}, "
                f"otk_consumed={self.otk_consumed})")


class SimulatedCrash(AnchorError):
    """Raised by the fault-injection hook after a partial write."""


def storage_key_from_env() -> Optional[bytes]:
    raw = os.environ.get(STORAGE_KEY_ENV)
    if raw is None:
        return None
    key = bytes.fromhex(raw)
    if len(key) != 32:
        raise ValueError(f"{STORAGE_KEY_ENV} must be 32 bytes of hex")
    return key


def _canonical(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _record_to_json(rec: DeviceRecord, storage_key: bytes) -> dict:
    ad = rec.device_id.encode()
    nonce = H(b"reg-nonce", storage_key, ad, rec.k_long_term, rec.status.value.encode(),
              str(rec.registered_at).encode())[:16]
    return {
        "device_id": rec.device_id,
        "kind": rec.kind.value,
        "k_long_term": seal_blob(storage_key, rec.k_long_term, nonce, ad).hex(),
        "otk_consumed": rec.otk_consumed,
        "status": rec.status.value,
        "registered_at": rec.registered_at,
    }


def _record_from_json(obj: dict, storage_key: bytes) -> DeviceRecord:
    device_id = obj["device_id"]
    return DeviceRecord(
        device_id=device_id,
        kind=Kind(obj["kind"]),
        k_long_term=open_blob(storage_key, bytes.fromhex(obj["k_long_term"]), device_id.encode()),
        otk_consumed=bool(obj["otk_consumed"]),
        status=RecordStatus(obj["status"]),
        registered_at=int(obj["registered_at"]),
    )


def encode_line(record: DeviceRecord, storage_key: bytes) -> bytes:
    body = _record_to_json(record, storage_key)
    tag = mac(storage_key, _canonical(body)).hex()
    return json.dumps({"mac": tag, "record": body}, sort_keys=True).encode() + b"\n"


def registry_append(path: str | os.PathLike, record: DeviceRecord, storage_key: bytes, *,
                    crash_after: Optional[int] = None) -> None:
    """Append one record and fsync.

    ``crash_after`` is a test hook: write only that many bytes of the line, then
    raise :class:`SimulatedCrash` as if the process died mid-write.
    """
    line = encode_line(record, storage_key)
    fd = os.open(path, os.O_RDWR | os.O_CREAT | os.O_APPEND, 0o600)
    try:
        # a previous crash may have left a torn, unterminated tail
        size = os.fstat(fd).st_size
        if size and os.pread(fd, 1, size - 1) != b"\n":
            os.write(fd, b"\n")
        if crash_after is not None:
            os.write(fd, line[:crash_after])
            os.fsync(fd)
            raise SimulatedCrash(f"crashed after {crash_after} bytes")
        os.write(fd, line)
        os.fsync(fd)
    finally:
        os.close(fd)


def registry_load(path: str | os.PathLike, storage_key: bytes,
                  errors: Optional[list[CorruptLine]] = None) -> dict[str, DeviceRecord]:
    """Replay the log. Corrupt lines are skipped and appended to ``errors`` if given."""
    records: dict[str, DeviceRecord] = {}
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        return records
    for lineno, line in enumerate(data.split(b"\n"), 1):
        if not line.strip():
            continue
        try:
            outer = json.loads(line)
            body = outer["record"]
            if not ct_equal(bytes.fromhex(outer["mac"]), mac(storage_key, _canonical(body))):
                raise ValueError("integrity MAC mismatch")
            rec = _record_from_json(body, storage_key)
        except Exception as exc:  # any parse or auth failure makes the line corrupt
            err = CorruptLine(lineno, f"{type(exc).__name__}: {exc}")
            log.warning("registry %s: %s", path, err)
            if errors is not None:
                errors.append(err)
            continue
        records[rec.device_id] = rec
    return records


class Registry:
    """Thread-safe registry. All writes go through one lock, then to the log."""

    def __init__(self, path: Optional[str | os.PathLike] = None, storage_key: Optional[bytes] = None,
                 clock=time.time):
        if path is not None and storage_key is None:
            raise ValueError("a persistent registry needs a storage key")
        self.path = path
        self.storage_key = storage_key
        self.clock = clock
        self._lock = threading.Lock()
        self._records: dict[str, DeviceRecord] = {}
        self.corrupt: list[CorruptLine] = []
        if path is not None:
            self._records = registry_load(path, storage_key, self.corrupt)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, device_id: str) -> bool:
        return device_id in self._records

    def get(self, device_id: str) -> DeviceRecord:
        try:
            return self._records[device_id]
        except KeyError:
            raise UnknownDevice(device_id) from None

    def snapshot(self) -> dict[str, DeviceRecord]:
        with self._lock:
            return dict(self._records)

    def _put(self, rec: DeviceRecord) -> None:
        if self.path is not None:
            registry_append(self.path, rec, self.storage_key)
        self._records[rec.device_id] = rec

    def provision(self, device_id: str, kind: Kind, otk: bytes) -> DeviceRecord:
        """Store a fresh Provisioned record holding the one-time key."""
        with self._lock:
            old = self._records.get(device_id)
            if old is not None and old.status is RecordStatus.REVOKED:
                raise DeviceRevoked(device_id)
            rec = DeviceRecord(device_id, kind, otk)
            self._put(rec)
            return rec

    def put_active(self, device_id: str, kind: Kind, k_long_term: bytes) -> DeviceRecord:
        """Install an already-registered principal directly (test fixtures, harness)."""
        with self._lock:
            rec = DeviceRecord(device_id, kind, k_long_term, True, RecordStatus.ACTIVE, int(self.clock()))
            self._put(rec)
            return rec

    def consume_otk(self, device_id: str, otk: bytes, k_long_term: bytes) -> DeviceRecord:
        """Atomically swap the OTK for the long-term key; exactly one caller wins."""
        with self._lock:
            rec = self.get(device_id)
            if rec.status is RecordStatus.REVOKED:
                raise DeviceRevoked(device_id)
            if rec.otk_consumed or not ct_equal(rec.k_long_term, otk):
                raise OtkConsumed(device_id)
            rec = replace(rec, k_long_term=k_long_term, otk_consumed=True,
                          status=RecordStatus.ACTIVE, registered_at=int(self.clock()))
            self._put(rec)
            return rec

    def revoke(self, device_id: str) -> DeviceRecord:
        with self._lock:
            rec = replace(self.get(device_id), status=RecordStatus.REVOKED)
            self._put(rec)
            return rec
