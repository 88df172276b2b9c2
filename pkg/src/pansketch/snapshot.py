"""Versioned binary container for intrusion snapshots.

Layout (little endian)::

    magic "PANSKSNP" | u16 version | u8 len + kind | u32 len + JSON header
    | u64 len + payload | sha256 of everything before it

The trailing digest is an integrity check against truncation and bit flips,
not an authentication tag.
"""

from dataclasses import dataclass
import hashlib
import json
import struct

import numpy as np

from .errors import SnapshotError

MAGIC = b"PANSKSNP"
VERSION = 1


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj)).hexdigest()


@dataclass(frozen=True)
class IntrusionSnapshot:
    kind: str
    header: dict
    payload: bytes

    def to_bytes(self) -> bytes:
        kind = self.kind.encode("ascii")
        header = canonical_json(self.header)
        body = b"".join([
            MAGIC,
            struct.pack("<HB", VERSION, len(kind)), kind,
            struct.pack("<I", len(header)), header,
            struct.pack("<Q", len(self.payload)), self.payload,
        ])
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "IntrusionSnapshot":
        data = bytes(data)
        if len(data) < len(MAGIC) + 32 or not data.startswith(MAGIC):
            raise SnapshotError("not a snapshot (bad magic)")
        body, digest = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise SnapshotError("snapshot checksum mismatch")
        try:
            pos = len(MAGIC)
            version, klen = struct.unpack_from("<HB", body, pos)
            pos += 3
            if version != VERSION:
                raise SnapshotError(f"unsupported snapshot version {version}")
            kind = body[pos:pos + klen].decode("ascii")
            pos += klen
            (hlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            header = json.loads(body[pos:pos + hlen])
            pos += hlen
            (plen,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            payload = body[pos:pos + plen]
            if pos + plen != len(body):
                raise SnapshotError("trailing or missing payload bytes")
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SnapshotError(f"malformed snapshot: {exc}") from None
        return cls(kind, header, payload)

    @property
    def checksum(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def pack_ints(values) -> bytes:
    """Arbitrary-precision signed integers, each u32 length + two's complement."""
    parts = []
    for v in values:
        v = int(v)
        n = (v.bit_length() + 8) // 8
        parts.append(struct.pack("<I", n))
        parts.append(v.to_bytes(n, "little", signed=True))
    return b"".join(parts)


def unpack_ints(data: bytes, count: int) -> list:
    out, pos = [], 0
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + n > len(data):
                raise SnapshotError("truncated integer payload")
            out.append(int.from_bytes(data[pos:pos + n], "little", signed=True))
            pos += n
    except struct.error:
        raise SnapshotError("truncated integer payload") from None
    if pos != len(data):
        raise SnapshotError("unexpected bytes after integer payload")
    return out


def pack_array(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    dt = arr.dtype.str.encode("ascii")
    return struct.pack("<B", len(dt)) + dt + struct.pack("<Q", arr.size) + arr.tobytes()


def unpack_array(data: bytes, pos: int = 0):
    """Returns (array, next position)."""
    try:
        (dlen,) = struct.unpack_from("<B", data, pos)
        pos += 1
        dt = np.dtype(data[pos:pos + dlen].decode("ascii"))
        pos += dlen
        (size,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        nbytes = size * dt.itemsize
        if pos + nbytes > len(data):
            raise SnapshotError("truncated array payload")
        arr = np.frombuffer(data, dtype=dt, count=size, offset=pos).copy()
    except (struct.error, TypeError, UnicodeDecodeError) as exc:
        raise SnapshotError(f"malformed array payload: {exc}") from None
    return arr, pos + nbytes
