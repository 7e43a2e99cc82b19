"""Append-only on-disk ledger: the storage engine under every broker topic.

On-disk layout, one directory per topic:

    <dir>/<base_offset:020d>.seg   frames, append-only
    <dir>/<base_offset:020d>.idx   sparse index sidecar (sealed segments)
    <dir>/segments.json            per-segment metadata for sealed segments

Frame format (little-endian, bit-exact contract for external readers):

    [u32 payload_length][u64 ts_ms][payload bytes][u32 crc]

where ``crc`` is CRC32 over the 12 header bytes plus the payload.  A frame
is valid only if it is complete and its CRC matches; recovery truncates the
ledger at the first invalid frame, so torn writes can never surface as
records.

The sparse index stores the byte position of every ``INDEX_EVERY``-th frame
as consecutive u64 values; position ``i`` corresponds to offset
``base_offset + i * INDEX_EVERY``.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

HEADER = struct.Struct("<IQ")
CRC = struct.Struct("<I")
FRAME_OVERHEAD = HEADER.size + CRC.size

DEFAULT_SEGMENT_BYTES = 64 * 1024 * 1024
INDEX_EVERY = 1024
MAX_PAYLOAD_BYTES = 16 * 1024 * 1024


class StorageError(IOError):
    """Underlying file IO failed."""


class ChecksumMismatch(StorageError):
    """A frame failed CRC validation at read time."""


def encode_frame(ts_ms: int, payload: bytes) -> bytes:
    header = HEADER.pack(len(payload), ts_ms)
    return header + payload + CRC.pack(zlib.crc32(header + payload))


@dataclass
class _Segment:
    base_offset: int
    path: Path
    count: int = 0
    size_bytes: int = 0
    min_ts: int | None = None
    max_ts: int | None = None
    sealed: bool = False
    # byte positions of offsets base, base+N, base+2N, ...
    index: list[int] = field(default_factory=list)

    def meta(self) -> dict:
        return {
            "base_offset": self.base_offset,
            "count": self.count,
            "size_bytes": self.size_bytes,
            "min_ts": self.min_ts,
            "max_ts": self.max_ts,
        }


def _scan_segment(path: Path, want_index: bool = True):
    """Walk a segment validating frames; stops cleanly at the first bad one.

    Returns (count, size of the valid prefix in bytes, min_ts, max_ts,
    sparse index positions).  Anything after the valid prefix is a torn or
    corrupt tail.
    """
    count = 0
    pos = 0
    min_ts: int | None = None
    max_ts: int | None = None
    index: list[int] = []
    data = path.read_bytes()
    total = len(data)
    while True:
        if pos + HEADER.size > total:
            break
        length, ts = HEADER.unpack_from(data, pos)
        if length > MAX_PAYLOAD_BYTES:
            break
        end = pos + HEADER.size + length + CRC.size
        if end > total:
            break
        (stored_crc,) = CRC.unpack_from(data, end - CRC.size)
        if zlib.crc32(data[pos : pos + HEADER.size + length]) != stored_crc:
            break
        if want_index and count % INDEX_EVERY == 0:
            index.append(pos)
        min_ts = ts if min_ts is None else min(min_ts, ts)
        max_ts = ts if max_ts is None else max(max_ts, ts)
        count += 1
        pos = end
    return count, pos, min_ts, max_ts, index


class TopicLedger:
    """Single-writer, many-reader ledger for one topic.

    The caller (broker) is responsible for serializing append() calls; reads
    use independent file handles and may run concurrently with the writer.
    """

    def __init__(self, directory: str | Path, segment_bytes: int = DEFAULT_SEGMENT_BYTES,
                 fsync_each: bool = True):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.segment_bytes = segment_bytes
        self.fsync_each = fsync_each
        self._segments: list[_Segment] = []
        self._writer = None
        self._recover()

    # -- recovery ---------------------------------------------------------

    def _seg_path(self, base_offset: int) -> Path:
        return self.dir / f"{base_offset:020d}.seg"

    def _recover(self) -> None:
        metas = {}
        meta_file = self.dir / "segments.json"
        if meta_file.exists():
            try:
                metas = {m["base_offset"]: m for m in json.loads(meta_file.read_text())}
            except (ValueError, KeyError):
                metas = {}
        paths = sorted(self.dir.glob("*.seg"))
        for i, path in enumerate(paths):
            base = int(path.stem)
            last = i == len(paths) - 1
            meta = metas.get(base)
            if not last and meta and meta["size_bytes"] == path.stat().st_size:
                seg = _Segment(base, path, meta["count"], meta["size_bytes"],
                               meta["min_ts"], meta["max_ts"], sealed=True)
                seg.index = self._load_index(base)
            else:
                # active segment, or sealed metadata is stale: rescan
                count, size, mn, mx, index = _scan_segment(path)
                if size < path.stat().st_size:
                    # torn tail from a crash; drop it before appending again
                    with open(path, "r+b") as f:
                        f.truncate(size)
                seg = _Segment(base, path, count, size, mn, mx, sealed=not last)
                seg.index = index
                if seg.sealed:
                    self._write_index(seg)
            self._segments.append(seg)
        if not self._segments:
            seg = _Segment(0, self._seg_path(0))
            seg.path.touch()
            seg.index = [0]
            self._segments.append(seg)
        if len(self._segments) > 1:
            self._write_meta()
        self._open_writer()

    def _load_index(self, base_offset: int) -> list[int]:
        idx_path = self.dir / f"{base_offset:020d}.idx"
        if not idx_path.exists():
            count, _, _, _, index = _scan_segment(self._seg_path(base_offset))
            return index
        raw = idx_path.read_bytes()
        return list(struct.unpack(f"<{len(raw) // 8}Q", raw))

    def _write_index(self, seg: _Segment) -> None:
        idx_path = self.dir / f"{seg.base_offset:020d}.idx"
        idx_path.write_bytes(struct.pack(f"<{len(seg.index)}Q", *seg.index))

    def _write_meta(self) -> None:
        sealed = [s.meta() for s in self._segments if s.sealed]
        tmp = self.dir / "segments.json.tmp"
        tmp.write_text(json.dumps(sealed))
        tmp.replace(self.dir / "segments.json")

    def _open_writer(self) -> None:
        if self._writer is not None:
            self._writer.close()
        self._writer = open(self._segments[-1].path, "ab")

    # -- writing ----------------------------------------------------------

    @property
    def length(self) -> int:
        last = self._segments[-1]
        return last.base_offset + last.count

    def append(self, ts_ms: int, payload: bytes) -> int:
        """Durably append one record; returns its offset."""
        seg = self._segments[-1]
        if seg.size_bytes >= self.segment_bytes:
            seg = self._roll()
        frame = encode_frame(ts_ms, payload)
        try:
            if seg.count % INDEX_EVERY == 0 and len(seg.index) == seg.count // INDEX_EVERY:
                seg.index.append(seg.size_bytes)
            self._writer.write(frame)
            self._writer.flush()
            if self.fsync_each:
                os.fsync(self._writer.fileno())
        except OSError as e:
            raise StorageError(f"append to {seg.path} failed: {e}") from e
        offset = seg.base_offset + seg.count
        seg.count += 1
        seg.size_bytes += len(frame)
        seg.min_ts = ts_ms if seg.min_ts is None else min(seg.min_ts, ts_ms)
        seg.max_ts = ts_ms if seg.max_ts is None else max(seg.max_ts, ts_ms)
        return offset

    def _roll(self) -> _Segment:
        old = self._segments[-1]
        old.sealed = True
        self._write_index(old)
        seg = _Segment(self.length, self._seg_path(self.length))
        seg.path.touch()
        self._segments.append(seg)
        self._write_meta()
        self._open_writer()
        return seg

    def sync(self) -> None:
        self._writer.flush()
        os.fsync(self._writer.fileno())

    def close(self) -> None:
        if self._writer is not None:
            self._writer.flush()
            self._writer.close()
            self._writer = None

    # -- reading ----------------------------------------------------------

    def _segment_for(self, offset: int) -> _Segment:
        lo, hi = 0, len(self._segments) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._segments[mid].base_offset <= offset:
                lo = mid
            else:
                hi = mid - 1
        return self._segments[lo]

    def read(self, offset: int, max_records: int) -> list[tuple[int, int, bytes]]:
        """Up to ``max_records`` records from ``offset`` in offset order.

        Returns (offset, ts_ms, payload) tuples.  Raises ChecksumMismatch
        only when corruption blocks reading anything at all; a partial batch
        before a bad frame is returned as-is.
        """
        out: list[tuple[int, int, bytes]] = []
        limit = self.length
        while offset < limit and len(out) < max_records:
            seg = self._segment_for(offset)
            seg_end = seg.base_offset + seg.count
            want = min(max_records - len(out), seg_end - offset)
            got = self._read_segment(seg, offset, want, out)
            if got < want:
                # corruption mid-segment: stop at the last valid record
                if not out:
                    raise ChecksumMismatch(f"corrupt frame at offset {offset + got} in {seg.path}")
                break
            offset += got
        return out

    def _read_segment(self, seg: _Segment, offset: int, want: int,
                      out: list[tuple[int, int, bytes]]) -> int:
        rel = offset - seg.base_offset
        anchor = min(rel // INDEX_EVERY, len(seg.index) - 1)
        pos = seg.index[anchor]
        skip = rel - anchor * INDEX_EVERY
        got = 0
        with open(seg.path, "rb") as f:
            f.seek(pos)
            cur = offset - skip
            while got < want:
                head = f.read(HEADER.size)
                if len(head) < HEADER.size:
                    break
                length, ts = HEADER.unpack(head)
                if length > MAX_PAYLOAD_BYTES:
                    break
                body = f.read(length + CRC.size)
                if len(body) < length + CRC.size:
                    break
                payload = body[:length]
                (stored_crc,) = CRC.unpack_from(body, length)
                if zlib.crc32(head + payload) != stored_crc:
                    break
                if cur >= offset:
                    out.append((cur, ts, payload))
                    got += 1
                cur += 1
        return got

    def count_in_range(self, t0_ms: int, t1_ms: int) -> int:
        """Records with ``t0_ms <= ts < t1_ms`` by event time.

        Sealed segments whose [min, max] lies entirely inside or outside the
        range are counted or skipped without touching the file.
        """
        total = 0
        for seg in self._segments:
            if seg.count == 0:
                continue
            if seg.min_ts >= t1_ms or seg.max_ts < t0_ms:
                continue
            if seg.sealed and t0_ms <= seg.min_ts and seg.max_ts < t1_ms:
                total += seg.count
                continue
            buf: list[tuple[int, int, bytes]] = []
            self._read_segment(seg, seg.base_offset, seg.count, buf)
            total += sum(1 for _, ts, _ in buf if t0_ms <= ts < t1_ms)
        return total

    def ts_bounds(self) -> tuple[int, int] | None:
        """(min, max) event timestamp over the whole ledger, or None if empty."""
        mins = [s.min_ts for s in self._segments if s.count > 0]
        maxs = [s.max_ts for s in self._segments if s.count > 0]
        if not mins:
            return None
        return min(mins), max(maxs)
