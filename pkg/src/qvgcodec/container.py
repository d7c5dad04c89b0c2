"""Bit-exact streaming container ("QVGC") for compressed chunks.

Layout (all integers little-endian):

    header, 32 bytes:
        0   magic          4s   b"QVGC"
        4   version        u16  1
        6   bits           u8
        7   group_size     u16
        9   stages         u8
        10  centroids      u16
        12  head_dim       u32
        16  method_tag     u8   0=RTN 1=KIVI 2=QUAROT 3=QVG
        17  seed           u64
        25  reserved       7 bytes, zero

    record, one per chunk:
        0   chunk_index    u32
        4   n_tokens       u32
        8   payload_len    u32
        12  scales_len     u32
        16  body_len       u32
        20  body: payload | scales | per stage (centroids as bf16 u16
            values, K*d*2 bytes, then n_tokens assignment bytes)
        +   crc32          u32  IEEE CRC-32 over the body

Records are append-only; a record becomes visible to readers only once
fully flushed.  A truncated or corrupt record is isolated: its index
reports corrupt while neighbours stay readable (record headers carry the
body length, so the scan can always skip ahead).

KIVI-tagged planes store the token-axis-grouped payload of the
*transposed* plane (the key path of the key/value pair); their byte
lengths match the channel-axis formulas exactly, so the container
requires the token count of a KIVI plane to be a multiple of the group
size (no padding is stored).
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import baselines
from .errors import (
    BadMagic,
    ConfigMismatch,
    CorruptChunk,
    OutOfRange,
    Truncated,
)
from .lowprec import bf16_pack, bf16_unpack
from .prq import prq_decompress_onepass
from .types import ChunkSpec, CompressedChunk, KVPlane, QuantConfig, StageMeta

MAGIC = b"QVGC"
VERSION = 1
HEADER_SIZE = 32
RECORD_HEADER_SIZE = 20
CRC_SIZE = 4

_HEADER_FMT = "<4sHBHBHIBQ7x"
_RECORD_FMT = "<IIIII"


class MethodTag(IntEnum):
    RTN = 0
    KIVI = 1
    QUAROT = 2
    QVG = 3


@dataclass(frozen=True)
class QvgcHeader:
    bits: int
    group_size: int
    stages: int
    centroids: int
    head_dim: int
    method_tag: int = MethodTag.QVG
    seed: int = 0
    version: int = VERSION

    def to_bytes(self) -> bytes:
        return struct.pack(
            _HEADER_FMT,
            MAGIC,
            self.version,
            self.bits,
            self.group_size,
            self.stages,
            self.centroids,
            self.head_dim,
            int(self.method_tag),
            self.seed,
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "QvgcHeader":
        if len(raw) < HEADER_SIZE:
            raise Truncated("file shorter than the header")
        magic, version, bits, group, stages, cents, head_dim, tag, seed = struct.unpack(
            _HEADER_FMT, raw[:HEADER_SIZE]
        )
        if magic != MAGIC:
            raise BadMagic(f"bad magic {magic!r}")
        if version != VERSION:
            raise BadMagic(f"unsupported version {version}")
        if any(raw[25:HEADER_SIZE]):
            raise BadMagic("reserved header bytes must be zero")
        return cls(
            bits=bits,
            group_size=group,
            stages=stages,
            centroids=cents,
            head_dim=head_dim,
            method_tag=tag,
            seed=seed,
            version=version,
        )

    def config(self) -> QuantConfig:
        return QuantConfig(
            bits=self.bits,
            group_size=self.group_size,
            stages=self.stages,
            centroids=self.centroids,
            seed=self.seed,
        )

    @classmethod
    def for_config(
        cls, config: QuantConfig, head_dim: int, method_tag: int = MethodTag.QVG
    ) -> "QvgcHeader":
        return cls(
            bits=config.bits,
            group_size=config.group_size,
            stages=config.stages,
            centroids=config.centroids,
            head_dim=head_dim,
            method_tag=method_tag,
            seed=config.seed,
        )


def _expected_lengths(header: QvgcHeader, n_tokens: int) -> tuple[int, int, int]:
    payload_len = (n_tokens * header.head_dim * header.bits + 7) // 8
    scales_len = n_tokens * header.head_dim // header.group_size
    stage_len = header.stages * (header.centroids * header.head_dim * 2 + n_tokens)
    return payload_len, scales_len, stage_len


class ChunkWriter:
    """Append-only record writer over a binary stream or path."""

    def __init__(self, sink, header: QvgcHeader):
        if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
            self._file = open(sink, "wb")
            self._owns = True
        else:
            self._file = sink
            self._owns = False
        self.header = header
        self.count = 0
        self._file.write(header.to_bytes())

    def append_chunk(self, chunk: CompressedChunk) -> int:
        h = self.header
        cfg = chunk.config
        if (
            cfg.bits != h.bits
            or cfg.group_size != h.group_size
            or cfg.stages != h.stages
            or cfg.centroids != h.centroids
            or chunk.spec.head_dim != h.head_dim
            or cfg.seed != h.seed
        ):
            raise ConfigMismatch("chunk config disagrees with container header")

        body = io.BytesIO()
        body.write(chunk.payload)
        body.write(chunk.scales)
        for meta in chunk.stages:
            body.write(bf16_pack(meta.centroids).tobytes())
            body.write(meta.assignments.tobytes())
        raw = body.getvalue()

        index = self.count
        rec = struct.pack(
            _RECORD_FMT,
            index,
            chunk.spec.n_tokens,
            len(chunk.payload),
            len(chunk.scales),
            len(raw),
        )
        self._file.write(rec)
        self._file.write(raw)
        self._file.write(struct.pack("<I", zlib.crc32(raw)))
        self._file.flush()
        self.count += 1
        return index

    def close(self) -> None:
        if self._owns:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class _RecordEntry:
    offset: int  # file offset of the record header
    n_tokens: int
    payload_len: int
    scales_len: int
    body_len: int
    ok: bool  # structural validation at scan time


class ChunkReader:
    """Random-access reader; scans record offsets once at open."""

    def __init__(self, source):
        if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
            self._file = open(source, "rb")
            self._owns = True
        else:
            self._file = source
            self._owns = False
        self._file.seek(0, io.SEEK_END)
        self._size = self._file.tell()
        self._file.seek(0)
        self.header = QvgcHeader.from_bytes(self._file.read(HEADER_SIZE))
        self._entries: list[_RecordEntry] = []
        self._scan()

    def _scan(self) -> None:
        pos = HEADER_SIZE
        index = 0
        while pos < self._size:
            if self._size - pos < RECORD_HEADER_SIZE:
                # Partial trailing record header: visible but unreadable.
                self._entries.append(_RecordEntry(pos, 0, 0, 0, 0, ok=False))
                break
            self._file.seek(pos)
            rec = struct.unpack(_RECORD_FMT, self._file.read(RECORD_HEADER_SIZE))
            chunk_index, n_tokens, payload_len, scales_len, body_len = rec
            want = _expected_lengths(self.header, n_tokens)
            structurally_ok = (
                chunk_index == index
                and n_tokens >= 1
                and (payload_len, scales_len) == want[:2]
                and body_len == want[0] + want[1] + want[2]
                and pos + RECORD_HEADER_SIZE + body_len + CRC_SIZE <= self._size
            )
            self._entries.append(
                _RecordEntry(
                    pos, n_tokens, payload_len, scales_len, body_len, structurally_ok
                )
            )
            if not structurally_ok:
                # Skip by the declared length when plausible, else stop.
                nxt = pos + RECORD_HEADER_SIZE + body_len + CRC_SIZE
                if body_len == 0 or nxt > self._size:
                    break
                pos = nxt
            else:
                pos += RECORD_HEADER_SIZE + body_len + CRC_SIZE
            index += 1

    @property
    def count(self) -> int:
        return len(self._entries)

    def read_chunk(self, chunk_index: int) -> CompressedChunk:
        if not 0 <= chunk_index < len(self._entries):
            raise OutOfRange(
                f"chunk {chunk_index} out of range [0, {len(self._entries)})"
            )
        entry = self._entries[chunk_index]
        if not entry.ok:
            raise CorruptChunk(f"chunk {chunk_index} failed structural checks")
        h = self.header
        self._file.seek(entry.offset + RECORD_HEADER_SIZE)
        body = self._file.read(entry.body_len)
        (crc,) = struct.unpack("<I", self._file.read(CRC_SIZE))
        if zlib.crc32(body) != crc:
            raise CorruptChunk(f"chunk {chunk_index} failed CRC")

        pos = 0
        payload = body[pos : pos + entry.payload_len]
        pos += entry.payload_len
        scales = body[pos : pos + entry.scales_len]
        pos += entry.scales_len
        metas = []
        cent_bytes = h.centroids * h.head_dim * 2
        for _ in range(h.stages):
            cent_u16 = np.frombuffer(
                body, dtype="<u2", count=h.centroids * h.head_dim, offset=pos
            )
            pos += cent_bytes
            assigns = np.frombuffer(body, dtype=np.uint8, count=entry.n_tokens, offset=pos)
            pos += entry.n_tokens
            metas.append(
                StageMeta(
                    centroids=bf16_unpack(cent_u16).reshape(h.centroids, h.head_dim),
                    assignments=assigns,
                )
            )

        spec = ChunkSpec(
            n_tokens=entry.n_tokens, head_dim=h.head_dim, chunk_index=chunk_index
        )
        try:
            return CompressedChunk(
                spec=spec,
                config=self.header.config(),
                payload=payload,
                scales=scales,
                stages=tuple(metas),
            )
        except Exception as exc:  # structural invariant failed post-CRC
            raise CorruptChunk(f"chunk {chunk_index}: {exc}") from exc

    def close(self) -> None:
        if self._owns:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _decode_chunk(reader: ChunkReader, chunk: CompressedChunk) -> KVPlane:
    tag = reader.header.method_tag
    n, d = chunk.spec.n_tokens, chunk.spec.head_dim
    cfg = chunk.config
    if tag == MethodTag.QVG:
        return prq_decompress_onepass(chunk)
    if tag == MethodTag.RTN:
        data = baselines.rtn_decompress(
            chunk.payload, chunk.scales, n, d, cfg.bits, cfg.group_size
        )
    elif tag == MethodTag.KIVI:
        data = baselines.token_axis_decompress(
            chunk.payload, chunk.scales, n, d, cfg.bits, cfg.group_size
        )
    elif tag == MethodTag.QUAROT:
        data = baselines.quarot_decompress(
            baselines.QuarotCompressed(
                payload=chunk.payload,
                scales=chunk.scales,
                n_tokens=n,
                head_dim=d,
                bits=cfg.bits,
                group_size=cfg.group_size,
                seed=reader.header.seed,
            )
        )
    else:
        raise CorruptChunk(f"unknown method tag {tag}")
    return KVPlane(spec=chunk.spec, data=data)


def dequantize_range(
    reader: ChunkReader, first_chunk: int, last_chunk: int
) -> list[KVPlane]:
    """Decompress chunks ``first_chunk..last_chunk`` inclusive; an empty
    range (last < first) yields an empty list."""
    if last_chunk < first_chunk:
        return []
    return [
        _decode_chunk(reader, reader.read_chunk(i))
        for i in range(first_chunk, last_chunk + 1)
    ]
