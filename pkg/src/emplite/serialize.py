"""Single-file binary model bundles (EMPL format).

Layout, little-endian throughout:

    magic   "EMPL" (4 bytes)
    header  version u16 = 1, flags u16
    table   section count u16, then per section:
            name length u8, name bytes, offset u64, length u64
    ...section payloads...
    trailer CRC32 (u32) of every preceding byte

Sections:
    CONFIG   UTF-8 ``key=value`` lines
    VOCAB    three length-prefixed symbol lists (word, char, pos), each as
             count u32 then per symbol length u16 + UTF-8 bytes, in id order
    WEIGHTS  tensor count u32, then per tensor: name length u8 + name,
             rank u8, dims u32 x rank, float32 payload

The byte size of this file is the model-footprint number the package
reports.
"""

import struct
import zlib

import numpy as np

from .errors import BundleError

MAGIC = b"EMPL"
VERSION = 1


def _encode_config(config_items):
    lines = []
    for key, value in config_items:
        lines.append(f"{key}={value}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _decode_config(payload):
    items = {}
    for raw in payload.decode("utf-8").splitlines():
        if not raw.strip():
            continue
        if "=" not in raw:
            raise BundleError("CONFIG", f"malformed line {raw!r}")
        key, value = raw.split("=", 1)
        items[key] = value
    return items


def _encode_symbols(symbol_lists):
    out = bytearray()
    for symbols in symbol_lists:
        out += struct.pack("<I", len(symbols))
        for sym in symbols:
            raw = sym.encode("utf-8")
            out += struct.pack("<H", len(raw))
            out += raw
    return bytes(out)


def _decode_symbols(payload, n_lists=3):
    lists = []
    pos = 0
    for _ in range(n_lists):
        if pos + 4 > len(payload):
            raise BundleError("VOCAB", "truncated symbol list header")
        (count,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        symbols = []
        for _ in range(count):
            if pos + 2 > len(payload):
                raise BundleError("VOCAB", "truncated symbol length")
            (n,) = struct.unpack_from("<H", payload, pos)
            pos += 2
            if pos + n > len(payload):
                raise BundleError("VOCAB", "truncated symbol bytes")
            symbols.append(payload[pos : pos + n].decode("utf-8"))
            pos += n
        lists.append(symbols)
    if pos != len(payload):
        raise BundleError("VOCAB", "trailing bytes after symbol lists")
    return lists


def _encode_weights(named_arrays):
    out = bytearray()
    out += struct.pack("<I", len(named_arrays))
    for name, arr in named_arrays:
        raw = name.encode("utf-8")
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        out += struct.pack("<B", len(raw))
        out += raw
        out += struct.pack("<B", arr32.ndim)
        out += struct.pack(f"<{arr32.ndim}I", *arr32.shape)
        out += arr32.tobytes()
    return bytes(out)


def _decode_weights(payload):
    pos = 0
    if pos + 4 > len(payload):
        raise BundleError("WEIGHTS", "truncated tensor count")
    (count,) = struct.unpack_from("<I", payload, pos)
    pos += 4
    arrays = []
    for _ in range(count):
        if pos + 1 > len(payload):
            raise BundleError("WEIGHTS", "truncated tensor name length")
        (n,) = struct.unpack_from("<B", payload, pos)
        pos += 1
        if pos + n + 1 > len(payload):
            raise BundleError("WEIGHTS", "truncated tensor header")
        name = payload[pos : pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<B", payload, pos)
        pos += 1
        if pos + 4 * rank > len(payload):
            raise BundleError("WEIGHTS", f"truncated dims for {name!r}")
        dims = struct.unpack_from(f"<{rank}I", payload, pos)
        pos += 4 * rank
        n_bytes = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
        if pos + n_bytes > len(payload):
            raise BundleError("WEIGHTS", f"truncated payload for {name!r}")
        arr = np.frombuffer(payload[pos : pos + n_bytes], dtype="<f4").reshape(dims)
        pos += n_bytes
        arrays.append((name, arr.copy()))
    if pos != len(payload):
        raise BundleError("WEIGHTS", "trailing bytes after tensors")
    return arrays


def write_bundle(path, config_items, symbol_lists, named_arrays):
    """Assemble and write a bundle; returns the file size in bytes."""
    payloads = [
        ("CONFIG", _encode_config(config_items)),
        ("VOCAB", _encode_symbols(symbol_lists)),
        ("WEIGHTS", _encode_weights(named_arrays)),
    ]
    table_size = 2 + sum(1 + len(name) + 16 for name, _ in payloads)
    offset = len(MAGIC) + 4 + table_size
    table = bytearray(struct.pack("<H", len(payloads)))
    for name, payload in payloads:
        raw = name.encode("ascii")
        table += struct.pack("<B", len(raw))
        table += raw
        table += struct.pack("<QQ", offset, len(payload))
        offset += len(payload)
    body = MAGIC + struct.pack("<HH", VERSION, 0) + bytes(table)
    body += b"".join(payload for _, payload in payloads)
    body += struct.pack("<I", zlib.crc32(body))
    with open(path, "wb") as fh:
        fh.write(body)
    return len(body)


def read_bundle(path):
    """Read and verify a bundle; returns (config dict, symbol lists,
    named float32 arrays)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise BundleError("header", "not an EMPL bundle (bad magic)")
    version, _flags = struct.unpack_from("<HH", blob, 4)
    if version != VERSION:
        raise BundleError("header", f"unsupported version {version}")
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise BundleError("checksum", "CRC32 mismatch; the file is corrupt")
    pos = 8
    if pos + 2 > len(blob):
        raise BundleError("header", "truncated section table")
    (n_sections,) = struct.unpack_from("<H", blob, pos)
    pos += 2
    sections = {}
    for _ in range(n_sections):
        if pos + 1 > len(blob):
            raise BundleError("header", "truncated section table")
        (n,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        name = blob[pos : pos + n].decode("ascii")
        pos += n
        offset, length = struct.unpack_from("<QQ", blob, pos)
        pos += 16
        if offset + length > len(blob) - 4:
            raise BundleError(name, "section extends past end of file")
        sections[name] = blob[offset : offset + length]
    for required in ("CONFIG", "VOCAB", "WEIGHTS"):
        if required not in sections:
            raise BundleError(required, "section missing")
    config = _decode_config(sections["CONFIG"])
    symbols = _decode_symbols(sections["VOCAB"])
    arrays = _decode_weights(sections["WEIGHTS"])
    return config, symbols, arrays
