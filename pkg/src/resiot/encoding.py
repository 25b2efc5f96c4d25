"""Deterministic length-prefixed byte encodings.

Every part is written as a 4-byte big-endian length followed by the raw
bytes, so that concatenations are unambiguous and hash identically.
"""

import struct

from .errors import MalformedEncoding

_LEN = struct.Struct(">I")
SCALAR_BYTES = 32


def encode_parts(parts):
    out = bytearray()
    for p in parts:
        p = bytes(p)
        out += _LEN.pack(len(p))
        out += p
    return bytes(out)


def decode_parts(data, count=None):
    data = bytes(data)
    parts = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise MalformedEncoding("truncated length prefix")
        (n,) = _LEN.unpack_from(data, pos)
        pos += 4
        if pos + n > len(data):
            raise MalformedEncoding("truncated part")
        parts.append(data[pos:pos + n])
        pos += n
    if count is not None and len(parts) != count:
        raise MalformedEncoding(f"expected {count} parts, got {len(parts)}")
    return parts


def encode_int(value, width=SCALAR_BYTES):
    return int(value).to_bytes(width, "big")


def decode_int(data, width=SCALAR_BYTES):
    if len(data) != width:
        raise MalformedEncoding(f"integer field must be {width} bytes")
    return int.from_bytes(data, "big")


def encode_str(s):
    return s.encode("utf-8")


def decode_str(b):
    try:
        return bytes(b).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedEncoding("invalid utf-8 text") from exc
