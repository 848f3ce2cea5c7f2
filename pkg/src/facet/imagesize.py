"""Read pixel dimensions from PNG and JPEG headers without decoding."""

from __future__ import annotations

import struct
from pathlib import Path

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
JPEG_MAGIC = b"\xff\xd8"

# baseline, extended sequential, progressive
_SOF_MARKERS = {0xC0, 0xC1, 0xC2}
# markers without a length field
_STANDALONE = {0x01, *range(0xD0, 0xD8)}


class ImageFormatError(ValueError):
    pass


class TruncatedHeader(ImageFormatError):
    pass


def sniff_dimensions(data: bytes) -> tuple[int, int]:
    """Return ``(width, height)`` from the leading bytes of a PNG or JPEG."""
    if data.startswith(PNG_MAGIC):
        return _png_size(data)
    if data.startswith(JPEG_MAGIC):
        return _jpeg_size(data)
    raise ImageFormatError("unknown image format")


def _png_size(data: bytes) -> tuple[int, int]:
    if len(data) < 24:
        raise TruncatedHeader("PNG header truncated before IHDR")
    if data[12:16] != b"IHDR":
        raise ImageFormatError("PNG does not start with an IHDR chunk")
    width, height = struct.unpack(">II", data[16:24])
    if width == 0 or height == 0:
        raise ImageFormatError("PNG declares a zero dimension")
    return width, height


def _jpeg_size(data: bytes) -> tuple[int, int]:
    pos = 2
    n = len(data)
    while True:
        # skip fill bytes before the marker code
        while pos < n and data[pos] == 0xFF:
            pos += 1
        if pos >= n:
            raise TruncatedHeader("JPEG ended before a SOF marker")
        marker = data[pos]
        pos += 1
        if marker in _STANDALONE:
            continue
        if marker == 0xD9 or marker == 0xDA:
            raise ImageFormatError("JPEG has no SOF marker before scan data")
        if pos + 2 > n:
            raise TruncatedHeader("JPEG segment length truncated")
        (length,) = struct.unpack(">H", data[pos:pos + 2])
        if length < 2:
            raise ImageFormatError("JPEG segment with invalid length")
        if marker in _SOF_MARKERS:
            if pos + 7 > n:
                raise TruncatedHeader("JPEG SOF segment truncated")
            height, width = struct.unpack(">HH", data[pos + 3:pos + 7])
            if width == 0 or height == 0:
                raise ImageFormatError("JPEG declares a zero dimension")
            return width, height
        pos += length


def sniff_file(path: str | Path, chunk: int = 65536) -> tuple[int, int]:
    """Sniff a file, reading more than ``chunk`` bytes only if needed."""
    with open(path, "rb") as f:
        head = f.read(chunk)
        try:
            return sniff_dimensions(head)
        except TruncatedHeader:
            if len(head) < chunk:
                raise
            return sniff_dimensions(head + f.read())
