"""Overlay rendering: ground truth in green, predictions in red or per-instance
colors, with captions drawn in a built-in 5x7 bitmap font.

Images are ``(height, width, 3)`` uint8 arrays.  PPM (P6) is the canonical,
bit-exact output; PNG is written with zlib from the standard library.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from facet.annotations import Region
from facet.evaluation import Detection, detection_raster
from facet.geometry import Polygon, Raster, rasterize_crop

GREEN = (0, 255, 0)
RED = (255, 0, 0)
CAPTION_FG = (255, 255, 255)
CAPTION_BG = (0, 0, 0)

Mode = Literal["gt_only", "pred_only", "overlap"]
Caption = Literal["none", "class", "score", "score_iou"]

# 5x7 glyphs, one int per row, bit 4 is the leftmost column
_GLYPHS: dict[str, tuple[int, ...]] = {
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
    ".": (0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C),
    "/": (0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00),
    "-": (0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00),
    "_": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F),
    ":": (0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00),
    "%": (0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03),
    " ": (0x00,) * 7,
    "?": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04),
    "A": (0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "B": (0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "G": (0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "J": (0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "N": (0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "P": (0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10),
    "Q": (0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "W": (0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A),
    "X": (0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11),
    "Y": (0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04),
    "Z": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F),
}
GLYPH_W, GLYPH_H = 5, 7


def glyph(ch: str) -> np.ndarray:
    rows = _GLYPHS.get(ch.upper(), _GLYPHS["?"])
    return np.array([[(r >> (4 - c)) & 1 for c in range(GLYPH_W)] for r in rows], dtype=bool)


def text_bitmap(text: str) -> np.ndarray:
    """Glyphs side by side with one blank column between characters."""
    if not text:
        return np.zeros((GLYPH_H, 0), dtype=bool)
    out = np.zeros((GLYPH_H, len(text) * (GLYPH_W + 1) - 1), dtype=bool)
    for i, ch in enumerate(text):
        x = i * (GLYPH_W + 1)
        out[:, x:x + GLYPH_W] = glyph(ch)
    return out


def caption_strip(text: str) -> np.ndarray:
    """RGB strip for a caption: white glyphs on black with a 1 px border."""
    bits = text_bitmap(text)
    h, w = bits.shape
    strip = np.empty((h + 2, w + 2, 3), dtype=np.uint8)
    strip[:] = CAPTION_BG
    strip[1:-1, 1:-1][bits] = CAPTION_FG
    return strip


@dataclass(frozen=True)
class OverlaySpec:
    mode: Mode = "overlap"
    caption: Caption = "score_iou"
    fill_alpha: float = 0.4
    outline_width: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.fill_alpha <= 1.0:
            raise ValueError("fill_alpha must be in [0, 1]")
        if self.outline_width < 0:
            raise ValueError("outline_width must be >= 0")
        if self.mode not in ("gt_only", "pred_only", "overlap"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.caption not in ("none", "class", "score", "score_iou"):
            raise ValueError(f"unknown caption {self.caption!r}")


def instance_color(filename: str, index: int) -> tuple[int, int, int]:
    """Stable pseudo-random color, kept away from near-black."""
    h = hashlib.blake2b(f"{filename}:{index}".encode(), digest_size=3).digest()
    return tuple(64 + (b * 192) // 256 for b in h)  # type: ignore[return-value]


def _outline(bits: np.ndarray, width: int) -> np.ndarray:
    inner = bits.copy()
    for _ in range(width):
        p = np.pad(inner, 1)
        inner = inner & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return bits & ~inner


def _paint(img: np.ndarray, r: Raster, color: tuple[int, int, int], spec: OverlaySpec) -> None:
    if r.count == 0:
        return
    region = img[r.y0:r.y1, r.x0:r.x1]
    c = np.array(color, dtype=float)
    if spec.fill_alpha > 0:
        px = region[r.bits].astype(float)
        region[r.bits] = np.floor((1.0 - spec.fill_alpha) * px + spec.fill_alpha * c + 0.5).astype(np.uint8)
    if spec.outline_width:
        region[_outline(r.bits, spec.outline_width)] = color


def _draw_caption(img: np.ndarray, text: str, x: int, y: int) -> None:
    strip = caption_strip(text)
    h, w = img.shape[:2]
    sh, sw = strip.shape[:2]
    x = min(max(x, 0), max(w - sw, 0))
    y = min(max(y, 0), max(h - sh, 0))
    img[y:y + sh, x:x + sw] = strip[: h - y, : w - x]


def caption_text(spec: OverlaySpec, label: str, score: float | None, iou: float | None) -> str | None:
    if spec.caption == "none":
        return None
    if spec.caption == "class" or score is None:
        return label
    if spec.caption == "score":
        return f"{score:.2f}"
    return f"{score:.2f}/" + ("-" if iou is None else f"{iou:.2f}")


def render_overlay(
    image: np.ndarray,
    gts: Sequence[Region | Polygon],
    preds: Sequence[Detection],
    matches: Sequence[float | None] | None = None,
    spec: OverlaySpec = OverlaySpec(),
    filename: str = "",
    canvas: tuple[int, int] | None = None,
) -> np.ndarray:
    """Draw instances over a copy of ``image``.

    ``matches`` gives each prediction's IoU for ``score_iou`` captions
    (None for unmatched).  Captions go at the top-left of each instance's
    box, shifted inward if they would leave the image.
    """
    img = np.array(image, dtype=np.uint8, copy=True)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("image must be (height, width, 3)")
    h, w = img.shape[:2]
    if canvas is not None and tuple(canvas) != (w, h):
        raise ValueError(f"image is {w}x{h} but annotations are for {canvas[0]}x{canvas[1]}")
    if matches is not None and len(matches) != len(preds):
        raise ValueError("matches must align with predictions")

    captions: list[tuple[str, int, int]] = []
    if spec.mode in ("gt_only", "overlap"):
        for g in gts:
            poly = g.polygon if isinstance(g, Region) else g
            r = rasterize_crop(poly, w, h)
            _paint(img, r, GREEN, spec)
            if spec.mode == "gt_only" and spec.caption != "none":
                label = g.label if isinstance(g, Region) else "window"
                captions.append((label, int(min(poly.xs)), int(min(poly.ys))))
    if spec.mode in ("pred_only", "overlap"):
        for i, d in enumerate(preds):
            r = detection_raster(d, w, h)
            color = RED if spec.mode == "overlap" else instance_color(filename, i)
            _paint(img, r, color, spec)
            text = caption_text(spec, d.label, d.score, None if matches is None else matches[i])
            box = r.bbox()
            if text is not None and box is not None:
                captions.append((text, int(box.x1), int(box.y1)))
    for text, x, y in captions:
        _draw_caption(img, text, x, y)
    return img


# --------------------------------------------------------------------------
# image files


def encode_ppm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("pixels must be (height, width, 3)")
    h, w = pixels.shape[:2]
    if h == 0 or w == 0:
        raise ValueError("cannot encode an empty image")
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def encode_png(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("pixels must be (height, width, 3)")
    h, w = pixels.shape[:2]
    if h == 0 or w == 0:
        raise ValueError("cannot encode an empty image")

    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data))

    raw = np.zeros((h, 1 + 3 * w), dtype=np.uint8)  # filter byte 0 per row
    raw[:, 1:] = pixels.reshape(h, 3 * w)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw.tobytes(), 6))
        + chunk(b"IEND", b"")
    )


def write_image(pixels: np.ndarray, path: str | Path, fmt: Literal["PPM", "PNG"] | None = None) -> None:
    path = Path(path)
    fmt = fmt or ("PNG" if path.suffix.lower() == ".png" else "PPM")
    data = encode_png(pixels) if fmt.upper() == "PNG" else encode_ppm(pixels)
    path.write_bytes(data)


def decode_ppm(data: bytes) -> np.ndarray:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        if end == pos:
            raise ValueError("truncated PPM header")
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ValueError("only 8-bit binary PPM (P6) is supported")
    w, h = int(tokens[1]), int(tokens[2])
    body = data[pos + 1:pos + 1 + w * h * 3]
    if len(body) != w * h * 3:
        raise ValueError("truncated PPM pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def read_image(path: str | Path) -> np.ndarray:
    """Read PPM natively; other formats go through Pillow."""
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(b"P6"):
        return decode_ppm(data)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
