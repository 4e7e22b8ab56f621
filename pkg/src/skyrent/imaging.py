"""Raster and mask primitives, HSB conversion and image codecs."""

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DimensionMismatch, MalformedImage


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB raster stored as a read-only ``(height, width, 3)`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty (H, W, 3) array, got shape {arr.shape}")
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def flat(self) -> np.ndarray:
        """Row-major ``(width*height, 3)`` view of the pixels."""
        return self.pixels.reshape(-1, 3)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True)
class BinaryMask:
    """Boolean ``(height, width)`` mask; True marks sky."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty (H, W) array, got shape {arr.shape}")
        arr = np.array(arr, dtype=bool, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True)
class HsbColor:
    h: float
    s: float
    b: float
    achromatic: bool = False


def rgb_to_hsb_array(rgb) -> tuple:
    """Vectorised hexcone conversion.

    Takes an ``(..., 3)`` array of 8-bit values and returns ``(h, s, b,
    achromatic)`` arrays with hue in degrees ``[0, 360)``. Achromatic pixels
    (zero saturation) get hue 0.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    mx = arr.max(axis=-1)
    mn = arr.min(axis=-1)
    delta = mx - mn
    achromatic = delta == 0
    safe = np.where(achromatic, 1.0, delta)

    h = np.where(
        mx == r,
        np.mod((g - b) / safe, 6.0),
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    ) * 60.0
    h = np.where(achromatic, 0.0, h)
    h = np.where(h >= 360.0, h - 360.0, h)
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return h, s, mx / 255.0, achromatic


def rgb_to_hsb(rgb) -> HsbColor:
    h, s, b, achromatic = rgb_to_hsb_array(np.asarray(rgb).reshape(1, 3))
    return HsbColor(float(h[0]), float(s[0]), float(b[0]), bool(achromatic[0]))


def hsb_to_rgb(color: HsbColor) -> tuple:
    """Inverse hexcone conversion, rounded to the nearest 8-bit triple."""
    v = color.b * 255.0
    c = v * color.s
    hp = (color.h % 360.0) / 60.0
    x = c * (1 - abs(hp % 2 - 1))
    sector = int(hp) % 6
    r1, g1, b1 = [
        (c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x),
    ][sector]
    m = v - c
    return tuple(int(np.clip(np.floor(ch + m + 0.5), 0, 255)) for ch in (r1, g1, b1))


def apply_skyprint(img: RasterImage, mask: BinaryMask) -> RasterImage:
    """Keep the sky pixels of ``img`` and paint everything else black."""
    if (img.height, img.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"image is {img.width}x{img.height} but mask is {mask.width}x{mask.height}"
        )
    out = np.where(mask.bits[..., None], img.pixels, np.uint8(0))
    return RasterImage(out)


# -- codecs -----------------------------------------------------------------

def _ppm_token(data: bytes, pos: int) -> tuple:
    n = len(data)
    while pos < n:
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif data[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedImage("truncated PPM header")
    return data[start:pos], pos


def _decode_ppm(data: bytes) -> RasterImage:
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _ppm_token(data, pos)
        if not tok.isdigit():
            raise MalformedImage(f"bad PPM header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1 or maxval != 255:
        raise MalformedImage(f"unsupported PPM geometry {width}x{height} maxval={maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedImage("truncated PPM header")
    pos += 1
    body = data[pos:]
    need = width * height * 3
    if len(body) < need:
        raise MalformedImage(f"PPM body has {len(body)} bytes, expected {need}")
    arr = np.frombuffer(body[:need], dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(arr)


def decode(data: bytes) -> RasterImage:
    """Decode PNG or binary PPM (P6) bytes into a :class:`RasterImage`."""
    if data[:2] == b"P6":
        return _decode_ppm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            with Image.open(io.BytesIO(data)) as im:
                im.load()
                rgb = im.convert("RGB")
                return RasterImage(np.asarray(rgb))
        except (OSError, SyntaxError, ValueError) as exc:
            raise MalformedImage(f"cannot decode PNG: {exc}") from exc
    raise MalformedImage("unrecognised image format (expected PNG or PPM P6)")


def encode(img: RasterImage, fmt: str = "png") -> bytes:
    if fmt == "ppm":
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        return header + img.pixels.tobytes()
    if fmt != "png":
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img.pixels)).save(buf, format="PNG")
    return buf.getvalue()
