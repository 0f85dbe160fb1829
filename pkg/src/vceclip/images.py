"""Binary PPM codec, bilinear resize and geometric augmentation.

Images are float64 arrays ``[H, W, 3]`` with values in ``[0, 1]``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise OSError("truncated PPM header")
    return buf[start:pos], pos


def decode_ppm(buf: bytes) -> np.ndarray:
    """Decode a binary (P6, maxval 255) PPM."""
    if buf[:2] != b"P6":
        raise FormatError(f"unsupported image format (magic {buf[:2]!r}); only binary PPM P6 is supported")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"bad PPM header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}; only 255 is supported")
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise OSError("truncated PPM header")
    pos += 1
    need = width * height * 3
    raster = buf[pos : pos + need]
    if len(raster) < need:
        raise OSError(f"truncated PPM raster: expected {need} bytes, got {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(np.float64) / 255.0


def encode_ppm(image: np.ndarray) -> bytes:
    """Encode ``[H, W, 3]`` floats in [0, 1] (or uint8) as binary PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise FormatError(f"PPM needs [H, W, 3] data, got {image.shape}")
    if image.dtype != np.uint8:
        image = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = image.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + image.tobytes()


def decode_image(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read())


def write_image(path: str | os.PathLike, image: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(image))


def _bilinear_axis(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres (align_corners=False), edge-clamped
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize(image: np.ndarray, target: int | tuple[int, int]) -> np.ndarray:
    """Bilinear resize of ``[H, W, C]`` to ``target x target`` (or ``(h, w)``)."""
    image = np.asarray(image, dtype=np.float64)
    th, tw = (target, target) if isinstance(target, int) else target
    h, w = image.shape[:2]
    if (h, w) == (th, tw):
        return image.copy()
    y0, y1, fy = _bilinear_axis(h, th)
    x0, x1, fx = _bilinear_axis(w, tw)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = image[y0][:, x0] * (1 - fx) + image[y0][:, x1] * fx
    bottom = image[y1][:, x0] * (1 - fx) + image[y1][:, x1] * fx
    return np.clip(top * (1 - fy) + bottom * fy, 0.0, 1.0)


def rotate90(image: np.ndarray, k: int) -> np.ndarray:
    return np.rot90(image, k % 4, axes=(0, 1)).copy()


def hflip(image: np.ndarray) -> np.ndarray:
    return image[:, ::-1].copy()


def vflip(image: np.ndarray) -> np.ndarray:
    return image[::-1].copy()


@dataclass(frozen=True)
class AugmentationPolicy:
    rotations: tuple[int, ...] = (0, 90, 180, 270)
    horizontal_flip: float = 0.5
    vertical_flip: float = 0.5
    crop_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        rots = tuple(int(r) for r in self.rotations)
        object.__setattr__(self, "rotations", rots)
        if not rots or any(r not in (0, 90, 180, 270) for r in rots):
            raise ConfigError(f"rotations must be a non-empty subset of {{0, 90, 180, 270}}, got {rots}")
        for name in ("horizontal_flip", "vertical_flip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} probability must be in [0, 1], got {p}")
        if not 0.0 < self.crop_fraction <= 1.0:
            raise ConfigError(f"crop_fraction must be in (0, 1], got {self.crop_fraction}")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentationPolicy":
        return cls(rotations=(0,), horizontal_flip=0.0, vertical_flip=0.0, crop_fraction=1.0, seed=seed)


def augment(image: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    """Rotation, horizontal flip, vertical flip, then random crop resized back.

    Every call draws the same number of values from ``rng`` regardless of
    which branches fire, so the stream stays aligned across records.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if h != w:
        raise ConfigError(f"augment expects a square image, got {h}x{w}")
    # integers() skips the draw for a one-element range, so index from a uniform
    k = policy.rotations[int(rng.random() * len(policy.rotations))] // 90
    do_h = rng.random() < policy.horizontal_flip
    do_v = rng.random() < policy.vertical_flip
    area = rng.uniform(policy.crop_fraction, 1.0)
    u, v = rng.random(2)

    out = rotate90(image, k) if k else image.copy()
    if do_h:
        out = hflip(out)
    if do_v:
        out = vflip(out)
    side = min(h, max(1, int(round(np.sqrt(area) * h))))
    if side < h:
        top = int(u * (h - side + 1))
        left = int(v * (h - side + 1))
        out = resize(out[top : top + side, left : left + side], h)
    return out


def normalize(image: np.ndarray, mean=0.5, std=0.5) -> np.ndarray:
    return (np.asarray(image, dtype=np.float64) - mean) / std
