"""Image loading, saving and preprocessing.

Images are ``(H, W, 3)`` float32 numpy arrays with samples in ``[0, 1]``.
Binary PPM (P6, plus P5 grayscale on read) is handled here directly; PNG goes
through Pillow.
"""

from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path

import numpy as np

PPM_SUFFIXES = {".ppm", ".pnm", ".pgm"}


class ImageError(OSError):
    """A file could not be read or written as an image."""

    def __init__(self, path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


def check_image(img: np.ndarray, min_size: int = 1) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < min_size or img.shape[1] < min_size:
        raise ValueError(f"image {img.shape[0]}x{img.shape[1]} smaller than {min_size}x{min_size}")
    return img


def _to_float(pixels: np.ndarray) -> np.ndarray:
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    if pixels.shape[2] == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    return pixels[:, :, :3].astype(np.float32) / np.float32(255.0)


_PNM_HEADER = re.compile(rb"\A(P[56])(?:\s+|#[^\n]*\n)*?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)\s")


def _read_pnm(path: Path, raw: bytes) -> np.ndarray:
    m = _PNM_HEADER.match(raw)
    if not m:
        raise ImageError(path, "not a binary PPM/PGM (P6/P5) file")
    magic, width, height, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ImageError(path, f"unsupported maxval {maxval} (only 8-bit)")
    channels = 3 if magic == b"P6" else 1
    body = raw[m.end():]
    need = width * height * channels
    if len(body) < need:
        raise ImageError(path, f"truncated pixel data ({len(body)} of {need} bytes)")
    return np.frombuffer(body[:need], dtype=np.uint8).reshape(height, width, channels)


def load_image(path) -> np.ndarray:
    """Read a PNG or binary PPM file into an ``(H, W, 3)`` array in ``[0, 1]``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageError(path, exc.strerror or str(exc)) from exc
    if raw[:2] in (b"P6", b"P5"):
        return _to_float(_read_pnm(path, raw))
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            with Image.open(path) as im:
                im.load()
                if im.mode not in ("L", "RGB", "RGBA"):
                    im = im.convert("RGBA" if "A" in im.getbands() else "RGB")
                pixels = np.asarray(im)
        except Exception as exc:  # Pillow raises a zoo of types
            raise ImageError(path, f"cannot decode PNG: {exc}") from exc
        if pixels.dtype != np.uint8:
            raise ImageError(path, f"unsupported PNG sample type {pixels.dtype}")
        return _to_float(pixels)
    raise ImageError(path, "unsupported format (expected PNG or binary PPM)")


def quantize(img: np.ndarray) -> np.ndarray:
    """Clamp to ``[0, 1]`` and round to the nearest 8-bit level."""
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_ppm(img: np.ndarray) -> bytes:
    pixels = quantize(check_image(img))
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def atomic_write(path, payload: bytes) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_image(img: np.ndarray, path) -> None:
    """Write ``img`` (clamped, quantised) as PPM or PNG depending on the suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in PPM_SUFFIXES:
        atomic_write(path, encode_ppm(img))
    elif suffix == ".png":
        import io

        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(quantize(check_image(img)), mode="RGB").save(buf, format="PNG")
        atomic_write(path, buf.getvalue())
    else:
        raise ImageError(path, f"unsupported output format {suffix!r}")


def gray_to_rgb(plane: np.ndarray) -> np.ndarray:
    return np.repeat(np.asarray(plane, dtype=np.float32)[:, :, None], 3, axis=2)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centres and edge clamping."""
    h, w, _ = img.shape

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (pos - lo).astype(np.float32)

    y0, y1, fy = axis_weights(h, out_h)
    x0, x1, fx = axis_weights(w, out_w)
    fy, fx = fy[:, None, None], fx[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return (top * (1 - fy) + bottom * fy).astype(np.float32)


def resize_shorter_side(img: np.ndarray, target: int) -> np.ndarray:
    """Scale so the shorter side equals ``target``, keeping the aspect ratio."""
    if target < 8:
        raise ValueError(f"target {target} below the 8-pixel minimum")
    h, w, _ = check_image(img).shape
    if min(h, w) == target:
        return img.astype(np.float32, copy=True)
    if h <= w:
        out_h, out_w = target, max(1, round(w * target / h))
    else:
        out_h, out_w = max(1, round(h * target / w)), target
    return resize_bilinear(img, out_h, out_w)


def crop_offsets(h: int, w: int, size: int, rng: np.random.Generator) -> tuple[int, int]:
    if size > min(h, w):
        raise ValueError(f"crop {size} exceeds image {h}x{w}")
    return int(rng.integers(0, h - size + 1)), int(rng.integers(0, w - size + 1))


def random_crop(img: np.ndarray, size: int, rng_seed) -> tuple[np.ndarray, tuple[int, int]]:
    """Cut a ``size x size`` window at a seeded uniform offset.

    ``rng_seed`` may be an int or a ``numpy.random.Generator``.  Returns the
    crop and its ``(top, left)`` offset.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    top, left = crop_offsets(img.shape[0], img.shape[1], size, rng)
    return img[top:top + size, left:left + size].copy(), (top, left)


def crop_to_multiple(img: np.ndarray, multiple: int = 8) -> np.ndarray:
    """Drop trailing rows/cols so both dims are multiples of ``multiple``."""
    h, w, _ = img.shape
    return img[: h - h % multiple, : w - w % multiple]
