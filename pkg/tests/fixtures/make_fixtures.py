"""Regenerate the bundled PPM fixtures: python tests/fixtures/make_fixtures.py"""

from pathlib import Path

import numpy as np

from stt.imageio import save_image

HERE = Path(__file__).parent


def content_image(size: int = 64) -> np.ndarray:
    """Sky, a building with a window grid, and a dark sign with bright bars."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.empty((size, size, 3), dtype=np.float32)
    img[..., 0] = 0.55 + 0.2 * yy
    img[..., 1] = 0.7 + 0.15 * yy
    img[..., 2] = 0.95 - 0.1 * yy
    s = size / 64
    b0, b1 = int(8 * s), int(40 * s)
    img[int(12 * s):, b0:b1] = (0.55, 0.45, 0.4)
    for r in range(int(16 * s), size - int(6 * s), int(8 * s)):
        for c in range(b0 + int(4 * s), b1 - int(4 * s), int(8 * s)):
            img[r:r + int(4 * s), c:c + int(4 * s)] = (0.95, 0.9, 0.5)
    img[int(30 * s):int(50 * s), int(44 * s):int(60 * s)] = (0.1, 0.15, 0.2)
    for k in range(3):
        c = int((46 + 5 * k) * s)
        img[int(33 * s):int(47 * s), c:c + max(1, int(2 * s))] = (1.0, 1.0, 1.0)
    return img


def style_image(size: int = 64, seed: int = 3) -> np.ndarray:
    """Smooth colourful swirls with soft strokes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size * 2 * np.pi
    img = np.empty((size, size, 3), dtype=np.float32)
    phases = rng.uniform(0, 2 * np.pi, size=(3, 2))
    for ch in range(3):
        a, b = phases[ch]
        img[..., ch] = 0.5 + 0.35 * np.sin(2 * xx + 3 * np.sin(yy + a)) * np.cos(yy * 1.5 + b)
    return np.clip(img, 0, 1)


if __name__ == "__main__":
    save_image(content_image(64), HERE / "content64.ppm")
    save_image(style_image(64), HERE / "style64.ppm")
    save_image(content_image(96), HERE / "content96.ppm")
    save_image(style_image(96, seed=5), HERE / "style96.ppm")
