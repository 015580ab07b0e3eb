"""Brute-force edge extraction: scalar loops with explicit reflection indexing.

Uses the same float32 arithmetic and summation order as the library so the
two can be compared for exact equality.
"""

import numpy as np

F = np.float32
LUMA = (F(0.299), F(0.587), F(0.114))


def reflect(i, n):
    if i < 0:
        return -i
    if i >= n:
        return 2 * (n - 1) - i
    return i


def luma(img):
    h, w, _ = img.shape
    out = np.zeros((h, w), dtype=F)
    for i in range(h):
        for j in range(w):
            r, g, b = (F(v) for v in img[i, j])
            out[i, j] = (r * LUMA[0] + g * LUMA[1]) + b * LUMA[2]
    return out


def abs_laplacian(img):
    y = luma(img)
    h, w = y.shape
    out = np.zeros((h, w), dtype=F)
    for i in range(h):
        for j in range(w):
            up = y[reflect(i - 1, h), j]
            left = y[i, reflect(j - 1, w)]
            right = y[i, reflect(j + 1, w)]
            down = y[reflect(i + 1, h), j]
            out[i, j] = abs(((up + left) + right) + down - y[i, j] * F(4.0))
    return out


def threshold(m, tau):
    out = np.zeros_like(m)
    for idx, v in np.ndenumerate(m):
        out[idx] = v if v >= tau else F(0)
    return out


def mask(stylized, content):
    out = np.zeros_like(stylized)
    for idx, v in np.ndenumerate(stylized):
        out[idx] = v if content[idx] > 0 else F(0)
    return out


def oracle_edges(content, stylized, tau):
    edg_c = threshold(abs_laplacian(content), tau)
    return edg_c, mask(threshold(abs_laplacian(stylized), tau), edg_c)
