"""Training objective: perceptual, identity and edge losses.

Every ``||.||`` below is a mean-squared-error reduction.  Feature maps come from
a frozen VGG19-topology extractor: either real weights read from an STTW file
(``vgg19`` mode) or a fixed-seed random initialisation of the same topology
(``proxy`` mode).  Anything callable as ``fx(img) -> {tap: (C, H, W) Tensor}``
can stand in for the extractor.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping

import numpy as np

from .autodiff import ShapeError, Tensor, as_tensor, get_default_dtype, ops
from .edges import DEFAULT_TAU, extract_edges
from .sttw import CheckpointError, read_tensors

TAPS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1")
CONTENT_TAPS = ("relu4_1", "relu5_1")
NORM_EPS = 1e-5
MIN_FEATURE_SIZE = 32

# (name, in_channels, out_channels); "pool" entries are 2x2 max pools.
VGG19_LAYERS = [
    ("conv1_1", 3, 64), ("conv1_2", 64, 64), "pool",
    ("conv2_1", 64, 128), ("conv2_2", 128, 128), "pool",
    ("conv3_1", 128, 256), ("conv3_2", 256, 256), ("conv3_3", 256, 256), ("conv3_4", 256, 256), "pool",
    ("conv4_1", 256, 512), ("conv4_2", 512, 512), ("conv4_3", 512, 512), ("conv4_4", 512, 512), "pool",
    ("conv5_1", 512, 512),
]

FeatureTaps = Mapping[str, Tensor]
Extractor = Callable[[Tensor], FeatureTaps]


@dataclass
class LossWeights:
    lambda_c: float = 1.0
    lambda_s: float = 3.0
    lambda_id1: float = 50.0
    lambda_id2: float = 1.0
    lambda_edg: float = 5000.0
    edge_enabled: bool = True

    def __post_init__(self):
        for key, value in asdict(self).items():
            if key.startswith("lambda") and value < 0:
                raise ValueError(f"{key} must be >= 0, got {value}")


def vgg19_shapes() -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {"conv0.weight": (3, 3, 1, 1), "conv0.bias": (3,)}
    for layer in VGG19_LAYERS:
        if layer != "pool":
            name, c_in, c_out = layer
            shapes[f"{name}.weight"] = (c_out, c_in, 3, 3)
            shapes[f"{name}.bias"] = (c_out,)
    return shapes


class FeatureExtractor:
    """Frozen VGG19 conv stack up to ``relu5_1`` with reflection padding.

    ``conv0`` is a 1x1 input transform (identity in proxy mode) so that weight
    files exported from mean-normalised VGG variants load unchanged.
    """

    def __init__(self, weights: Mapping[str, np.ndarray], source: str = "custom"):
        expected = vgg19_shapes()
        weights = dict(weights)
        if "conv0.weight" not in weights:
            weights["conv0.weight"] = np.eye(3).reshape(3, 3, 1, 1)
            weights["conv0.bias"] = np.zeros(3)
        unknown = sorted(set(weights) - set(expected))
        missing = sorted(set(expected) - set(weights))
        if unknown or missing:
            raise ValueError(f"VGG19 weights mismatch (missing {missing}, unexpected {unknown})")
        dtype = get_default_dtype()
        self.params: dict[str, Tensor] = {}
        for name, shape in expected.items():
            value = np.asarray(weights[name])
            if value.shape != shape:
                raise ShapeError(f"VGG19 weight {name}: dims {list(value.shape)}, expected {list(shape)}")
            self.params[name] = Tensor(value, name=name, dtype=dtype)
        self.source = source

    @classmethod
    def proxy(cls, seed: int = 0) -> "FeatureExtractor":
        rng = np.random.default_rng(seed)
        weights = {}
        for name, shape in vgg19_shapes().items():
            if name.startswith("conv0"):
                continue
            if name.endswith(".weight"):
                weights[name] = rng.standard_normal(shape) * math.sqrt(2.0 / np.prod(shape[1:]))
            else:
                weights[name] = np.zeros(shape)
        return cls(weights, source=f"proxy:{seed}")

    @classmethod
    def from_file(cls, path) -> "FeatureExtractor":
        try:
            return cls(read_tensors(path), source=f"vgg19:{path}")
        except (ValueError, ShapeError) as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError(path, str(exc)) from exc

    def __call__(self, img) -> dict[str, Tensor]:
        img = as_tensor(img)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ShapeError(f"expected an (H, W, 3) image, got dims {img.dims}")
        if img.shape[0] < MIN_FEATURE_SIZE or img.shape[1] < MIN_FEATURE_SIZE:
            raise ValueError(f"feature extraction needs at least {MIN_FEATURE_SIZE}x{MIN_FEATURE_SIZE}, got {img.dims}")
        p = self.params
        x = ops.conv2d(ops.transpose(img, (2, 0, 1)), p["conv0.weight"], 1, p["conv0.bias"])
        taps: dict[str, Tensor] = {}
        for layer in VGG19_LAYERS:
            if layer == "pool":
                x = ops.max_pool2d(x, 2)
                continue
            name = layer[0]
            x = ops.relu(ops.conv2d(ops.reflect_pad(x, 1), p[f"{name}.weight"], 1, p[f"{name}.bias"]))
            if name.endswith("_1"):
                taps["relu" + name[4:]] = x
        return taps


def make_extractor(spec: str) -> FeatureExtractor:
    """``"proxy"``, ``"proxy:<seed>"`` or ``"vgg19:<path>"``."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "proxy":
        return FeatureExtractor.proxy(int(arg) if arg else 0)
    if kind == "vgg19" and arg:
        return FeatureExtractor.from_file(arg)
    raise ValueError(f"unknown feature extractor {spec!r}; use proxy[:seed] or vgg19:<path>")


def extract_features(img, fx: Extractor) -> FeatureTaps:
    return fx(as_tensor(img))


# -- statistics -------------------------------------------------------------------


def channel_stats(f: Tensor) -> tuple[Tensor, Tensor]:
    """Per-channel spatial mean and standard deviation (eps-guarded), shaped ``(C, 1, 1)``."""
    mu, var = ops.mean_var(f, (1, 2))
    return mu, ops.sqrt(ops.add(var, NORM_EPS))


def channel_normalize(f: Tensor) -> Tensor:
    mu, sigma = channel_stats(f)
    return ops.div(ops.sub(f, mu), sigma)


# -- losses on precomputed taps ---------------------------------------------------


def content_loss_taps(taps_cs: FeatureTaps, taps_c: FeatureTaps) -> Tensor:
    terms = [ops.mse(channel_normalize(taps_cs[t]), channel_normalize(taps_c[t])) for t in CONTENT_TAPS]
    return _sum(terms)


def style_loss_taps(taps_cs: FeatureTaps, taps_s: FeatureTaps) -> Tensor:
    terms = []
    for t in TAPS:
        mu_cs, sd_cs = channel_stats(taps_cs[t])
        mu_s, sd_s = channel_stats(taps_s[t])
        terms.append(ops.mse(mu_cs, mu_s))
        terms.append(ops.mse(sd_cs, sd_s))
    return _sum(terms)


def feature_identity_taps(taps_a: FeatureTaps, taps_b: FeatureTaps) -> Tensor:
    return _sum([ops.mse(taps_a[t], taps_b[t]) for t in TAPS])


def _sum(terms):
    total = terms[0]
    for term in terms[1:]:
        total = ops.add(total, term)
    return total


# -- image-level API --------------------------------------------------------------


def content_loss(ics, ic, fx: Extractor) -> Tensor:
    ics, ic = as_tensor(ics), as_tensor(ic)
    if ics.shape != ic.shape:
        raise ShapeError(f"content loss needs equal dims, got {ics.dims} and {ic.dims}")
    return content_loss_taps(fx(ics), fx(ic))


def style_loss(ics, is_, fx: Extractor) -> Tensor:
    return style_loss_taps(fx(as_tensor(ics)), fx(as_tensor(is_)))


def identity_losses(icc, ic, iss, is_, fx: Extractor) -> tuple[Tensor, Tensor]:
    icc, ic, iss, is_ = (as_tensor(x) for x in (icc, ic, iss, is_))
    if icc.shape != ic.shape or iss.shape != is_.shape:
        raise ShapeError(f"identity loss dims mismatch: {icc.dims}/{ic.dims}, {iss.dims}/{is_.dims}")
    id1 = ops.add(ops.mse(icc, ic), ops.mse(iss, is_))
    id2 = ops.add(feature_identity_taps(fx(icc), fx(ic)), feature_identity_taps(fx(iss), fx(is_)))
    return id1, id2


def edge_loss(content, stylized, tau: float = DEFAULT_TAU) -> Tensor:
    edg_c, edg_cs = extract_edges(content, stylized, tau)
    return ops.mse(edg_c, edg_cs)


def total_loss(terms: Mapping[str, Tensor], w: LossWeights) -> Tensor:
    """Weighted sum; the edge term is included only when ``w.edge_enabled``."""
    total = ops.add(ops.add(ops.scale(terms["content"], w.lambda_c), ops.scale(terms["style"], w.lambda_s)),
                    ops.add(ops.scale(terms["id1"], w.lambda_id1), ops.scale(terms["id2"], w.lambda_id2)))
    if w.edge_enabled:
        total = ops.add(total, ops.scale(terms["edge"], w.lambda_edg))
    return total


def compute_losses(ic, is_, ics, icc, iss, fx: Extractor, w: LossWeights, tau: float = DEFAULT_TAU,
                   taps_c: FeatureTaps | None = None, taps_s: FeatureTaps | None = None) -> dict[str, Tensor]:
    """All loss terms for one (content, style) pair plus ``"total"``.

    Each image goes through the extractor once.  ``taps_c``/``taps_s`` may be
    passed in when the reference features are already known.
    """
    ic, is_, ics, icc, iss = (as_tensor(x) for x in (ic, is_, ics, icc, iss))
    if ics.shape != ic.shape or icc.shape != ic.shape or iss.shape != is_.shape:
        raise ShapeError("stylized outputs must match their reference image dims")
    taps_c = fx(ic) if taps_c is None else taps_c
    taps_s = fx(is_) if taps_s is None else taps_s
    taps_cs, taps_cc, taps_ss = fx(ics), fx(icc), fx(iss)
    terms = {
        "content": content_loss_taps(taps_cs, taps_c),
        "style": style_loss_taps(taps_cs, taps_s),
        "id1": ops.add(ops.mse(icc, ic), ops.mse(iss, is_)),
        "id2": ops.add(feature_identity_taps(taps_cc, taps_c), feature_identity_taps(taps_ss, taps_s)),
    }
    if w.edge_enabled:
        terms["edge"] = edge_loss(ic, ics, tau)
    terms["total"] = total_loss(terms, w)
    return terms
