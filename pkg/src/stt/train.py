"""Optimisation loop: batch assembly, loss, backprop, Adam, logging, checkpoints."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .autodiff import NumericalError, Tensor, first_nonfinite, no_grad, ops
from .checkpoint import save_checkpoint
from .config import RunConfig, TrainConfig
from .embedding import as_image_tensor
from .imageio import crop_offsets, load_image, resize_shorter_side
from .losses import Extractor, LossWeights, compute_losses, make_extractor
from .model import ModelConfig, decode, encode, init_params, transfer
from .optim import AdamState, adam_step, lr_at

log = logging.getLogger(__name__)

TERMS = ("content", "style", "id1", "id2", "edge", "total")
CSV_HEADER = ("iter", "lr", *TERMS)

Pair = tuple[np.ndarray, np.ndarray]


def forward_pair(ic, is_, params, model_cfg: ModelConfig):
    """Encode each image once and produce ``(I_cs, I_cc, I_ss)``."""
    f_c = encode(ic, params, model_cfg)
    f_s = encode(is_, params, model_cfg)
    ics = decode(transfer(f_c, f_s, params, model_cfg), params)
    icc = decode(transfer(f_c, f_c, params, model_cfg), params)
    iss = decode(transfer(f_s, f_s, params, model_cfg), params)
    return ics, icc, iss


def batch_losses(batch: Sequence[Pair], params, model_cfg: ModelConfig, weights: LossWeights,
                 fx: Extractor, tau: float) -> dict[str, Tensor]:
    """Loss terms averaged over the batch (graph attached)."""
    sums: dict[str, Tensor] = {}
    for content, style in batch:
        ic, is_ = as_image_tensor(content), as_image_tensor(style)
        ics, icc, iss = forward_pair(ic, is_, params, model_cfg)
        with no_grad():
            taps_c, taps_s = fx(ic), fx(is_)
        terms = compute_losses(ic, is_, ics, icc, iss, fx, weights, tau, taps_c=taps_c, taps_s=taps_s)
        for key, value in terms.items():
            sums[key] = value if key not in sums else ops.add(sums[key], value)
    return {key: ops.scale(value, 1.0 / len(batch)) for key, value in sums.items()}


def train_step(batch: Sequence[Pair], params: Mapping[str, Tensor], state: AdamState, cfg: TrainConfig,
               weights: LossWeights, fx: Extractor, model_cfg: ModelConfig) -> dict[str, float]:
    """Forward, backward and one Adam update.  Returns the per-term losses of this step."""
    if not batch:
        raise ValueError("empty batch")
    for p in params.values():
        p.grad = None
    terms = batch_losses(batch, params, model_cfg, weights, fx, cfg.tau)
    total = terms["total"]
    if not np.isfinite(total.data).all():
        bad = first_nonfinite(total)
        where = f"{bad.op} output with dims {bad.dims}" if bad is not None else "loss"
        raise NumericalError(f"non-finite loss at step {state.t + 1}; first bad tensor: {where}", bad)
    total.backward()
    for name, p in params.items():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        elif not np.isfinite(p.grad).all():
            raise NumericalError(f"non-finite gradient for parameter {name!r} at step {state.t + 1}", p)
    lr = lr_at(state.t + 1, cfg.lr0, cfg.warmup_steps, cfg.lr_decay)
    adam_step(params, state, lr)
    record = {"iter": state.t, "lr": lr}
    record.update({key: float(value.item()) for key, value in terms.items()})
    return record


class PairSampler:
    """Uniform (content, style) pairs with seeded random crops."""

    def __init__(self, contents: Sequence[np.ndarray], styles: Sequence[np.ndarray], crop: int, seed: int):
        if not contents or not styles:
            raise ValueError("need at least one content and one style image")
        self.contents, self.styles, self.crop = list(contents), list(styles), crop
        self.rng = np.random.default_rng(seed)

    def _crop(self, img: np.ndarray) -> np.ndarray:
        top, left = crop_offsets(img.shape[0], img.shape[1], self.crop, self.rng)
        return img[top:top + self.crop, left:left + self.crop]

    def sample(self, batch_size: int) -> list[Pair]:
        batch = []
        for _ in range(batch_size):
            c = self.contents[int(self.rng.integers(len(self.contents)))]
            s = self.styles[int(self.rng.integers(len(self.styles)))]
            batch.append((self._crop(c), self._crop(s)))
        return batch


IMAGE_SUFFIXES = {".png", ".ppm", ".pnm", ".pgm"}


def load_image_dir(directory, shorter_side: int) -> list[np.ndarray]:
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return [resize_shorter_side(load_image(p), shorter_side) for p in files]


def format_record(record: Mapping[str, float]) -> list[str]:
    row = [str(int(record["iter"])), repr(float(record["lr"]))]
    row += [repr(float(record[k])) if k in record else "" for k in TERMS]
    return row


class CsvLog:
    """Append-only loss log; the header is written once."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with self.path.open("w", newline="") as fh:
                csv.writer(fh).writerow(CSV_HEADER)

    def append(self, record: Mapping[str, float]) -> None:
        with self.path.open("a", newline="") as fh:
            csv.writer(fh).writerow(format_record(record))


def train(sampler: PairSampler, run: RunConfig, params: dict[str, Tensor] | None = None,
          state: AdamState | None = None, fx: Extractor | None = None, out_dir=None,
          on_step: Callable[[dict], None] | None = None) -> tuple[dict[str, Tensor], AdamState, list[dict]]:
    """Run ``run.train.iterations`` steps (counting on from ``state.t`` when resuming).

    With ``out_dir`` set, every step is appended to ``loss.csv`` and
    checkpoints go to ``checkpoint.sttw`` every ``checkpoint_every`` steps and
    at the end.
    """
    cfg, model_cfg, weights = run.train, run.model, run.loss
    params = init_params(model_cfg, cfg.seed) if params is None else params
    state = AdamState.fresh(params) if state is None else state
    fx = make_extractor(cfg.feature_extractor) if fx is None else fx
    csv_log = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_log = CsvLog(out_dir / "loss.csv")
    history = []
    for _ in range(cfg.iterations):
        record = train_step(sampler.sample(cfg.batch_size), params, state, cfg, weights, fx, model_cfg)
        history.append(record)
        if csv_log is not None:
            csv_log.append(record)
        if on_step is not None:
            on_step(record)
        if cfg.log_every and state.t % cfg.log_every == 0:
            log.info("iter %d lr %.3g total %.5g", state.t, record["lr"], record["total"])
        if out_dir is not None and cfg.checkpoint_every and state.t % cfg.checkpoint_every == 0:
            save_checkpoint(params, state, out_dir / "checkpoint.sttw", model_cfg)
    if out_dir is not None:
        save_checkpoint(params, state, out_dir / "checkpoint.sttw", model_cfg)
    return params, state, history
