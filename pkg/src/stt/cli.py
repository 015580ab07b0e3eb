"""Command-line entry point: ``stt {train,stylize,edges,eval,repeat}``.

Exit codes: 0 success, 2 usage or input error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autodiff import NumericalError, no_grad
from .checkpoint import load_checkpoint
from .config import dump_config, load_config
from .edges import DEFAULT_TAU, extract_edges
from .imageio import ImageError, atomic_write, crop_to_multiple, gray_to_rgb, load_image, save_image
from .losses import content_loss, edge_loss, identity_losses, make_extractor, style_loss
from .model import check_params, stylize_array
from .sttw import CheckpointError
from .train import IMAGE_SUFFIXES, PairSampler, load_image_dir, train

log = logging.getLogger("stt")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    """Bad input that should end the process with exit code 2."""


def _load_model(path):
    try:
        params, _, config = load_checkpoint(path)
        check_params(params, config)
    except (CheckpointError, ValueError) as exc:
        raise UsageError(f"cannot use model checkpoint: {exc}") from exc
    return params, config


def _load_for_model(path, label: str) -> np.ndarray:
    img = load_image(path)
    trimmed = crop_to_multiple(img, 8)
    if trimmed.shape != img.shape:
        log.warning("%s %s is %dx%d; cropped to %dx%d (multiple of 8)", label, path,
                    img.shape[0], img.shape[1], trimmed.shape[0], trimmed.shape[1])
    if trimmed.shape[0] == 0 or trimmed.shape[1] == 0:
        raise UsageError(f"{label} {path} is smaller than 8x8")
    return np.ascontiguousarray(trimmed)


def _image_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"{directory} is not a directory")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise UsageError(f"{directory} contains no images")
    return files


# -- subcommands --------------------------------------------------------------------


def cmd_train(args) -> int:
    try:
        run = load_config(args.config)
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from exc
    _image_files(args.content_dir), _image_files(args.style_dir)
    contents = load_image_dir(args.content_dir, run.train.shorter_side)
    styles = load_image_dir(args.style_dir, run.train.shorter_side)

    params = state = None
    start = 0
    if args.resume:
        try:
            params, state, _ = load_checkpoint(args.resume, run.model)
        except CheckpointError as exc:
            raise UsageError(f"cannot resume: {exc}") from exc
        start = state.t
    remaining = run.train.iterations - start
    if remaining <= 0:
        print(f"checkpoint already at iteration {start}; nothing to do")
        return EXIT_OK

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write(out_dir / "config.ini", dump_config(run).encode("utf-8"))
    sampler = PairSampler(contents, styles, run.train.crop, seed=run.train.seed + start)
    run = replace(run, train=replace(run.train, iterations=remaining))
    try:
        _, state, history = train(sampler, run, params=params, state=state, out_dir=out_dir)
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"trained to iteration {state.t}; final total loss {history[-1]['total']:.6g}")
    return EXIT_OK


def cmd_stylize(args) -> int:
    params, config = _load_model(args.model)
    content = _load_for_model(args.content, "content")
    style = _load_for_model(args.style, "style")
    output = stylize_array(content, style, params, config)
    if not np.isfinite(output).all():
        print("stylized output contains non-finite pixels", file=sys.stderr)
        return EXIT_NUMERIC
    save_image(output, args.out)
    return EXIT_OK


def cmd_repeat(args) -> int:
    if args.rounds < 1:
        raise UsageError("--rounds must be >= 1")
    params, config = _load_model(args.model)
    fx = make_extractor(args.feature_extractor)
    original = _load_for_model(args.content, "content")
    style = _load_for_model(args.style, "style")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    current = original
    for k in range(1, args.rounds + 1):
        path = out_dir / f"round_{k:03d}.ppm"
        output = stylize_array(current, style, params, config)
        if not np.isfinite(output).all():
            print(f"round {k} produced non-finite pixels", file=sys.stderr)
            return EXIT_NUMERIC
        save_image(output, path)
        # the next round starts from the saved 8-bit file, not the float output
        current = load_image(path)
        with no_grad():
            loss = content_loss(current, original, fx).item()
        rows.append((k, loss))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("round", "content_loss"))
    writer.writerows((k, repr(v)) for k, v in rows)
    atomic_write(out_dir / "content_leak.csv", buf.getvalue().encode("utf-8"))
    print(f"round 1 content loss {rows[0][1]:.6g}; round {rows[-1][0]} content loss {rows[-1][1]:.6g}")
    return EXIT_OK


def cmd_edges(args) -> int:
    content = load_image(args.content)
    stylized = load_image(args.stylized)
    if content.shape != stylized.shape:
        raise UsageError(f"content {content.shape[:2]} and stylized {stylized.shape[:2]} differ in size")
    if args.tau < 0:
        raise UsageError("--tau must be >= 0")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with no_grad():
        edg_c, edg_cs = extract_edges(content, stylized, args.tau)
        loss = edge_loss(content, stylized, args.tau).item()
    save_image(gray_to_rgb(np.clip(edg_c.data, 0, 1)), out_dir / "edges_content.ppm")
    save_image(gray_to_rgb(np.clip(edg_cs.data, 0, 1)), out_dir / "edges_stylized.ppm")
    print(f"edge_loss {loss!r}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    params, config = _load_model(args.model)
    fx = make_extractor(args.feature_extractor)
    contents = _image_files(args.content_dir)
    styles = _image_files(args.style_dir)
    rng = np.random.default_rng(args.seed)
    totals = {"content": 0.0, "style": 0.0, "id1": 0.0, "id2": 0.0, "time": 0.0}
    for _ in range(args.samples):
        ic = _load_for_model(contents[int(rng.integers(len(contents)))], "content")
        is_ = _load_for_model(styles[int(rng.integers(len(styles)))], "style")
        start = time.perf_counter()
        ics = stylize_array(ic, is_, params, config)
        totals["time"] += time.perf_counter() - start
        icc = stylize_array(ic, ic, params, config)
        iss = stylize_array(is_, is_, params, config)
        with no_grad():
            totals["content"] += content_loss(ics, ic, fx).item()
            totals["style"] += style_loss(ics, is_, fx).item()
            id1, id2 = identity_losses(icc, ic, iss, is_, fx)
            totals["id1"] += id1.item()
            totals["id2"] += id2.item()
    means = {k: v / args.samples for k, v in totals.items()}
    print("\t".join(means))
    print("\t".join(f"{v:.6f}" for v in means.values()))
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stt", description="Edge-enhanced Transformer style transfer")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on content/style image directories")
    p.add_argument("--config", required=True, help="INI config file ([model], [loss], [train])")
    p.add_argument("--content-dir", required=True, help="directory of content images")
    p.add_argument("--style-dir", required=True, help="directory of style images")
    p.add_argument("--out-dir", required=True, help="where checkpoint.sttw and loss.csv go")
    p.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint (iteration count carries on)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stylize", help="stylize one content image with one style image")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--content", required=True, help="content image (PNG or PPM)")
    p.add_argument("--style", required=True, help="style image (PNG or PPM)")
    p.add_argument("--out", required=True, help="output image (.png or .ppm)")
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("edges", help="dump refined edge maps and the edge loss")
    p.add_argument("--content", required=True, help="content image")
    p.add_argument("--stylized", required=True, help="stylized image (same size)")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="response threshold (default 0.2)")
    p.add_argument("--out-dir", required=True, help="where edges_content.ppm / edges_stylized.ppm go")
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("eval", help="mean content/style/identity losses and time over random pairs")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--content-dir", required=True, help="directory of content images")
    p.add_argument("--style-dir", required=True, help="directory of style images")
    p.add_argument("--samples", type=int, default=400, help="number of random pairs (default 400)")
    p.add_argument("--seed", type=int, default=0, help="pair sampling seed")
    p.add_argument("--feature-extractor", default="proxy:0", help="proxy[:seed] or vgg19:<path>")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("repeat", help="repeated stylization (content-leak experiment)")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--content", required=True, help="content image")
    p.add_argument("--style", required=True, help="style image")
    p.add_argument("--rounds", type=int, default=20, help="number of rounds (default 20)")
    p.add_argument("--out-dir", required=True, help="where round images and content_leak.csv go")
    p.add_argument("--feature-extractor", default="proxy:0", help="proxy[:seed] or vgg19:<path>")
    p.set_defaults(func=cmd_repeat)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
