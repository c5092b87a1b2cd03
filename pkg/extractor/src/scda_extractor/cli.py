"""Command-line front end: a list of image files to activations plus manifest."""

import argparse
import logging
import os
import sys

from .config import MEAN_PIXEL, SPLITS, ExtractionConfig
from .extract import extract

log = logging.getLogger("scda_extractor")


def read_image_list(path):
    """Image paths from a text file, one per line.

    Blank lines and lines starting with # are skipped; relative paths
    resolve against the directory of the list file.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    base = os.path.dirname(os.path.abspath(path))
    images = []
    for raw in raw_lines:
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        images.append(os.path.normpath(os.path.join(base, stripped)))
    if not images:
        raise ValueError(f"image list {path} names no files")
    return images


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scda-extract",
        description="Dump CNN activations of images (original and mirrored) "
                    "as .scdat files plus a manifest fragment.",
    )
    parser.add_argument("--images", required=True,
                        help="text file with one image path per line")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--layers", default="pool5,relu5_2",
                        help="comma-separated layer names (default pool5,relu5_2)")
    parser.add_argument("--max-min-side", type=int, default=700,
                        help="downscale images whose short side exceeds this "
                             "(default 700; smaller images are never upscaled)")
    parser.add_argument("--weights", default="download",
                        help='"download", "random", or a state-dict path '
                             '(default download)')
    parser.add_argument("--seed", type=int, default=0,
                        help="weight init seed when --weights random")
    parser.add_argument("--split", choices=SPLITS, default="gallery",
                        help="split tag stamped on manifest lines")
    parser.add_argument("--mean", default=None,
                        help="override the subtracted mean pixel as R,G,B "
                             "(default " + ",".join(str(v) for v in MEAN_PIXEL) + ")")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("SCDA_LOG", "info").upper()
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        layers = tuple(s.strip() for s in args.layers.split(",") if s.strip())
        mean = MEAN_PIXEL
        if args.mean is not None:
            mean = tuple(float(v) for v in args.mean.split(","))
        config = ExtractionConfig(weights=args.weights, layers=layers,
                                  max_min_side=args.max_min_side,
                                  mean_pixel=mean, seed=args.seed,
                                  split=args.split)
        images = read_image_list(args.images)
        report = extract(images, args.out, config)
    except Exception as exc:
        log.error("%s", exc)
        return 1
    log.info("wrote %d image(s) to %s; %d skipped",
             len(report.extracted), report.manifest_path, len(report.skipped))
    return 0


def entry():
    sys.exit(main())
