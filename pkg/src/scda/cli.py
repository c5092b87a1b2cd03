"""Batch front end: manifests in, stores/indexes/reports out.

Subcommands: features, index, query, eval-map, eval-loc, compress, sort-dim.
Every command validates its whole input before writing anything, so a failed
run leaves no partial artifacts. Errors print one JSON object to stderr,
{"error": {"code": ..., "message": ...}}, and exit nonzero. Set SCDA_LOG to
debug/info/warning for progress logging.
"""

import argparse
import json
import logging
import os
import sys

from . import aggregation as agg
from . import compression as comp
from ._binio import FormatError, atomic_write_bytes
from .localization import evaluate_localization, iou
from .manifest import ManifestError, load_manifest
from .pipeline import (DEFAULT_K, PIPELINE_VARIANTS, required_tensors,
                       run_pipeline, stack_features)
from .retrieval import (attribute_sort, build_index, load_index, map_report,
                        query, save_index)
from .selection import write_mask_pgm

log = logging.getLogger("scda")

SPLIT_CHOICES = ("gallery", "query", "all")


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _bbox_list(box):
    return [int(box.x_min), int(box.y_min), int(box.x_max), int(box.y_max)]


def _emit_json(obj, out_path):
    """Pretty, key-sorted JSON to a file (atomically) or stdout."""
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out_path:
        atomic_write_bytes(out_path, text.encode("utf-8"))
        log.info("wrote %s", out_path)
    else:
        sys.stdout.write(text)


def _select_entries(entries, split: str):
    if split == "all":
        selected = list(entries)
    else:
        selected = [e for e in entries if e.split == split]
    if not selected:
        raise CliError("empty-selection", f"no entries in split {split!r}")
    return selected


def _check_required_tensors(entries, variant: str):
    needed = required_tensors(variant)
    missing = []
    for entry in entries:
        for layer, orientation in needed:
            if orientation not in entry.tensors.get(layer, {}):
                missing.append(f"{entry.image_id}: {layer}/{orientation}")
    if missing:
        raise CliError(
            "missing-tensors",
            f"variant {variant!r} needs tensors these entries lack:\n  "
            + "\n  ".join(missing))


def _cmd_features(args) -> int:
    entries = load_manifest(args.manifest)
    selected = _select_entries(entries, args.split)
    # The codebook trains on gallery descriptors, so vlad touches every entry
    # even when only one split is written out.
    to_process = entries if args.variant == "vlad" else selected
    _check_required_tensors(to_process, args.variant)

    run = run_pipeline(to_process, args.variant, alpha=args.alpha,
                       connectivity=args.connectivity, k=args.k,
                       seed=args.seed, threads=args.threads)
    by_id = {r.image_id: r for r in run.results}
    results = [by_id[e.image_id] for e in selected]
    matrix = stack_features(results)

    if args.masks_out:
        names = {}
        for result in results:
            name = result.image_id.replace("/", "_") + ".pgm"
            if name in names:
                raise CliError(
                    "mask-name-collision",
                    f"ids {names[name]!r} and {result.image_id!r} both map "
                    f"to mask file {name!r}")
            names[name] = result.image_id
        os.makedirs(args.masks_out, exist_ok=True)
        for name, image_id in names.items():
            write_mask_pgm(by_id[image_id].mask,
                           os.path.join(args.masks_out, name))
        boxes = {r.image_id: _bbox_list(r.bbox) for r in results}
        _emit_json(boxes, os.path.join(args.masks_out, "bboxes.json"))

    agg.write_feature_store(
        args.out,
        ids=[e.image_id for e in selected],
        labels=[e.label for e in selected],
        matrix=matrix,
        variant=args.variant)
    log.info("wrote %d %s features to %s", len(selected), args.variant,
             args.out)
    return 0


def _cmd_index(args) -> int:
    store = agg.read_feature_store(args.features)
    index = build_index(store.matrix, store.labels, store.ids)
    save_index(index, args.out)
    log.info("indexed %d vectors of dim %d", len(index), index.dim)
    return 0


def _query_triples(store):
    return [(store.matrix[i], store.labels[i], store.ids[i])
            for i in range(len(store))]


def _cmd_query(args) -> int:
    index = load_index(args.index)
    store = agg.read_feature_store(args.features)
    queries = []
    for vector, label, query_id in _query_triples(store):
        result = query(index, vector, args.k, query_id=query_id,
                       query_label=label)
        queries.append({
            "id": result.query_id,
            "ranked": [{"id": gid, "score": score}
                       for gid, score in result.ranked],
        })
    _emit_json({"k": args.k, "queries": queries}, args.out)
    return 0


def _cmd_eval_map(args) -> int:
    index = load_index(args.index)
    store = agg.read_feature_store(args.features)
    report = map_report(index, _query_triples(store), args.k)
    _emit_json(report, args.out)
    return 0


def _cmd_eval_loc(args) -> int:
    entries = load_manifest(args.manifest)
    no_truth = [e.image_id for e in entries if e.gt_bbox is None]
    if no_truth:
        raise CliError("missing-gt",
                       "entries lack gt_bbox: " + ", ".join(no_truth))
    _check_required_tensors(entries, "scda")
    run = run_pipeline(entries, "scda", connectivity=args.connectivity,
                       threads=args.threads)
    predicted = [r.bbox for r in run.results]
    truth = [e.gt_bbox for e in entries]
    report = evaluate_localization(predicted, truth, threshold=args.threshold)
    per_image = []
    for entry, result in zip(entries, run.results):
        per_image.append({
            "id": entry.image_id,
            "iou": iou(result.bbox, entry.gt_bbox),
            "predicted": _bbox_list(result.bbox),
            "truth": _bbox_list(entry.gt_bbox),
        })
    _emit_json({
        "threshold": report.threshold,
        "pcp": report.pcp,
        "mean_iou": report.mean_iou,
        "iou_histogram": list(report.iou_histogram),
        "count": report.count,
        "per_image": per_image,
    }, args.out)
    return 0


def _cmd_compress(args) -> int:
    store = agg.read_feature_store(args.features)
    if args.transform:
        if args.compress is not None or args.dim is not None:
            raise CliError("usage", "--transform applies a saved transform; "
                                    "--compress/--dim are for fitting one")
        transform = comp.load_transform(args.transform)
    else:
        if args.compress is None or args.dim is None:
            raise CliError("usage",
                           "fitting needs both --compress and --dim")
        transform = comp.fit(store.matrix, args.compress, args.dim)
    reduced = comp.apply_matrix(transform, store.matrix)
    if args.transform_out:
        comp.save_transform(transform, args.transform_out)
        log.info("wrote transform to %s", args.transform_out)
    agg.write_feature_store(args.out, ids=store.ids, labels=store.labels,
                            matrix=reduced, variant="compressed")
    log.info("compressed %d rows: %d -> %d dims", len(store),
             store.matrix.shape[1], transform.target_dim)
    return 0


def _cmd_sort_dim(args) -> int:
    index = load_index(args.index)
    ids = attribute_sort(index, args.dim_index, args.direction)
    _emit_json({"dim_index": args.dim_index, "direction": args.direction,
                "ids": ids}, args.out)
    return 0


def _add_threads_flag(parser):
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (default: logical cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scda",
        description="Object localization, descriptor aggregation and "
                    "retrieval over stored activation tensors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features",
                       help="compute one feature vector per manifest entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", required=True, choices=PIPELINE_VARIANTS)
    p.add_argument("--alpha", type=float, default=agg.DEFAULT_ALPHA,
                   help="early-layer weight for the *_plus variants")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--k", type=int, default=DEFAULT_K,
                   help="vlad codebook size")
    p.add_argument("--seed", type=int, default=0,
                   help="vlad codebook training seed")
    p.add_argument("--split", choices=SPLIT_CHOICES, default="all")
    p.add_argument("--masks-out",
                   help="directory for per-image mask PGMs and bboxes.json")
    _add_threads_flag(p)
    p.add_argument("--out", required=True, help="feature store to write")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("index", help="build a search index from a store")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("query", help="rank the gallery for each query row")
    p.add_argument("--index", required=True)
    p.add_argument("--features", required=True, help="query feature store")
    p.add_argument("--k", type=int, required=True, help="results per query")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("eval-map", help="top-k mean average precision")
    p.add_argument("--index", required=True)
    p.add_argument("--features", required=True, help="query feature store")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_map)

    p = sub.add_parser("eval-loc",
                       help="box overlap of predicted masks vs gt_bbox")
    p.add_argument("--manifest", required=True)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--threshold", type=float, default=0.5)
    _add_threads_flag(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_loc)

    p = sub.add_parser("compress",
                       help="project a store to fewer dimensions")
    p.add_argument("--features", required=True)
    p.add_argument("--compress", choices=comp.KINDS,
                   help="projection to fit on this store")
    p.add_argument("--dim", type=int, help="target dimensionality")
    p.add_argument("--transform", help="apply this saved transform instead")
    p.add_argument("--transform-out", help="save the fitted transform here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("sort-dim",
                       help="order gallery ids by one feature coordinate")
    p.add_argument("--index", required=True)
    p.add_argument("--dim-index", type=int, required=True)
    p.add_argument("--direction", choices=("descending", "ascending"),
                   default="descending")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sort_dim)

    return parser


def _configure_logging():
    level_name = os.environ.get("SCDA_LOG", "warning").lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO,
              "warning": logging.WARNING, "error": logging.ERROR}
    logging.basicConfig(
        level=levels.get(level_name, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s")


def _fail(code: str, message: str) -> int:
    sys.stderr.write(json.dumps(
        {"error": {"code": code, "message": message}}, sort_keys=True) + "\n")
    return 1


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.code, str(exc))
    except ManifestError as exc:
        return _fail("manifest", str(exc))
    except FormatError as exc:
        return _fail(exc.code, str(exc))
    except comp.RankDeficiencyError as exc:
        return _fail("rank-deficient", str(exc))
    except FileNotFoundError as exc:
        return _fail("io", str(exc))
    except (ValueError, KeyError, IndexError) as exc:
        return _fail("invalid", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))


def entry():
    sys.exit(main())
