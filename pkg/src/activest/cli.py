"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 runtime error. Pass --json for
machine-readable output on stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .classifier import load_model
from .cloud import load_cloud
from .metrics import confusion, iou_report_csv, miou, selection_stats
from .pipeline import (ExperimentConfig, infer_vote, load_dataset, oracle_annotate,
                       prepare_dataset, resume, run_experiment, save_dataset)
from .supervoxel import SegmentParams, load_partition, save_partition, segment
from .synth import SceneSpec, make_synthetic_dataset
from .cloud import AugmentParams, estimate_normals


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract wants 1
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="activest",
                     description="active self-training for point-cloud segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points-per-object", type=int, default=160)
    p.add_argument("--floor-points", type=int, default=2400)
    p.add_argument("--wall-points", type=int, default=650)
    p.add_argument("--noise", type=float, default=0.008)
    p.add_argument("--counts", type=int, nargs="+", default=None,
                   help="objects per class (floor wall table chair cabinet lamp)")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("segment", help="over-segment a cloud into super-voxels")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--angle", type=float, default=15.0)
    p.add_argument("--color", type=float, default=0.2)
    p.add_argument("--dist", type=float, default=0.05)
    p.add_argument("--min-size", type=int, default=10)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("run", help="run an oracle-mode experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("serve", help="serve the human annotation loop over HTTP")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)

    p = sub.add_parser("infer", help="predict labels for a cloud")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--partition", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--k-versions", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("stats", help="selection statistics of a finished run")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--json", action="store_true")
    return parser


def _default_out() -> Path:
    return Path(os.environ.get("ACTIVEST_DATA_DIR", "activest-data"))


def _load_labels_file(path: str) -> np.ndarray:
    """Labels as JSON {"labels": [...]} or any cloud file carrying semantics."""
    p = Path(path)
    if p.suffix == ".json":
        return np.asarray(json.loads(p.read_text())["labels"], dtype=np.int64)
    cloud = load_cloud(p)
    if cloud.gt_semantic is None:
        raise ValueError(f"{path} carries no semantic labels")
    return cloud.gt_semantic.astype(np.int64)


def _cmd_synth(args) -> int:
    from dataclasses import replace

    spec = SceneSpec(points_per_object=args.points_per_object,
                     floor_points=args.floor_points, wall_points=args.wall_points,
                     noise=args.noise)
    if args.counts is not None:
        spec = replace(spec, object_counts=tuple(args.counts))
    clouds = make_synthetic_dataset(args.scenes, args.seed, spec)
    manifest = save_dataset(clouds, args.out)
    if args.json:
        print(json.dumps({"manifest": str(manifest), "scenes": len(clouds),
                          "points": sum(c.n for c in clouds)}))
    else:
        print(f"wrote {len(clouds)} scenes to {manifest}")
    return 0


def _cmd_segment(args) -> int:
    cloud = load_cloud(args.infile)
    if cloud.normals is None:
        cloud = estimate_normals(cloud, k_neighbors=args.k)
    params = SegmentParams(k_neighbors=args.k, normal_angle_max=args.angle,
                           color_dist_max=args.color, spatial_dist_max=args.dist,
                           min_sv_size=args.min_size)
    partition = segment(cloud, params)
    save_partition(partition, args.out)
    if args.json:
        print(json.dumps({"n": partition.n, "s": partition.s, "out": args.out}))
    else:
        print(f"{partition.s} super-voxels over {partition.n} points -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_json(json.loads(Path(args.config).read_text()))
    if not config.dataset:
        raise ValueError("config has no dataset path")
    out_dir = Path(args.out) if args.out else _default_out()
    clouds = load_dataset(config.dataset)
    bundles = prepare_dataset(clouds, config)
    by_id = {c.scene_id: c for c in clouds}
    model, rows = run_experiment(config, lambda qs: oracle_annotate(qs, by_id),
                                 bundles, out_dir=out_dir)
    final = rows[-1]
    if args.json:
        print(json.dumps({"out": str(out_dir), "iterations": final.iteration,
                          "miou_percent": 100.0 * final.miou,
                          "labeled_true": final.labeled_true,
                          "labeled_pseudo": final.labeled_pseudo}))
    else:
        print(f"finished {final.iteration} iterations, "
              f"mIoU {100.0 * final.miou:.2f}% -> {out_dir}/metrics.csv")
    return 0


def _cmd_serve(args) -> int:
    from .gateway import serve

    config = ExperimentConfig.from_json(json.loads(Path(args.config).read_text()))
    out_dir = Path(args.out) if args.out else _default_out()
    serve(config, out_dir, host=args.host, port=args.port)
    return 0


def _cmd_infer(args) -> int:
    model = load_model(args.model)
    cloud = load_cloud(args.infile)
    if cloud.normals is None:
        cloud = estimate_normals(cloud)
    if args.partition:
        partition = load_partition(args.partition, expected_n=cloud.n)
        labels = infer_vote(model, cloud, partition, AugmentParams.identity(),
                            args.k_versions, args.seed)
    else:
        from .classifier import featurize, forward

        labels = np.argmax(forward(model, featurize(cloud)), axis=1)
    payload = {"scene": cloud.scene_id, "labels": labels.tolist()}
    if args.out:
        Path(args.out).write_text(json.dumps(payload))
    if args.json:
        print(json.dumps({"out": args.out, "n": int(labels.size)}))
    elif not args.out:
        print(json.dumps(payload))
    else:
        print(f"wrote {labels.size} labels to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    pred = _load_labels_file(args.pred)
    gt = _load_labels_file(args.gt)
    n_classes = int(max(pred.max(), gt.max())) + 1
    cm = confusion(pred, gt, n_classes)
    per_class, mean = miou(cm)
    if args.json:
        print(json.dumps({"miou_percent": 100.0 * mean,
                          "per_class_percent": [None if np.isnan(v) else 100.0 * v
                                                for v in per_class]}))
    else:
        print(iou_report_csv(cm), end="")
        print(f"mIoU {100.0 * mean:.1f}")
    return 0


def _cmd_stats(args) -> int:
    config, state = resume(args.checkpoint)
    dataset = args.dataset or config.dataset
    if not dataset:
        raise ValueError("no dataset path (pass --dataset)")
    clouds = {c.scene_id: c for c in load_dataset(dataset)}
    stats = selection_stats(state.label_state, clouds)
    if args.json:
        print(json.dumps(stats))
    else:
        print(json.dumps(stats, indent=2))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "segment": _cmd_segment,
    "run": _cmd_run,
    "serve": _cmd_serve,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
}


def cli_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
