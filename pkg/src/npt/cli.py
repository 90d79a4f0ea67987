"""Command-line entry point: data generation, training, evaluation, transfer,
ablations, gradient checking, and robustness probes.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Machine-readable
summaries print as `RESULT <subcommand> <PASS|FAIL> key=value ...`.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .dataset import load_dataset, make_dataset, save_dataset
from .gradcheck import run_gradcheck
from .meshio import (MeshError, Mesh, index_colors, normalize_unit_sphere,
                     read_obj, write_obj, write_ply_colored)
from .network import DESK_WIDTHS, REFERENCE_WIDTHS, forward
from .tensor import ShapeMismatch
from .trainer import (TrainConfig, TrainingDiverged, evaluate,
                      format_ablation_table, mesh_tensor, robustness_probe,
                      run_ablation_suite, train)


class CliError(RuntimeError):
    """Runtime failure surfaced to the operator with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _result(subcommand: str, ok: bool, **kv) -> int:
    pairs = " ".join(f"{key}={val}" for key, val in kv.items())
    print(f"RESULT {subcommand} {'PASS' if ok else 'FAIL'} {pairs}".rstrip())
    return 0 if ok else 2


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _parse_widths(text: str):
    if text == "desk":
        return DESK_WIDTHS
    if text == "reference":
        return REFERENCE_WIDTHS
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError("widths need 5 comma-separated ints, or 'desk'/'reference'")
    return tuple(int(p) for p in parts)


_TRAIN_FLAG_FIELDS = ("lr", "batch_size", "epochs", "lambda_edge", "variant",
                      "widths", "seed", "precision", "checkpoint_every",
                      "pairs_per_epoch")


def _add_train_flags(sub):
    sub.add_argument("--config", help="JSON file supplying training fields; flags override")
    sub.add_argument("--lr", type=float)
    sub.add_argument("--batch-size", type=int, dest="batch_size")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--lambda-edge", type=float, dest="lambda_edge")
    sub.add_argument("--variant", choices=("full", "concat1", "no_spadain", "maxpool"))
    sub.add_argument("--widths", type=_parse_widths)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--precision", choices=("f32", "f64"))
    sub.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    sub.add_argument("--pairs-per-epoch", type=int, dest="pairs_per_epoch")


def _train_config(args) -> TrainConfig:
    fields = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        valid = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(loaded) - valid
        if unknown:
            raise CliError(f"unknown config fields: {sorted(unknown)}")
        fields.update(loaded)
    for name in _TRAIN_FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    if "widths" in fields and not isinstance(fields["widths"], tuple):
        fields["widths"] = tuple(fields["widths"])
    return TrainConfig(**fields)


def cmd_gen_data(args) -> int:
    dataset = make_dataset(args.identities, args.poses, args.seed,
                           eval_identities=args.eval_identities,
                           eval_pairs_per_split=args.eval_pairs,
                           rings=args.rings, segments=args.segments)
    save_dataset(dataset, args.out, write_pool=not args.no_pool)
    pool = args.identities * args.poses
    return _result("gen-data", True, pool=pool,
                   eval_pairs=2 * args.eval_pairs,
                   vertices=dataset.body.num_vertices, out=args.out)


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    cfg = _train_config(args)
    t0 = time.perf_counter()
    params, log, checkpoints = train(dataset, cfg, out_dir=args.out)
    last = log.rows[-1]
    return _result("train", True, epochs=cfg.epochs,
                   total=_fmt(last["total"]), seen_pmd=_fmt(last["seen_pmd"]),
                   unseen_pmd=_fmt(last["unseen_pmd"]),
                   seconds=_fmt(time.perf_counter() - t0),
                   checkpoint=checkpoints[-1])


def cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    params, model_cfg = load_checkpoint(args.checkpoint)
    report = evaluate(params, model_cfg, dataset.eval_pairs)
    for row in report.per_sample:
        print(f"sample {row['index']:3d} {row['split']:7s} "
              f"pmd={row['pmd']:.6g} copy_identity={row['copy_identity_pmd']:.6g}")
    return _result("eval", True,
                   seen_pmd=_fmt(report.seen_pmd), unseen_pmd=_fmt(report.unseen_pmd),
                   copy_identity_seen=_fmt(report.copy_identity_seen),
                   copy_identity_unseen=_fmt(report.copy_identity_unseen))


def cmd_transfer(args) -> int:
    for path in (args.pose, args.identity, args.checkpoint):
        if not os.path.exists(path):
            raise CliError(f"missing input file: {path}")
    pose = read_obj(args.pose)
    ident = read_obj(args.identity)
    if pose.num_vertices != ident.num_vertices:
        raise CliError(f"vertex-count mismatch: pose mesh has {pose.num_vertices}, "
                       f"identity mesh has {ident.num_vertices}")
    params, model_cfg = load_checkpoint(args.checkpoint)
    pose_n, _, _ = normalize_unit_sphere(pose)
    id_n, centroid, scale = normalize_unit_sphere(ident)
    pose_t = mesh_tensor(pose_n.vertices, np.float32)
    id_t = mesh_tensor(id_n.vertices, np.float32)
    pred = forward(pose_t, id_t, params, model_cfg).data[0].T
    result = Mesh(pred.astype(np.float64) * scale + centroid, ident.faces.copy())
    tmp = args.out + ".tmp"
    write_obj(result, tmp)
    os.replace(tmp, args.out)
    if args.colored_ply:
        tmp = args.colored_ply + ".tmp"
        write_ply_colored(result, index_colors(result.num_vertices), tmp)
        os.replace(tmp, args.colored_ply)
    return _result("transfer", True, out=args.out, vertices=result.num_vertices)


def cmd_ablate(args) -> int:
    dataset = load_dataset(args.data)
    cfg = _train_config(args)
    rows = run_ablation_suite(dataset, cfg, out_dir=args.out)
    print(format_ablation_table(rows))
    by = {row["variant"]: row["seen_pmd"] for row in rows}
    return _result("ablate", True, **{k: _fmt(v) for k, v in by.items()})


def cmd_grad_check(args) -> int:
    t0 = time.perf_counter()
    checks, worst, ok = run_gradcheck(seed=args.seed, tolerance=args.tolerance)
    for name, err in checks:
        print(f"gradcheck {name}: max_rel_err={err:.3e}")
    return _result("grad-check", ok, max_rel_err=f"{worst:.3e}",
                   tolerance=f"{args.tolerance:g}",
                   seconds=_fmt(time.perf_counter() - t0))


def cmd_probe(args) -> int:
    dataset = load_dataset(args.data)
    params, model_cfg = load_checkpoint(args.checkpoint)
    if not 0 <= args.sample < len(dataset.eval_pairs):
        raise CliError(f"sample index {args.sample} out of range "
                       f"(dataset has {len(dataset.eval_pairs)} eval pairs)")
    stats = robustness_probe(params, model_cfg, dataset.eval_pairs[args.sample],
                             noise_sigma=args.noise_sigma,
                             n_shuffles=args.shuffles, seed=args.seed)
    return _result("probe", True, **{k: _fmt(v) for k, v in stats.items()})


def build_parser() -> _Parser:
    parser = _Parser(prog="npt", description=__doc__)
    subs = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    sub = subs.add_parser("gen-data", help="generate a synthetic dataset")
    sub.add_argument("--identities", type=int, default=8)
    sub.add_argument("--poses", type=int, default=50)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.add_argument("--eval-identities", type=int, default=4, dest="eval_identities")
    sub.add_argument("--eval-pairs", type=int, default=24, dest="eval_pairs")
    sub.add_argument("--rings", type=int, default=6)
    sub.add_argument("--segments", type=int, default=8)
    sub.add_argument("--no-pool", action="store_true", dest="no_pool",
                     help="skip writing the raw training-pool OBJ files")
    sub.set_defaults(func=cmd_gen_data)

    sub = subs.add_parser("train", help="train a model on a generated dataset")
    sub.add_argument("--data", required=True)
    sub.add_argument("--out", required=True)
    _add_train_flags(sub)
    sub.set_defaults(func=cmd_train)

    sub = subs.add_parser("eval", help="evaluate a checkpoint on the eval pairs")
    sub.add_argument("--data", required=True)
    sub.add_argument("--checkpoint", required=True)
    sub.set_defaults(func=cmd_eval)

    sub = subs.add_parser("transfer", help="run pose transfer on two meshes")
    sub.add_argument("--pose", required=True)
    sub.add_argument("--identity", required=True)
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--colored-ply", dest="colored_ply")
    sub.set_defaults(func=cmd_transfer)

    sub = subs.add_parser("ablate", help="train and compare all ablation variants")
    sub.add_argument("--data", required=True)
    sub.add_argument("--out")
    _add_train_flags(sub)
    sub.set_defaults(func=cmd_ablate)

    sub = subs.add_parser("grad-check", help="finite-difference check of all gradients")
    sub.add_argument("--seed", type=int, default=1)
    sub.add_argument("--tolerance", type=float, default=1e-4)
    sub.set_defaults(func=cmd_grad_check)

    sub = subs.add_parser("probe", help="noise and shuffle robustness probe")
    sub.add_argument("--data", required=True)
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--sample", type=int, default=0)
    sub.add_argument("--noise-sigma", type=float, default=0.01, dest="noise_sigma")
    sub.add_argument("--shuffles", type=int, default=10)
    sub.add_argument("--seed", type=int, default=0)
    sub.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, CheckpointError, MeshError, ShapeMismatch,
            TrainingDiverged, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"npt {args.subcommand}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
