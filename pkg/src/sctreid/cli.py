"""Operator entry points: synth, train, eval, ablate, sweep-k.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure. Relative
--out paths resolve under $SCTREID_OUT_ROOT when that variable is set. Every
command is deterministic given identical config and seed.
"""

import argparse
import json
import os
import shutil
import sys

import torch

from sctreid import config as cfgmod
from sctreid.benchmark import (format_ablation_table, reference_generator_config,
                               reference_trainer_config, run_ablation)
from sctreid.checkpoint import load_checkpoint
from sctreid.encoder import build_encoder
from sctreid.errors import (CheckpointError, ConfigError, DataError,
                            NumericError, SctReidError)
from sctreid.evaluation import evaluate_manifests
from sctreid.manifests import load_manifest, save_manifest, validate_sct
from sctreid.synth import synthesize_eval_split, synthesize_sct_dataset
from sctreid.trainer import run as trainer_run


def resolve_out(path):
    root = os.environ.get("SCTREID_OUT_ROOT", "")
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _mapping(args):
    return cfgmod.merged_mapping(getattr(args, "config", None),
                                 getattr(args, "set", None))


def cmd_synth(args):
    gen = cfgmod.generator_config(_mapping(args))
    out = resolve_out(args.out)
    os.makedirs(out, exist_ok=True)
    source, target = synthesize_sct_dataset(gen, args.seed)
    save_manifest(source, os.path.join(out, "source_train.jsonl"))
    save_manifest(target, os.path.join(out, "target_train.jsonl"))
    written = ["source_train.jsonl", "target_train.jsonl"]
    if gen.eval_identities:
        query, gallery = synthesize_eval_split(gen, args.seed)
        save_manifest(query, os.path.join(out, "target_query.jsonl"))
        save_manifest(gallery, os.path.join(out, "target_gallery.jsonl"))
        written += ["target_query.jsonl", "target_gallery.jsonl"]
    report = validate_sct(target)
    print(json.dumps({
        "is_sct": report.is_sct,
        "violating_identity_ids": report.violating_identity_ids,
        "cross_camera_positive_pairs": report.cross_camera_positive_pairs,
        "files": written,
    }))
    print(report.summary())
    return 0


def _load_train_pair(args):
    source = load_manifest(args.source)
    target = load_manifest(args.target)
    if source.domain != "source" or target.domain != "target":
        raise DataError("expected a source-domain and a target-domain manifest")
    return source, target


def cmd_train(args):
    mapping = _mapping(args)
    cfg = cfgmod.trainer_config(mapping)
    source, target = _load_train_pair(args)
    cfgmod.configure_encoder_for_manifest(cfg, source)
    out = resolve_out(args.out)
    result = trainer_run(cfg, source, target, args.seed, out_dir=out,
                         resume=args.resume)
    print(f"trained {cfg.schedule.total_epochs} epochs; "
          f"final checkpoint: {result.checkpoint_dir}")
    for event in result.events:
        print(f"  epoch {event['epoch']}: {event['event']}")
    return 0


def encoder_from_checkpoint(path):
    data = load_checkpoint(path)
    tcfg = cfgmod.trainer_config_from_snapshot(data.config_snapshot)
    encoder = build_encoder(tcfg.encoder)
    state = {name[len("encoder."):]: torch.as_tensor(arr)
             for name, arr in data.params.items() if name.startswith("encoder.")}
    encoder.load_state_dict(state)
    encoder.eval()
    return encoder, tcfg, data


def cmd_eval(args):
    opts = cfgmod.eval_options(_mapping(args))
    encoder, tcfg, _ = encoder_from_checkpoint(args.checkpoint)
    query = load_manifest(args.query)
    gallery = load_manifest(args.gallery)
    report = evaluate_manifests(encoder, query, gallery,
                                max_rank=opts["max_rank"],
                                use_locals=opts["use_locals"])
    text = report.to_json(resolve_out(args.out) if args.out else None)
    print(text)
    if args.plot:
        from sctreid.plots import cmc_curve

        cmc_curve(report, resolve_out(args.plot))
    return 0


def cmd_ablate(args):
    mapping = _mapping(args)
    gen_map, trainer_map, eval_map = cfgmod.split_mapping(
        mapping, cfgmod.GENERATOR_KEYS, cfgmod.TRAINER_KEYS, cfgmod.EVAL_KEYS)
    gen = reference_generator_config()
    for key, value in gen_map.items():
        setattr(gen, key, value)
    tcfg = cfgmod.apply_trainer_mapping(reference_trainer_config(), trainer_map)
    if gen.eval_identities < 1:
        raise ConfigError("ablation needs eval_identities >= 1")
    opts = cfgmod.eval_options(eval_map)
    cfgmod.configure_encoder_for_manifest(
        tcfg, synthesize_sct_dataset(gen, args.seed)[0])
    out = resolve_out(args.out)
    os.makedirs(out, exist_ok=True)
    outcome = run_ablation(gen, tcfg, args.seed, out_dir=out,
                           max_rank=opts["max_rank"],
                           use_locals=opts["use_locals"],
                           progress=lambda msg: print(msg, flush=True))
    with open(os.path.join(out, "ablation.json"), "w") as fh:
        json.dump(outcome, fh, indent=1)
    print(format_ablation_table(outcome))
    return 0


def cmd_sweep_k(args):
    mapping = _mapping(args)
    opts = cfgmod.eval_options({k: v for k, v in mapping.items()
                                if k in cfgmod.EVAL_KEYS})
    data = load_checkpoint(args.checkpoint)
    tcfg = cfgmod.trainer_config_from_snapshot(data.config_snapshot)
    if "icl" not in tcfg.components:
        tcfg.components = tuple(tcfg.components) + ("icl",)
    consistency_start = tcfg.schedule.stage_start("consistency")
    if data.epoch_next > consistency_start:
        raise ConfigError(
            f"checkpoint is at epoch {data.epoch_next}, past the consistency "
            f"window start ({consistency_start}); use a stage-II checkpoint")
    source, target = _load_train_pair(args)
    query = load_manifest(args.query)
    gallery = load_manifest(args.gallery)
    ks = [int(k) for k in str(args.k).split(",") if k.strip()]
    if not ks:
        raise ConfigError("--k needs a comma-separated list of cluster counts")

    out = resolve_out(args.out)
    os.makedirs(out, exist_ok=True)
    results = []
    for k in ks:
        variant_dir = os.path.join(out, f"k_{k}")
        ckpt_dir = os.path.join(variant_dir, "checkpoints",
                                os.path.basename(args.checkpoint.rstrip("/")))
        if os.path.exists(ckpt_dir):
            shutil.rmtree(ckpt_dir)
        shutil.copytree(args.checkpoint, ckpt_dir)
        cfg_k = cfgmod.trainer_config_from_snapshot(data.config_snapshot)
        cfg_k.components = tcfg.components
        cfg_k.cluster_count = k
        result = trainer_run(cfg_k, source, target, args.seed,
                             out_dir=variant_dir, resume=True)
        report = evaluate_manifests(result.encoder, query, gallery,
                                    max_rank=opts["max_rank"],
                                    use_locals=opts["use_locals"])
        entry = {"k": k, "map": report.map, "rank1": report.rank(1),
                 "degenerate": k == len(target)}
        results.append(entry)
        flag = " (degenerate: one cluster per sample)" if entry["degenerate"] else ""
        print(f"k={k}: mAP={report.map:.4f} Rank-1={report.rank(1):.4f}{flag}")

    payload = {"seed": args.seed, "results": results}
    with open(os.path.join(out, "sweep_k.json"), "w") as fh:
        json.dump(payload, fh, indent=1)
    from sctreid.plots import sweep_curve

    sweep_curve([r["k"] for r in results], [r["rank1"] for r in results],
                [r["map"] for r in results], os.path.join(out, "sweep_k.png"))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sctreid",
        description="Domain-adaptive re-ID for single-camera-training targets")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, required=True)
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate synthetic SCT manifests")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the staged trainer")
    common(p)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="retrieval metrics from a checkpoint")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--out", help="write the metrics report JSON here")
    p.add_argument("--plot", help="write a CMC curve PNG here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="cumulative-component comparison on the "
                                      "synthetic benchmark")
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-k", help="rerun the consistency stage for each "
                                       "cluster count")
    common(p)
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint taken before the consistency window")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--k", required=True, help="comma-separated cluster counts")
    p.set_defaults(func=cmd_sweep_k)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except SctReidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
