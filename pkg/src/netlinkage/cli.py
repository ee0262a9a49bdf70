"""Command line interface.

Subcommands:

* ``run``       execute a batch configuration file
* ``validate``  static checks on a configuration without running it
* ``synth``     generate a synthetic dataset with known truth
* ``eval``      score a predicted pair set against a truth pair set
* ``baseline``  network-only greedy matching from anchor pairs
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import types

from .baseline import greedy_match
from .config import RunConfig
from .data import (DataError, load_network, load_pairs, write_network,
                   write_pairs, write_profiles)
from .evaluation import confusion, precision_recall_f1
from .runner import run as run_batch
from .synthetic import SyntheticSpec, generate_synthetic


def _int_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _float_list(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _str_list(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netlinkage",
        description="Bayesian record linkage across social networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a batch configuration")
    p_run.add_argument("--config", required=True, help="flat key=value file")
    p_run.add_argument("--output", default=None,
                       help="override the configured output directory")
    p_run.add_argument("--workers", type=int, default=None,
                       help="override the configured worker count")
    p_run.add_argument("--quiet", action="store_true")

    p_val = sub.add_parser("validate", help="check a configuration")
    p_val.add_argument("--config", required=True)

    p_syn = sub.add_parser("synth", help="generate a synthetic dataset")
    p_syn.add_argument("--output", required=True, help="output directory")
    p_syn.add_argument("--files", type=_int_list, default=(25, 25),
                       help="comma-separated file sizes")
    group = p_syn.add_mutually_exclusive_group()
    group.add_argument("--n-latent", type=int, default=None,
                       help="number of distinct individuals")
    group.add_argument("--match-fraction", type=float, default=None,
                       help="fraction of the maximum possible matches")
    p_syn.add_argument("--fields", type=int, default=1,
                       help="number of profile fields")
    p_syn.add_argument("--levels", type=_int_list, default=(10,),
                       help="levels per field (single value is shared)")
    p_syn.add_argument("--kinds", type=_str_list, default=None,
                       help="categorical or string, per field")
    p_syn.add_argument("--dim", type=int, default=2)
    p_syn.add_argument("--beta", type=_float_list, default=(0.0,),
                       help="edge intercept per file (single value is shared)")
    p_syn.add_argument("--sigma2", type=float, default=1.0)
    p_syn.add_argument("--psi", type=_float_list, default=(0.01,),
                       help="distortion probability per field")
    p_syn.add_argument("--lam", "--lambda", dest="lam", type=float,
                       default=1.0, help="string distortion decay")
    p_syn.add_argument("--distinct-profiles", action="store_true",
                       help="force distinct latent profiles")
    p_syn.add_argument("--no-networks", action="store_true")
    p_syn.add_argument("--seed", type=int, default=0)

    p_eval = sub.add_parser("eval", help="score predicted pairs against truth")
    p_eval.add_argument("--predicted", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--sizes", type=_int_list, required=True,
                        help="records per file, comma separated")

    p_base = sub.add_parser("baseline", help="network-only greedy matching")
    p_base.add_argument("--network-a", required=True)
    p_base.add_argument("--network-b", required=True)
    p_base.add_argument("--sizes", type=_int_list, required=True,
                        help="actor counts of the two networks")
    p_base.add_argument("--anchors", required=True,
                        help="known matching pairs to grow from")
    p_base.add_argument("--cutoff", type=float, default=0.95)
    p_base.add_argument("--output", default=None,
                        help="where to write the matched pairs")
    p_base.add_argument("--truth", default=None,
                        help="optional truth pairs to score against")
    return parser


def _cmd_run(args) -> int:
    config = RunConfig.from_file(args.config)
    if args.output is not None:
        config.output = os.path.abspath(args.output)
    if args.workers is not None:
        config.workers = args.workers
    out_dir = run_batch(config, quiet=args.quiet)
    manifest = json.loads(
        open(os.path.join(out_dir, "manifest.json"), encoding="utf-8").read())
    failed = [c for c in manifest["cells"] if c["status"] != "ok"]
    if not args.quiet:
        print("output written to %s" % out_dir)
    return 1 if failed else 0


def _cmd_validate(args) -> int:
    config = RunConfig.from_file(args.config)
    report = config.validate()
    print(json.dumps(report, indent=2))
    return 1 if report["issues"] else 0


def _cmd_synth(args) -> int:
    levels = args.levels
    if len(levels) == 1:
        levels = levels * args.fields
    beta = args.beta
    if len(beta) == 1:
        beta = beta * len(args.files)
    psi = args.psi
    if len(psi) == 1:
        psi = psi * args.fields
    spec = SyntheticSpec(
        file_sizes=tuple(args.files), n_latent=args.n_latent,
        match_fraction=args.match_fraction, n_fields=args.fields,
        n_levels=levels, field_kinds=args.kinds, dim=args.dim,
        beta=beta, sigma2=args.sigma2, psi=psi, lam=args.lam,
        distinct_profiles=args.distinct_profiles,
        with_networks=not args.no_networks, seed=args.seed)
    dataset, truth = generate_synthetic(spec)
    os.makedirs(args.output, exist_ok=True)
    profile_paths = [os.path.join(args.output, "profiles_%d.csv" % (j + 1))
                     for j in range(dataset.n_files)]
    write_profiles(dataset, profile_paths)
    if dataset.has_networks:
        for j, adj in enumerate(dataset.networks):
            write_network(adj, os.path.join(args.output,
                                            "network_%d.txt" % (j + 1)))
    write_pairs(truth, os.path.join(args.output, "truth.csv"))
    print(json.dumps({
        "output": args.output, "sizes": list(dataset.sizes),
        "n_fields": dataset.n_fields, "n_matches": len(truth),
        "n_latent": sum(dataset.sizes) - len(truth),
        "networks": dataset.has_networks, "seed": args.seed}, indent=2))
    return 0


def _cmd_eval(args) -> int:
    predicted = load_pairs(args.predicted)
    truth = load_pairs(args.truth)
    shim = types.SimpleNamespace(sizes=list(args.sizes))
    counts = confusion(predicted, truth, shim)
    scores = precision_recall_f1(counts)
    print(json.dumps({
        "tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "tn": counts.tn,
        "recall": scores.recall, "precision": scores.precision,
        "f1": scores.f1}, indent=2))
    return 0


def _cmd_baseline(args) -> int:
    if len(args.sizes) != 2:
        raise DataError("baseline needs exactly two sizes")
    net_a = load_network(args.network_a, args.sizes[0], file_id=1)
    net_b = load_network(args.network_b, args.sizes[1], file_id=2)
    anchors = load_pairs(args.anchors)
    result = greedy_match(net_a, net_b, anchors, cutoff=args.cutoff)
    if args.output:
        write_pairs(result.pairs, args.output)
    summary = {"method": result.method, "cutoff": result.threshold,
               "n_anchors": len(anchors), "n_matched": len(result.pairs)}
    if args.truth:
        truth = load_pairs(args.truth)
        shim = types.SimpleNamespace(sizes=list(args.sizes))
        counts = confusion(result.pairs, truth, shim)
        scores = precision_recall_f1(counts)
        summary.update({"tp": counts.tp, "fp": counts.fp, "fn": counts.fn,
                        "recall": scores.recall,
                        "precision": scores.precision, "f1": scores.f1})
    print(json.dumps(summary, indent=2))
    return 0


_COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "synth": _cmd_synth,
             "eval": _cmd_eval, "baseline": _cmd_baseline}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
