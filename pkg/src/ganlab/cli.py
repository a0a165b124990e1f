"""Command-line entry point: ``ganlab <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid input).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments, io, metrics, selector, synth
from .config import ConfigError, RunConfig, load_config

EXIT_USAGE = 1
EXIT_DATA = 2

TRAIN_SPECS = {"source1": synth.source1_spec, "source2": synth.source2_spec, "target": synth.target_spec}
METRIC_KINDS = ("w1", "w1-sliced", "fid", "kid", "precision", "recall")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed_list(text: str) -> list[int]:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty seed list")
    return out


def _run_options(p: argparse.ArgumentParser, name: str):
    p.add_argument("--config", type=Path, help="key = value run configuration file")
    p.add_argument("--name", default=None, help=f"run name (default {name})")
    p.add_argument("--out", type=Path, default=Path("runs"), help="parent directory for run outputs")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ganlab", description="GAN transfer diagnostics on 2D data and proxy tables.")
    sub = ap.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train a GAN from scratch on a 2D distribution")
    p.add_argument("--data", choices=sorted(TRAIN_SPECS), default="source1")
    p.add_argument("--steps", type=int, default=None, help="generator steps (default from config)")
    p.add_argument("--seed", type=int, default=0)
    _run_options(p, "train-<data>")

    p = sub.add_parser("finetune", help="continue training a checkpoint on the target mixture")
    p.add_argument("--init", type=Path, required=True, help="checkpoint file (.ganc)")
    p.add_argument("--steps", type=int, default=None, help="generator steps (default finetune_steps)")
    p.add_argument("--seed", type=int, default=0)
    _run_options(p, "finetune")

    p = sub.add_parser("metrics", help="compute a metric between two point files (.feat or .csv)")
    p.add_argument("--kind", choices=METRIC_KINDS, required=True)
    p.add_argument("--a", type=Path, required=True, help="reference / real set")
    p.add_argument("--b", type=Path, required=True, help="compared / generated set")
    p.add_argument("--k", type=int, default=5, help="neighbour count for precision/recall")
    p.add_argument("--projections", type=int, default=512, help="projections for w1-sliced")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep", help="finetune a series of Source-I snapshots and correlate")
    p.add_argument("--n-checkpoints", type=int, default=None)
    p.add_argument("--full", action="store_true", help="use all 100 snapshots")
    p.add_argument("--finetune-steps", type=int, default=None)
    p.add_argument("--source-steps", type=int, default=None, help="Source-I training steps")
    p.add_argument("--seed", type=int, default=0)
    _run_options(p, "sweep")

    p = sub.add_parser("fig2", help="target GANs from three initializations")
    p.add_argument("--seeds", type=_seed_list, default=None, help="comma list (default from config)")
    p.add_argument("--steps", type=int, default=None, help="generator steps for every training")
    p.add_argument("--seed", type=int, default=0, help="echoed; fig2 itself uses --seeds")
    _run_options(p, "fig2")

    p = sub.add_parser("dynamics", help="sample dynamics from source and random inits")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--n-latents", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _run_options(p, "dynamics")

    p = sub.add_parser("rank-sources", help="rank sources by a proxy metric")
    p.add_argument("--metric", choices=selector.METRICS, required=True)
    p.add_argument("--target", type=Path, help="target feature file; omit to rank fixture tables")
    p.add_argument("--source", action="append", default=[], metavar="LABEL=PATH",
                   help="source feature file (repeatable)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify-table4", help="count selector failures against the ground-truth grid")
    p.add_argument("--regime", choices=("real", "generated"), required=True)
    p.add_argument("--tables", type=Path, default=None,
                   help="directory of fid.csv, kid.csv, precision.csv, recall.csv (required for generated)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("config", help="show configuration")
    p.add_argument("--dump", action="store_true", required=True, help="print all keys with values")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    return ap


def _config(args, default_name: str, **overrides) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    name = getattr(args, "name", None) or (cfg.name if "name" in cfg._set else default_name)
    return cfg.with_overrides(name=name, **overrides)


def _echo_seed(args):
    print(f"seed = {args.seed}")


def _write_report(rep, args) -> Path:
    out = args.out / rep.name
    rep.write(out, force=args.force)
    print(rep.summary_text(), end="")
    print(f"wrote {out}")
    return out


def _cmd_train(args) -> int:
    cfg = _config(args, f"train-{args.data}", generator_steps=args.steps)
    spec = TRAIN_SPECS[args.data]()
    final, _ = synth.gan_train(spec, cfg.train_config(args.seed), keep_snapshots=False)
    _summarise_checkpoint(final, cfg, args, {"data": args.data, "seed": args.seed, "steps": cfg.generator_steps})
    return 0


def _summarise_checkpoint(ckpt, cfg: RunConfig, args, summary: dict):
    ref = synth.sample(synth.target_spec(), cfg.eval_samples, seed=experiments.derive_seed(args.seed, 1)).points
    pts = synth.generate(ckpt.generator, cfg.eval_samples, seed=experiments.derive_seed(args.seed, 2)).points
    centers = np.array(synth.circle_centers())
    summary["w1_to_target"] = metrics.w1_exact(pts, ref, method=cfg.w1_method)
    summary["modes"] = metrics.mode_coverage(
        synth.generate(ckpt.generator, cfg.mode_samples, seed=experiments.derive_seed(args.seed, 3)), centers)
    rep = experiments.ExperimentReport(cfg.name, summary=summary)
    rep.add_table("records.csv", ["x0", "x1"], pts.tolist())
    out = args.out / cfg.name
    ck_path = out / "checkpoint.ganc"
    if ck_path.exists() and not args.force:
        raise FileExistsError(f"{ck_path} exists; pass --force to overwrite")
    _write_report(rep, args)
    io.write_checkpoint(ck_path, ckpt, force=args.force)
    print(f"checkpoint {ck_path}")


def _cmd_finetune(args) -> int:
    cfg = _config(args, "finetune", finetune_steps=args.steps)
    start = io.read_checkpoint(args.init)
    tuned = synth.finetune(synth.target_spec(), start, cfg.finetune_steps, cfg.train_config(args.seed))
    _summarise_checkpoint(tuned, cfg, args, {"init": str(args.init), "seed": args.seed, "steps": cfg.finetune_steps})
    return 0


def _cmd_metrics(args) -> int:
    a, b = io.read_points(args.a), io.read_points(args.b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if args.kind == "w1":
        value = metrics.w1_exact(a, b)
    elif args.kind == "w1-sliced":
        value = metrics.w1_sliced(a, b, args.projections, seed=args.seed)
    elif args.kind == "fid":
        value = metrics.fid(a, b)
    elif args.kind == "kid":
        value = metrics.kid(a, b)
    else:
        p, r = metrics.knn_precision_recall(a, b, args.k)
        value = p if args.kind == "precision" else r
    print(f"seed = {args.seed}")
    print(f"{args.kind} = {io.fmt(value)}")
    return 0


def _cmd_sweep(args) -> int:
    n = 100 if args.full else args.n_checkpoints
    cfg = _config(args, "sweep", n_checkpoints=n, finetune_steps=args.finetune_steps,
                  generator_steps=args.source_steps)
    rep = experiments.run_fig3_sweep(cfg.n_checkpoints, cfg.finetune_steps, args.seed, cfg)
    _write_report(rep, args)
    return 0


def _cmd_fig2(args) -> int:
    cfg = _config(args, "fig2", seeds=tuple(args.seeds) if args.seeds else None, generator_steps=args.steps)
    _echo_seed(args)
    rep = experiments.run_fig2(cfg.seeds, cfg)
    _write_report(rep, args)
    return 0


def _cmd_dynamics(args) -> int:
    cfg = _config(args, "dynamics", n_latents=args.n_latents, generator_steps=args.steps)
    rep = experiments.run_dynamics_study(args.seed, cfg)
    _write_report(rep, args)
    return 0


def _cmd_rank(args) -> int:
    _echo_seed(args)
    if args.target is None:
        if args.source:
            raise UsageError("--source needs --target")
        table = selector.load_fixture_table(args.metric)
        for t in table.targets:
            src, tie = selector.choose_source(table, t)
            print(f"{t}: {src}{' (tie)' if tie else ''}")
        return 0
    if not args.source:
        raise UsageError("--target needs at least one --source LABEL=PATH")
    sources = {}
    for item in args.source:
        label, sep, path = item.partition("=")
        if not sep or not label or not path:
            raise UsageError(f"--source expects LABEL=PATH, got {item!r}")
        sources[label] = io.read_points(path)
    table = selector.build_distance_table(io.read_points(args.target), sources, args.metric, k=args.k)
    row = table.row(table.targets[0])
    better_high = selector.HIGHER_IS_BETTER[args.metric]
    order = sorted(row, key=lambda s: (-row[s] if better_high else row[s], table.sources.index(s)))
    for rank, s in enumerate(order, start=1):
        print(f"{rank}. {s} {args.metric} = {io.fmt(row[s])}")
    return 0


def verify_table4(regime: str, tables_dir: Path | None = None) -> tuple[bool, list[str]]:
    """Failure counts per metric compared (within 1) to the published counts."""
    expected = selector.PUBLISHED_REAL_SOURCE_FAILURES if regime == "real" else selector.PUBLISHED_GENERATED_SOURCE_FAILURES
    truth = selector.load_ground_truth()
    lines, ok = [], True
    for m in selector.METRICS:
        if tables_dir is not None:
            table = selector.load_table(tables_dir / f"{m}.csv", m)
        else:
            table = selector.load_fixture_table(m)
        rep = selector.evaluate_selector(table, truth)
        passed = abs(rep.failures - expected[m]) <= 1
        ok &= passed
        lines.append(f"{m}: failures = {rep.failures} expected {expected[m]} (+-1) {'PASS' if passed else 'FAIL'}")
        if rep.failures != expected[m]:
            for s in rep.failed():
                lines.append(f"  {s.target}: chose {s.source} ({s.value:.3f}{', tie' if s.tie else ''})"
                             f" optimal {{{', '.join(s.optimal_set)}}}")
    return ok, lines


def _cmd_verify(args) -> int:
    _echo_seed(args)
    if args.regime == "generated" and args.tables is None:
        print("generated-source distance tables are not shipped; pass --tables DIR", file=sys.stderr)
        return EXIT_DATA
    t0 = time.perf_counter()
    ok, lines = verify_table4(args.regime, args.tables)
    print("\n".join(lines))
    print(f"regime {args.regime}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t0:.3f}s)")
    return 0 if ok else EXIT_DATA


def _cmd_config(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    print(f"seed = {args.seed}")
    print(cfg.dump(), end="")
    return 0


COMMANDS = {
    "train": _cmd_train, "finetune": _cmd_finetune, "metrics": _cmd_metrics, "sweep": _cmd_sweep,
    "fig2": _cmd_fig2, "dynamics": _cmd_dynamics, "rank-sources": _cmd_rank,
    "verify-table4": _cmd_verify, "config": _cmd_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:            # --help
        return int(e.code or 0)
    except (io.FormatError, ConfigError, FileExistsError, FileNotFoundError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
