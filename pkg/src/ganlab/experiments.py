"""Seeded reproductions of the 2D studies: three initializations, the checkpoint
sweep with its correlations, and sample-dynamics statistics.

Every run returns an :class:`ExperimentReport` holding CSV tables, summary
scalars and figure builders.  Figures are drawn from the parsed CSV text only,
so each SVG is a pure function of the CSV written next to it.
"""

from __future__ import annotations

import csv
import io as _stdio
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import metrics, svg, synth
from .config import RunConfig
from .io import atomic_write_text, csv_text, fmt
from .synth import GanCheckpoint

INITS = ("source1", "source2", "scratch")


def worker_count() -> int:
    raw = os.environ.get("GANLAB_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"GANLAB_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Ordered map; runs in worker processes when more than one worker is allowed."""
    workers = min(worker_count() if workers is None else workers, len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class ExperimentReport:
    name: str
    tables: dict[str, str] = field(default_factory=dict)          # file name -> CSV text
    summary: dict[str, object] = field(default_factory=dict)
    figures: dict[str, Callable[[dict[str, list[dict]]], str]] = field(default_factory=dict)
    paths: list[Path] = field(default_factory=list)
    data: dict[str, object] = field(default_factory=dict)         # in-memory results, not written

    def add_table(self, filename: str, header: Sequence[str], rows) -> None:
        self.tables[filename] = csv_text(header, rows)

    def parsed(self) -> dict[str, list[dict]]:
        return {k: list(csv.DictReader(_stdio.StringIO(v))) for k, v in self.tables.items()}

    def summary_text(self) -> str:
        return "".join(f"{k} = {v if isinstance(v, str) else fmt(v)}\n" for k, v in self.summary.items())

    def write(self, out_dir, force: bool = False) -> list[Path]:
        out = Path(out_dir)
        targets = [out / f for f in (*self.tables, "summary.txt", *self.figures)]
        if not force:
            clash = [p for p in targets if p.exists()]
            if clash:
                raise FileExistsError(f"{clash[0]} exists; pass force to overwrite")
        for fname, text in self.tables.items():
            atomic_write_text(out / fname, text, force)
        atomic_write_text(out / "summary.txt", self.summary_text(), force)
        parsed = self.parsed()
        for fname, build in self.figures.items():
            atomic_write_text(out / fname, build(parsed), force)
        self.paths = targets
        return targets


def _col(rows: list[dict], key: str, where: Mapping[str, str] | None = None) -> np.ndarray:
    where = where or {}
    return np.array([float(r[key]) for r in rows if all(r[k] == v for k, v in where.items())])


# --- sources ------------------------------------------------------------------

SOURCE_SPECS = {"source1": synth.source1_spec, "source2": synth.source2_spec}


def train_source(kind: str, seed: int, cfg: RunConfig, cache: dict | None = None,
                 snapshots: bool = False) -> tuple[GanCheckpoint, list[GanCheckpoint]]:
    """Train (or fetch from ``cache``) a source GAN; snapshots only if asked."""
    key = (kind, seed, repr(cfg.train_config(seed)))
    if cache is not None and key in cache and (cache[key][1] or not snapshots):
        return cache[key]
    result = synth.gan_train(SOURCE_SPECS[kind](), cfg.train_config(seed), keep_snapshots=snapshots)
    if cache is not None:
        cache[key] = result
    return result


def _reference(seed: int, n: int) -> np.ndarray:
    return synth.sample(synth.target_spec(), n, seed=derive_seed(seed, 1)).points


# --- three initializations ------------------------------------------------------------

def _fig2_seed(args) -> dict:
    seed, cfg, cache = args
    centers = np.array(synth.circle_centers())
    ref = _reference(seed, cfg.eval_samples)
    eval_seed = derive_seed(seed, 2)
    mode_seed = derive_seed(seed, 3)

    def evaluate(ckpt):
        g = ckpt.generator
        pts = synth.generate(g, cfg.eval_samples, seed=eval_seed).points
        w1 = metrics.w1_exact(pts, ref, method=cfg.w1_method)
        modes = metrics.mode_coverage(synth.generate(g, cfg.mode_samples, seed=mode_seed), centers)
        return pts, w1, modes

    rows, samples, finals = [], [], {}
    sources = {k: train_source(k, seed, cfg, cache)[0] for k in SOURCE_SPECS}
    for k, ck in sources.items():
        pts, w1, modes = evaluate(ck)
        finals[f"{k}_pretrained"] = (w1, modes)
        samples += [(seed, f"{k}_pretrained", *p) for p in pts]
    for init in INITS:
        start = None if init == "scratch" else sources[init].copy(with_optimizers=False)

        def record(step, snap, init=init):
            _, w1, modes = evaluate(snap)
            rows.append((seed, init, step, w1, modes))

        final, _ = synth.gan_train(synth.target_spec(), cfg.train_config(seed), start,
                                   keep_snapshots=False, callback=record)
        pts, w1, modes = evaluate(final)
        finals[init] = (w1, modes)
        samples += [(seed, init, *p) for p in pts]
    samples += [(seed, "target", *p) for p in ref]
    return {"rows": rows, "samples": samples, "finals": finals}


def _fig2_scatter(seed: str, name: str):
    def build(tables):
        rows = [r for r in tables["samples.csv"] if r["seed"] == seed and r["model"] in ("target", name)]
        series = [svg.Series(_col(rows, "x0", {"model": m}), _col(rows, "x1", {"model": m}), m)
                  for m in ("target", name)]
        return svg.plot(series, title=f"{name} (seed {seed})", xlabel="x0", ylabel="x1")
    return build


def _fig2_curves(tables):
    rows = tables["records.csv"]
    seeds = sorted({r["seed"] for r in rows}, key=int)
    series = []
    for init in INITS:
        for s in seeds[:1]:
            where = {"init": init, "seed": s}
            series.append(svg.Series(_col(rows, "step", where), _col(rows, "w1", where), init, "line"))
    return svg.plot(series, title="W1 to target during training", xlabel="generator step", ylabel="W1")


def run_fig2(seeds: Sequence[int] = (0, 1, 2), cfg: RunConfig | None = None,
             workers: int | None = None, cache: dict | None = None) -> ExperimentReport:
    """Target GANs from Source-I, Source-II and random init; W1 and mode coverage per snapshot."""
    cfg = cfg or RunConfig(name="fig2")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    jobs = [(s, cfg, cache if (workers or worker_count()) <= 1 else None) for s in seeds]
    results = parallel_map(_fig2_seed, jobs, workers)
    rep = ExperimentReport(cfg.name)
    rep.add_table("records.csv", ["seed", "init", "step", "w1", "modes"],
                  [r for res in results for r in res["rows"]])
    rep.add_table("samples.csv", ["seed", "model", "x0", "x1"], [r for res in results for r in res["samples"]])
    rep.add_table("finals.csv", ["seed", "model", "w1", "modes"],
                  [(s, m, *v) for s, res in zip(seeds, results) for m, v in res["finals"].items()])
    rep.summary["seeds"] = ",".join(map(str, seeds))
    for m in (*INITS, "source1_pretrained", "source2_pretrained"):
        rep.summary[f"median_w1_{m}"] = float(np.median([res["finals"][m][0] for res in results]))
        rep.summary[f"median_modes_{m}"] = float(np.median([res["finals"][m][1] for res in results]))
    rep.figures["w1_curves.svg"] = _fig2_curves
    for m in ("source1_pretrained", "source2_pretrained", *INITS):
        rep.figures[f"scatter_{m}.svg"] = _fig2_scatter(str(seeds[0]), m)
    rep.data["finals"] = {s: res["finals"] for s, res in zip(seeds, results)}
    return rep


# --- checkpoint sweep ------------------------------------------------------------------

class DegenerateSweep(ValueError):
    pass


@dataclass(frozen=True)
class SweepRecord:
    index: int
    step: int
    recall_at_init: float
    grad_similarity_at_init: float
    w1_after_finetune: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.recall_at_init <= 1.0:
            raise ValueError("recall must lie in [0, 1]")
        if not -1.0 <= self.grad_similarity_at_init <= 1.0:
            raise ValueError("grad similarity must lie in [-1, 1]")
        if not self.w1_after_finetune >= 0.0:
            raise ValueError("W1 must be non-negative")


def checkpoint_indices(n_checkpoints: int, available: int = 100, dense: int | None = None) -> list[int]:
    """Dense consecutive snapshots first, then the remainder spread evenly to the end.

    With 30 of 100: snapshots 0..19 (steps 50..1000), then 10 evenly spaced
    from step 1500 to the last snapshot.
    """
    if not 3 <= n_checkpoints <= available:
        raise ValueError(f"n_checkpoints must be in [3, {available}], got {n_checkpoints}")
    if n_checkpoints == available:
        return list(range(available))
    dense = (2 * n_checkpoints) // 3 if dense is None else dense
    rest = n_checkpoints - dense
    start = min(max(dense + 1, (3 * available) // 10 - 1), available - rest)
    tail = np.unique(np.round(np.linspace(start, available - 1, rest)).astype(int)).tolist() if rest else []
    return list(range(dense)) + tail


def _sweep_entry(args) -> SweepRecord:
    index, step, ckpt, seed, cfg, finetune_steps, ref, centers = args
    metric_seed = derive_seed(seed, 4)          # shared across entries
    gen = synth.generate(ckpt.generator, cfg.eval_samples, seed=metric_seed).points
    _, recall = metrics.knn_precision_recall(ref, gen, cfg.knn_k)
    gs = metrics.grad_field_similarity(ckpt.discriminator, gen, centers)
    ft_cfg = cfg.train_config(derive_seed(seed, 5, index))
    tuned = synth.finetune(synth.target_spec(), ckpt, finetune_steps, ft_cfg)
    out = synth.generate(tuned.generator, cfg.eval_samples, seed=derive_seed(seed, 6)).points
    w1 = metrics.w1_exact(out, ref, method=cfg.w1_method)
    return SweepRecord(index, step, float(recall), float(np.clip(gs, -1.0, 1.0)), float(w1), seed)


def sweep_correlations(records: Sequence[SweepRecord]) -> tuple[float, float]:
    r = np.array([x.recall_at_init for x in records])
    g = np.array([x.grad_similarity_at_init for x in records])
    w = np.array([x.w1_after_finetune for x in records])
    for name, v in (("recall", r), ("grad similarity", g), ("W1", w)):
        if np.ptp(v) == 0:
            raise DegenerateSweep(f"degenerate sweep: {name} is identical across all {len(records)} records")
    return metrics.pearson(r, w), metrics.pearson(g, w)


def run_fig3_sweep(n_checkpoints: int = 30, finetune_steps: int = 1000, seed: int = 0,
                   cfg: RunConfig | None = None, checkpoints: Sequence[GanCheckpoint] | None = None,
                   workers: int | None = None, cache: dict | None = None) -> ExperimentReport:
    """Finetune a series of Source-I snapshots and correlate init-time scores with final W1.

    ``checkpoints`` overrides the Source-I snapshot series (all are used).
    """
    cfg = cfg or RunConfig(name="sweep")
    if n_checkpoints < 3:
        raise ValueError("n_checkpoints must be >= 3")
    if finetune_steps < 0:
        raise ValueError("finetune_steps must be >= 0")
    if checkpoints is None:
        _, snaps = train_source("source1", seed, cfg, cache, snapshots=True)
        picks = checkpoint_indices(n_checkpoints, len(snaps))
        chosen = [(i, snaps[i]) for i in picks]
    else:
        if len(checkpoints) != n_checkpoints:
            raise ValueError(f"got {len(checkpoints)} checkpoints for n_checkpoints={n_checkpoints}")
        chosen = list(enumerate(checkpoints))
    ref = _reference(seed, cfg.eval_samples)
    centers = np.array(synth.circle_centers())
    jobs = [(i, (i + 1) * cfg.snapshot_every if checkpoints is None else ck.step, ck, seed, cfg,
             finetune_steps, ref, centers) for i, ck in chosen]
    records = parallel_map(_sweep_entry, jobs, workers)
    pr, pg = sweep_correlations(records)
    rep = ExperimentReport(cfg.name)
    rep.add_table("records.csv", ["index", "step", "recall_at_init", "grad_similarity_at_init",
                                  "w1_after_finetune", "seed"],
                  [(r.index, r.step, r.recall_at_init, r.grad_similarity_at_init, r.w1_after_finetune, r.seed)
                   for r in records])
    rep.summary.update(seed=seed, n_checkpoints=len(records), finetune_steps=finetune_steps,
                       pearson_recall_w1=pr, pearson_gradsim_w1=pg)
    rep.figures["recall_vs_w1.svg"] = lambda t: svg.plot(
        [svg.Series(_col(t["records.csv"], "recall_at_init"), _col(t["records.csv"], "w1_after_finetune"))],
        title="recall at init vs W1 after finetune", xlabel="recall", ylabel="W1")
    rep.figures["gradsim_vs_w1.svg"] = lambda t: svg.plot(
        [svg.Series(_col(t["records.csv"], "grad_similarity_at_init"), _col(t["records.csv"], "w1_after_finetune"))],
        title="gradient similarity at init vs W1 after finetune", xlabel="grad similarity", ylabel="W1")
    rep.data["records"] = records
    return rep


# --- dynamics ------------------------------------------------------------------------------

def _track(target_spec, init: GanCheckpoint | None, train_cfg, z, centers, mode_samples, mode_seed):
    outs, modes = [], []

    def observe(step, ckpt):
        g = ckpt.generator
        outs.append(synth.generate_from_latents(g, z))
        modes.append((step, metrics.mode_coverage(synth.generate(g, mode_samples, seed=mode_seed), centers)))

    start = synth.fresh_checkpoint(train_cfg, target_spec.dim) if init is None else init.copy(with_optimizers=False)
    observe(0, start)
    final, _ = synth.gan_train(target_spec, train_cfg, start, keep_snapshots=False, callback=observe)
    if train_cfg.generator_steps % train_cfg.snapshot_every or train_cfg.generator_steps == 0:
        observe(train_cfg.generator_steps, final)
    return outs, modes


def run_dynamics(target_spec, inits: Mapping[str, GanCheckpoint | None], n_latents: int = 256,
                 cfg: RunConfig | None = None, seed: int = 0, steps: int | None = None) -> ExperimentReport:
    """Per init: consecutive-snapshot distances, trajectory lengths, class changes, mode coverage.

    A ``None`` init means random initialization.  One latent batch is shared by
    all snapshots and inits.
    """
    cfg = cfg or RunConfig(name="dynamics")
    if n_latents < 1:
        raise ValueError("n_latents must be >= 1")
    if not inits:
        raise ValueError("no initializations given")
    train_cfg = cfg.train_config(seed, steps)
    z = np.random.default_rng(derive_seed(seed, 7)).standard_normal((n_latents, train_cfg.latent_dim))
    centers = np.array(synth.circle_centers())
    assigner = lambda x: metrics.nearest_center(x, centers)
    curve_rows, length_rows, mode_rows = [], [], []
    rep = ExperimentReport(cfg.name)
    for name, init in inits.items():
        outs, modes = _track(target_spec, init, train_cfg, z, centers, cfg.mode_samples, derive_seed(seed, 8))
        dists = metrics.consecutive_distances(outs).mean(axis=1)
        change = metrics.class_change_probability(outs, assigner)
        lengths = metrics.trajectory_lengths(outs)
        curve_rows += [(name, k, d, c) for k, (d, c) in enumerate(zip(dists, change))]
        length_rows += [(name, j, v) for j, v in enumerate(lengths)]
        mode_rows += [(name, s, m) for s, m in modes]
        rep.summary[f"median_trajectory_{name}"] = float(np.median(lengths))
        rep.summary[f"final_modes_{name}"] = modes[-1][1]
    rep.summary["seed"] = seed
    rep.add_table("records.csv", ["init", "transition", "mean_distance", "class_change"], curve_rows)
    rep.add_table("lengths.csv", ["init", "latent", "length"], length_rows)
    rep.add_table("modes.csv", ["init", "step", "modes"], mode_rows)
    names = list(inits)

    def lines(table, x, y, title, ylabel):
        return lambda t: svg.plot(
            [svg.Series(_col(t[table], x, {"init": n}), _col(t[table], y, {"init": n}), n, "line") for n in names],
            title=title, xlabel=x, ylabel=ylabel)

    rep.figures["distances.svg"] = lines("records.csv", "transition", "mean_distance",
                                         "mean distance between consecutive snapshots", "distance")
    rep.figures["class_change.svg"] = lines("records.csv", "transition", "class_change",
                                            "class change probability", "probability")
    rep.figures["modes.svg"] = lines("modes.csv", "step", "modes", "covered modes", "modes")

    def length_hist(t):
        series = []
        for n in names:
            v = np.sort(_col(t["lengths.csv"], "length", {"init": n}))
            series.append(svg.Series(v, np.arange(1, len(v) + 1) / max(len(v), 1), n, "line"))
        return svg.plot(series, title="trajectory length CDF", xlabel="length", ylabel="fraction")

    rep.figures["lengths.svg"] = length_hist
    return rep


def run_dynamics_study(seed: int = 0, cfg: RunConfig | None = None, steps: int | None = None,
                       cache: dict | None = None) -> ExperimentReport:
    """Dynamics from the two trained sources and from random init."""
    cfg = cfg or RunConfig(name="dynamics")
    inits = {k: train_source(k, seed, cfg, cache)[0] for k in SOURCE_SPECS}
    inits["scratch"] = None
    return run_dynamics(synth.target_spec(), inits, cfg.n_latents, cfg, seed, steps)
