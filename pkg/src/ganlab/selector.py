"""Choosing a pretrained source checkpoint for a target dataset by proxy metrics.

Tables are stored as ``target,source,value`` CSVs; an empty value marks a
masked (self) pair.  The shipped fixtures live in ``ganlab/fixtures``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import metrics

METRICS = ("fid", "kid", "precision", "recall")
HIGHER_IS_BETTER = {"fid": False, "kid": False, "precision": True, "recall": True}

SOURCES = ("F", "L.B", "L.Ca", "L.Ch", "L.Dog", "S.B", "S.L", "I")
TARGETS = SOURCES[:7] + ("C", "Fl", "GC", "S", "BCH")
SCRATCH = "scratch"

PROXY_FIXTURES = {
    "fid": "table5_fid.csv",
    "kid": "table6_kid.csv",
    "precision": "table7_precision.csv",
    "recall": "table8_recall.csv",
}
# published Table 4 failure counts (real-source and generated-source regimes)
PUBLISHED_REAL_SOURCE_FAILURES = {"fid": 3, "kid": 5, "precision": 11, "recall": 2}
PUBLISHED_GENERATED_SOURCE_FAILURES = {"fid": 3, "kid": 3, "precision": 7, "recall": 3}


@dataclass
class DistanceTable:
    metric: str
    targets: list[str]
    sources: list[str]
    values: np.ndarray                 # targets x sources, NaN where masked

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.targets), len(self.sources)):
            raise ValueError(f"values shape {self.values.shape} does not match labels")
        for i, t in enumerate(self.targets):
            if t in self.sources:
                self.values[i, self.sources.index(t)] = np.nan

    @property
    def mask(self) -> np.ndarray:
        return np.isnan(self.values)

    def row(self, target: str) -> dict[str, float]:
        if target not in self.targets:
            raise KeyError(f"no row for target {target!r}")
        vals = self.values[self.targets.index(target)]
        return {s: float(v) for s, v in zip(self.sources, vals) if not np.isnan(v)}


def read_grid(path) -> tuple[list[str], list[str], np.ndarray]:
    """Read a ``target,source,value`` CSV into (targets, sources, grid) in file order."""
    targets: list[str] = []
    sources: list[str] = []
    cells: dict[tuple[str, str], float] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["target", "source", "value"]:
            raise ValueError(f"{path}: expected header target,source,value, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            t, s, v = row
            if t not in targets:
                targets.append(t)
            if s not in sources:
                sources.append(s)
            if (t, s) in cells:
                raise ValueError(f"{path}:{lineno}: duplicate cell ({t}, {s})")
            cells[(t, s)] = float(v) if v.strip() else np.nan
    grid = np.full((len(targets), len(sources)), np.nan)
    for (t, s), v in cells.items():
        grid[targets.index(t), sources.index(s)] = v
    return targets, sources, grid


def write_grid(path, targets: Sequence[str], sources: Sequence[str], grid: np.ndarray):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["target", "source", "value"])
        for i, t in enumerate(targets):
            for j, s in enumerate(sources):
                v = grid[i, j]
                w.writerow([t, s, "" if np.isnan(v) else repr(float(v))])


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("ganlab") / "fixtures" / name))


def load_table(path, metric: str) -> DistanceTable:
    targets, sources, grid = read_grid(path)
    return DistanceTable(metric, targets, sources, grid)


def load_fixture_table(metric: str) -> DistanceTable:
    return load_table(fixture_path(PROXY_FIXTURES[metric]), metric)


@dataclass
class GroundTruthGrid:
    """Finetune FID per (target, source); optimal sources are within ``slack`` of the row best."""

    targets: list[str]
    sources: list[str]
    fid: np.ndarray
    slack: float = 0.05
    optimal: dict[str, set[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.fid = np.asarray(self.fid, dtype=np.float64)
        if self.fid.shape != (len(self.targets), len(self.sources)):
            raise ValueError("fid grid shape does not match labels")
        if not self.optimal:
            for i, t in enumerate(self.targets):
                row = {s: v for s, v in zip(self.sources, self.fid[i])
                       if s != t and s != SCRATCH and not np.isnan(v)}
                best = min(row.values()) if row else np.nan
                self.optimal[t] = {s for s, v in row.items() if v <= (1 + self.slack) * best}

    @classmethod
    def from_csv(cls, path, slack: float = 0.05) -> "GroundTruthGrid":
        return cls(*read_grid(path), slack=slack)


def load_ground_truth() -> GroundTruthGrid:
    return GroundTruthGrid.from_csv(fixture_path("table2_fid.csv"))


def choose_source(table: DistanceTable, target: str) -> tuple[str, bool]:
    """Best unmasked source for ``target``; returns (source, tie).

    Ties go to the source listed first in the table.
    """
    row = table.row(target)
    if not row:
        raise ValueError(f"no unmasked sources for target {target!r}")
    best = (max if HIGHER_IS_BETTER[table.metric] else min)(row.values())
    winners = [s for s, v in row.items() if v == best]
    return winners[0], len(winners) > 1


@dataclass
class Selection:
    target: str
    source: str
    value: float
    optimal: bool
    tie: bool
    optimal_set: list[str]


@dataclass
class RankingReport:
    metric: str
    selections: list[Selection]

    @property
    def failures(self) -> int:
        return sum(not s.optimal for s in self.selections)

    def failed(self) -> list[Selection]:
        return [s for s in self.selections if not s.optimal]


def evaluate_selector(table: DistanceTable, truth: GroundTruthGrid) -> RankingReport:
    if set(table.targets) != set(truth.targets):
        raise ValueError("distance table and ground truth cover different targets")
    missing = set(table.sources) - set(truth.sources)
    if missing:
        raise ValueError(f"ground truth lacks sources {sorted(missing)}")
    out = []
    for t in table.targets:
        src, tie = choose_source(table, t)
        opt = truth.optimal[t]
        out.append(Selection(t, src, table.row(t)[src], src in opt, tie, sorted(opt)))
    return RankingReport(table.metric, out)


def verify_real_source() -> dict[str, RankingReport]:
    truth = load_ground_truth()
    return {m: evaluate_selector(load_fixture_table(m), truth) for m in METRICS}


def proxy_distance(target_features, source_features, metric: str, k: int = 5) -> float:
    """One cell: target features are the "real" side, source features the "fake" side."""
    if metric == "fid":
        return metrics.fid(target_features, source_features)
    if metric == "kid":
        return metrics.kid(target_features, source_features)
    if metric in ("precision", "recall"):
        p, r = metrics.knn_precision_recall(target_features, source_features, k)
        return p if metric == "precision" else r
    raise ValueError(f"unknown metric {metric!r}")


def build_distance_table(target_features, source_feature_sets: Mapping[str, object], metric: str,
                         target_label: str = "target", k: int = 5) -> DistanceTable:
    """A one-row table of ``metric`` between the target and every source feature set."""
    if not source_feature_sets:
        raise ValueError("no source feature sets given")
    tgt = metrics.as_points(target_features)
    row = []
    for label, feats in source_feature_sets.items():
        src = metrics.as_points(feats)
        if src.shape[1] != tgt.shape[1]:
            raise ValueError(f"source {label!r} has dim {src.shape[1]}, target has {tgt.shape[1]}")
        row.append(proxy_distance(tgt, src, metric, k))
    return DistanceTable(metric, [target_label], list(source_feature_sets), np.array([row]))
