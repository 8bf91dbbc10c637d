"""Orchestration of the four-step study and its report files.

The pipeline: extract ground-truth POIs per user, obfuscate the whole
dataset several times with independent seeded noise, sweep the observer's
distance threshold to pick the smallest one clearing the recall target,
then score recall, geographic/semantic distance, re-identification and
query precision at that threshold, averaged over the runs.

Everything is a pure function of (dataset, config, master seed): noise
streams are derived per run and per user, so two executions with the same
master seed write byte-identical reports regardless of scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence, TextIO

from .core import Dataset, PoiSet
from .ingest import dataset_digest
from .features import FeatureStore
from .mechanism import PrivacyLevel, RandomSource, derive_seed, obfuscate_trace
from .metrics import (
    geographic_distances,
    precision_trial,
    recall_of,
    reidentification_rate,
    remap,
    semantic_distances,
)
from .poi import ExtractionParams, extract_pois

# The three stock privacy levels: strong, medium, weak.
DEFAULT_LEVELS: tuple[PrivacyLevel, ...] = (
    PrivacyLevel.from_level(math.log(2), 500.0),
    PrivacyLevel.from_level(math.log(6), 500.0),
    PrivacyLevel.from_level(math.log(4), 200.0),
)


@dataclass(frozen=True)
class SweepConfig:
    """Distance-threshold sweep: bounds and step in metres, plus the mean
    recall an observer wants to clear."""

    min_m: int = 100
    max_m: int = 5000
    step_m: int = 100
    recall_target: float = 0.70

    def __post_init__(self) -> None:
        if self.step_m <= 0:
            raise ValueError("sweep step must be > 0")
        if self.min_m <= 0 or self.max_m < self.min_m:
            raise ValueError("sweep bounds must satisfy 0 < min <= max")
        if not 0.0 < self.recall_target < 1.0:
            raise ValueError("recall target must be in (0, 1)")

    def thresholds(self) -> range:
        return range(self.min_m, self.max_m + 1, self.step_m)


@dataclass(frozen=True)
class PrecisionConfig:
    radius_m: float = 500.0
    alpha: float = 0.85
    samples: int = 100
    category: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    levels: tuple[PrivacyLevel, ...] = DEFAULT_LEVELS
    runs: int = 10
    master_seed: int = 0
    extraction: ExtractionParams = ExtractionParams()
    sweep: SweepConfig = SweepConfig()
    precision: PrecisionConfig = PrecisionConfig()

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")


@dataclass(frozen=True)
class SweepResult:
    """Mean recall per swept threshold for one privacy level.

    ``optimal_m`` is the smallest threshold whose mean recall exceeds the
    target, or None when the target was never reached; ``best_m`` is the
    best-effort threshold (highest mean recall, smallest on ties).
    """

    epsilon: float
    rows: tuple[tuple[int, float], ...]
    optimal_m: int | None
    best_m: int

    @property
    def reached(self) -> bool:
        return self.optimal_m is not None

    @property
    def chosen_m(self) -> int:
        return self.optimal_m if self.optimal_m is not None else self.best_m


@dataclass(frozen=True, slots=True)
class UserRecallRow:
    user: str
    epsilon: float
    run: int
    recall: float
    n_real: int
    n_obf: int


@dataclass(frozen=True, slots=True)
class PairRow:
    user: str
    epsilon: float
    run: int
    geo_m: float
    semantic: float


@dataclass(frozen=True, slots=True)
class LevelRecallRow:
    epsilon: float
    threshold_m: int
    mean_recall: float
    n_users: int
    runs: int


@dataclass(frozen=True, slots=True)
class ReidentRow:
    epsilon: float
    rate: float
    n_users: int


@dataclass(frozen=True, slots=True)
class PrecisionRow:
    epsilon: float
    alpha: float
    radius_m: float
    mean_precision: float
    n_samples: int
    n_empty: int


Cdf = tuple[tuple[float, ...], tuple[float, ...]]


def cdf_series(values: Sequence[float]) -> Cdf:
    """Sorted values with cumulative fractions ending at 1.0."""
    ordered = sorted(values)
    n = len(ordered)
    return tuple(ordered), tuple((i + 1) / n for i in range(n))


@dataclass(frozen=True)
class EvaluationReport:
    user_rows: tuple[UserRecallRow, ...] = ()
    pair_rows: tuple[PairRow, ...] = ()
    recall_rows: tuple[LevelRecallRow, ...] = ()
    reident_rows: tuple[ReidentRow, ...] = ()
    precision_rows: tuple[PrecisionRow, ...] = ()
    geo_cdf: dict[float, Cdf] = field(default_factory=dict)
    sem_cdf: dict[float, Cdf] = field(default_factory=dict)
    sweeps: tuple[SweepResult, ...] = ()
    metadata: dict = field(default_factory=dict)

    @staticmethod
    def combine(reports: Sequence["EvaluationReport"]) -> "EvaluationReport":
        """Concatenate per-level reports (distinct levels assumed)."""
        geo: dict[float, Cdf] = {}
        sem: dict[float, Cdf] = {}
        for r in reports:
            geo.update(r.geo_cdf)
            sem.update(r.sem_cdf)
        return EvaluationReport(
            user_rows=tuple(row for r in reports for row in r.user_rows),
            pair_rows=tuple(row for r in reports for row in r.pair_rows),
            recall_rows=tuple(row for r in reports for row in r.recall_rows),
            reident_rows=tuple(row for r in reports for row in r.reident_rows),
            precision_rows=tuple(row for r in reports for row in r.precision_rows),
            geo_cdf=geo,
            sem_cdf=sem,
            sweeps=tuple(s for r in reports for s in r.sweeps),
            metadata={"levels": [r.metadata for r in reports if r.metadata]},
        )


def extract_ground_truth(dataset: Dataset, params: ExtractionParams) -> dict[str, PoiSet]:
    """Per-user POI extraction over the whole dataset.

    Users whose trace yields no POIs stay in the mapping with an empty
    set; downstream steps exclude and report them.
    """
    return {user: extract_pois(dataset.traces[user], params) for user in dataset.users()}


def obfuscation_campaign(
    dataset: Dataset, level: PrivacyLevel, runs: int, master_seed: int
) -> list[Dataset]:
    """``runs`` independent obfuscations of the dataset.

    Each run gets a seed derived from the master seed and its index, each
    user a stream derived from the run seed, so the campaign is
    reproducible and independent of evaluation order.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    campaign = []
    for run in range(runs):
        rseed = derive_seed(master_seed, f"run:{run}")
        traces = {}
        for user in dataset.users():
            rng = RandomSource(derive_seed(rseed, f"user:{user}"))
            traces[user] = obfuscate_trace(dataset.traces[user], level, rng)
        campaign.append(Dataset(traces))
    return campaign


def threshold_sweep(
    campaign: Sequence[Dataset],
    ground_truth: Mapping[str, PoiSet],
    params: ExtractionParams,
    sweep: SweepConfig,
    level: PrivacyLevel,
) -> SweepResult:
    """Mean recall for each swept observer distance threshold.

    The observer keeps min_time and min_pts unchanged and varies only
    max_distance (the merge radius follows it proportionally). Recall is
    averaged across users within a run, then across runs.
    """
    if not campaign:
        raise ValueError("empty campaign")
    present = set(campaign[0].traces)
    eligible = sorted(u for u, ps in ground_truth.items() if len(ps) > 0 and u in present)
    if not eligible:
        raise ValueError("empty ground truth: no campaign user has POIs")

    rows = []
    for threshold in sweep.thresholds():
        attack = replace(params, max_distance=float(threshold))
        run_means = []
        for ds in campaign:
            recalls = [
                recall_of(
                    remap(extract_pois(ds.traces[u], attack), ground_truth[u]),
                    len(ground_truth[u]),
                )
                for u in eligible
            ]
            run_means.append(sum(recalls) / len(recalls))
        rows.append((threshold, sum(run_means) / len(run_means)))

    optimal = next((thr for thr, r in rows if r > sweep.recall_target), None)
    best = max(rows, key=lambda row: (row[1], -row[0]))[0]
    return SweepResult(epsilon=level.epsilon, rows=tuple(rows), optimal_m=optimal, best_m=best)


def precision_summary(
    dataset: Dataset,
    level: PrivacyLevel,
    store: FeatureStore,
    cfg: PrecisionConfig,
    seed: int,
) -> PrecisionRow:
    """Mean query precision over locations sampled from the real traces.

    Empty-result trials count as precision 1 by convention and are tallied
    in ``n_empty`` so they cannot silently inflate the mean.
    """
    points = [loc.point for user in dataset.users() for loc in dataset.traces[user].locations]
    if not points:
        raise ValueError("cannot sample query locations from an empty dataset")
    rng = RandomSource(seed)
    values = []
    n_empty = 0
    for _ in range(cfg.samples):
        c = points[int(rng.uniform() * len(points))]
        value, n_retrieved = precision_trial(
            c, level, store, cfg.radius_m, cfg.alpha, rng, cfg.category
        )
        values.append(value)
        if n_retrieved == 0:
            n_empty += 1
    return PrecisionRow(
        epsilon=level.epsilon,
        alpha=cfg.alpha,
        radius_m=cfg.radius_m,
        mean_precision=sum(values) / len(values),
        n_samples=cfg.samples,
        n_empty=n_empty,
    )


def evaluate(
    campaign: Sequence[Dataset],
    ground_truth: Mapping[str, PoiSet],
    level: PrivacyLevel,
    threshold_m: int,
    store: FeatureStore,
    params: ExtractionParams,
    *,
    dataset: Dataset | None = None,
    precision_cfg: PrecisionConfig | None = None,
    master_seed: int = 0,
) -> EvaluationReport:
    """Score one privacy level's campaign at a fixed observer threshold.

    Produces per-user and per-pair rows, pooled distance CDFs, the mean
    re-identification rate, and (when the source dataset is supplied) the
    precision summary.
    """
    if not campaign:
        raise ValueError("empty campaign")
    present = set(campaign[0].traces)
    eligible = sorted(u for u, ps in ground_truth.items() if len(ps) > 0 and u in present)
    excluded = sorted(u for u, ps in ground_truth.items() if len(ps) == 0)
    if not eligible:
        raise ValueError("no users with non-empty real POI sets")

    attack = replace(params, max_distance=float(threshold_m))
    real_sets = {u: ground_truth[u] for u in eligible}

    user_rows: list[UserRecallRow] = []
    pair_rows: list[PairRow] = []
    geo_pool: list[float] = []
    sem_pool: list[float] = []
    run_recalls: list[float] = []
    run_rates: list[float] = []
    for run, ds in enumerate(campaign):
        obf_sets = {u: extract_pois(ds.traces[u], attack) for u in eligible}
        recalls = []
        for u in eligible:
            result = remap(obf_sets[u], real_sets[u])
            rec = recall_of(result, len(real_sets[u]))
            recalls.append(rec)
            user_rows.append(
                UserRecallRow(u, level.epsilon, run, rec, len(real_sets[u]), len(obf_sets[u]))
            )
            geo = geographic_distances(result)
            sem = semantic_distances(result, store)
            geo_pool.extend(geo)
            sem_pool.extend(sem)
            pair_rows.extend(
                PairRow(u, level.epsilon, run, g, s) for g, s in zip(geo, sem)
            )
        run_recalls.append(sum(recalls) / len(recalls))
        run_rates.append(reidentification_rate(real_sets, obf_sets))

    precision_rows: tuple[PrecisionRow, ...] = ()
    if dataset is not None and precision_cfg is not None:
        precision_rows = (
            precision_summary(
                dataset, level, store, precision_cfg, derive_seed(master_seed, "precision")
            ),
        )

    return EvaluationReport(
        user_rows=tuple(user_rows),
        pair_rows=tuple(pair_rows),
        recall_rows=(
            LevelRecallRow(
                epsilon=level.epsilon,
                threshold_m=threshold_m,
                mean_recall=sum(run_recalls) / len(run_recalls),
                n_users=len(eligible),
                runs=len(campaign),
            ),
        ),
        reident_rows=(
            ReidentRow(
                epsilon=level.epsilon,
                rate=sum(run_rates) / len(run_rates),
                n_users=len(eligible),
            ),
        ),
        precision_rows=precision_rows,
        geo_cdf={level.epsilon: cdf_series(geo_pool)},
        sem_cdf={level.epsilon: cdf_series(sem_pool)},
        metadata={
            "epsilon": level.epsilon,
            "threshold_m": threshold_m,
            "runs": len(campaign),
            "n_users": len(eligible),
            "excluded_users": excluded,
        },
    )


def run_experiment(
    dataset: Dataset, config: ExperimentConfig, store: FeatureStore
) -> EvaluationReport:
    """The full study: ground truth, campaigns, sweeps, evaluation."""
    ground_truth = extract_ground_truth(dataset, config.extraction)
    reports = []
    sweeps = []
    for level in config.levels:
        campaign = obfuscation_campaign(dataset, level, config.runs, config.master_seed)
        sweep = threshold_sweep(campaign, ground_truth, config.extraction, config.sweep, level)
        sweeps.append(sweep)
        reports.append(
            evaluate(
                campaign,
                ground_truth,
                level,
                sweep.chosen_m,
                store,
                config.extraction,
                dataset=dataset,
                precision_cfg=config.precision,
                master_seed=config.master_seed,
            )
        )
    combined = EvaluationReport.combine(reports)
    metadata = {
        "master_seed": config.master_seed,
        "runs": config.runs,
        "dataset_digest": dataset_digest(dataset),
        "extraction": {
            "min_time": config.extraction.min_time,
            "max_distance": config.extraction.max_distance,
            "min_pts": config.extraction.min_pts,
            "merge_factor": config.extraction.merge_factor,
        },
        "sweep": {
            "min_m": config.sweep.min_m,
            "max_m": config.sweep.max_m,
            "step_m": config.sweep.step_m,
            "recall_target": config.sweep.recall_target,
        },
        "precision": {
            "radius_m": config.precision.radius_m,
            "alpha": config.precision.alpha,
            "samples": config.precision.samples,
            "category": config.precision.category,
        },
        "levels": [
            {
                "epsilon": s.epsilon,
                "optimal_threshold_m": s.optimal_m,
                "best_threshold_m": s.best_m,
                "reached": s.reached,
            }
            for s in sweeps
        ],
        "per_level": combined.metadata.get("levels", []),
    }
    return replace(combined, sweeps=tuple(sweeps), metadata=metadata)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return str(x)


def _write_csv(path: Path, header: str, rows) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
            count += 1
    return count


def write_sweep_csv(sweeps: Sequence[SweepResult], out: TextIO) -> int:
    out.write("epsilon,threshold_m,mean_recall\n")
    count = 0
    for s in sweeps:
        for thr, rec in s.rows:
            out.write(f"{_fmt(s.epsilon)},{thr},{_fmt(rec)}\n")
            count += 1
    return count


def write_report(report: EvaluationReport, out_dir: str | Path) -> dict:
    """Write every report CSV plus a manifest; returns the manifest.

    Output is byte-stable for a fixed master seed: floats are written with
    repr and the manifest carries no timestamps.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    counts["recall_users.csv"] = _write_csv(
        out / "recall_users.csv",
        "user,epsilon,run,recall,n_real,n_obf",
        ((r.user, r.epsilon, r.run, r.recall, r.n_real, r.n_obf) for r in report.user_rows),
    )
    counts["distances.csv"] = _write_csv(
        out / "distances.csv",
        "user,epsilon,run,geo_m,semantic",
        ((r.user, r.epsilon, r.run, r.geo_m, r.semantic) for r in report.pair_rows),
    )
    counts["recall.csv"] = _write_csv(
        out / "recall.csv",
        "epsilon,threshold_m,mean_recall,n_users,runs",
        (
            (r.epsilon, r.threshold_m, r.mean_recall, r.n_users, r.runs)
            for r in report.recall_rows
        ),
    )
    counts["reident.csv"] = _write_csv(
        out / "reident.csv",
        "epsilon,rate,n_users",
        ((r.epsilon, r.rate, r.n_users) for r in report.reident_rows),
    )
    counts["precision.csv"] = _write_csv(
        out / "precision.csv",
        "epsilon,alpha,radius_m,mean_precision,n_samples,n_empty",
        (
            (r.epsilon, r.alpha, r.radius_m, r.mean_precision, r.n_samples, r.n_empty)
            for r in report.precision_rows
        ),
    )
    counts["cdf_geo.csv"] = _write_csv(
        out / "cdf_geo.csv",
        "epsilon,geo_m,fraction",
        (
            (eps, v, f)
            for eps in sorted(report.geo_cdf)
            for v, f in zip(*report.geo_cdf[eps])
        ),
    )
    counts["cdf_semantic.csv"] = _write_csv(
        out / "cdf_semantic.csv",
        "epsilon,semantic,fraction",
        (
            (eps, v, f)
            for eps in sorted(report.sem_cdf)
            for v, f in zip(*report.sem_cdf[eps])
        ),
    )
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        counts["sweep.csv"] = write_sweep_csv(report.sweeps, fh)

    manifest = {"files": counts, "metadata": report.metadata}
    with open(out / "manifest.json", "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
