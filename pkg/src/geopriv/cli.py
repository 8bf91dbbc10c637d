"""Command-line interface: one subcommand per pipeline stage.

Every flag can also be supplied through a ``key = value`` config file
passed as ``--config``; explicit flags win over the file.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import experiment, ingest
from .features import FeatureStore, generate_synthetic_features
from .mechanism import PrivacyLevel, derive_seed
from .metrics import reidentification_rate
from .poi import ExtractionParams


def _read_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.BadParameter(f"config line without '=': {raw!r}", param_hint="--config")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="key = value file supplying defaults for any flag below.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Location-privacy evaluation pipeline for mobility traces."""
    if config_path:
        values = _read_config(config_path)
        ctx.default_map = {name: dict(values) for name in main.commands}


def _resolve_level(epsilon: float | None, level_spec: str | None) -> PrivacyLevel:
    if (epsilon is None) == (level_spec is None):
        raise click.UsageError("give exactly one of --epsilon or --level l=<f>,r=<m>")
    if epsilon is not None:
        try:
            return PrivacyLevel(epsilon)
        except ValueError as exc:
            raise click.BadParameter(str(exc), param_hint="--epsilon") from exc
    parts = dict(p.split("=", 1) for p in level_spec.split(",") if "=" in p)
    try:
        return PrivacyLevel.from_level(float(parts["l"]), float(parts["r"]))
    except (KeyError, ValueError) as exc:
        raise click.BadParameter(f"expected l=<f>,r=<m>, got {level_spec!r}", param_hint="--level") from exc


def _resolve_store(features_path: str | None, synthetic_spec: str | None) -> FeatureStore:
    if (features_path is None) == (synthetic_spec is None):
        raise click.UsageError("give exactly one of --features or --synthetic")
    if features_path is not None:
        with open(features_path, encoding="utf-8", newline="") as fh:
            return FeatureStore.build(ingest.parse_features(fh))
    # density=<f>,seed=<u64>,bbox=<lat1,lon1,lat2,lon2>
    tokens = synthetic_spec.split(",")
    params: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        if "=" not in tokens[i]:
            raise click.BadParameter(f"bad synthetic spec near {tokens[i]!r}", param_hint="--synthetic")
        key, _, value = tokens[i].partition("=")
        if key == "bbox":
            if i + 3 >= len(tokens):
                raise click.BadParameter("bbox needs four comma-separated values", param_hint="--synthetic")
            params["bbox"] = ",".join([value] + tokens[i + 1 : i + 4])
            i += 4
        else:
            params[key] = value
            i += 1
    try:
        corners = [float(v) for v in params["bbox"].split(",")]
        bounds = (
            min(corners[0], corners[2]),
            min(corners[1], corners[3]),
            max(corners[0], corners[2]),
            max(corners[1], corners[3]),
        )
        features = generate_synthetic_features(
            seed=int(params["seed"]), bounds=bounds, density_per_km2=float(params["density"])
        )
    except (KeyError, ValueError) as exc:
        raise click.BadParameter(
            f"expected density=<f>,seed=<u64>,bbox=<lat1,lon1,lat2,lon2>, got {synthetic_spec!r}",
            param_hint="--synthetic",
        ) from exc
    return FeatureStore.build(features)


def _load_dataset(path: str) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return ingest.parse_canonical(fh)


def _load_campaign(directory: str) -> tuple[list[Dataset], dict]:
    root = Path(directory)
    run_files = sorted(root.glob("run_*.csv"))
    if not run_files:
        raise click.UsageError(f"no run_*.csv files in {directory}")
    meta = {}
    meta_path = root / "campaign.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    campaign = []
    for path in run_files:
        with open(path, encoding="utf-8") as fh:
            campaign.append(ingest.parse_canonical(fh))
    return campaign, meta


def _campaign_epsilon(meta: dict, epsilon: float | None) -> float:
    if epsilon is not None:
        return epsilon
    if "epsilon" in meta:
        return float(meta["epsilon"])
    raise click.UsageError("campaign has no recorded epsilon; pass --epsilon")


@main.command("ingest")
@click.option("--format", "fmt", type=click.Choice(["sfcabs", "geolife", "csv"]), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--output", "output_path", type=click.Path(), required=True)
@click.option("--filter-days", type=int, default=None, help="keep users with at least this many qualifying days.")
@click.option("--filter-locs", type=int, default=None, help="a day qualifies with more than this many locations.")
def ingest_cmd(fmt: str, input_path: str, output_path: str, filter_days: int | None, filter_locs: int | None) -> None:
    """Load a source dataset and write it as canonical trace CSV."""
    if fmt == "csv":
        dataset = _load_dataset(input_path)
    elif fmt == "sfcabs":
        dataset = ingest.parse_sfcabs(input_path)
    else:
        dataset = ingest.parse_geolife(input_path)
    if filter_days is not None or filter_locs is not None:
        policy = ingest.FilterPolicy(
            min_locations_per_day=filter_locs if filter_locs is not None else 480,
            min_qualifying_days=filter_days if filter_days is not None else 30,
        )
        dataset = ingest.filter_dataset(dataset, policy)
    with open(output_path, "w", encoding="utf-8", newline="") as fh:
        count = ingest.write_canonical(dataset, fh)
    click.echo(f"wrote {count} locations for {len(dataset.traces)} users to {output_path}")


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--min-time", type=int, default=3600, show_default=True)
@click.option("--max-distance", type=float, default=250.0, show_default=True)
@click.option("--min-pts", type=int, default=2, show_default=True)
@click.option("--output", "output_path", type=click.Path(), required=True)
def pois(input_path: str, min_time: int, max_distance: float, min_pts: int, output_path: str) -> None:
    """Extract per-user POIs from a canonical trace CSV."""
    dataset = _load_dataset(input_path)
    params = ExtractionParams(min_time=min_time, max_distance=max_distance, min_pts=min_pts)
    poi_sets = experiment.extract_ground_truth(dataset, params)
    with open(output_path, "w", encoding="utf-8", newline="") as fh:
        count = ingest.write_pois(poi_sets, fh)
    click.echo(f"wrote {count} POIs for {len(poi_sets)} users to {output_path}")


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--epsilon", type=float, default=None, help="noise scale in 1/metres.")
@click.option("--level", "level_spec", default=None, help="l=<f>,r=<m> privacy mass within a radius.")
@click.option("--runs", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="64-bit master seed.")
@click.option("--output-dir", type=click.Path(), required=True)
def obfuscate(input_path: str, epsilon: float | None, level_spec: str | None, runs: int, seed: int, output_dir: str) -> None:
    """Write independently obfuscated copies of a dataset."""
    level = _resolve_level(epsilon, level_spec)
    dataset = _load_dataset(input_path)
    campaign = experiment.obfuscation_campaign(dataset, level, runs, seed)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for run, ds in enumerate(campaign):
        with open(out / f"run_{run:03d}.csv", "w", encoding="utf-8", newline="") as fh:
            ingest.write_canonical(ds, fh)
    meta = {"epsilon": level.epsilon, "runs": runs, "master_seed": seed}
    (out / "campaign.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"wrote {runs} obfuscated runs to {output_dir}")


@main.command()
@click.option("--real", "real_path", type=click.Path(exists=True), required=True, help="ground-truth POI CSV.")
@click.option("--campaign", "campaign_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--step", type=int, default=100, show_default=True)
@click.option("--min", "min_m", type=int, default=100, show_default=True)
@click.option("--max", "max_m", type=int, default=5000, show_default=True)
@click.option("--target", type=float, default=0.7, show_default=True)
@click.option("--min-time", type=int, default=3600, show_default=True)
@click.option("--min-pts", type=int, default=2, show_default=True)
@click.option("--epsilon", type=float, default=None, help="label for the output; read from campaign.json when absent.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="also write the sweep table as CSV.")
def sweep(real_path: str, campaign_dir: str, step: int, min_m: int, max_m: int, target: float,
          min_time: int, min_pts: int, epsilon: float | None, out_path: str | None) -> None:
    """Sweep the observer's distance threshold and report mean recall."""
    with open(real_path, encoding="utf-8") as fh:
        ground_truth = ingest.parse_pois(fh)
    campaign, meta = _load_campaign(campaign_dir)
    eps = _campaign_epsilon(meta, epsilon)
    params = ExtractionParams(min_time=min_time, min_pts=min_pts)
    cfg = experiment.SweepConfig(min_m=min_m, max_m=max_m, step_m=step, recall_target=target)
    result = experiment.threshold_sweep(campaign, ground_truth, params, cfg, PrivacyLevel(eps))
    for thr, rec in result.rows:
        click.echo(f"{thr}\t{rec:.4f}")
    if result.reached:
        click.echo(f"optimal threshold: {result.optimal_m} m (recall target {target} reached)")
    else:
        click.echo(f"recall target {target} unreached; best threshold {result.best_m} m")
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            experiment.write_sweep_csv([result], fh)


@main.command()
@click.option("--real", "real_path", type=click.Path(exists=True), required=True)
@click.option("--campaign", "campaign_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--threshold", type=int, required=True, help="observer max-distance in metres.")
@click.option("--features", "features_path", type=click.Path(exists=True), default=None)
@click.option("--synthetic", "synthetic_spec", default=None)
@click.option("--min-time", type=int, default=3600, show_default=True)
@click.option("--min-pts", type=int, default=2, show_default=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def evaluate(real_path: str, campaign_dir: str, threshold: int, features_path: str | None,
             synthetic_spec: str | None, min_time: int, min_pts: int, epsilon: float | None,
             out_dir: str) -> None:
    """Score a campaign at a fixed threshold and write the report files."""
    with open(real_path, encoding="utf-8") as fh:
        ground_truth = ingest.parse_pois(fh)
    campaign, meta = _load_campaign(campaign_dir)
    eps = _campaign_epsilon(meta, epsilon)
    store = _resolve_store(features_path, synthetic_spec)
    params = ExtractionParams(min_time=min_time, min_pts=min_pts)
    report = experiment.evaluate(
        campaign, ground_truth, PrivacyLevel(eps), threshold, store, params
    )
    experiment.write_report(report, out_dir)
    row = report.recall_rows[0]
    click.echo(f"mean recall {row.mean_recall:.4f} over {row.n_users} users, {row.runs} runs")
    click.echo(f"report written to {out_dir}")


@main.command()
@click.option("--real", "real_path", type=click.Path(exists=True), required=True)
@click.option("--obf", "obf_path", type=click.Path(exists=True), required=True)
@click.option("--epsilon", type=float, default=None, help="label for the output row.")
@click.option("--out", "out_path", type=click.Path(), required=True)
def reident(real_path: str, obf_path: str, epsilon: float | None, out_path: str) -> None:
    """Link anonymous obfuscated POI sets back to known users."""
    with open(real_path, encoding="utf-8") as fh:
        real_sets = ingest.parse_pois(fh)
    with open(obf_path, encoding="utf-8") as fh:
        obf_sets = ingest.parse_pois(fh)
    # Users absent from either side cannot be scored; restrict to the overlap.
    common = sorted(set(real_sets) & set(obf_sets))
    if not common:
        raise click.UsageError("no users in common between --real and --obf")
    rate = reidentification_rate(
        {u: real_sets[u] for u in common}, {u: obf_sets[u] for u in common}
    )
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epsilon,rate,n_users\n")
        fh.write(f"{'' if epsilon is None else repr(epsilon)},{rate!r},{len(common)}\n")
    click.echo(f"re-identification rate {rate:.4f} over {len(common)} users")


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--features", "features_path", type=click.Path(exists=True), default=None)
@click.option("--synthetic", "synthetic_spec", default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--level", "level_spec", default=None)
@click.option("--radius", type=float, default=500.0, show_default=True)
@click.option("--alpha", type=float, default=0.85, show_default=True)
@click.option("--samples", type=int, default=100, show_default=True)
@click.option("--category", default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def precision(input_path: str, features_path: str | None, synthetic_spec: str | None,
              epsilon: float | None, level_spec: str | None, radius: float, alpha: float,
              samples: int, category: str | None, seed: int, out_path: str | None) -> None:
    """Measure query precision under obfuscation at sampled trace points."""
    level = _resolve_level(epsilon, level_spec)
    dataset = _load_dataset(input_path)
    store = _resolve_store(features_path, synthetic_spec)
    cfg = experiment.PrecisionConfig(radius_m=radius, alpha=alpha, samples=samples, category=category)
    row = experiment.precision_summary(dataset, level, store, cfg, derive_seed(seed, "precision"))
    click.echo(
        f"mean precision {row.mean_precision:.4f} over {row.n_samples} samples "
        f"({row.n_empty} empty retrievals)"
    )
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("epsilon,alpha,radius_m,mean_precision,n_samples,n_empty\n")
            fh.write(
                f"{row.epsilon!r},{row.alpha!r},{row.radius_m!r},"
                f"{row.mean_precision!r},{row.n_samples},{row.n_empty}\n"
            )


if __name__ == "__main__":
    main()
