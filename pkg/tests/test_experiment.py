import math

import pytest

from geopriv.core import Dataset
from geopriv.experiment import (
    EvaluationReport,
    ExperimentConfig,
    PrecisionConfig,
    SweepConfig,
    evaluate,
    extract_ground_truth,
    obfuscation_campaign,
    precision_summary,
    run_experiment,
    threshold_sweep,
    write_report,
)
from geopriv.features import FeatureStore, generate_synthetic_features
from geopriv.mechanism import PrivacyLevel
from geopriv.poi import ExtractionParams

from synth import dataset_bounds, planted_dataset

MEDIUM = PrivacyLevel.from_level(math.log(6), 500.0)
PARAMS = ExtractionParams(min_time=900)


@pytest.fixture(scope="module")
def small_world():
    dataset, centers = planted_dataset(
        n_users=6, n_pois=3, points_per_dwell=(31, 46, 61), point_interval_s=60, seed=11
    )
    store = FeatureStore.build(
        generate_synthetic_features(77, dataset_bounds(dataset, 4000), density_per_km2=12.0)
    )
    return dataset, centers, store


class TestGroundTruth:
    def test_empty_dataset(self):
        assert extract_ground_truth(Dataset({}), PARAMS) == {}

    def test_planted_pois_recovered(self, small_world):
        dataset, centers, _ = small_world
        truth = extract_ground_truth(dataset, PARAMS)
        assert set(truth) == set(dataset.traces)
        from geopriv.core import distance

        for user, pois in centers.items():
            got = truth[user]
            assert len(got) == len(pois)
            for planted in pois:
                assert min(distance(planted, p.centroid) for p in got.pois) < 50.0


class TestCampaign:
    def test_zero_noise_single_run_is_the_dataset(self, small_world):
        dataset, _, _ = small_world
        campaign = obfuscation_campaign(dataset, PrivacyLevel.zero_noise(), 1, 42)
        assert campaign == [dataset]

    def test_same_master_seed_reproduces(self, small_world):
        dataset, _, _ = small_world
        a = obfuscation_campaign(dataset, MEDIUM, 3, 7)
        b = obfuscation_campaign(dataset, MEDIUM, 3, 7)
        assert a == b

    def test_runs_are_pairwise_different(self, small_world):
        dataset, _, _ = small_world
        campaign = obfuscation_campaign(dataset, MEDIUM, 4, 7)
        for i in range(4):
            for j in range(i + 1, 4):
                assert campaign[i] != campaign[j]

    def test_run_count_validated(self, small_world):
        dataset, _, _ = small_world
        with pytest.raises(ValueError):
            obfuscation_campaign(dataset, MEDIUM, 0, 1)


class TestThresholdSweep:
    def test_zero_noise_optimal_is_first_at_or_above_original(self, small_world):
        dataset, _, _ = small_world
        truth = extract_ground_truth(dataset, PARAMS)
        campaign = obfuscation_campaign(dataset, PrivacyLevel.zero_noise(), 1, 0)
        cfg = SweepConfig(min_m=100, max_m=400, step_m=150, recall_target=0.7)
        result = threshold_sweep(campaign, truth, PARAMS, cfg, MEDIUM)
        by_thr = dict(result.rows)
        assert by_thr[250] == 1.0
        assert by_thr[100] < 0.7
        assert result.optimal_m == 250
        assert result.reached

    def test_unreached_flag_with_best_effort(self, small_world):
        dataset, _, _ = small_world
        truth = extract_ground_truth(dataset, PARAMS)
        campaign = obfuscation_campaign(dataset, MEDIUM, 2, 5)
        cfg = SweepConfig(min_m=100, max_m=200, step_m=100, recall_target=0.7)
        result = threshold_sweep(campaign, truth, PARAMS, cfg, MEDIUM)
        assert not result.reached
        assert result.optimal_m is None
        assert result.best_m in (100, 200)
        assert result.chosen_m == result.best_m

    def test_empty_ground_truth_rejected(self, small_world):
        dataset, _, _ = small_world
        campaign = obfuscation_campaign(dataset, MEDIUM, 1, 5)
        with pytest.raises(ValueError, match="ground truth"):
            threshold_sweep(campaign, {}, PARAMS, SweepConfig(), MEDIUM)


class TestEvaluate:
    def test_zero_noise_identity_pipeline(self, small_world):
        dataset, _, store = small_world
        truth = extract_ground_truth(dataset, PARAMS)
        campaign = obfuscation_campaign(dataset, PrivacyLevel.zero_noise(), 2, 0)
        report = evaluate(
            campaign,
            truth,
            PrivacyLevel.zero_noise(),
            250,
            store,
            PARAMS,
            dataset=dataset,
            precision_cfg=PrecisionConfig(samples=25),
        )
        assert report.recall_rows[0].mean_recall == 1.0
        assert report.reident_rows[0].rate == 1.0
        assert all(row.geo_m == 0.0 and row.semantic == 0.0 for row in report.pair_rows)
        assert report.precision_rows[0].mean_precision == 1.0

    def test_cdf_fractions_monotone_to_one(self, small_world):
        dataset, _, store = small_world
        truth = extract_ground_truth(dataset, PARAMS)
        campaign = obfuscation_campaign(dataset, MEDIUM, 2, 3)
        report = evaluate(campaign, truth, MEDIUM, 2000, store, PARAMS)
        values, fractions = report.geo_cdf[MEDIUM.epsilon]
        assert list(values) == sorted(values)
        assert list(fractions) == sorted(fractions)
        assert fractions[-1] == 1.0


class TestPrecisionSummary:
    def test_counts_empty_retrievals(self, small_world):
        dataset, _, _ = small_world
        empty_region = FeatureStore.build(
            generate_synthetic_features(5, (10.0, 10.0, 10.1, 10.1), 5.0)
        )
        row = precision_summary(dataset, MEDIUM, empty_region, PrecisionConfig(samples=10), 3)
        assert row.n_empty == 10
        assert row.mean_precision == 1.0

    def test_deterministic_for_seed(self, small_world):
        dataset, _, store = small_world
        a = precision_summary(dataset, MEDIUM, store, PrecisionConfig(samples=20), 9)
        b = precision_summary(dataset, MEDIUM, store, PrecisionConfig(samples=20), 9)
        assert a == b


class TestWriteReport:
    EXPECTED_FILES = (
        "recall_users.csv",
        "distances.csv",
        "recall.csv",
        "reident.csv",
        "precision.csv",
        "cdf_geo.csv",
        "cdf_semantic.csv",
        "sweep.csv",
        "manifest.json",
    )

    def test_empty_report_writes_headers(self, tmp_path):
        manifest = write_report(EvaluationReport(), tmp_path)
        for name in self.EXPECTED_FILES:
            assert (tmp_path / name).exists()
        for name, count in manifest["files"].items():
            assert count == 0
            text = (tmp_path / name).read_text()
            assert len(text.splitlines()) == 1  # header only

    def test_fixed_seed_runs_are_byte_identical(self, small_world, tmp_path):
        dataset, _, store = small_world
        config = ExperimentConfig(
            levels=(MEDIUM,),
            runs=2,
            master_seed=21,
            extraction=PARAMS,
            sweep=SweepConfig(min_m=800, max_m=2400, step_m=800),
            precision=PrecisionConfig(samples=10),
        )
        write_report(run_experiment(dataset, config, store), tmp_path / "a")
        write_report(run_experiment(dataset, config, store), tmp_path / "b")
        for name in self.EXPECTED_FILES:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_cdf_files_end_at_one(self, small_world, tmp_path):
        dataset, _, store = small_world
        config = ExperimentConfig(
            levels=(MEDIUM,),
            runs=1,
            master_seed=4,
            extraction=PARAMS,
            sweep=SweepConfig(min_m=1000, max_m=2000, step_m=1000),
            precision=PrecisionConfig(samples=5),
        )
        write_report(run_experiment(dataset, config, store), tmp_path)
        lines = (tmp_path / "cdf_geo.csv").read_text().splitlines()
        assert lines[0] == "epsilon,geo_m,fraction"
        assert lines[-1].endswith(",1.0")
