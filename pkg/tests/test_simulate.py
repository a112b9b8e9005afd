import numpy as np
import pytest

from pathseg import PathSpec, SimConfig, default_path, generate_runs, signature_bank
from pathseg.errors import ConfigurationError
from pathseg.simulate import imu_signal


def small_config(**over):
    base = dict(seed=1, n_segments=4, n_runs=2, segment_duration_range=(1.0, 2.0))
    base.update(over)
    return SimConfig(**base)


def rle(labels):
    change = np.flatnonzero(np.diff(labels) != 0) + 1
    return labels[np.concatenate(([0], change))].tolist()


class TestSimConfig:
    def test_single_segment_rejected(self):
        with pytest.raises(ConfigurationError):
            small_config(n_segments=1)

    def test_bad_duration_range(self):
        with pytest.raises(ConfigurationError):
            small_config(segment_duration_range=(0.0, 1.0))
        with pytest.raises(ConfigurationError):
            small_config(segment_duration_range=(2.0, 1.0))

    def test_unknown_feature_set(self):
        with pytest.raises(ConfigurationError):
            small_config(feature_set="magic_3")


class TestGenerateRuns:
    def test_run_count_and_labels_walk(self):
        cfg = small_config()
        runs = generate_runs(cfg, default_path(cfg))
        assert len(runs) == 2
        for run in runs:
            blocks = rle(run.labels)
            # forward walk over all segments, then the reverse walk
            assert blocks == [0, 1, 2, 3, 2, 1, 0]
            assert set(run.labels.tolist()) == {0, 1, 2, 3}

    def test_no_return_journey(self):
        cfg = small_config(include_return_journey=False)
        runs = generate_runs(cfg, default_path(cfg))
        assert rle(runs[0].labels) == [0, 1, 2, 3]

    def test_ambient_missing_fraction(self):
        # expected missing fraction is 1 - ambient_rate / imu_rate
        cfg = small_config(seed=1, n_segments=4, n_runs=2, segment_duration_range=(4.0, 6.0))
        runs = generate_runs(cfg, default_path(cfg))
        expected = 1.0 - cfg.ambient_rate / cfg.imu_rate
        for run in runs:
            for f, name in enumerate(run.feature_names):
                frac = float(np.isnan(run.values[:, f]).mean())
                if name.startswith(("acc_", "gyro_", "mag_")):
                    assert frac == 0.0
                else:
                    assert frac >= 0.99
                    assert abs(frac - expected) < 0.005

    def test_ambient_gap_lengths(self):
        cfg = small_config(segment_duration_range=(5.0, 6.0))
        run = generate_runs(cfg, default_path(cfg))[0]
        ratio = int(np.floor(cfg.imu_rate / cfg.ambient_rate))
        temp = run.values[:, run.feature_names.index("temperature")]
        recorded = np.flatnonzero(~np.isnan(temp))
        gaps = np.diff(recorded) - 1
        assert gaps.size > 0
        assert set(gaps.tolist()) <= {ratio - 1, ratio, ratio + 1}

    def test_seeded_determinism(self):
        cfg = small_config()
        a = generate_runs(cfg, default_path(cfg))
        b = generate_runs(cfg, default_path(cfg))
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.values, rb.values, equal_nan=True)
            assert np.array_equal(ra.labels, rb.labels)
            assert np.array_equal(ra.timestamps, rb.timestamps)

    def test_runs_are_prefix_stable(self):
        # run r only consumes the stream seeded with seed + r
        few = generate_runs(small_config(n_runs=2), default_path(small_config(n_runs=2)))
        many = generate_runs(small_config(n_runs=4), default_path(small_config(n_runs=4)))
        assert np.array_equal(few[1].values, many[1].values, equal_nan=True)

    def test_zero_noise_matches_signature_exactly(self):
        # accel/gyro columns carry no anomaly bumps: a noise-free run must
        # reproduce baseline + oscillation at every sample
        cfg = small_config(noise_scale=0.0, segment_duration_range=(2.0, 3.0))
        path = default_path(cfg)
        bank = signature_bank(cfg.seed, path, cfg.noise_scale, cfg.imu_rate)
        run = generate_runs(cfg, path)[0]
        checked = 0
        for seg in range(cfg.n_segments):
            mask = run.labels == seg
            for f, name in enumerate(path.feature_names):
                if not name.startswith(("acc_", "gyro_")):
                    continue
                want = imu_signal(bank[seg], f, run.timestamps[mask])
                np.testing.assert_allclose(run.values[mask, f], want, atol=1e-12)
                checked += 1
        assert checked > 0

    def test_feature_set_mismatch_rejected(self):
        cfg = small_config(feature_set="imu_9")
        wrong = default_path(small_config(feature_set="full_17"))
        with pytest.raises(ConfigurationError):
            generate_runs(cfg, wrong)

    def test_segment_count_mismatch_rejected(self):
        cfg = small_config(n_segments=4)
        path = default_path(small_config(n_segments=5))
        with pytest.raises(ConfigurationError):
            generate_runs(cfg, path)


class TestSignatureBank:
    def test_deterministic(self, tiny_path):
        a = signature_bank(1, tiny_path)
        b = signature_bank(1, tiny_path)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.baseline, sb.baseline)
            assert sa.anomaly_magnitude == sb.anomaly_magnitude

    def test_two_segments_distinct(self):
        path = PathSpec("p", ("a", "b"), ("f0", "f1", "f2", "f3"))
        bank = signature_bank(1, path)
        assert len(bank) == 2
        assert not np.array_equal(bank[0].baseline, bank[1].baseline)

    def test_all_pairwise_distances_positive_l8(self):
        cfg = small_config(n_segments=8)
        bank = signature_bank(1, default_path(cfg))
        dists = [
            float(np.linalg.norm(bank[i].baseline - bank[j].baseline))
            for i in range(8)
            for j in range(i + 1, 8)
        ]
        assert len(dists) == 28
        assert min(dists) > 0

    def test_separation_contract(self):
        noise = 0.8
        cfg = small_config(n_segments=6, noise_scale=noise)
        bank = signature_bank(3, default_path(cfg), noise_scale=noise)
        for i in range(6):
            for j in range(i + 1, 6):
                gaps = np.abs(bank[i].baseline - bank[j].baseline)
                assert int((gaps >= 0.5 * noise).sum()) >= 3

    def test_frequencies_below_nyquist(self):
        cfg = small_config()
        for sig in signature_bank(5, default_path(cfg), imu_rate=24.0):
            assert np.all(sig.osc_frequency < 12.0)
            assert np.all(sig.osc_amplitude >= 0)
            assert sig.anomaly_magnitude >= 0

    def test_per_segment_mean_converges_to_baseline(self):
        # statistical sanity: pooled per-segment means land near baselines
        cfg = small_config(seed=9, n_segments=3, n_runs=4, segment_duration_range=(5.0, 6.0), noise_scale=0.5)
        path = default_path(cfg)
        bank = signature_bank(cfg.seed, path, cfg.noise_scale, cfg.imu_rate)
        runs = generate_runs(cfg, path)
        for seg in range(3):
            for f, name in enumerate(path.feature_names):
                if not name.startswith(("acc_", "gyro_")):
                    continue
                samples = np.concatenate([r.values[r.labels == seg, f] for r in runs])
                m = samples.size
                sigma = float(samples.std())
                assert abs(float(samples.mean()) - bank[seg].baseline[f]) <= 3 * sigma / np.sqrt(m)
