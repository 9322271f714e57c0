"""Acceptance suite: one test per release criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines alongside the pytest verdicts.
"""

import struct
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from scipy.stats import spearmanr

from fitforge import nn
from fitforge.bundle import MAGIC, load_bundle, save_bundle
from fitforge.data import SyntheticConfig, generate_synthetic
from fitforge.errors import BundleChecksumError, BundleVersionError
from fitforge.models import (
    ContextLayout,
    DistanceTrainingConfig,
    SequenceTrainingConfig,
    _sequence_forward,
    init_sequence_model,
    metric,
    sequence_loss_and_grads,
)
from fitforge.pipeline import PipelineConfig, build_bundle
from fitforge.service import RecommendationRequest, create_app, recommend
from fitforge.tensor import core_consistency, cp_als, rank_sweep, tucker_core


def exact_rank_tensor(shape, rank, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.normal(size=(dim, rank)) for dim in shape)
    return np.einsum("ir,jr,kr->ijk", a, b, c)


@pytest.fixture(scope="module")
def full_pipeline():
    """2,000 synthetic workouts through the complete training pipeline."""
    records = generate_synthetic(
        SyntheticConfig(n_users=50, n_routes=40, workouts_per_user=40, sequence_length=50, noise_scale=0.2, seed=2024)
    )
    assert len(records) == 2000
    config = PipelineConfig(
        n_clusters=32,
        ranks=tuple(range(2, 7)),
        distance=DistanceTrainingConfig(
            hidden_dims=(64,), learning_rate=1e-3, weight_decay=1e-7, dropout=0.2,
            epochs=60, batch_size=64, patience=10, seed=0,
        ),
        sequence=SequenceTrainingConfig(
            hidden1=128, hidden2=64, learning_rate=5e-3, dropout=0.2,
            epochs=8, batch_size=32, patience=8, seed=0,
        ),
    )
    start = time.time()
    result = build_bundle(records, config)
    elapsed = time.time() - start
    return records, result, elapsed


class TestCpOracle:
    def test_cp_oracle(self):
        tensor = exact_rank_tensor((6, 5, 4), 2, seed=0)
        start = time.time()
        factors = cp_als(tensor, rank=2, max_sweeps=500, tol=0.0, seed=1)
        elapsed = time.time() - start
        assert factors.fit_history[-1] < 1e-8
        fits = factors.fit_history
        assert all(fits[i + 1] <= fits[i] + 1e-10 for i in range(len(fits) - 1))
        assert elapsed < 5.0
        print(f"\nACCEPTANCE PASS: CP oracle (fit {factors.fit_history[-1]:.2e}, {elapsed:.2f}s)")


class TestCoreConsistency:
    def test_core_consistency_criteria(self):
        tensor = exact_rank_tensor((6, 5, 4), 2, seed=0)

        factors = cp_als(tensor, rank=2, max_sweeps=500, tol=1e-13, seed=1)
        core = tucker_core(tensor, factors.A * factors.lam, factors.B, factors.C)
        cc_true = core_consistency(core.values, 2)
        assert cc_true > 99.0

        assert core_consistency(np.zeros((3, 3, 3)), 3) == pytest.approx(0.0)

        over = cp_als(tensor, rank=3, max_sweeps=500, tol=1e-13, seed=1)
        over_core = tucker_core(tensor, over.A * over.lam, over.B, over.C)
        cc_over = core_consistency(over_core.values, 3)
        assert cc_over < cc_true

        report = rank_sweep(tensor, [2, 3, 4], seed=1)
        assert report.selected_rank == 2
        print(f"\nACCEPTANCE PASS: core consistency (cc@2 {cc_true:.2f}, cc@3 {cc_over:.2f}, sweep -> 2)")


class TestTuckerEquivalence:
    def test_matches_dense_least_squares_up_to_200_cells(self):
        rng = np.random.default_rng(3)
        shapes = [(2, 2, 2), (3, 4, 5), (4, 5, 6), (5, 5, 8), (10, 5, 4), (6, 6, 5)]
        checked = 0
        for shape in shapes:
            assert np.prod(shape) <= 200
            for rank in (1, 2, 3):
                tensor = rng.normal(size=shape)
                a, b, c = (rng.normal(size=(dim, rank)) for dim in shape)
                core = tucker_core(tensor, a, b, c)
                design = np.kron(np.kron(c, b), a)
                vec_g, *_ = np.linalg.lstsq(design, tensor.reshape(-1, order="F"), rcond=None)
                np.testing.assert_allclose(core.values.reshape(-1, order="F"), vec_g, atol=1e-8)
                checked += 1
        print(f"\nACCEPTANCE PASS: Tucker-core equivalence ({checked} instances <= 200 cells)")


class TestGradientSuite:
    def test_gradient_suite_ten_seeds_each(self):
        start = time.time()

        # (a) one-hidden-layer MLP with sigmoid head
        for seed in range(10):
            rng = np.random.default_rng(seed)
            mlp = nn.init_mlp(rng, 9, (16,))
            x = rng.normal(size=(6, 9))
            y = rng.uniform(size=6)
            params = mlp.param_dict()

            def mlp_loss():
                pred, cache = nn.mlp_forward(mlp, x, mode="eval")
                err = pred - y
                grads, _ = nn.mlp_backward(mlp, cache, 2.0 * err / err.shape[0])
                return float((err**2).mean()), grads

            report = nn.grad_check(mlp_loss, params, h=1e-5, threshold=1e-4)
            assert report.passed, (seed, report.max_rel_error)

        # (b) single LSTM cell
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            cell = nn.init_lstm(rng, 5, 4)
            x = rng.normal(size=(3, 5))
            h_prev = rng.normal(size=(3, 4)) * 0.5
            c_prev = rng.normal(size=(3, 4)) * 0.5
            h0, _, _ = nn.lstm_cell_step(cell, x, h_prev, c_prev)
            target = h0 + rng.uniform(-0.1, 0.1, size=h0.shape)
            params = cell.param_dict()

            def cell_loss():
                h, _, cache = nn.lstm_cell_step(cell, x, h_prev, c_prev)
                err = h - target
                loss = float((err**2).mean())
                grads, _, _, _ = nn.lstm_cell_backward(cell, cache, 2.0 * err / err.size, np.zeros_like(h))
                return loss, grads

            report = nn.grad_check(cell_loss, params, h=1e-5, threshold=1e-4)
            assert report.passed, (seed, report.max_rel_error)

        # (c) full two-layer Bi-LSTM with SELU dual heads at L=3
        from fitforge.data import NormStats

        stats = NormStats(ranges={"speed": (0.0, 40.0), "heartrate": (40.0, 210.0)})
        layout = ContextLayout(rank=2)
        for seed in range(10):
            config = SequenceTrainingConfig(hidden1=4, hidden2=3, seed=seed)
            model = init_sequence_model(np.random.default_rng(seed), 6, stats, layout, config)
            rng = np.random.default_rng(1000 + seed)
            xs = rng.normal(size=(2, 3, 6))
            sp0, hr0, _ = _sequence_forward(model, xs, 0.0, "eval")
            speed_t = sp0 + rng.uniform(-0.1, 0.1, size=sp0.shape)
            hr_t = hr0 + rng.uniform(-0.1, 0.1, size=hr0.shape)
            report = nn.grad_check(
                lambda: sequence_loss_and_grads(model, xs, speed_t, hr_t),
                model.param_dict(), h=1e-5, threshold=1e-4,
            )
            assert report.passed, (seed, report.max_rel_error)

        elapsed = time.time() - start
        assert elapsed < 60.0
        print(f"\nACCEPTANCE PASS: gradient suite (30 checks in {elapsed:.1f}s)")


class TestMetricOracles:
    def test_hundred_random_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(1, 10))
            length = int(rng.integers(1, 12))
            pred, truth = rng.normal(size=n), rng.normal(size=n)
            oracle = (sum((p - t) ** 2 for p, t in zip(pred, truth)) / n) ** 0.5
            assert abs(metric("rmse", pred, truth) - oracle) < 1e-12
            pred_s, truth_s = rng.normal(size=(n, length)), rng.normal(size=(n, length))
            oracle_mae = sum(
                sum(abs(pred_s[i, t] - truth_s[i, t]) for t in range(length)) / length for i in range(n)
            ) / n
            assert abs(metric("mae_seq", pred_s, truth_s) - oracle_mae) < 1e-12
        print("\nACCEPTANCE PASS: metric oracles (100 instances at 1e-12)")


class TestClosedFormLstm:
    def test_zero_parameter_cell(self):
        hidden = 4
        cell = nn.LSTMCellParams(
            w_f=np.zeros((hidden, hidden + 2)), w_i=np.zeros((hidden, hidden + 2)),
            w_c=np.zeros((hidden, hidden + 2)), w_o=np.zeros((hidden, hidden + 2)),
            b_f=np.zeros(hidden), b_i=np.zeros(hidden), b_c=np.zeros(hidden), b_o=np.zeros(hidden),
        )
        c_prev = np.array([[0.5, -0.25, 1.5, 0.0]])
        h, c, cache = nn.lstm_cell_step(cell, np.zeros((1, 2)), np.zeros((1, hidden)), c_prev)
        assert np.array_equal(cache.f, np.full((1, hidden), 0.5))
        assert np.array_equal(cache.i, np.full((1, hidden), 0.5))
        assert np.array_equal(cache.o, np.full((1, hidden), 0.5))
        assert np.array_equal(c, 0.5 * c_prev)
        assert np.array_equal(h, 0.5 * np.tanh(0.5 * c_prev))
        print("\nACCEPTANCE PASS: closed-form LSTM cell")


class TestSyntheticEndToEnd:
    def test_beats_mean_baselines_by_thirty_percent(self, full_pipeline):
        records, result, elapsed = full_pipeline
        assert elapsed < 900.0

        split = result.split
        train = split.subset(records, "train")
        test = split.subset(records, "test")

        train_mean_km = float(np.mean([r.total_distance_km for r in train]))
        base_rmse = metric("rmse", np.full(len(test), train_mean_km), np.array([r.total_distance_km for r in test]))
        step_mean_speed = np.stack([r.speed_seq for r in train]).mean(axis=0)
        step_mean_hr = np.stack([r.heartrate_seq for r in train]).mean(axis=0)
        base_speed = metric("mae_seq", np.tile(step_mean_speed, (len(test), 1)), np.stack([r.speed_seq for r in test]))
        base_hr = metric("mae_seq", np.tile(step_mean_hr, (len(test), 1)), np.stack([r.heartrate_seq for r in test]))

        report = result.eval_report
        assert report.distance_rmse_km <= 0.7 * base_rmse
        assert report.speed_mae_kmh <= 0.7 * base_speed
        assert report.heartrate_mae_bpm <= 0.7 * base_hr
        print(
            f"\nACCEPTANCE PASS: synthetic end-to-end in {elapsed:.0f}s "
            f"(distance {report.distance_rmse_km:.3f} vs {base_rmse:.3f} km, "
            f"speed {report.speed_mae_kmh:.2f} vs {base_speed:.2f} km/h, "
            f"hr {report.heartrate_mae_bpm:.2f} vs {base_hr:.2f} bpm)"
        )


class TestCalorieMonotonicity:
    def test_spearman_positive_on_held_out_pairs(self, full_pipeline):
        records, result, _ = full_pipeline
        bundle = result.bundle
        known = set(bundle.user_ids)
        pairs = []
        for record in result.split.subset(records, "test"):
            if record.user_id in known:
                pairs.append(record)
            if len(pairs) == 50:
                break
        assert len(pairs) == 50

        positive = 0
        for record in pairs:
            predictions = []
            for scale in (0.7, 1.0, 1.3):
                response = recommend(
                    bundle,
                    RecommendationRequest(
                        user_id=record.user_id,
                        route_id=record.workout_id,
                        sport=record.sport,
                        target_calories=scale * record.calories,
                    ),
                )
                predictions.append(response.predicted_distance_km)
            if spearmanr([0.7, 1.0, 1.3], predictions).statistic > 0:
                positive += 1
        assert positive >= 45  # 90% of 50
        print(f"\nACCEPTANCE PASS: calorie monotonicity ({positive}/50 positive)")


class TestPersistence:
    def test_probe_set_bit_identical_and_tamper_detection(self, full_pipeline, tmp_path):
        _, result, _ = full_pipeline
        bundle = result.bundle
        path = tmp_path / "acceptance.ff"
        save_bundle(bundle, path)
        loaded = load_bundle(path)

        rng = np.random.default_rng(7)
        sports = ("run", "bike", "mountain-bike")
        for _ in range(32):
            request = RecommendationRequest(
                user_id=bundle.user_ids[int(rng.integers(len(bundle.user_ids)))],
                route_id=bundle.catalog.route_ids[int(rng.integers(len(bundle.catalog.route_ids)))],
                sport=sports[int(rng.integers(3))],
                target_calories=float(rng.uniform(150, 800)),
            )
            assert recommend(bundle, request).to_dict() == recommend(loaded, request).to_dict()

        tampered = bytearray(path.read_bytes())
        tampered[len(tampered) // 2] ^= 0xFF
        bad = tmp_path / "tampered.ff"
        bad.write_bytes(bytes(tampered))
        with pytest.raises(BundleChecksumError):
            load_bundle(bad)

        future = bytearray(path.read_bytes())[:-32]
        future[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 2)
        import hashlib

        body = bytes(future)
        versioned = tmp_path / "future.ff"
        versioned.write_bytes(body + hashlib.sha256(body).digest())
        with pytest.raises(BundleVersionError) as exc:
            load_bundle(versioned)
        assert (exc.value.found, exc.value.supported) == (2, 1)
        print("\nACCEPTANCE PASS: persistence (32-probe bit-identical; tamper + version errors)")


class TestServiceContract:
    def test_determinism_privacy_validation(self, full_pipeline):
        _, result, _ = full_pipeline
        bundle = result.bundle
        client = TestClient(create_app(bundle))

        body = {
            "user_id": bundle.user_ids[0],
            "route_id": bundle.catalog.route_ids[0],
            "sport": "run",
            "target_calories": 512.0,
        }
        first = client.post("/recommend", json=body)
        second = client.post("/recommend", json=body)
        assert first.status_code == 200
        assert first.content == second.content

        users_payload = client.get("/users")
        assert users_payload.status_code == 200
        text = users_payload.text.lower()
        for forbidden in ("gender", "age", "height", "weight"):
            assert forbidden not in text

        invalid = client.post("/recommend", json={**body, "target_calories": -3.0})
        assert invalid.status_code == 422
        assert invalid.json()["field"] == "target_calories"
        malformed = client.post("/recommend", json={"user_id": "x"})
        assert malformed.status_code == 400
        assert "field" in malformed.json()
        print("\nACCEPTANCE PASS: service contract (determinism, privacy, validation)")
