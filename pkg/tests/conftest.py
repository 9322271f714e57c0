import numpy as np
import pytest
from hypothesis import settings

from fitforge.data import SyntheticConfig, WorkoutRecord, generate_synthetic

# numerical-tolerance properties should explore the same cases every run
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")


def make_record(
    workout_id="w0",
    user_id="u0",
    sport="run",
    gender="male",
    calories=500.0,
    length=5,
    loop=False,
    distance=None,
):
    """Small hand-built record; loop=True closes the coordinate path."""
    steps = np.arange(length, dtype=float)
    lat = 45.0 + 0.001 * steps
    lon = 7.0 + 0.001 * steps
    if loop:
        theta = np.linspace(0.0, 2.0 * np.pi, length)
        lat = 45.0 + 0.01 * np.sin(theta)
        lon = 7.0 + 0.01 * np.cos(theta)
    return WorkoutRecord(
        workout_id=workout_id,
        user_id=user_id,
        sport=sport,
        gender=gender,
        calories=calories,
        altitude_seq=100.0 + 5.0 * np.sin(steps),
        distance_seq=np.asarray(distance, dtype=float) if distance is not None else steps * 0.1,
        speed_seq=np.full(length, 10.0),
        heartrate_seq=np.full(length, 140.0),
        lat_seq=lat,
        lon_seq=lon,
    )


@pytest.fixture(scope="session")
def small_synth_records():
    return generate_synthetic(SyntheticConfig(n_users=12, n_routes=8, workouts_per_user=8, sequence_length=30, noise_scale=0.2, seed=11))


@pytest.fixture(scope="session")
def small_pipeline_result(small_synth_records):
    from fitforge.models import DistanceTrainingConfig, SequenceTrainingConfig
    from fitforge.pipeline import PipelineConfig, build_bundle

    config = PipelineConfig(
        n_clusters=6,
        ranks=(2, 3, 4),
        distance=DistanceTrainingConfig(epochs=40, patience=15, seed=0),
        sequence=SequenceTrainingConfig(hidden1=16, hidden2=8, epochs=4, batch_size=16, patience=4, seed=0),
    )
    return build_bundle(small_synth_records, config)


@pytest.fixture(scope="session")
def small_bundle(small_pipeline_result):
    return small_pipeline_result.bundle
