"""End-to-end training pipeline: records in, model bundle out.

Composition order: split and normalize, cluster routes (fit on the
training split), build the context tensor from training history, sweep
CP ranks and decompose at the winner, train the distance model on
original-plus-augmented examples, train the sequence model, and
evaluate the composed pipeline on the held-out test split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bundle import ModelBundle, RouteCatalog
from .data import (
    DatasetSplit,
    NormStats,
    WorkoutRecord,
    augment_route,
    split_and_normalize,
)
from .errors import InsufficientDataError, NotALoopError, NotFoundError
from .models import (
    ContextLayout,
    DistanceTrainingConfig,
    EvalExample,
    EvalReport,
    SequenceTrainingConfig,
    assemble_context,
    evaluate,
    predict_distance,
    predict_sequences,
    sequence_step_inputs,
    train_distance,
    train_sequence,
)
from .routes import assign_records, kmeans_fit, route_signature
from .tensor import (
    CoreConsistencyReport,
    CPFactors,
    build_context_tensor,
    cp_als,
    rank_sweep,
)


@dataclass(frozen=True)
class PipelineConfig:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    n_clusters: int = 32
    cluster_seed: int = 0
    signature_points: int = 16
    ranks: tuple[int, ...] = tuple(range(2, 7))
    decompose_seed: int = 0
    augment: bool = True
    augment_range: tuple[float, float] = (0.05, 0.5)
    augment_seed: int = 0
    include_gender: bool = True
    distance: DistanceTrainingConfig = DistanceTrainingConfig()
    sequence: SequenceTrainingConfig = SequenceTrainingConfig()


@dataclass
class PipelineResult:
    bundle: ModelBundle
    split: DatasetSplit
    cc_report: CoreConsistencyReport
    eval_report: EvalReport
    distance_losses: list[float]
    sequence_losses: list[float]


def _embedding_rows(factors: CPFactors, user_index: dict[str, int], assignments: dict[str, int], record: WorkoutRecord):
    if record.user_id not in user_index:
        raise NotFoundError("user", record.user_id)
    user_vec = factors.A[user_index[record.user_id]]
    route_vec = factors.B[assignments[record.workout_id]]
    return user_vec, route_vec


def _record_context(
    record: WorkoutRecord,
    factors: CPFactors,
    user_index: dict[str, int],
    assignments: dict[str, int],
    stats: NormStats,
    layout: ContextLayout,
    total_route_km: float | None = None,
) -> np.ndarray:
    user_vec, route_vec = _embedding_rows(factors, user_index, assignments, record)
    return assemble_context(
        user_vec,
        route_vec,
        calories=record.calories,
        sport=record.sport,
        gender=record.gender,
        total_route_km=record.total_distance_km if total_route_km is None else total_route_km,
        stats=stats,
        layout=layout,
    )


def _distance_examples(
    records: Sequence[WorkoutRecord],
    factors: CPFactors,
    user_index: dict[str, int],
    assignments: dict[str, int],
    stats: NormStats,
    layout: ContextLayout,
    config: PipelineConfig,
    augment: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Context matrix and km targets; loop routes contribute an extended twin.

    The twin keeps the original workout distance as its target while its
    context carries the extended route total, decoupling required
    distance from route length.
    """
    rng = np.random.default_rng(config.augment_seed)
    contexts, targets = [], []
    for record in records:
        contexts.append(_record_context(record, factors, user_index, assignments, stats, layout))
        targets.append(record.total_distance_km)
        if not augment:
            continue
        try:
            extended = augment_route(record, config.augment_range, rng)
        except NotALoopError:
            continue
        contexts.append(
            _record_context(
                record, factors, user_index, assignments, stats, layout,
                total_route_km=extended.total_distance_km,
            )
        )
        targets.append(record.total_distance_km)
    return np.stack(contexts), np.array(targets)


def _sequence_arrays(
    records: Sequence[WorkoutRecord],
    factors: CPFactors,
    user_index: dict[str, int],
    assignments: dict[str, int],
    stats: NormStats,
    layout: ContextLayout,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-step input tensors plus raw speed / heart-rate targets.

    Training feeds the true workout distance into the distance input
    slot; inference substitutes the distance model's prediction.
    """
    xs, speeds, heartrates = [], [], []
    for record in records:
        ctx = _record_context(record, factors, user_index, assignments, stats, layout)
        xs.append(sequence_step_inputs(ctx, record.total_distance_km, record.altitude_seq, record.distance_seq, stats))
        speeds.append(record.speed_seq)
        heartrates.append(record.heartrate_seq)
    return np.stack(xs), np.stack(speeds), np.stack(heartrates)


def build_eval_examples(
    records: Sequence[WorkoutRecord],
    factors: CPFactors,
    user_index: dict[str, int],
    assignments: dict[str, int],
    stats: NormStats,
    layout: ContextLayout,
) -> list[EvalExample]:
    examples = []
    for record in records:
        ctx = _record_context(record, factors, user_index, assignments, stats, layout)
        examples.append(
            EvalExample(
                context=ctx,
                target_km=record.total_distance_km,
                altitude_seq=record.altitude_seq,
                distance_seq=record.distance_seq,
                speed_seq=record.speed_seq,
                heartrate_seq=record.heartrate_seq,
            )
        )
    return examples


def bundle_eval_examples(bundle: ModelBundle, records: Sequence[WorkoutRecord]) -> tuple[list[EvalExample], int]:
    """Eval examples scored against a loaded bundle; unknown users are skipped.

    Routes are always resolvable (any signature assigns to some cluster),
    so the skip count reflects users absent from the trained index.
    """
    user_index = {u: i for i, u in enumerate(bundle.user_ids)}
    examples = []
    skipped = 0
    for record in records:
        if record.user_id not in user_index:
            skipped += 1
            continue
        cluster_id = assign_records(bundle.cluster_model, [record], bundle.signature_points)[record.workout_id]
        context = assemble_context(
            bundle.factors.A[user_index[record.user_id]],
            bundle.factors.B[cluster_id],
            calories=record.calories,
            sport=record.sport,
            gender=record.gender,
            total_route_km=record.total_distance_km,
            stats=bundle.stats,
            layout=bundle.layout,
        )
        examples.append(
            EvalExample(
                context=context,
                target_km=record.total_distance_km,
                altitude_seq=record.altitude_seq,
                distance_seq=record.distance_seq,
                speed_seq=record.speed_seq,
                heartrate_seq=record.heartrate_seq,
            )
        )
    return examples, skipped


def _build_catalog(records: Sequence[WorkoutRecord], assignments: dict[str, int]) -> RouteCatalog:
    lengths = {r.length for r in records}
    if len(lengths) != 1:
        raise InsufficientDataError(f"route catalog needs uniform sequence lengths, got {sorted(lengths)}")
    return RouteCatalog(
        route_ids=[r.workout_id for r in records],
        cluster_ids=np.array([assignments[r.workout_id] for r in records], dtype=np.int64),
        total_km=np.array([r.total_distance_km for r in records]),
        altitude=np.stack([r.altitude_seq for r in records]),
        distance=np.stack([r.distance_seq for r in records]),
    )


def build_bundle(records: Sequence[WorkoutRecord], config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Run the full training pipeline over cleaned records."""
    split, stats = split_and_normalize(records, config.ratios, config.split_seed)
    train_records = split.subset(records, "train")
    val_records = split.subset(records, "validation")
    test_records = split.subset(records, "test")

    signatures = np.stack([route_signature(r, config.signature_points) for r in train_records])
    k = min(config.n_clusters, np.unique(signatures, axis=0).shape[0])
    cluster_model = kmeans_fit(signatures, k=k, seed=config.cluster_seed)
    assignments = assign_records(cluster_model, records, config.signature_points)

    tensor = build_context_tensor(train_records, cluster_model, config.signature_points)
    cc_report = rank_sweep(tensor.values, config.ranks, seed=config.decompose_seed)
    factors = cp_als(tensor.values, cc_report.selected_rank, seed=config.decompose_seed)
    user_index = {u: i for i, u in enumerate(tensor.user_ids)}

    layout = ContextLayout(rank=factors.rank, include_gender=config.include_gender)

    def known(rs):
        return [r for r in rs if r.user_id in user_index]

    train_known = known(train_records)
    val_known = known(val_records)
    test_known = known(test_records)

    x_train, km_train = _distance_examples(train_known, factors, user_index, assignments, stats, layout, config, config.augment)
    x_val, km_val = _distance_examples(val_known, factors, user_index, assignments, stats, layout, config, False)
    distance_model, distance_losses = train_distance(x_train, km_train, x_val, km_val, stats, layout, config.distance)

    xs_train, sp_train, hr_train = _sequence_arrays(train_known, factors, user_index, assignments, stats, layout)
    xs_val, sp_val, hr_val = _sequence_arrays(val_known, factors, user_index, assignments, stats, layout)
    sequence_model, sequence_losses = train_sequence(
        xs_train, sp_train, hr_train, xs_val, sp_val, hr_val, stats, layout, config.sequence
    )

    eval_examples = build_eval_examples(test_known, factors, user_index, assignments, stats, layout)
    eval_report = evaluate(
        lambda ctx: predict_distance(distance_model, ctx),
        lambda ctx, km, alt, dist: predict_sequences(sequence_model, ctx, km, alt, dist),
        eval_examples,
        counts={"train": len(train_records), "validation": len(val_records), "test": len(test_records)},
    )

    genders: dict[str, str] = {}
    for record in records:
        genders.setdefault(record.user_id, record.gender)
    bundle = ModelBundle(
        stats=stats,
        layout=layout,
        cluster_model=cluster_model,
        factors=factors,
        user_ids=list(tensor.user_ids),
        user_genders={u: genders.get(u, "unknown") for u in tensor.user_ids},
        distance_model=distance_model,
        sequence_model=sequence_model,
        catalog=_build_catalog(records, assignments),
        sequence_length=records[0].length,
        signature_points=config.signature_points,
        hyperparams={
            "distance": vars(config.distance) | {"hidden_dims": list(config.distance.hidden_dims)},
            "sequence": vars(config.sequence),
            "ranks": list(config.ranks),
            "n_clusters": k,
        },
        seeds={
            "split": config.split_seed,
            "cluster": config.cluster_seed,
            "decompose": config.decompose_seed,
            "augment": config.augment_seed,
            "distance": config.distance.seed,
            "sequence": config.sequence.seed,
        },
    )
    return PipelineResult(
        bundle=bundle,
        split=split,
        cc_report=cc_report,
        eval_report=eval_report,
        distance_losses=distance_losses,
        sequence_losses=sequence_losses,
    )
