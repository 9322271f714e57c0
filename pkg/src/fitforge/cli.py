"""Command-line interface.

Staged workflow over line-delimited workout files:

    fitforge synth          generate a synthetic dataset
    fitforge ingest         validate and rewrite records canonically
    fitforge clean          apply cleaning rules
    fitforge cluster-routes fit the route cluster model
    fitforge decompose      rank sweep + CP factors + embeddings export
    fitforge train-distance train the distance model stage
    fitforge train-sequence train the sequence model and emit the bundle
    fitforge evaluate       score a bundle on a held-out file
    fitforge recommend      what-if table for one or more calorie targets
    fitforge serve          HTTP inference service

The training stages share --ratios / --split-seed so every stage sees
the same training subset.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import data as data_mod
from .errors import FitforgeError


def _read_records(path: str):
    with open(path, "rb") as fh:
        return data_mod.parse_records(fh)


def _write_records(records, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        data_mod.write_records(records, fh)


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = tuple(float(p) for p in text.split(","))
    if len(parts) != 3:
        raise click.BadParameter("expected three comma-separated ratios, e.g. 0.8,0.1,0.1")
    return parts


def _train_subset(records, ratios, split_seed):
    split, stats = data_mod.split_and_normalize(records, ratios, split_seed)
    return split, stats, split.subset(records, "train")


@click.group()
def main():
    """Workout distance / speed / heart-rate recommendation toolkit."""


@main.command()
@click.option("--users", "n_users", type=int, default=20, show_default=True)
@click.option("--routes", "n_routes", type=int, default=12, show_default=True)
@click.option("--per-user", "workouts_per_user", type=int, default=10, show_default=True)
@click.option("--length", "sequence_length", type=int, default=50, show_default=True)
@click.option("--noise", "noise_scale", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def synth(n_users, n_routes, workouts_per_user, sequence_length, noise_scale, seed, out_path):
    """Generate a deterministic synthetic workout dataset."""
    config = data_mod.SyntheticConfig(
        n_users=n_users,
        n_routes=n_routes,
        workouts_per_user=workouts_per_user,
        sequence_length=sequence_length,
        noise_scale=noise_scale,
        seed=seed,
    )
    records = data_mod.generate_synthetic(config)
    _write_records(records, out_path)
    click.echo(f"wrote {len(records)} records to {out_path}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def ingest(in_path, out_path):
    """Validate a workout file and rewrite it in canonical form."""
    records = _read_records(in_path)
    _write_records(records, out_path)
    click.echo(f"ingested {len(records)} records -> {out_path}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--max-speed", type=float, default=None, help="Uniform speed cap in km/h (default: per-sport caps).")
@click.option("--max-alt", type=float, default=data_mod.DEFAULT_MEAN_ALTITUDE_CAP_M, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
def clean(in_path, out_path, max_speed, max_alt, report_path):
    """Filter records breaking the speed, altitude, or sport rules."""
    records = _read_records(in_path)
    if max_speed is not None:
        rules = data_mod.CleaningRules.with_uniform_speed_cap(max_speed, max_alt)
    else:
        rules = data_mod.CleaningRules(max_mean_altitude_m=max_alt)
    retained, report = data_mod.clean(records, rules)
    _write_records(retained, out_path)
    click.echo(f"retained {report.retained_count}/{report.input_count} records ({len(report.removals)} removed)")
    if report_path:
        payload = {
            "input_count": report.input_count,
            "retained_count": report.retained_count,
            "removals": [{"workout_id": wid, "rule": rule} for wid, rule in report.removals],
        }
        Path(report_path).write_text(json.dumps(payload, indent=2))


@main.command("cluster-routes")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--k", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--signature-points", type=int, default=16, show_default=True)
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--split-seed", type=int, default=0, show_default=True)
def cluster_routes(in_path, out_path, k, seed, signature_points, ratios, split_seed):
    """Fit the route cluster model on the training subset."""
    from .bundle import save_cluster_model
    from .routes import kmeans_fit, route_signature

    records = _read_records(in_path)
    _, _, train_records = _train_subset(records, _parse_ratios(ratios), split_seed)
    signatures = np.stack([route_signature(r, signature_points) for r in train_records])
    k = min(k, np.unique(signatures, axis=0).shape[0])
    model = kmeans_fit(signatures, k=k, seed=seed)
    save_cluster_model(model, out_path, signature_points)
    click.echo(f"fit {model.k} route clusters in {len(model.inertia_history)} iterations -> {out_path}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--clusters", "clusters_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--rank-min", type=int, default=2, show_default=True)
@click.option("--rank-max", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@click.option("--export-embeddings", "embeddings_path", type=click.Path(dir_okay=False), default=None)
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--split-seed", type=int, default=0, show_default=True)
def decompose(in_path, clusters_path, out_path, rank_min, rank_max, seed, report_path, embeddings_path, ratios, split_seed):
    """Sweep CP ranks by core consistency and keep the winning factors."""
    from .bundle import load_cluster_model, save_factors
    from .tensor import build_context_tensor, cp_als, rank_sweep

    records = _read_records(in_path)
    _, _, train_records = _train_subset(records, _parse_ratios(ratios), split_seed)
    cluster_model, signature_points = load_cluster_model(clusters_path)
    tensor = build_context_tensor(train_records, cluster_model, signature_points)
    max_rank = min(rank_max, max(tensor.shape))
    ranks = list(range(rank_min, max_rank + 1))
    report = rank_sweep(tensor.values, ranks, seed=seed)
    factors = cp_als(tensor.values, report.selected_rank, seed=seed)
    save_factors(factors, list(tensor.user_ids), out_path, seed)
    for rank, cc, fit in report.entries:
        click.echo(f"rank {rank:2d}  cc {cc:9.3f}  relative_fit {fit:.6f}")
    click.echo(f"selected rank {report.selected_rank} -> {out_path}")
    if report_path:
        with open(report_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "cc", "relative_fit"])
            writer.writerows(report.entries)
    if embeddings_path:
        with open(embeddings_path, "w", encoding="utf-8") as fh:
            for user_id, row in zip(tensor.user_ids, factors.A):
                fh.write("\t".join([f"user:{user_id}", *(f"{v:.10g}" for v in row)]) + "\n")
            for j, row in enumerate(factors.B):
                fh.write("\t".join([f"route_cluster:{j}", *(f"{v:.10g}" for v in row)]) + "\n")


@main.command("train-distance")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--clusters", "clusters_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--factors", "factors_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--split-seed", type=int, default=0, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--hidden", default="64", show_default=True, help="Comma-separated hidden layer widths.")
@click.option("--dropout", type=float, default=0.2, show_default=True)
@click.option("--weight-decay", type=float, default=1e-7, show_default=True)
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--patience", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--augment/--no-augment", default=True, show_default=True)
@click.option("--gender/--no-gender", "include_gender", default=True, show_default=True)
def train_distance_cmd(
    in_path, clusters_path, factors_path, out_path, ratios, split_seed, lr, hidden,
    dropout, weight_decay, epochs, batch_size, patience, seed, augment, include_gender,
):
    """Train the calorie-to-distance model stage."""
    from .bundle import load_cluster_model, load_factors, save_distance_stage
    from .models import ContextLayout, DistanceTrainingConfig, train_distance
    from .pipeline import PipelineConfig, _distance_examples
    from .routes import assign_records

    ratios_t = _parse_ratios(ratios)
    records = _read_records(in_path)
    split, stats = data_mod.split_and_normalize(records, ratios_t, split_seed)
    cluster_model, signature_points = load_cluster_model(clusters_path)
    factors, user_ids = load_factors(factors_path)
    user_index = {u: i for i, u in enumerate(user_ids)}
    assignments = assign_records(cluster_model, records, signature_points)
    layout = ContextLayout(rank=factors.rank, include_gender=include_gender)
    config = DistanceTrainingConfig(
        hidden_dims=tuple(int(w) for w in hidden.split(",")),
        learning_rate=lr,
        weight_decay=weight_decay,
        dropout=dropout,
        epochs=epochs,
        batch_size=batch_size,
        patience=patience,
        seed=seed,
    )
    pipe_cfg = PipelineConfig(ratios=ratios_t, split_seed=split_seed)

    def known(rs):
        return [r for r in rs if r.user_id in user_index]

    x_train, km_train = _distance_examples(
        known(split.subset(records, "train")), factors, user_index, assignments, stats, layout, pipe_cfg, augment
    )
    x_val, km_val = _distance_examples(
        known(split.subset(records, "validation")), factors, user_index, assignments, stats, layout, pipe_cfg, False
    )
    model, losses = train_distance(x_train, km_train, x_val, km_val, stats, layout, config)
    split_meta = {"ratios": list(ratios_t), "seed": split_seed}
    save_distance_stage(model, out_path, split_meta, {"lr": lr, "hidden": hidden, "epochs": len(losses)})
    click.echo(f"trained distance model for {len(losses)} epochs (final loss {losses[-1]:.6f}) -> {out_path}")


@main.command("train-sequence")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--clusters", "clusters_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--factors", "factors_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--distance", "distance_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--lr", type=float, default=5e-3, show_default=True)
@click.option("--hidden1", type=int, default=128, show_default=True)
@click.option("--hidden2", type=int, default=64, show_default=True)
@click.option("--dropout", type=float, default=0.2, show_default=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--patience", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def train_sequence_cmd(
    in_path, clusters_path, factors_path, distance_path, out_path, lr, hidden1, hidden2,
    dropout, epochs, batch_size, patience, seed,
):
    """Train the speed / heart-rate model and assemble the full bundle."""
    from .bundle import ModelBundle, load_cluster_model, load_distance_stage, load_factors, save_bundle
    from .models import SequenceTrainingConfig, train_sequence
    from .pipeline import _build_catalog, _sequence_arrays
    from .routes import assign_records

    records = _read_records(in_path)
    cluster_model, signature_points = load_cluster_model(clusters_path)
    factors, user_ids = load_factors(factors_path)
    distance_model, distance_manifest = load_distance_stage(distance_path)
    split_meta = distance_manifest["split"]
    split, stats = data_mod.split_and_normalize(records, tuple(split_meta["ratios"]), int(split_meta["seed"]))
    user_index = {u: i for i, u in enumerate(user_ids)}
    assignments = assign_records(cluster_model, records, signature_points)
    layout = distance_model.layout
    config = SequenceTrainingConfig(
        hidden1=hidden1, hidden2=hidden2, learning_rate=lr, dropout=dropout,
        epochs=epochs, batch_size=batch_size, patience=patience, seed=seed,
    )

    def known(rs):
        return [r for r in rs if r.user_id in user_index]

    xs_train, sp_train, hr_train = _sequence_arrays(
        known(split.subset(records, "train")), factors, user_index, assignments, stats, layout
    )
    xs_val, sp_val, hr_val = _sequence_arrays(
        known(split.subset(records, "validation")), factors, user_index, assignments, stats, layout
    )
    model, losses = train_sequence(xs_train, sp_train, hr_train, xs_val, sp_val, hr_val, stats, layout, config)

    genders: dict[str, str] = {}
    for record in records:
        genders.setdefault(record.user_id, record.gender)
    bundle = ModelBundle(
        stats=stats,
        layout=layout,
        cluster_model=cluster_model,
        factors=factors,
        user_ids=user_ids,
        user_genders={u: genders.get(u, "unknown") for u in user_ids},
        distance_model=distance_model,
        sequence_model=model,
        catalog=_build_catalog(records, assignments),
        sequence_length=records[0].length,
        signature_points=signature_points,
        hyperparams={"distance": distance_manifest.get("config", {}), "sequence": vars(config)},
        seeds={"split": int(split_meta["seed"]), "distance": distance_model.seed, "sequence": seed},
    )
    save_bundle(bundle, out_path)
    click.echo(f"trained sequence model for {len(losses)} epochs (final loss {losses[-1]:.6f}); bundle -> {out_path}")


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
def evaluate(bundle_path, test_path):
    """Score a trained bundle against a held-out workout file."""
    from .bundle import load_bundle
    from .models import evaluate as evaluate_models, predict_distance, predict_sequences
    from .pipeline import bundle_eval_examples

    bundle = load_bundle(bundle_path)
    records = _read_records(test_path)
    examples, skipped = bundle_eval_examples(bundle, records)
    report = evaluate_models(
        lambda ctx: predict_distance(bundle.distance_model, ctx),
        lambda ctx, km, alt, dist: predict_sequences(bundle.sequence_model, ctx, km, alt, dist),
        examples,
        counts={"test": len(examples), "skipped_unknown_user": skipped},
    )
    click.echo(f"distance RMSE : {report.distance_rmse_km:.4f} km")
    click.echo(f"speed MAE     : {report.speed_mae_kmh:.4f} km/h")
    click.echo(f"heart-rate MAE: {report.heartrate_mae_bpm:.4f} bpm")
    click.echo(f"counts        : {report.counts}")


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--user", "user_id", required=True)
@click.option("--route", "route_id", required=True)
@click.option("--sport", required=True, type=click.Choice(list(data_mod.SPORTS)))
@click.option("--calories", required=True, help="One or more comma-separated calorie targets.")
@click.option("--gender", type=click.Choice(list(data_mod.GENDERS)), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write per-step speed/heart-rate columns for every scenario.")
def recommend(bundle_path, user_id, route_id, sport, calories, gender, out_path):
    """Print a what-if comparison table for one or more calorie targets."""
    from .bundle import load_bundle
    from .service import RecommendationRequest, recommend as run_recommend

    bundle = load_bundle(bundle_path)
    targets = [float(c) for c in calories.split(",")]
    responses = [
        run_recommend(bundle, RecommendationRequest(user_id=user_id, route_id=route_id, sport=sport, target_calories=c, gender=gender))
        for c in targets
    ]
    click.echo(f"{'calories':>10}  {'distance km':>12}  {'speed avg':>10}  {'heart rate avg':>15}")
    for c, resp in zip(targets, responses):
        click.echo(
            f"{c:>10.0f}  {resp.predicted_distance_km:>12.2f}  {resp.speed_avg_kmh:>10.2f}  {resp.heartrate_avg_bpm:>15.1f}"
        )
    if out_path:
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["step"]
            for c in targets:
                header += [f"speed_{c:g}", f"heartrate_{c:g}"]
            writer.writerow(header)
            length = len(responses[0].speed_seq)
            for step in range(length):
                row = [step]
                for resp in responses:
                    row += [resp.speed_seq[step], resp.heartrate_seq[step]]
                writer.writerow(row)
        click.echo(f"wrote sequences to {out_path}")


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
def serve(bundle_path, host, port):
    """Run the HTTP inference service over a trained bundle."""
    from .bundle import load_bundle
    from .service import serve as run_serve

    run_serve(load_bundle(bundle_path), host=host, port=port)


def run():
    try:
        main(standalone_mode=True)
    except FitforgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    run()
