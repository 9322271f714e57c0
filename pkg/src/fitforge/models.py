"""Distance and sequence models: feature assembly, training, evaluation.

The distance model is an MLP over a contextual feature vector (user and
route-cluster embeddings, normalized target calories, sport one-hot,
optional gender code, normalized total route distance) with a sigmoid
head predicting a min-max-normalized workout distance.  The sequence
model is a two-layer stacked bidirectional LSTM over per-step inputs
(the context vector plus normalized predicted distance, altitude, and
cumulative distance); heart rate reads off the first layer through a
SELU head and speed off the second, so the speed head sees the heart-
rate layer's states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import GENDERS, SPORTS, NormStats
from .errors import InsufficientDataError, ValidationError
from . import nn

_GENDER_CODE = {"male": 1.0, "female": -1.0, "unknown": 0.0}


@dataclass(frozen=True)
class ContextLayout:
    """Documented slot order of the contextual feature vector."""

    rank: int
    include_gender: bool = True

    @property
    def slots(self) -> tuple[tuple[str, int], ...]:
        parts = [
            ("user_embedding", self.rank),
            ("route_embedding", self.rank),
            ("calories", 1),
            ("sport", len(SPORTS)),
        ]
        if self.include_gender:
            parts.append(("gender", 1))
        parts.append(("route_distance", 1))
        return tuple(parts)

    @property
    def dim(self) -> int:
        return sum(width for _, width in self.slots)

    def slot_index(self, name: str) -> slice:
        offset = 0
        for slot, width in self.slots:
            if slot == name:
                return slice(offset, offset + width)
            offset += width
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"rank": self.rank, "include_gender": self.include_gender}

    @classmethod
    def from_dict(cls, payload: dict) -> "ContextLayout":
        return cls(rank=int(payload["rank"]), include_gender=bool(payload["include_gender"]))


def assemble_context(
    user_vec: np.ndarray,
    route_vec: np.ndarray,
    *,
    calories: float,
    sport: str,
    gender: str,
    total_route_km: float,
    stats: NormStats,
    layout: ContextLayout,
) -> np.ndarray:
    """Build the contextual feature vector in the layout's slot order."""
    user_vec = np.asarray(user_vec, dtype=float)
    route_vec = np.asarray(route_vec, dtype=float)
    if user_vec.shape != (layout.rank,) or route_vec.shape != (layout.rank,):
        raise ValueError(
            f"embedding dimensions {user_vec.shape}/{route_vec.shape} do not match layout rank {layout.rank}"
        )
    if sport not in SPORTS:
        raise ValidationError("sport", f"unknown sport {sport!r}")
    if gender not in GENDERS:
        raise ValidationError("gender", f"unknown gender {gender!r}")
    if calories < 0:
        raise ValidationError("calories", "calories must be >= 0")
    sport_onehot = np.array([1.0 if sport == s else 0.0 for s in SPORTS])
    parts = [
        user_vec,
        route_vec,
        [stats.normalize("calories", calories)],
        sport_onehot,
    ]
    if layout.include_gender:
        parts.append([_GENDER_CODE[gender]])
    parts.append([stats.normalize("distance", total_route_km)])
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


# ---------------------------------------------------------------------------
# Distance model
# ---------------------------------------------------------------------------


@dataclass
class DistanceModel:
    mlp: nn.MLP
    stats: NormStats
    layout: ContextLayout
    seed: int

    def param_dict(self) -> dict[str, np.ndarray]:
        return self.mlp.param_dict()


@dataclass(frozen=True)
class DistanceTrainingConfig:
    hidden_dims: tuple[int, ...] = (64,)
    learning_rate: float = 1e-3
    weight_decay: float = 1e-7
    dropout: float = 0.2
    epochs: int = 200
    batch_size: int = 64
    patience: int = 10
    seed: int = 0


def predict_distance(model: DistanceModel, context: np.ndarray):
    """Denormalized km prediction; accepts one vector or a (N, D) batch."""
    context = np.asarray(context, dtype=float)
    single = context.ndim == 1
    x = np.atleast_2d(context)
    if x.shape[1] != model.layout.dim:
        raise ValueError(f"context width {x.shape[1]} does not match layout width {model.layout.dim}")
    y, _ = nn.mlp_forward(model.mlp, x, mode="eval")
    km = model.stats.denormalize("distance", y)
    return float(km[0]) if single else km


def train_distance(
    x_train: np.ndarray,
    km_train: np.ndarray,
    x_val: np.ndarray,
    km_val: np.ndarray,
    stats: NormStats,
    layout: ContextLayout,
    config: DistanceTrainingConfig = DistanceTrainingConfig(),
) -> tuple[DistanceModel, list[float]]:
    """Adam-trained MSE regression on normalized distance with early stopping.

    Stops when the validation RMSE has not improved for ``patience``
    epochs and restores the best parameters seen.  Deterministic per
    config seed.
    """
    x_train = np.asarray(x_train, dtype=float)
    if x_train.size == 0:
        raise InsufficientDataError("empty training split")
    y_train = np.asarray(stats.normalize("distance", np.asarray(km_train, dtype=float)))
    y_val = np.asarray(stats.normalize("distance", np.asarray(km_val, dtype=float)))

    rng = np.random.default_rng(config.seed)
    mlp = nn.init_mlp(rng, layout.dim, config.hidden_dims)
    params = mlp.param_dict()
    opt = nn.OptimizerState(kind="adam", lr=config.learning_rate, weight_decay=config.weight_decay)

    n = x_train.shape[0]
    best_val = np.inf
    best_params = None
    since_best = 0
    losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            pred, cache = nn.mlp_forward(mlp, xb, dropout_p=config.dropout, mode="train", rng=rng)
            err = pred - yb
            epoch_loss += float((err**2).sum())
            grads, _ = nn.mlp_backward(mlp, cache, 2.0 * err / err.shape[0])
            nn.optimizer_step(opt, params, grads)
        losses.append(epoch_loss / n)

        if x_val.shape[0]:
            val_pred, _ = nn.mlp_forward(mlp, x_val, mode="eval")
            val_rmse = float(np.sqrt(np.mean((val_pred - y_val) ** 2)))
        else:
            val_rmse = losses[-1]
        if val_rmse < best_val - 1e-12:
            best_val = val_rmse
            best_params = {k: v.copy() for k, v in params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    if best_params is not None:
        for k, v in params.items():
            v[...] = best_params[k]
    return DistanceModel(mlp=mlp, stats=stats, layout=layout, seed=config.seed), losses


# ---------------------------------------------------------------------------
# Sequence model
# ---------------------------------------------------------------------------


@dataclass
class SequenceModel:
    layer1_fwd: nn.LSTMCellParams
    layer1_bwd: nn.LSTMCellParams
    layer2_fwd: nn.LSTMCellParams
    layer2_bwd: nn.LSTMCellParams
    heartrate_head: nn.Dense
    speed_head: nn.Dense
    stats: NormStats
    layout: ContextLayout
    seed: int

    def param_dict(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.layer1_fwd.param_dict("layer1_fwd"))
        out.update(self.layer1_bwd.param_dict("layer1_bwd"))
        out.update(self.layer2_fwd.param_dict("layer2_fwd"))
        out.update(self.layer2_bwd.param_dict("layer2_bwd"))
        out["heartrate_head.weight"] = self.heartrate_head.weight
        out["heartrate_head.bias"] = self.heartrate_head.bias
        out["speed_head.weight"] = self.speed_head.weight
        out["speed_head.bias"] = self.speed_head.bias
        return out


@dataclass(frozen=True)
class SequenceTrainingConfig:
    hidden1: int = 128
    hidden2: int = 64
    learning_rate: float = 5e-3
    dropout: float = 0.2
    epochs: int = 20
    batch_size: int = 32
    patience: int = 10
    seed: int = 0


def init_sequence_model(
    rng: np.random.Generator,
    step_dim: int,
    stats: NormStats,
    layout: ContextLayout,
    config: SequenceTrainingConfig,
) -> SequenceModel:
    return SequenceModel(
        layer1_fwd=nn.init_lstm(rng, step_dim, config.hidden1),
        layer1_bwd=nn.init_lstm(rng, step_dim, config.hidden1),
        layer2_fwd=nn.init_lstm(rng, 2 * config.hidden1, config.hidden2),
        layer2_bwd=nn.init_lstm(rng, 2 * config.hidden1, config.hidden2),
        heartrate_head=nn.init_dense(rng, 2 * config.hidden1, 1),
        speed_head=nn.init_dense(rng, 2 * config.hidden2, 1),
        stats=stats,
        layout=layout,
        seed=config.seed,
    )


def sequence_step_inputs(
    context: np.ndarray,
    distance_km: float,
    altitude_seq: np.ndarray,
    distance_seq: np.ndarray,
    stats: NormStats,
) -> np.ndarray:
    """Per-step input matrix: [context; normalized distance, altitude_t, cum_distance_t]."""
    altitude_seq = np.asarray(altitude_seq, dtype=float)
    distance_seq = np.asarray(distance_seq, dtype=float)
    if altitude_seq.shape != distance_seq.shape:
        raise ValueError(
            f"altitude length {altitude_seq.shape} does not match distance length {distance_seq.shape}"
        )
    length = altitude_seq.shape[0]
    steps = np.empty((length, context.shape[0] + 3))
    steps[:, : context.shape[0]] = context
    steps[:, context.shape[0]] = stats.normalize("distance", distance_km)
    steps[:, context.shape[0] + 1] = stats.normalize("altitude", altitude_seq)
    steps[:, context.shape[0] + 2] = stats.normalize("cum_distance", distance_seq)
    return steps


def _sequence_forward(model: SequenceModel, xs: np.ndarray, dropout_p: float, mode: str, rng=None):
    """Normalized (speed, heartrate) sequences of shape (N, L) plus cache."""
    h1, caches1 = nn.bilstm_forward(model.layer1_fwd, model.layer1_bwd, xs)
    hr_pre = h1 @ model.heartrate_head.weight.T + model.heartrate_head.bias
    hr = nn.selu(hr_pre)[:, :, 0]
    h1_drop, mask = nn.dropout(h1, dropout_p, rng, mode)
    h2, caches2 = nn.bilstm_forward(model.layer2_fwd, model.layer2_bwd, h1_drop)
    speed_pre = h2 @ model.speed_head.weight.T + model.speed_head.bias
    speed = nn.selu(speed_pre)[:, :, 0]
    cache = (h1, hr_pre, mask, h2, speed_pre, caches1, caches2)
    return speed, hr, cache


def _sequence_backward(model: SequenceModel, cache, d_speed: np.ndarray, d_hr: np.ndarray):
    h1, hr_pre, mask, h2, speed_pre, caches1, caches2 = cache
    grads: dict[str, np.ndarray] = {}

    d_speed_pre = (d_speed * nn.selu_grad(speed_pre[:, :, 0]))[:, :, None]
    grads["speed_head.weight"] = np.einsum("nlo,nlh->oh", d_speed_pre, h2)
    grads["speed_head.bias"] = d_speed_pre.sum(axis=(0, 1))
    dh2 = d_speed_pre @ model.speed_head.weight

    g2f, g2b, dh1_drop = nn.bptt_backward(model.layer2_fwd, model.layer2_bwd, caches2, dh2)
    grads.update({f"layer2_fwd.{k}": v for k, v in g2f.items()})
    grads.update({f"layer2_bwd.{k}": v for k, v in g2b.items()})
    if mask is not None:
        dh1_drop = dh1_drop * mask

    d_hr_pre = (d_hr * nn.selu_grad(hr_pre[:, :, 0]))[:, :, None]
    grads["heartrate_head.weight"] = np.einsum("nlo,nlh->oh", d_hr_pre, h1)
    grads["heartrate_head.bias"] = d_hr_pre.sum(axis=(0, 1))
    dh1 = dh1_drop + d_hr_pre @ model.heartrate_head.weight

    g1f, g1b, _ = nn.bptt_backward(model.layer1_fwd, model.layer1_bwd, caches1, dh1)
    grads.update({f"layer1_fwd.{k}": v for k, v in g1f.items()})
    grads.update({f"layer1_bwd.{k}": v for k, v in g1b.items()})
    return grads


def sequence_loss_and_grads(model: SequenceModel, xs, speed_target, hr_target, dropout_p=0.0, mode="eval", rng=None):
    """Joint normalized-MSE loss (equal weights) with exact gradients."""
    speed, hr, cache = _sequence_forward(model, xs, dropout_p, mode, rng)
    n_terms = speed.shape[0] * speed.shape[1]
    speed_err = speed - speed_target
    hr_err = hr - hr_target
    loss = float((speed_err**2).sum() + (hr_err**2).sum()) / n_terms
    grads = _sequence_backward(model, cache, 2.0 * speed_err / n_terms, 2.0 * hr_err / n_terms)
    return loss, grads


def predict_sequences(
    model: SequenceModel,
    context: np.ndarray,
    distance_km: float,
    altitude_seq: np.ndarray,
    distance_seq: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Denormalized per-step (speed km/h, heart rate bpm) for one workout plan."""
    steps = sequence_step_inputs(np.asarray(context, dtype=float), distance_km, altitude_seq, distance_seq, model.stats)
    speed_norm, hr_norm, _ = _sequence_forward(model, steps[None, :, :], dropout_p=0.0, mode="eval")
    speed = model.stats.denormalize("speed", speed_norm[0])
    heartrate = model.stats.denormalize("heartrate", hr_norm[0])
    return speed, heartrate


def train_sequence(
    xs_train: np.ndarray,
    speed_train: np.ndarray,
    hr_train: np.ndarray,
    xs_val: np.ndarray,
    speed_val: np.ndarray,
    hr_val: np.ndarray,
    stats: NormStats,
    layout: ContextLayout,
    config: SequenceTrainingConfig = SequenceTrainingConfig(),
) -> tuple[SequenceModel, list[float]]:
    """Adagrad-trained joint speed/heart-rate regression with early stopping.

    Targets are min-max normalized; backpropagation runs through the
    full sequence length without truncation.  Deterministic per config
    seed.
    """
    xs_train = np.asarray(xs_train, dtype=float)
    if xs_train.size == 0:
        raise InsufficientDataError("empty training split")
    rng = np.random.default_rng(config.seed)
    model = init_sequence_model(rng, xs_train.shape[2], stats, layout, config)
    params = model.param_dict()
    opt = nn.OptimizerState(kind="adagrad", lr=config.learning_rate)

    sp_train = stats.normalize("speed", speed_train)
    hr_train_n = stats.normalize("heartrate", hr_train)
    sp_val = stats.normalize("speed", speed_val)
    hr_val_n = stats.normalize("heartrate", hr_val)

    n = xs_train.shape[0]
    best_val = np.inf
    best_params = None
    since_best = 0
    losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = sequence_loss_and_grads(
                model, xs_train[idx], sp_train[idx], hr_train_n[idx],
                dropout_p=config.dropout, mode="train", rng=rng,
            )
            epoch_loss += loss * idx.shape[0]
            nn.optimizer_step(opt, params, grads)
        losses.append(epoch_loss / n)

        if xs_val.shape[0]:
            speed_norm, hr_norm, _ = _sequence_forward(model, xs_val, dropout_p=0.0, mode="eval")
            val_loss = float(((speed_norm - sp_val) ** 2).mean() + ((hr_norm - hr_val_n) ** 2).mean())
        else:
            val_loss = losses[-1]
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    if best_params is not None:
        for k, v in params.items():
            v[...] = best_params[k]
    return model, losses


# ---------------------------------------------------------------------------
# Metrics and evaluation
# ---------------------------------------------------------------------------


def metric(kind: str, predictions, truths) -> float:
    """RMSE over per-record scalars, or MAE averaged per step then per record."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {truths.shape}")
    if predictions.size == 0:
        raise InsufficientDataError("cannot compute a metric over zero records")
    if kind == "rmse":
        if predictions.ndim != 1:
            raise ValueError("rmse expects one scalar per record")
        return float(np.sqrt(np.mean((predictions - truths) ** 2)))
    if kind == "mae_seq":
        if predictions.ndim != 2:
            raise ValueError("mae_seq expects (records, steps) arrays")
        return float(np.mean(np.abs(predictions - truths).mean(axis=1)))
    raise ValueError(f"unknown metric kind {kind!r}")


@dataclass
class EvalExample:
    """Everything needed to score one held-out workout."""

    context: np.ndarray
    target_km: float
    altitude_seq: np.ndarray
    distance_seq: np.ndarray
    speed_seq: np.ndarray
    heartrate_seq: np.ndarray


@dataclass
class EvalReport:
    distance_rmse_km: float
    speed_mae_kmh: float
    heartrate_mae_bpm: float
    counts: dict[str, int] = field(default_factory=dict)


def evaluate(
    predict_km: Callable[[np.ndarray], float],
    predict_seqs: Callable[[np.ndarray, float, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    examples: Sequence[EvalExample],
    counts: dict[str, int] | None = None,
) -> EvalReport:
    """Score the composed pipeline on held-out examples.

    The sequences are always predicted from the *predicted* distance,
    never the ground truth, mirroring the deployed composition.
    """
    if not examples:
        raise InsufficientDataError("cannot evaluate zero examples")
    km_pred = np.array([predict_km(ex.context) for ex in examples])
    km_true = np.array([ex.target_km for ex in examples])
    speed_pred, speed_true, hr_pred, hr_true = [], [], [], []
    for ex, km in zip(examples, km_pred):
        speed, hr = predict_seqs(ex.context, float(km), ex.altitude_seq, ex.distance_seq)
        speed_pred.append(speed)
        speed_true.append(ex.speed_seq)
        hr_pred.append(hr)
        hr_true.append(ex.heartrate_seq)
    report_counts = dict(counts) if counts else {}
    report_counts.setdefault("test", len(examples))
    return EvalReport(
        distance_rmse_km=metric("rmse", km_pred, km_true),
        speed_mae_kmh=metric("mae_seq", np.stack(speed_pred), np.stack(speed_true)),
        heartrate_mae_bpm=metric("mae_seq", np.stack(hr_pred), np.stack(hr_true)),
        counts=report_counts,
    )
