"""CP factorization of the user x route-category x context tensor.

Implements the three-way tensor build, alternating least squares for the
CP model X ~ sum_r lambda_r a_r o b_r o c_r, the constrained Tucker core
fit used for diagnostics, the core-consistency score that drives rank
selection, and embedding lookup / cosine similarity over the factor
rows.

Unfolding convention (row-major storage): ``unfold(X, 0)`` has shape
(I, J*K) with the K index fastest, so ``unfold(X, 0) = A @ khatri_rao(B, C).T``
and cyclically for the other modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import WorkoutRecord
from .errors import InsufficientDataError, NotFoundError, UndefinedSimilarityError
from .routes import ClusterModel, assign_records

CONTEXT_FEATURES = (
    "gender_code",
    "share_run",
    "share_bike",
    "share_mountain_bike",
    "workout_count",
    "avg_duration_h",
    "avg_distance_km",
    "avg_speed_kmh",
    "avg_heartrate_bpm",
)

_GENDER_CODE = {"male": 1.0, "female": -1.0, "unknown": 0.0}


def _workout_features(record: WorkoutRecord) -> np.ndarray:
    speed = record.speed_seq
    increments = np.diff(record.distance_seq)
    duration_h = float((increments / np.maximum(speed[1:], 0.1)).sum())
    return np.array(
        [
            _GENDER_CODE[record.gender],
            1.0 if record.sport == "run" else 0.0,
            1.0 if record.sport == "bike" else 0.0,
            1.0 if record.sport == "mountain-bike" else 0.0,
            1.0,  # placeholder; the count feature is filled from cell counts
            duration_h,
            record.total_distance_km,
            float(speed.mean()),
            float(record.heartrate_seq.mean()),
        ]
    )


@dataclass
class ContextTensor:
    """Dense user x route-cluster x context-feature tensor plus its index maps.

    ``values`` holds the per-slice z-scored cells that feed the
    decomposition; ``raw_values`` keeps the pre-scaling per-cell means
    for inspection.
    """

    values: np.ndarray
    user_ids: tuple[str, ...]
    n_clusters: int
    feature_names: tuple[str, ...] = CONTEXT_FEATURES
    populated: np.ndarray | None = None
    raw_values: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def user_row(self, user_id: str) -> int:
        try:
            return self.user_ids.index(user_id)
        except ValueError:
            raise NotFoundError("user", user_id) from None


def build_context_tensor(
    records: Sequence[WorkoutRecord],
    cluster_model: ClusterModel,
    signature_points: int = 16,
) -> ContextTensor:
    """Aggregate workout history into the three-way context tensor.

    Cell (u, r, c) holds the mean of context feature c over user u's
    workouts on route cluster r (the ``workout_count`` feature holds the
    count itself).  Each feature slice is z-scored over populated cells;
    cells with no workout stay zero.
    """
    if not records:
        raise InsufficientDataError("cannot build a context tensor from zero records")
    user_ids = tuple(sorted({r.user_id for r in records}))
    user_index = {u: i for i, u in enumerate(user_ids)}
    assignments = assign_records(cluster_model, records, signature_points)

    n_users, n_clusters, n_feat = len(user_ids), cluster_model.k, len(CONTEXT_FEATURES)
    sums = np.zeros((n_users, n_clusters, n_feat))
    counts = np.zeros((n_users, n_clusters))
    for record in records:
        u = user_index[record.user_id]
        r = assignments[record.workout_id]
        sums[u, r] += _workout_features(record)
        counts[u, r] += 1.0

    populated = counts > 0
    values = np.zeros_like(sums)
    values[populated] = sums[populated] / counts[populated, None]
    count_col = CONTEXT_FEATURES.index("workout_count")
    values[..., count_col] = counts
    raw_values = values.copy()

    for c in range(n_feat):
        cells = values[..., c][populated]
        if cells.size == 0:
            continue
        mu, sigma = cells.mean(), cells.std()
        if sigma > 1e-12:
            values[..., c][populated] = (cells - mu) / sigma
        else:
            values[..., c][populated] = 0.0
    return ContextTensor(
        values=values, user_ids=user_ids, n_clusters=n_clusters, populated=populated, raw_values=raw_values
    )


# ---------------------------------------------------------------------------
# CP decomposition
# ---------------------------------------------------------------------------


def khatri_rao(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product: column r is kron(m[:, r], n[:, r])."""
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    if m.ndim != 2 or n.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if m.shape[1] != n.shape[1]:
        raise ValueError(f"column counts differ: {m.shape[1]} vs {n.shape[1]}")
    j, r = m.shape
    k, _ = n.shape
    return (m[:, None, :] * n[None, :, :]).reshape(j * k, r)


def unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n matricization under the row-major convention described above."""
    return np.moveaxis(tensor, mode, 0).reshape(tensor.shape[mode], -1)


def mode_product(tensor: np.ndarray, matrix: np.ndarray, mode: int) -> np.ndarray:
    """Multiply ``tensor`` along ``mode`` by ``matrix`` (rows index the new axis)."""
    moved = np.tensordot(matrix, tensor, axes=(1, mode))
    return np.moveaxis(moved, 0, mode)


@dataclass
class CPFactors:
    """Unit-column factor matrices, column weights, and the per-sweep fit trace."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    lam: np.ndarray
    rank: int
    fit_history: list[float] = field(default_factory=list)

    def reconstruct(self) -> np.ndarray:
        return np.einsum("r,ir,jr,kr->ijk", self.lam, self.A, self.B, self.C)


def _validate_tensor3(tensor: np.ndarray) -> np.ndarray:
    tensor = np.asarray(tensor, dtype=float)
    if tensor.ndim != 3:
        raise ValueError(f"expected a 3-way tensor, got {tensor.ndim} modes")
    if any(d <= 0 for d in tensor.shape):
        raise ValueError(f"tensor dimensions must be positive, got {tensor.shape}")
    if not np.all(np.isfinite(tensor)):
        raise ValueError("tensor contains non-finite values")
    return tensor


def _normalize_columns(factors: list[np.ndarray]) -> tuple[list[np.ndarray], np.ndarray]:
    lam = np.ones(factors[0].shape[1])
    normalized = []
    for f in factors:
        norms = np.linalg.norm(f, axis=0)
        lam = lam * norms
        safe = np.where(norms > 1e-300, norms, 1.0)
        normalized.append(f / safe)
    return normalized, lam


def cp_als(
    tensor: np.ndarray,
    rank: int,
    max_sweeps: int = 500,
    tol: float = 1e-10,
    seed: int = 0,
    ridge: float = 1e-12,
) -> CPFactors:
    """CP decomposition by alternating least squares.

    Each sweep solves every factor in turn from the mode-n matricization
    and the Khatri-Rao product of the other two via ridge-stabilized
    normal equations, then renormalizes columns into ``lam`` and records
    the relative reconstruction error.  Initialization is uniform in
    [-0.5, 0.5] from ``seed``; iteration stops when the relative fit
    changes by less than ``tol`` or ``max_sweeps`` is reached.
    """
    tensor = _validate_tensor3(tensor)
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    rng = np.random.default_rng(seed)
    factors = [rng.uniform(-0.5, 0.5, size=(dim, rank)) for dim in tensor.shape]
    unfoldings = [unfold(tensor, mode) for mode in range(3)]
    norm_x = np.linalg.norm(tensor)
    if norm_x == 0.0:
        norm_x = 1.0

    fit_history: list[float] = []
    lam = np.ones(rank)
    eye = np.eye(rank)
    for _ in range(max_sweeps):
        for mode in range(3):
            others = [factors[m] for m in range(3) if m != mode]
            kr = khatri_rao(others[0], others[1])
            gram = (others[0].T @ others[0]) * (others[1].T @ others[1]) + ridge * eye
            rhs = unfoldings[mode] @ kr
            try:
                factors[mode] = np.linalg.solve(gram, rhs.T).T
            except np.linalg.LinAlgError:
                factors[mode] = rhs @ np.linalg.pinv(gram)
        factors, lam = _normalize_columns(factors)
        residual = tensor - np.einsum("r,ir,jr,kr->ijk", lam, *factors)
        fit_history.append(float(np.linalg.norm(residual) / norm_x))
        if len(fit_history) > 1 and abs(fit_history[-2] - fit_history[-1]) < tol:
            break
    return CPFactors(A=factors[0], B=factors[1], C=factors[2], lam=lam, rank=rank, fit_history=fit_history)


@dataclass
class CoreTensor:
    values: np.ndarray
    residual: float


def tucker_core(tensor: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> CoreTensor:
    """Least-squares core G minimizing ||X - G x0 A x1 B x2 C||_F^2.

    Uses the Kronecker identity pinv(C (x) B (x) A) = pinv(C) (x) pinv(B)
    (x) pinv(A), i.e. three pseudo-inverse mode products, which matches a
    dense least-squares solve of the vectorized system including in the
    rank-deficient case (both give the minimum-norm solution).  Returns
    the core and the squared Frobenius residual.
    """
    tensor = _validate_tensor3(tensor)
    for matrix, mode, name in ((a, 0, "A"), (b, 1, "B"), (c, 2, "C")):
        if matrix.ndim != 2 or matrix.shape[0] != tensor.shape[mode]:
            raise ValueError(
                f"factor {name} has shape {matrix.shape}, expected ({tensor.shape[mode]}, R)"
            )
    core = tensor
    for matrix, mode in ((a, 0), (b, 1), (c, 2)):
        core = mode_product(core, np.linalg.pinv(matrix), mode)
    recon = core
    for matrix, mode in ((a, 0), (b, 1), (c, 2)):
        recon = mode_product(recon, matrix, mode)
    residual = float(np.linalg.norm(tensor - recon) ** 2)
    return CoreTensor(values=core, residual=residual)


def core_consistency(core: np.ndarray, rank: int) -> float:
    """Score comparing the core to the ideal superdiagonal tensor.

    cc = 100 * (1 - sum((g_lmn - l_lmn)^2) / R) where l is 1 on the
    superdiagonal and 0 elsewhere; 100 means the CP model at this rank
    explains the core structure perfectly, and the value never exceeds
    100.
    """
    core = np.asarray(core, dtype=float)
    if core.shape != (rank, rank, rank):
        raise ValueError(f"core must be shaped ({rank}, {rank}, {rank}), got {core.shape}")
    ideal = np.zeros_like(core)
    idx = np.arange(rank)
    ideal[idx, idx, idx] = 1.0
    return float(100.0 * (1.0 - ((core - ideal) ** 2).sum() / rank))


@dataclass
class CoreConsistencyReport:
    entries: list[tuple[int, float, float]]  # (rank, cc, relative fit)
    selected_rank: int


def rank_sweep(
    tensor: np.ndarray,
    ranks: Sequence[int],
    seed: int = 0,
    max_sweeps: int = 200,
    tol: float = 1e-9,
) -> CoreConsistencyReport:
    """Run cp_als / tucker_core / core_consistency per rank and pick the winner.

    The column weights are absorbed into the user mode before the core
    fit so the reference superdiagonal is all ones.  The selected rank
    maximizes cc; ties go to the smaller rank.
    """
    if not ranks:
        raise ValueError("ranks must be non-empty")
    entries: list[tuple[int, float, float]] = []
    for rank in ranks:
        factors = cp_als(tensor, rank, max_sweeps=max_sweeps, tol=tol, seed=seed)
        core = tucker_core(tensor, factors.A * factors.lam, factors.B, factors.C)
        cc = core_consistency(core.values, rank)
        entries.append((int(rank), cc, factors.fit_history[-1]))
    selected = min(entries, key=lambda e: (-e[1], e[0]))[0]
    return CoreConsistencyReport(entries=entries, selected_rank=selected)


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def embedding_lookup(
    factors: CPFactors,
    user_ids: Sequence[str] | Mapping[str, int],
    *,
    user_id: str | None = None,
    cluster_id: int | None = None,
) -> np.ndarray:
    """Row of the user mode (A) or route-cluster mode (B) for a known id."""
    if (user_id is None) == (cluster_id is None):
        raise ValueError("pass exactly one of user_id or cluster_id")
    if user_id is not None:
        if isinstance(user_ids, Mapping):
            if user_id not in user_ids:
                raise NotFoundError("user", user_id)
            row = user_ids[user_id]
        else:
            try:
                row = list(user_ids).index(user_id)
            except ValueError:
                raise NotFoundError("user", user_id) from None
        return factors.A[row].copy()
    if not 0 <= cluster_id < factors.B.shape[0]:
        raise NotFoundError("route cluster", cluster_id)
    return factors.B[int(cluster_id)].copy()


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a| |b|); raises for zero vectors where it is undefined."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))
