"""Versioned, checksummed model bundle persistence.

File layout (all integers little-endian):

    bytes 0..7    magic  b"FFBNDL01"
    bytes 8..11   uint32 schema version
    bytes 12..19  uint64 header length ``H``
    next H bytes  UTF-8 JSON header: {"manifest": ..., "arrays": {name:
                  {"dtype", "shape", "offset", "nbytes"}}}
    array blob    raw little-endian array payloads at the stated offsets
    last 32 bytes SHA-256 over everything before them

Loading verifies the checksum, the magic, and the schema version before
reconstructing arrays, so corrupt files and incompatible writers fail
with explicit errors.  Numeric payloads round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import NormStats
from .errors import BundleChecksumError, BundleVersionError
from .models import ContextLayout, DistanceModel, SequenceModel
from .routes import ClusterModel
from .tensor import CPFactors

MAGIC = b"FFBNDL01"
SCHEMA_VERSION = 1

_ALLOWED_DTYPES = {"<f8": "<f8", "<i8": "<i8"}


def write_container(path, manifest: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a manifest plus named arrays in the container format above."""
    index = {}
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        payload = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        index[name] = {"dtype": dtype, "shape": list(arr.shape), "offset": offset, "nbytes": len(payload)}
        blobs.append(payload)
        offset += len(payload)
    header = json.dumps({"manifest": manifest, "arrays": index}).encode("utf-8")
    body = MAGIC + struct.pack("<I", SCHEMA_VERSION) + struct.pack("<Q", len(header)) + header + b"".join(blobs)
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container, verifying checksum, magic, and schema version."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 + 8 + 32:
        raise BundleChecksumError("file too short to be a model bundle")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise BundleChecksumError("checksum mismatch: file is corrupt or truncated")
    if body[: len(MAGIC)] != MAGIC:
        raise BundleChecksumError("bad magic header: not a model bundle")
    version = struct.unpack("<I", body[len(MAGIC) : len(MAGIC) + 4])[0]
    if version != SCHEMA_VERSION:
        raise BundleVersionError(found=version, supported=SCHEMA_VERSION)
    header_len = struct.unpack("<Q", body[len(MAGIC) + 4 : len(MAGIC) + 12])[0]
    header_start = len(MAGIC) + 12
    header = json.loads(body[header_start : header_start + header_len].decode("utf-8"))
    blob = body[header_start + header_len :]
    arrays = {}
    for name, meta in header["arrays"].items():
        dtype = _ALLOWED_DTYPES[meta["dtype"]]
        chunk = blob[meta["offset"] : meta["offset"] + meta["nbytes"]]
        arrays[name] = np.frombuffer(chunk, dtype=dtype).reshape(meta["shape"]).copy()
    return header["manifest"], arrays


def save_cluster_model(model: ClusterModel, path, signature_points: int) -> None:
    write_container(
        path,
        {"kind": "cluster-model", "seed": model.seed, "signature_points": signature_points, "k": model.k},
        {"centroids": model.centroids, "mean": model.feature_mean, "std": model.feature_std},
    )


def load_cluster_model(path) -> tuple[ClusterModel, int]:
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "cluster-model":
        raise ValueError(f"expected a cluster-model container, found kind={manifest.get('kind')!r}")
    model = ClusterModel(
        centroids=arrays["centroids"],
        feature_mean=arrays["mean"],
        feature_std=arrays["std"],
        seed=int(manifest["seed"]),
    )
    return model, int(manifest["signature_points"])


def save_factors(factors: CPFactors, user_ids: list[str], path, seed: int) -> None:
    write_container(
        path,
        {
            "kind": "cp-factors",
            "rank": factors.rank,
            "user_ids": user_ids,
            "fit_history": [float(v) for v in factors.fit_history],
            "seed": seed,
        },
        {"A": factors.A, "B": factors.B, "C": factors.C, "lam": factors.lam},
    )


def load_factors(path) -> tuple[CPFactors, list[str]]:
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "cp-factors":
        raise ValueError(f"expected a cp-factors container, found kind={manifest.get('kind')!r}")
    factors = CPFactors(
        A=arrays["A"],
        B=arrays["B"],
        C=arrays["C"],
        lam=arrays["lam"],
        rank=int(manifest["rank"]),
        fit_history=list(manifest["fit_history"]),
    )
    return factors, list(manifest["user_ids"])


def save_distance_stage(model: DistanceModel, path, split_meta: dict, config_meta: dict) -> None:
    arrays: dict[str, np.ndarray] = {}
    for i, layer in enumerate(model.mlp.layers):
        _dense_arrays(f"layer{i}", layer, arrays)
    write_container(
        path,
        {
            "kind": "distance-model",
            "layers": len(model.mlp.layers),
            "stats": model.stats.to_dict(),
            "layout": model.layout.to_dict(),
            "seed": model.seed,
            "split": split_meta,
            "config": config_meta,
        },
        arrays,
    )


def load_distance_stage(path) -> tuple[DistanceModel, dict]:
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "distance-model":
        raise ValueError(f"expected a distance-model container, found kind={manifest.get('kind')!r}")
    stats = NormStats.from_dict(manifest["stats"])
    layout = ContextLayout.from_dict(manifest["layout"])
    mlp = nn.MLP(layers=[_dense_from(f"layer{i}", arrays) for i in range(manifest["layers"])])
    model = DistanceModel(mlp=mlp, stats=stats, layout=layout, seed=int(manifest["seed"]))
    return model, manifest


@dataclass
class RouteCatalog:
    """Concrete routes the service can recommend over."""

    route_ids: list[str]
    cluster_ids: np.ndarray
    total_km: np.ndarray
    altitude: np.ndarray  # (n_routes, L)
    distance: np.ndarray  # (n_routes, L)

    def __post_init__(self):
        self._index = {rid: i for i, rid in enumerate(self.route_ids)}

    def row(self, route_id: str) -> int | None:
        return self._index.get(route_id)


@dataclass
class ModelBundle:
    """Everything the inference service needs, in one persistable object."""

    stats: NormStats
    layout: ContextLayout
    cluster_model: ClusterModel
    factors: CPFactors
    user_ids: list[str]
    user_genders: dict[str, str]
    distance_model: DistanceModel
    sequence_model: SequenceModel
    catalog: RouteCatalog
    sequence_length: int
    signature_points: int
    hyperparams: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.factors.rank

    def digest(self) -> str:
        """Short content fingerprint over the factor weights."""
        h = hashlib.sha256()
        for arr in (self.factors.A, self.factors.B, self.factors.C, self.factors.lam):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:12]


def _dense_arrays(prefix: str, dense: nn.Dense, arrays: dict) -> None:
    arrays[f"{prefix}.weight"] = dense.weight
    arrays[f"{prefix}.bias"] = dense.bias


def _dense_from(prefix: str, arrays: dict) -> nn.Dense:
    return nn.Dense(weight=arrays[f"{prefix}.weight"], bias=arrays[f"{prefix}.bias"])


def _lstm_arrays(prefix: str, cell: nn.LSTMCellParams, arrays: dict) -> None:
    for name, value in cell.param_dict().items():
        arrays[f"{prefix}.{name}"] = value


def _lstm_from(prefix: str, arrays: dict) -> nn.LSTMCellParams:
    kw = {name: arrays[f"{prefix}.{name}"] for name in ("w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o")}
    return nn.LSTMCellParams(**kw)


def save_bundle(bundle: ModelBundle, path) -> None:
    arrays: dict[str, np.ndarray] = {}
    arrays["factors.A"] = bundle.factors.A
    arrays["factors.B"] = bundle.factors.B
    arrays["factors.C"] = bundle.factors.C
    arrays["factors.lam"] = bundle.factors.lam
    arrays["cluster.centroids"] = bundle.cluster_model.centroids
    arrays["cluster.mean"] = bundle.cluster_model.feature_mean
    arrays["cluster.std"] = bundle.cluster_model.feature_std
    for i, layer in enumerate(bundle.distance_model.mlp.layers):
        _dense_arrays(f"distance.layer{i}", layer, arrays)
    for name in ("layer1_fwd", "layer1_bwd", "layer2_fwd", "layer2_bwd"):
        _lstm_arrays(f"sequence.{name}", getattr(bundle.sequence_model, name), arrays)
    _dense_arrays("sequence.heartrate_head", bundle.sequence_model.heartrate_head, arrays)
    _dense_arrays("sequence.speed_head", bundle.sequence_model.speed_head, arrays)
    arrays["catalog.cluster_ids"] = bundle.catalog.cluster_ids.astype(np.int64)
    arrays["catalog.total_km"] = bundle.catalog.total_km
    arrays["catalog.altitude"] = bundle.catalog.altitude
    arrays["catalog.distance"] = bundle.catalog.distance

    manifest = {
        "stats": bundle.stats.to_dict(),
        "layout": bundle.layout.to_dict(),
        "rank": bundle.rank,
        "sequence_length": bundle.sequence_length,
        "signature_points": bundle.signature_points,
        "user_ids": bundle.user_ids,
        "user_genders": bundle.user_genders,
        "route_ids": bundle.catalog.route_ids,
        "cluster_seed": bundle.cluster_model.seed,
        "distance_layers": len(bundle.distance_model.mlp.layers),
        "distance_seed": bundle.distance_model.seed,
        "sequence_seed": bundle.sequence_model.seed,
        "fit_history": [float(v) for v in bundle.factors.fit_history],
        "hyperparams": bundle.hyperparams,
        "seeds": bundle.seeds,
    }
    write_container(path, manifest, arrays)


def load_bundle(path) -> ModelBundle:
    manifest, arrays = read_container(path)
    stats = NormStats.from_dict(manifest["stats"])
    layout = ContextLayout.from_dict(manifest["layout"])
    factors = CPFactors(
        A=arrays["factors.A"],
        B=arrays["factors.B"],
        C=arrays["factors.C"],
        lam=arrays["factors.lam"],
        rank=int(manifest["rank"]),
        fit_history=list(manifest["fit_history"]),
    )
    cluster_model = ClusterModel(
        centroids=arrays["cluster.centroids"],
        feature_mean=arrays["cluster.mean"],
        feature_std=arrays["cluster.std"],
        seed=int(manifest["cluster_seed"]),
    )
    mlp = nn.MLP(layers=[_dense_from(f"distance.layer{i}", arrays) for i in range(manifest["distance_layers"])])
    distance_model = DistanceModel(mlp=mlp, stats=stats, layout=layout, seed=int(manifest["distance_seed"]))
    sequence_model = SequenceModel(
        layer1_fwd=_lstm_from("sequence.layer1_fwd", arrays),
        layer1_bwd=_lstm_from("sequence.layer1_bwd", arrays),
        layer2_fwd=_lstm_from("sequence.layer2_fwd", arrays),
        layer2_bwd=_lstm_from("sequence.layer2_bwd", arrays),
        heartrate_head=_dense_from("sequence.heartrate_head", arrays),
        speed_head=_dense_from("sequence.speed_head", arrays),
        stats=stats,
        layout=layout,
        seed=int(manifest["sequence_seed"]),
    )
    catalog = RouteCatalog(
        route_ids=list(manifest["route_ids"]),
        cluster_ids=arrays["catalog.cluster_ids"],
        total_km=arrays["catalog.total_km"],
        altitude=arrays["catalog.altitude"],
        distance=arrays["catalog.distance"],
    )
    return ModelBundle(
        stats=stats,
        layout=layout,
        cluster_model=cluster_model,
        factors=factors,
        user_ids=list(manifest["user_ids"]),
        user_genders=dict(manifest["user_genders"]),
        distance_model=distance_model,
        sequence_model=sequence_model,
        catalog=catalog,
        sequence_length=int(manifest["sequence_length"]),
        signature_points=int(manifest["signature_points"]),
        hyperparams=dict(manifest.get("hyperparams", {})),
        seeds=dict(manifest.get("seeds", {})),
    )
