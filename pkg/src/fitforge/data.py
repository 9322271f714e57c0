"""Workout records: parsing, cleaning, augmentation, splits, and synthesis.

This module owns the canonical record format (one JSON object per line),
the cleaning rules applied before any training, the loop-route
augmentation used by the distance model, deterministic dataset splits,
and all min-max normalization statistics.  It also provides a fully
documented synthetic workout generator that the rest of the test suite
uses as a ground-truth oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError, NotALoopError, ParseError, ValidationError
from .geo import haversine_km

SPORTS = ("run", "bike", "mountain-bike")
GENDERS = ("male", "female", "unknown")

DEFAULT_SPEED_CAPS_KMH = {"run": 50.0, "bike": 100.0, "mountain-bike": 80.0}
DEFAULT_MEAN_ALTITUDE_CAP_M = 8000.0
DEFAULT_LOOP_EPSILON_M = 100.0
DEFAULT_AUGMENT_RANGE = (0.05, 0.5)

SEQUENCE_FIELDS = ("altitude_seq", "distance_seq", "speed_seq", "heartrate_seq", "lat_seq", "lon_seq")
_SCALAR_FIELDS = ("workout_id", "user_id", "sport", "gender", "calories")


@dataclass(eq=False)
class WorkoutRecord:
    """One exercise with aligned per-step sensor channels.

    All six sequences share one length; ``distance_seq`` is cumulative km
    starting at 0 and non-decreasing.
    """

    workout_id: str
    user_id: str
    sport: str
    gender: str
    calories: float
    altitude_seq: np.ndarray
    distance_seq: np.ndarray
    speed_seq: np.ndarray
    heartrate_seq: np.ndarray
    lat_seq: np.ndarray
    lon_seq: np.ndarray

    def __post_init__(self):
        for name in SEQUENCE_FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.calories = float(self.calories)

    @property
    def length(self) -> int:
        return int(self.distance_seq.shape[0])

    @property
    def total_distance_km(self) -> float:
        return float(self.distance_seq[-1])

    def to_dict(self) -> dict:
        out = {name: getattr(self, name) for name in _SCALAR_FIELDS}
        out.update({name: getattr(self, name).tolist() for name in SEQUENCE_FIELDS})
        return out


def validate_record(record: WorkoutRecord) -> WorkoutRecord:
    """Check every WorkoutRecord invariant, raising ValidationError on the first breach."""
    if record.sport not in SPORTS:
        raise ValidationError("sport", f"unknown sport {record.sport!r}; expected one of {SPORTS}")
    if record.gender not in GENDERS:
        raise ValidationError("gender", f"unknown gender {record.gender!r}; expected one of {GENDERS}")
    if not math.isfinite(record.calories) or record.calories < 0:
        raise ValidationError("calories", f"calories must be finite and >= 0, got {record.calories}")
    n = record.altitude_seq.shape[0]
    if n == 0:
        raise ValidationError("altitude_seq", "sequences must be non-empty")
    for name in SEQUENCE_FIELDS:
        seq = getattr(record, name)
        if seq.ndim != 1:
            raise ValidationError(name, "sequence must be one-dimensional")
        if seq.shape[0] != n:
            raise ValidationError(name, f"length {seq.shape[0]} does not match altitude_seq length {n}")
        if not np.all(np.isfinite(seq)):
            raise ValidationError(name, "sequence contains non-finite values")
    if abs(record.distance_seq[0]) > 1e-9:
        raise ValidationError("distance_seq", f"must start at 0, got {record.distance_seq[0]}")
    if np.any(np.diff(record.distance_seq) < -1e-9):
        raise ValidationError("distance_seq", "must be non-decreasing")
    if np.any(record.speed_seq < 0):
        raise ValidationError("speed_seq", "speeds must be >= 0")
    if np.any(record.heartrate_seq <= 0) or np.any(record.heartrate_seq >= 250):
        raise ValidationError("heartrate_seq", "heart rates must lie strictly inside (0, 250)")
    return record


def _iter_lines(stream) -> Iterator[tuple[int, str]]:
    if isinstance(stream, bytes):
        lines = stream.decode("utf-8").splitlines()
    elif isinstance(stream, str):
        lines = stream.splitlines()
    elif hasattr(stream, "read"):
        payload = stream.read()
        lines = (payload.decode("utf-8") if isinstance(payload, bytes) else payload).splitlines()
    else:
        lines = [ln.decode("utf-8") if isinstance(ln, bytes) else ln for ln in stream]
    for i, line in enumerate(lines, start=1):
        yield i, line


def parse_records(stream) -> list[WorkoutRecord]:
    """Parse line-delimited workout records from bytes, text, or a file object.

    Every non-blank line must be a JSON object with the WorkoutRecord
    field names and numeric arrays for the sequence channels.  Malformed
    lines raise ParseError carrying the line number; records that decode
    but violate an invariant raise ValidationError naming the field.
    """
    records = []
    for lineno, line in _iter_lines(stream):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise ParseError(lineno, "record line must be a JSON object")
        missing = [k for k in _SCALAR_FIELDS + SEQUENCE_FIELDS if k not in obj]
        if missing:
            raise ParseError(lineno, f"missing fields: {', '.join(missing)}")
        try:
            record = WorkoutRecord(
                workout_id=str(obj["workout_id"]),
                user_id=str(obj["user_id"]),
                sport=str(obj["sport"]),
                gender=str(obj["gender"]),
                calories=obj["calories"],
                altitude_seq=obj["altitude_seq"],
                distance_seq=obj["distance_seq"],
                speed_seq=obj["speed_seq"],
                heartrate_seq=obj["heartrate_seq"],
                lat_seq=obj["lat_seq"],
                lon_seq=obj["lon_seq"],
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(lineno, f"bad field value: {exc}") from exc
        try:
            validate_record(record)
        except ValidationError as exc:
            raise ValidationError(exc.field, f"line {lineno}: {exc}") from exc
        records.append(record)
    return records


def write_records(records: Iterable[WorkoutRecord], stream: IO[str]) -> None:
    """Serialize records to the canonical line-delimited format."""
    for record in records:
        stream.write(json.dumps(record.to_dict()))
        stream.write("\n")


@dataclass(frozen=True)
class CleaningRules:
    """Filter thresholds applied by :func:`clean`."""

    max_speed_kmh: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_SPEED_CAPS_KMH))
    max_mean_altitude_m: float = DEFAULT_MEAN_ALTITUDE_CAP_M
    allowed_sports: frozenset = frozenset(SPORTS)

    @classmethod
    def with_uniform_speed_cap(cls, cap_kmh: float, max_mean_altitude_m: float = DEFAULT_MEAN_ALTITUDE_CAP_M):
        return cls(
            max_speed_kmh={sport: float(cap_kmh) for sport in SPORTS},
            max_mean_altitude_m=max_mean_altitude_m,
        )


@dataclass
class CleaningReport:
    input_count: int
    retained_count: int
    removals: list[tuple[str, str]]


def clean(records: Sequence[WorkoutRecord], rules: CleaningRules | None = None) -> tuple[list[WorkoutRecord], CleaningReport]:
    """Drop records breaking any cleaning rule; never fails, only filters.

    Rule names recorded in the report: ``sport_filter``, ``speed_cap``,
    ``altitude_cap``.
    """
    rules = rules or CleaningRules()
    retained: list[WorkoutRecord] = []
    removals: list[tuple[str, str]] = []
    for record in records:
        if record.sport not in rules.allowed_sports:
            removals.append((record.workout_id, "sport_filter"))
            continue
        cap = rules.max_speed_kmh.get(record.sport)
        if cap is not None and record.speed_seq.max() > cap:
            removals.append((record.workout_id, "speed_cap"))
            continue
        if record.altitude_seq.mean() > rules.max_mean_altitude_m:
            removals.append((record.workout_id, "altitude_cap"))
            continue
        retained.append(record)
    report = CleaningReport(input_count=len(records), retained_count=len(retained), removals=removals)
    assert report.input_count == report.retained_count + len(report.removals)
    return retained, report


def is_loop(record: WorkoutRecord, epsilon_m: float = DEFAULT_LOOP_EPSILON_M) -> bool:
    """True when the route ends within ``epsilon_m`` meters of its start."""
    gap_km = haversine_km(record.lat_seq[0], record.lon_seq[0], record.lat_seq[-1], record.lon_seq[-1])
    return float(gap_km) * 1000.0 <= epsilon_m


def augment_route(
    record: WorkoutRecord,
    fraction_range: tuple[float, float] = DEFAULT_AUGMENT_RANGE,
    rng: np.random.Generator | None = None,
    loop_epsilon_m: float = DEFAULT_LOOP_EPSILON_M,
) -> WorkoutRecord:
    """Extend a loop route by replaying a random prefix of itself.

    A fraction ``t`` is drawn uniformly from ``fraction_range`` and the
    first ``ceil(t * L)`` steps are appended to every channel, with the
    cumulative distance continued additively from its final value.  The
    first L steps of the output equal the input exactly.  Non-loop
    routes raise NotALoopError so callers can skip them.
    """
    t_min, t_max = fraction_range
    if not (0.0 <= t_min <= t_max < 1.0):
        raise ValidationError("fraction_range", f"need 0 <= t_min <= t_max < 1, got {fraction_range}")
    if not is_loop(record, loop_epsilon_m):
        raise NotALoopError(
            f"workout {record.workout_id}: endpoints are farther than {loop_epsilon_m} m apart"
        )
    rng = rng or np.random.default_rng()
    t = float(rng.uniform(t_min, t_max))
    n_extra = int(math.ceil(t * record.length)) if t > 0 else 0
    if n_extra == 0:
        return WorkoutRecord(**{k: getattr(record, k) for k in _SCALAR_FIELDS + SEQUENCE_FIELDS})

    def extend(seq: np.ndarray) -> np.ndarray:
        return np.concatenate([seq, seq[:n_extra]])

    distance = np.concatenate([record.distance_seq, record.distance_seq[-1] + record.distance_seq[:n_extra]])
    return WorkoutRecord(
        workout_id=f"{record.workout_id}~aug{n_extra}",
        user_id=record.user_id,
        sport=record.sport,
        gender=record.gender,
        calories=record.calories,
        altitude_seq=extend(record.altitude_seq),
        distance_seq=distance,
        speed_seq=extend(record.speed_seq),
        heartrate_seq=extend(record.heartrate_seq),
        lat_seq=extend(record.lat_seq),
        lon_seq=extend(record.lon_seq),
    )


@dataclass
class NormStats:
    """Per-feature (min, max) pairs computed on the training split only.

    A degenerate range (min == max) normalizes every value to 0 and
    denormalizes 0 back to the shared value, so round-trips stay exact.
    """

    ranges: dict[str, tuple[float, float]]

    def normalize(self, name: str, x):
        lo, hi = self.ranges[name]
        x = np.asarray(x, dtype=float)
        if hi - lo <= 0.0:
            out = np.zeros_like(x)
        else:
            out = (x - lo) / (hi - lo)
        return float(out) if out.ndim == 0 else out

    def denormalize(self, name: str, y):
        lo, hi = self.ranges[name]
        y = np.asarray(y, dtype=float)
        out = lo + y * (hi - lo)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {k: [float(v[0]), float(v[1])] for k, v in self.ranges.items()}

    @classmethod
    def from_dict(cls, payload: dict) -> "NormStats":
        return cls(ranges={k: (float(v[0]), float(v[1])) for k, v in payload.items()})


def compute_norm_stats(records: Sequence[WorkoutRecord]) -> NormStats:
    """Min-max ranges for every contextual scalar and sequential channel."""
    if not records:
        raise InsufficientDataError("cannot compute normalization statistics from zero records")

    def span(values: np.ndarray) -> tuple[float, float]:
        return float(values.min()), float(values.max())

    calories = np.array([r.calories for r in records])
    totals = np.array([r.total_distance_km for r in records])
    altitude = np.concatenate([r.altitude_seq for r in records])
    cum_distance = np.concatenate([r.distance_seq for r in records])
    speed = np.concatenate([r.speed_seq for r in records])
    heartrate = np.concatenate([r.heartrate_seq for r in records])
    return NormStats(
        ranges={
            "calories": span(calories),
            "distance": span(totals),
            "altitude": span(altitude),
            "cum_distance": span(cum_distance),
            "speed": span(speed),
            "heartrate": span(heartrate),
        }
    )


@dataclass
class DatasetSplit:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int

    def subset(self, records: Sequence[WorkoutRecord], which: str) -> list[WorkoutRecord]:
        wanted = set(getattr(self, which))
        return [r for r in records if r.workout_id in wanted]


def split_and_normalize(
    records: Sequence[WorkoutRecord],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[DatasetSplit, NormStats]:
    """Deterministically split records and compute training-only NormStats.

    The split shuffles the sorted workout ids with the given seed, so the
    same id set and seed always produce the same partition regardless of
    input order.
    """
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError("ratios", f"ratios must be positive and sum to 1, got {ratios}")
    ids = sorted({r.workout_id for r in records})
    if len(ids) != len(records):
        raise ValidationError("workout_id", "workout ids must be unique")
    if len(ids) < 3:
        raise InsufficientDataError(f"need at least 3 records to split, got {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(shuffled)
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    if n_train == 0 or n_val == 0 or n_train + n_val >= n:
        raise InsufficientDataError(f"ratios {ratios} leave an empty split for {n} records")
    split = DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )
    stats = compute_norm_stats(split.subset(records, "train"))
    return split, stats


# ---------------------------------------------------------------------------
# Synthetic workout generator
# ---------------------------------------------------------------------------
#
# Fixed generative model (all draws from one seeded Generator, so a seed
# fully determines the dataset):
#
#   * every route is a fixed geometry: lat/lon curve (half loops, half
#     open paths), an altitude profile from a smoothed random walk with
#     per-step grade capped at SYNTH_MAX_GRADE, and the implied per-step
#     grade sequence grade_t = d(altitude) / d(horizontal);
#   * every user gets a latent fitness phi ~ Uniform(0.5, 1.5), a gender,
#     a primary sport, and a small set of favorite routes;
#   * speed_t  = phi * base(sport) * (1 - GRADE_SPEED * grade_t) + noise,
#     clamped to >= SYNTH_MIN_SPEED_KMH;
#   * hr_t     = 60 + (HR_SPEED_GAIN / base(sport)) * speed_t
#                + HR_GRADE_GAIN * max(grade_t, 0) + noise,
#     clamped to [40, 210];
#   * distance_seq integrates speed over SYNTH_STEP_HOURS per step with
#     distance_seq[0] = 0;
#   * calories = rate(sport) * sum_t speed_t * dt * (1 + 0.5 * hr_t / 100)
#     over the same steps the distance integrates, so cumulative calories
#     and cumulative distance grow strictly together within a workout.

SYNTH_BASE_SPEED_KMH = {"run": 10.0, "bike": 25.0, "mountain-bike": 18.0}
SYNTH_CALORIE_RATE_PER_KM = {"run": 60.0, "bike": 24.0, "mountain-bike": 34.0}
SYNTH_GRADE_SPEED = 2.0
SYNTH_HR_SPEED_GAIN = 90.0
SYNTH_HR_GRADE_GAIN = 120.0
SYNTH_HR_BASE = 60.0
SYNTH_CALORIE_HR_GAIN = 0.5
SYNTH_STEP_HOURS = 1.0 / 120.0
SYNTH_MAX_GRADE = 0.12
SYNTH_MIN_SPEED_KMH = 0.5


@dataclass(frozen=True)
class SyntheticConfig:
    n_users: int = 20
    n_routes: int = 12
    workouts_per_user: int = 10
    sequence_length: int = 50
    noise_scale: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("n_users", "n_routes", "workouts_per_user", "sequence_length"):
            if getattr(self, name) <= 0:
                raise ValidationError(name, "must be positive")
        if self.noise_scale < 0:
            raise ValidationError("noise_scale", "must be >= 0")


@dataclass(frozen=True)
class SynthRoute:
    lat: np.ndarray
    lon: np.ndarray
    altitude: np.ndarray
    grade: np.ndarray


def _synth_route(rng: np.random.Generator, n_points: int, loop: bool) -> SynthRoute:
    lat0 = float(rng.uniform(-55.0, 55.0))
    lon0 = float(rng.uniform(-170.0, 170.0))
    km_per_deg_lat = 111.32
    km_per_deg_lon = 111.32 * max(math.cos(math.radians(lat0)), 0.2)
    if loop:
        radius_km = float(rng.uniform(0.3, 2.0))
        theta = np.linspace(0.0, 2.0 * math.pi, n_points)
        lat = lat0 + (radius_km / km_per_deg_lat) * np.sin(theta)
        lon = lon0 + (radius_km / km_per_deg_lon) * np.cos(theta)
    else:
        step_km = float(rng.uniform(0.05, 0.25))
        headings = float(rng.uniform(0.0, 2.0 * math.pi)) + np.cumsum(rng.normal(0.0, 0.3, n_points - 1))
        lat = lat0 + np.concatenate([[0.0], np.cumsum(step_km * np.sin(headings) / km_per_deg_lat)])
        lon = lon0 + np.concatenate([[0.0], np.cumsum(step_km * np.cos(headings) / km_per_deg_lon)])

    base_alt = float(rng.uniform(0.0, 1500.0))
    walk = np.cumsum(rng.normal(0.0, 1.0, n_points))
    kernel = np.ones(7) / 7.0
    smooth = np.convolve(walk, kernel, mode="same")
    smooth -= smooth.mean()
    amplitude = float(rng.uniform(10.0, 150.0))
    altitude = base_alt + amplitude * smooth / max(np.abs(smooth).max(), 1e-9)

    horizontal_m = np.maximum(haversine_km(lat[:-1], lon[:-1], lat[1:], lon[1:]) * 1000.0, 1.0)
    grades = np.diff(altitude) / horizontal_m
    worst = np.abs(grades).max() if grades.size else 0.0
    if worst > SYNTH_MAX_GRADE:
        scale = SYNTH_MAX_GRADE / worst
        altitude = base_alt + (altitude - base_alt) * scale
        grades = grades * scale
    grade = np.concatenate([[grades[0]], grades]) if grades.size else np.zeros(n_points)
    return SynthRoute(lat=lat, lon=lon, altitude=altitude, grade=grade)


def _synthesize_workout(
    rng: np.random.Generator,
    route: SynthRoute,
    phi: float,
    sport: str,
    noise_scale: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Speed, heart rate, cumulative distance, and calories for one workout."""
    n = route.grade.shape[0]
    base = SYNTH_BASE_SPEED_KMH[sport]
    speed = phi * base * (1.0 - SYNTH_GRADE_SPEED * route.grade)
    if noise_scale > 0:
        speed = speed + noise_scale * rng.normal(0.0, 1.0, n)
    speed = np.maximum(speed, SYNTH_MIN_SPEED_KMH)
    heartrate = SYNTH_HR_BASE + (SYNTH_HR_SPEED_GAIN / base) * speed + SYNTH_HR_GRADE_GAIN * np.maximum(route.grade, 0.0)
    if noise_scale > 0:
        heartrate = heartrate + noise_scale * rng.normal(0.0, 1.0, n)
    heartrate = np.clip(heartrate, 40.0, 210.0)
    distance = np.zeros(n)
    distance[1:] = np.cumsum(speed[1:]) * SYNTH_STEP_HOURS
    burn = speed[1:] * SYNTH_STEP_HOURS * (1.0 + SYNTH_CALORIE_HR_GAIN * heartrate[1:] / 100.0)
    calories = SYNTH_CALORIE_RATE_PER_KM[sport] * float(burn.sum())
    return speed, heartrate, distance, calories


def generate_synthetic(config: SyntheticConfig) -> list[WorkoutRecord]:
    """Generate a deterministic synthetic workout dataset (model documented above)."""
    rng = np.random.default_rng(config.seed)
    routes = [_synth_route(rng, config.sequence_length, loop=bool(rng.uniform() < 0.5)) for _ in range(config.n_routes)]

    records: list[WorkoutRecord] = []
    workout_idx = 0
    for u in range(config.n_users):
        user_id = f"u{u:03d}"
        phi = float(rng.uniform(0.5, 1.5))
        gender = str(rng.choice(["male", "female"]))
        primary = str(rng.choice(SPORTS))
        n_fav = min(3, config.n_routes)
        favorites = rng.choice(config.n_routes, size=n_fav, replace=False)
        for _ in range(config.workouts_per_user):
            sport = primary if rng.uniform() < 0.85 else str(rng.choice(SPORTS))
            route = routes[int(favorites[rng.integers(n_fav)])]
            speed, heartrate, distance, calories = _synthesize_workout(rng, route, phi, sport, config.noise_scale)
            records.append(
                validate_record(
                    WorkoutRecord(
                        workout_id=f"w{workout_idx:05d}",
                        user_id=user_id,
                        sport=sport,
                        gender=gender,
                        calories=calories,
                        altitude_seq=route.altitude.copy(),
                        distance_seq=distance,
                        speed_seq=speed,
                        heartrate_seq=heartrate,
                        lat_seq=route.lat.copy(),
                        lon_seq=route.lon.copy(),
                    )
                )
            )
            workout_idx += 1
    return records
