"""Tabular data loading, seeded nested splits, and fold-local scaling.

The split hierarchy is: all rows -> TEST + TRAIN; TRAIN -> TV + CAL;
TV -> TR + VA. Scalers are always fitted on the designated fold only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data or invalid split requests."""


@dataclass(frozen=True)
class Table:
    """Numeric feature matrix plus target vector, row order preserved."""

    features: np.ndarray  # (N, d)
    target: np.ndarray  # (N,)
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        n, d = self.features.shape
        if self.target.shape != (n,):
            raise DataError("target length must match feature rows")
        if n < 10:
            raise DataError(f"need at least 10 rows, got {n}")
        if d < 1:
            raise DataError("need at least one feature column")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.target))):
            raise DataError("missing value: table contains NaN/inf")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitFractions:
    test: float = 0.10  # share of all rows
    cal: float = 0.10  # share of the outer training fold
    va: float = 0.20  # share of TV

    def validate(self) -> None:
        for name, frac in (("test", self.test), ("cal", self.cal), ("va", self.va)):
            if not 0.0 < frac < 1.0:
                raise DataError(f"fraction '{name}' must be in (0,1), got {frac}")


@dataclass(frozen=True)
class SplitPlan:
    """Index lists for one seeded run; regenerable bit-identically from the seed."""

    seed: int
    test_idx: np.ndarray
    tv_idx: np.ndarray
    tr_idx: np.ndarray
    va_idx: np.ndarray
    cal_idx: np.ndarray

    def validate(self, n: int) -> None:
        test, tv, cal = set(self.test_idx), set(self.tv_idx), set(self.cal_idx)
        tr, va = set(self.tr_idx), set(self.va_idx)
        assert test | tv | cal == set(range(n))
        assert not test & (tv | cal) and not tv & cal
        assert tr | va == tv and not tr & va
        for part in (test, tv, tr, va, cal):
            assert part, "empty partition"

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for idx in (self.test_idx, self.tv_idx, self.tr_idx, self.va_idx, self.cal_idx):
            h.update(np.asarray(idx, dtype=np.int64).tobytes())
        return h.hexdigest()

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "test_idx": self.test_idx.tolist(),
                "tv_idx": self.tv_idx.tolist(),
                "tr_idx": self.tr_idx.tolist(),
                "va_idx": self.va_idx.tolist(),
                "cal_idx": self.cal_idx.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        obj = json.loads(text)
        return cls(
            seed=obj["seed"],
            **{k: np.asarray(obj[k], dtype=np.int64) for k in ("test_idx", "tv_idx", "tr_idx", "va_idx", "cal_idx")},
        )


@dataclass(frozen=True)
class ZScaler:
    mu: float
    sigma: float

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mu) / self.sigma

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.sigma + self.mu


@dataclass(frozen=True)
class ColumnScaler:
    means: np.ndarray
    stds: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.means) / self.stds


def load_csv(path, target_column, schema: dict | None = None) -> Table:
    """Load a CSV into a Table.

    `target_column` is a column name (requires a header) or integer index.
    `schema` options: {"header": bool (auto-detected by default),
    "one_hot": [column names/indices to one-hot encode]}.
    Missing values are rejected.
    """
    schema = schema or {}
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except FileNotFoundError:
        raise DataError(f"missing file: {path}")
    if not rows:
        raise DataError(f"empty file: {path}")

    def _is_number(tok: str) -> bool:
        try:
            float(tok)
            return True
        except ValueError:
            return False

    header = schema.get("header")
    if header is None:
        header = not all(_is_number(tok) for tok in rows[0])
    if header:
        names = [c.strip() for c in rows[0]]
        body = rows[1:]
    else:
        names = [f"col{i}" for i in range(len(rows[0]))]
        body = rows

    if isinstance(target_column, int):
        t_idx = target_column if target_column >= 0 else len(names) + target_column
    else:
        if target_column not in names:
            raise DataError(f"missing target column '{target_column}'")
        t_idx = names.index(target_column)
    if not 0 <= t_idx < len(names):
        raise DataError(f"target column index {target_column} out of range")

    one_hot = set()
    for c in schema.get("one_hot", []):
        one_hot.add(names.index(c) if isinstance(c, str) else c)

    n_cols = len(names)
    columns: list[list[str]] = [[] for _ in range(n_cols)]
    for r_i, row in enumerate(body):
        if len(row) != n_cols:
            raise DataError(f"row {r_i} has {len(row)} cells, expected {n_cols}")
        for j, tok in enumerate(row):
            columns[j].append(tok.strip())

    target = np.empty(len(body))
    for i, tok in enumerate(columns[t_idx]):
        if not _is_number(tok) or tok.lower() in ("nan", ""):
            raise DataError(f"missing value in target at row {i}")
        target[i] = float(tok)
    if not np.all(np.isfinite(target)):
        raise DataError("missing value in target")

    feat_cols: list[np.ndarray] = []
    feat_names: list[str] = []
    for j in range(n_cols):
        if j == t_idx:
            continue
        col = columns[j]
        if j in one_hot:
            levels = sorted(set(col))
            for lv in levels:
                feat_cols.append(np.array([1.0 if tok == lv else 0.0 for tok in col]))
                feat_names.append(f"{names[j]}={lv}")
            continue
        vals = np.empty(len(col))
        for i, tok in enumerate(col):
            if not _is_number(tok) or tok.lower() in ("nan", ""):
                raise DataError(
                    f"missing value or non-numeric cell '{tok}' in column '{names[j]}' row {i}"
                )
            vals[i] = float(tok)
        if not np.all(np.isfinite(vals)):
            raise DataError(f"missing value in column '{names[j]}'")
        feat_cols.append(vals)
        feat_names.append(names[j])

    return Table(np.column_stack(feat_cols), target, feat_names)


def _take(pool: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    return pool[:count], pool[count:]


def make_split_plan(n: int, seed: int, fractions: SplitFractions | None = None) -> SplitPlan:
    """Seeded nested split: TEST off the top, then CAL off TRAIN, then VA off TV.

    Sizes are floor-rounded; the remainder stays with the largest partition
    (the one the floor was taken from).
    """
    fractions = fractions or SplitFractions()
    fractions.validate()
    if n < 10:
        raise DataError(f"need n >= 10, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n).astype(np.int64)

    n_test = int(np.floor(n * fractions.test))
    test_idx, train = _take(perm, n_test)
    n_cal = int(np.floor(train.size * fractions.cal))
    cal_idx, tv_idx = _take(train, n_cal)
    n_va = int(np.floor(tv_idx.size * fractions.va))
    va_idx, tr_idx = _take(tv_idx, n_va)

    plan = SplitPlan(
        seed=seed,
        test_idx=np.sort(test_idx),
        tv_idx=np.sort(tv_idx),
        tr_idx=np.sort(tr_idx),
        va_idx=np.sort(va_idx),
        cal_idx=np.sort(cal_idx),
    )
    for part, name in (
        (plan.test_idx, "test"),
        (plan.cal_idx, "cal"),
        (plan.va_idx, "va"),
        (plan.tr_idx, "tr"),
    ):
        if part.size == 0:
            raise DataError(f"partition '{name}' would be empty for n={n}")
    return plan


def subsample(table: Table, m: int, seed: int) -> Table:
    """Draw m rows without replacement, order randomized by seed."""
    if m > table.n:
        raise DataError(f"cannot subsample {m} from {table.n} rows")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(table.n)[:m]
    return Table(table.features[idx], table.target[idx], list(table.column_names))


def fit_zscaler(values: np.ndarray) -> ZScaler:
    """Population mean/std scaler; zero variance falls back to sigma=1."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("cannot fit scaler on empty vector")
    mu = float(values.mean())
    sigma = float(values.std())
    if sigma <= 0.0 or not np.isfinite(sigma):
        sigma = 1.0
    return ZScaler(mu, sigma)


def fit_column_scaler(features: np.ndarray) -> ColumnScaler:
    """Per-column population mean/std; zero-variance columns get std 1."""
    features = np.asarray(features, dtype=np.float64)
    means = features.mean(axis=0)
    stds = features.std(axis=0)
    stds = np.where(stds > 0.0, stds, 1.0)
    return ColumnScaler(means, stds)


def augment_with_anchor(features: np.ndarray, anchor_z: np.ndarray) -> np.ndarray:
    """Append the standardized anchor prediction as a trailing column."""
    features = np.asarray(features, dtype=np.float64)
    anchor_z = np.asarray(anchor_z, dtype=np.float64)
    if anchor_z.ndim != 1 or anchor_z.shape[0] != features.shape[0]:
        raise DataError(
            f"anchor length {anchor_z.shape} does not match {features.shape[0]} rows"
        )
    return np.column_stack([features, anchor_z])
