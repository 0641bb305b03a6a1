"""Datasets, scenario partitions and the class-imbalance entropy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InputError, PartitionError, SchemaError
from .seeding import rng_for

CIC_CLASSES = (
    "Benign",
    "DoS Hulk",
    "PortScan",
    "DDoS",
    "DoS GoldenEye",
    "FTP-Patator",
    "SSH-Patator",
    "DoS slowloris",
    "DoS Slowhttp",
)

# spellings used in the raw CIC-IDS 2017 CSVs
CIC_ALIASES = {
    "BENIGN": "Benign",
    "DoS Slowhttptest": "DoS Slowhttp",
}

# the published per-party entropies are normalized by log(10) for every party
CIC_ENTROPY_K = 10

# client sizes of the basic scenario, used as the default size profile
PARTY_SIZES = (78357, 70470, 66164, 58131, 44800, 39193, 31211, 24740, 23034, 16904)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    dropped_rows: int = 0
    dropped_classes: int = 0

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise InputError(f"features {x.shape} and labels {y.shape} do not line up")
        if not np.all(np.isfinite(x)):
            raise InputError("dataset features contain non-finite values")
        if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise InputError("label outside the class range")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_names)

    def histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def unlabeled(self) -> UnlabeledView:
        return UnlabeledView(self.features)


class UnlabeledView:
    """Client-side view of a partition: features only, no way to reach labels."""

    __slots__ = ("_features",)

    def __init__(self, features: np.ndarray):
        f = np.asarray(features, dtype=np.float64)
        f.setflags(write=False)
        self._features = f

    @property
    def features(self) -> np.ndarray:
        return self._features

    def __len__(self) -> int:
        return self._features.shape[0]


@dataclass(frozen=True)
class CsvSchema:
    label_column: str = "Label"
    classes: tuple[str, ...] = CIC_CLASSES
    aliases: dict = field(default_factory=lambda: dict(CIC_ALIASES))
    feature_columns: tuple[str, ...] | None = None


def load_csv(path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Read a flow CSV, dropping non-finite rows and out-of-scope classes.

    Column names are whitespace-stripped (the raw CIC-IDS files pad them).
    Row order is preserved.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        if schema.label_column not in header:
            raise SchemaError(f"unknown column {schema.label_column!r}; header has {header}")
        label_pos = header.index(schema.label_column)
        if schema.feature_columns is None:
            feature_pos = [i for i in range(len(header)) if i != label_pos]
        else:
            missing = [c for c in schema.feature_columns if c not in header]
            if missing:
                raise SchemaError(f"unknown column(s) {missing}")
            feature_pos = [header.index(c) for c in schema.feature_columns]

        class_index = {c: i for i, c in enumerate(schema.classes)}
        rows, labels = [], []
        dropped_rows = dropped_classes = 0
        for record in reader:
            if not record:
                continue
            if len(record) != len(header):
                dropped_rows += 1
                continue
            name = record[label_pos].strip()
            name = schema.aliases.get(name, name)
            try:
                values = [float(record[i]) for i in feature_pos]
            except ValueError:
                dropped_rows += 1
                continue
            if not all(math.isfinite(v) for v in values):
                dropped_rows += 1
                continue
            if name not in class_index:
                dropped_classes += 1
                continue
            rows.append(values)
            labels.append(class_index[name])

    if not rows:
        raise InputError(f"no usable rows in {path}")
    return Dataset(
        np.array(rows, dtype=np.float64),
        np.array(labels, dtype=np.int64),
        schema.classes,
        dropped_rows=dropped_rows,
        dropped_classes=dropped_classes,
    )


def standardize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Zero-mean, unit-variance columns using statistics of ``train`` only."""
    mu = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    sd[sd == 0] = 1.0
    return tuple(
        Dataset((d.features - mu) / sd, d.labels, d.class_names) for d in (train, *others)
    )


def _stratified_counts(hist: np.ndarray, total: int) -> np.ndarray:
    """Split ``total`` across classes in proportion to ``hist`` (largest remainder)."""
    if total <= 0 or hist.sum() == 0:
        return np.zeros_like(hist)
    exact = hist * (total / hist.sum())
    counts = np.floor(exact).astype(np.int64)
    short = total - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    return np.minimum(counts, hist)


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Class-stratified split."""
    rng = rng_for(seed, "split")
    hist = ds.histogram()
    n_test = _stratified_counts(hist, int(round(test_fraction * len(ds))))
    test_idx, train_idx = [], []
    for k in range(ds.n_classes):
        idx = rng.permutation(np.flatnonzero(ds.labels == k))
        test_idx.append(idx[: n_test[k]])
        train_idx.append(idx[n_test[k]:])
    return ds.subset(np.sort(np.concatenate(train_idx))), ds.subset(np.sort(np.concatenate(test_idx)))


def make_synthetic(
    n_classes: int,
    per_class: int,
    feature_dim: int,
    separation: float,
    seed: int,
) -> Dataset:
    """Unit-covariance Gaussian blobs with pairwise center distance ``separation``.

    Center ``k`` sits at ``separation / sqrt(2)`` along axis ``k``, so the
    remaining ``feature_dim - n_classes`` axes are pure noise.
    """
    if separation < 0:
        raise InputError("separation must be nonnegative")
    if feature_dim < n_classes:
        raise InputError("feature_dim must be at least n_classes")
    rng = rng_for(seed, "synthetic")
    centers = np.zeros((n_classes, feature_dim))
    centers[np.arange(n_classes), np.arange(n_classes)] = separation / math.sqrt(2.0)
    labels = np.repeat(np.arange(n_classes), per_class)
    x = centers[labels] + rng.standard_normal((labels.size, feature_dim))
    perm = rng.permutation(labels.size)
    names = tuple(f"class{k}" for k in range(n_classes))
    return Dataset(x[perm], labels[perm], names)


def shannon_entropy(histogram, k: int | None = None) -> float:
    """Class entropy normalized by ``log k``.

    ``k`` defaults to the number of classes actually present.  Absent
    classes contribute ``0 log 0 = 0``.  Returns 0 when fewer than two
    classes are present and no ``k`` is given.
    """
    h = np.asarray(histogram, dtype=np.float64)
    if np.any(h < 0):
        raise InputError("histogram entries must be nonnegative")
    total = h.sum()
    if total <= 0:
        raise InputError("histogram total must be positive")
    p = h[h > 0] / total
    if k is None:
        k = p.size
    if k < 2:
        return 0.0
    return float(-(p * np.log(p)).sum() / math.log(k))


@dataclass(frozen=True, eq=False)
class ScenarioPartition:
    client_indices: tuple[np.ndarray, ...]
    server_indices: np.ndarray
    histograms: np.ndarray
    entropies: tuple[float, ...]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(i) for i in self.client_indices])


def load_quota_table(path=None, scenario: str = "basic") -> tuple[tuple[str, ...], np.ndarray]:
    """Read a ``client_id,class_name,count`` table.

    Without ``path`` the shipped per-party quota table for ``scenario`` are used.
    Returns class names in first-seen order and an ``M x K`` count matrix.
    """
    if path is None:
        text = resources.files("feds3a.tables").joinpath(f"{scenario}_quotas.csv").read_text()
    else:
        text = Path(path).read_text()
    reader = csv.DictReader(text.splitlines())
    names: list[str] = []
    entries = []
    for row in reader:
        name = row["class_name"].strip()
        if name not in names:
            names.append(name)
        entries.append((int(row["client_id"]), name, int(row["count"])))
    n_clients = max(e[0] for e in entries) + 1
    table = np.zeros((n_clients, len(names)), dtype=np.int64)
    for cid, name, count in entries:
        table[cid, names.index(name)] = count
    return tuple(names), table


def size_profile(n_clients: int) -> np.ndarray:
    """Relative client sizes, interpolated from the published per-party size ladder."""
    ref = np.array(PARTY_SIZES, dtype=np.float64)
    if n_clients == ref.size:
        prof = ref
    else:
        prof = np.interp(np.linspace(0, ref.size - 1, n_clients), np.arange(ref.size), ref)
    return prof / prof.sum()


def _fit_margins(mix: np.ndarray, rows: np.ndarray, cols: np.ndarray, iters: int = 500) -> np.ndarray:
    """Integer ``M x K`` table close to ``mix`` with row sums ~``rows`` and
    column sums exactly ``cols`` (iterative proportional fitting, then
    largest-remainder rounding per column)."""
    q = np.maximum(mix, 1e-12) * rows[:, None]
    for _ in range(iters):
        q *= (cols / q.sum(axis=0))[None, :]
        q *= (rows / q.sum(axis=1))[:, None]
    q *= (cols / q.sum(axis=0))[None, :]
    out = np.floor(q).astype(np.int64)
    for k in range(q.shape[1]):
        short = int(cols[k] - out[:, k].sum())
        if short > 0:
            order = np.argsort(-(q[:, k] - out[:, k]), kind="stable")
            out[order[:short], k] += 1
    return out


def partition(
    dataset: Dataset,
    scenario: str,
    n_clients: int,
    server_fraction: float,
    seed: int,
    *,
    quotas: np.ndarray | None = None,
    skew_alpha: float = 0.3,
    profile: np.ndarray | None = None,
    min_client_size: int = 10,
    entropy_k: int | None = None,
) -> ScenarioPartition:
    """Split ``dataset`` across clients plus a labeled server share.

    With ``quotas`` (an ``M x K`` count matrix) clients take exactly those
    counts and the server share is drawn class-stratified from what is
    left.  Otherwise the server share is reserved first and the rest is
    spread over clients whose sizes follow ``profile``.  ``balanced``
    clients mirror the global class mix; ``basic`` clients start from a
    Dirichlet(``skew_alpha``) class mix that is then fitted to the size
    and class margins.
    """
    if n_clients < 2:
        raise PartitionError("need at least two clients")
    if scenario not in ("basic", "balanced"):
        raise PartitionError(f"unknown scenario {scenario!r}")
    rng = rng_for(seed, "partition", scenario)
    K = dataset.n_classes
    pools = [rng.permutation(np.flatnonzero(dataset.labels == k)) for k in range(K)]
    hist = np.array([p.size for p in pools])

    if quotas is not None:
        quotas = np.asarray(quotas, dtype=np.int64)
        if quotas.shape != (n_clients, K):
            raise PartitionError(f"quota table has shape {quotas.shape}, expected {(n_clients, K)}")
        need = quotas.sum(axis=0)
        for k in range(K):
            if need[k] > hist[k]:
                raise PartitionError(
                    f"class {dataset.class_names[k]!r}: quota {need[k]} exceeds available {hist[k]}"
                )
        clients = [[] for _ in range(n_clients)]
        rest = []
        for k in range(K):
            offsets = np.concatenate([[0], np.cumsum(quotas[:, k])])
            for i in range(n_clients):
                clients[i].append(pools[k][offsets[i]:offsets[i + 1]])
            rest.append(pools[k][offsets[-1]:])
        n_server = int(round(server_fraction / (1 - server_fraction) * quotas.sum()))
        remaining = np.array([r.size for r in rest])
        take = np.minimum(_stratified_counts(hist, n_server), remaining)
        server = np.concatenate([rest[k][: take[k]] for k in range(K)])
        client_idx = [np.sort(np.concatenate(c)) for c in clients]
    else:
        take = _stratified_counts(hist, int(round(server_fraction * len(dataset))))
        server = np.concatenate([pools[k][: take[k]] for k in range(K)])
        pools = [pools[k][take[k]:] for k in range(K)]
        prof = size_profile(n_clients) if profile is None else np.asarray(profile, float)
        if prof.shape != (n_clients,) or np.any(prof <= 0):
            raise PartitionError("profile must hold one positive weight per client")
        prof = prof / prof.sum()
        avail = np.array([p.size for p in pools])
        if scenario == "balanced":
            mix = np.ones((n_clients, K))
        else:
            mix = rng.dirichlet(np.full(K, skew_alpha), size=n_clients)
        counts = _fit_margins(mix, prof * avail.sum(), avail)
        small = counts.sum(axis=1).min()
        if small < min_client_size:
            raise PartitionError(
                f"smallest client gets {small} samples, below min_client_size={min_client_size}"
            )
        clients = [[] for _ in range(n_clients)]
        for k in range(K):
            offsets = np.concatenate([[0], np.cumsum(counts[:, k])])
            for i in range(n_clients):
                clients[i].append(pools[k][offsets[i]:offsets[i + 1]])
        client_idx = [np.sort(np.concatenate(c)) for c in clients]

    histograms = np.stack(
        [np.bincount(dataset.labels[c], minlength=K) for c in client_idx]
    )
    entropies = tuple(
        shannon_entropy(h, entropy_k) if h.sum() else 0.0 for h in histograms
    )
    return ScenarioPartition(tuple(client_idx), np.sort(server), histograms, entropies)
