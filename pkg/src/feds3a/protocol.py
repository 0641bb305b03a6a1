"""Virtual-clock simulation of the semi-asynchronous federated protocol.

One server holds a small labeled set; ``M`` clients hold unlabeled
partitions and train by pseudo-labeling.  A client's run finishes after
a simulated duration and its model is uploaded.  As soon as ``q =
ceil(C*M)`` uploads are waiting, the server trains one supervised pass,
aggregates and sends the new global model to

* the clients that just participated (latest), and
* clients whose base model is now more than ``tau`` versions old
  (deprecated); their current run is aborted and restarted.

Everyone else (tolerable) keeps training on the model it has.  With
``C = 1, tau = 0`` this is synchronous FedAvg-style training, with
``q = 1`` it is asynchronous.

Training is computed lazily when a completion event fires.  That is
equivalent to computing it at the start of the run: the outcome only
depends on the base model, the learning rate and the run's seed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import data as data_mod
from .adaptive_lr import ParticipationTracker, adaptive_rates
from .aggregation import Participant, aggregate
from .config import ExperimentConfig, resolve
from .data import Dataset, ScenarioPartition, UnlabeledView
from .errors import ProtocolError, StaleBaseError
from .grouping import group_clients, normalize_histogram
from .metrics import confusion_matrix, weighted_metrics
from .nn import ModelSpec, OptimizerState, ParamVector, VersionedModel, init_params, predict
from .seeding import derive_seed, rng_for
from .ssl import PseudoLabelConfig, centralized_ssl, client_local_training, server_supervised_training
from .transport import ModelCache, send, vector_checksum

DurationFn = Callable[[int, int], float]

LATEST, TOLERABLE, DEPRECATED = "latest", "tolerable", "deprecated"
TRAINING, IDLE, AWAITING = "training", "idle", "awaiting-model"
EVENT_DONE = 0


# --------------------------------------------------------------------------- data


@dataclass(frozen=True, eq=False)
class PreparedData:
    train: Dataset
    test: Dataset
    partition: ScenarioPartition
    server: Dataset

    def client_view(self, cid: int) -> UnlabeledView:
        return self.train.subset(self.partition.client_indices[cid]).unlabeled()


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Load or generate data, split, standardize and partition it."""
    if cfg.is_synthetic:
        full = data_mod.make_synthetic(
            cfg.n_classes, cfg.per_class, cfg.feature_dim, cfg.separation, cfg.seed
        )
    else:
        full = data_mod.load_csv(cfg.data_path, data_mod.CsvSchema(label_column=cfg.label_column))
    train, test = data_mod.train_test_split(full, cfg.test_fraction, cfg.seed)
    train, test = data_mod.standardize(train, test)
    if cfg.is_synthetic:
        part = data_mod.partition(
            train, "basic", cfg.n_clients, cfg.server_fraction, cfg.seed, skew_alpha=cfg.skew_alpha
        )
    else:
        quotas = None
        names, table = data_mod.load_quota_table(scenario=cfg.scenario)
        if table.shape[0] == cfg.n_clients and names == train.class_names[: len(names)]:
            quotas = np.zeros((cfg.n_clients, train.n_classes), dtype=np.int64)
            quotas[:, : len(names)] = table
            if np.any(quotas.sum(axis=0) > train.histogram()):
                quotas = None  # subset too small for the full-scale quotas
        part = data_mod.partition(
            train, cfg.scenario, cfg.n_clients, cfg.server_fraction, cfg.seed,
            quotas=quotas, skew_alpha=cfg.skew_alpha, entropy_k=data_mod.CIC_ENTROPY_K,
        )
    return PreparedData(train, test, part, train.subset(part.server_indices))


def model_spec(cfg: ExperimentConfig, n_features: int, n_classes: int) -> ModelSpec:
    return ModelSpec((n_features, *cfg.hidden, n_classes), dropout=cfg.dropout, l1=cfg.l1)


# ---------------------------------------------------------------------- durations


def duration_scale(sizes, largest_duration: float = 317.0, exponent: float = 0.42) -> float:
    """``kappa`` such that the largest partition takes ``largest_duration`` seconds."""
    biggest = max(1, int(np.max(sizes)))
    return largest_duration / biggest ** exponent


def simulate_duration(
    size: int,
    rng: np.random.Generator,
    kappa: float,
    exponent: float = 0.42,
    sigma: float = 0.1,
    spike_prob: float = 0.0,
    spike_factor: float = 3.0,
) -> float:
    """``kappa * size**exponent`` times mean-one lognormal jitter, optionally spiked."""
    base = kappa * max(int(size), 1) ** exponent
    jitter = math.exp(sigma * rng.standard_normal() - 0.5 * sigma * sigma) if sigma > 0 else 1.0
    d = base * jitter
    if spike_prob > 0 and rng.random() < spike_prob:
        d *= spike_factor
    return d


# ------------------------------------------------------------------------- clock


class VirtualClock:
    """Min-heap of ``(time, client id, kind, token)`` events."""

    def __init__(self):
        self.now = 0.0
        self._heap: list[tuple[float, int, int, int]] = []

    def schedule(self, time: float, client_id: int, kind: int, token: int) -> None:
        if time < self.now:
            raise ProtocolError(f"event for client {client_id} scheduled in the past")
        heapq.heappush(self._heap, (time, client_id, kind, token))

    def pop(self) -> tuple[float, int, int, int]:
        event = heapq.heappop(self._heap)
        self.now = event[0]
        return event

    def __len__(self) -> int:
        return len(self._heap)


# ------------------------------------------------------------------------ records


@dataclass
class Upload:
    client_id: int
    params: ParamVector
    base_version: int
    size: int
    histogram: np.ndarray
    time: float
    sent_bytes: int
    dense_bytes: int
    sparsity: float


@dataclass
class ClientRecord:
    id: int
    size: int
    view: UnlabeledView
    true_histogram: np.ndarray
    model: VersionedModel
    lr: float
    status: str = TRAINING
    history: list[int] = field(default_factory=list)
    run_index: int = 0
    token: int = 0
    run_start: float = 0.0


@dataclass
class RoundLedger:
    round: int
    time: float
    duration: float
    participants: list[int]
    gaps: list[int]
    staleness: list[int]
    deprecated: list[int]
    tolerable: list[int]
    groups: list[int]
    supervised_weight: float
    uplink_bytes: int
    downlink_bytes: int
    dense_bytes: int
    sparsity: list[float]
    learning_rates: list[float]
    coverage: list[float]
    metrics: dict
    checksum: str

    @property
    def byte_ratio(self) -> float:
        return (self.uplink_bytes + self.downlink_bytes) / self.dense_bytes

    def to_record(self) -> dict:
        return {
            "round": self.round,
            "time": self.time,
            "duration": self.duration,
            "participants": self.participants,
            "gaps": self.gaps,
            "staleness": self.staleness,
            "deprecated": self.deprecated,
            "tolerable": self.tolerable,
            "groups": self.groups,
            "supervised_weight": self.supervised_weight,
            "uplink_bytes": self.uplink_bytes,
            "downlink_bytes": self.downlink_bytes,
            "dense_bytes": self.dense_bytes,
            "byte_ratio": self.byte_ratio,
            "sparsity": self.sparsity,
            "learning_rates": self.learning_rates,
            "coverage": self.coverage,
            "metrics": self.metrics,
            "checksum": self.checksum,
        }


@dataclass
class RunResult:
    config: ExperimentConfig
    model: VersionedModel
    spec: ModelSpec
    ledgers: list[RoundLedger]
    warmup_metrics: dict
    stopped_early: bool = False

    @property
    def trace(self) -> list[dict]:
        return [lg.to_record() for lg in self.ledgers]

    @property
    def checksum(self) -> str:
        return model_checksum(self.model.params)


def model_checksum(params: ParamVector) -> str:
    return f"{vector_checksum(params.values):016x}"


def classify_clients(
    bases: dict[int, int], participants, new_version: int, tau: int
) -> dict[int, str]:
    """Latest if in ``participants``, else deprecated when ``new_version - base > tau``."""
    joined = set(participants)
    out = {}
    for cid, base in bases.items():
        if cid in joined:
            out[cid] = LATEST
        elif new_version - base > tau:
            out[cid] = DEPRECATED
        else:
            out[cid] = TOLERABLE
    return out


def evaluate(params: ParamVector, spec: ModelSpec, test: Dataset) -> dict:
    conf = confusion_matrix(test.labels, predict(params, spec, test.features), spec.n_classes)
    return weighted_metrics(conf).as_dict()


class _EarlyStop:
    def __init__(self, patience: int, min_delta: float):
        self.patience, self.min_delta = patience, min_delta
        self.best, self.stale = -np.inf, 0

    def update(self, value: float) -> bool:
        if value > self.best + self.min_delta:
            self.best, self.stale = value, 0
        else:
            self.stale += 1
        return self.stale >= self.patience


# -------------------------------------------------------------------------- engine


class Simulation:
    """State of one run; :func:`run_experiment` is the usual entry point."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        data: PreparedData | None = None,
        duration_fn: DurationFn | None = None,
    ):
        self.cfg = cfg = resolve(cfg)
        self.data = data if data is not None else prepare_data(cfg)
        if len(self.data.partition.client_indices) != cfg.n_clients:
            raise ProtocolError("partition does not match n_clients")
        self.spec = model_spec(cfg, self.data.train.n_features, self.data.train.n_classes)
        self.q = cfg.quorum
        self.pl_cfg = PseudoLabelConfig(cfg.threshold, cfg.batch_size, cfg.epochs)
        self.schedule = cfg.schedule()
        self.g = cfg.staleness_fn()
        self.h = cfg.round_weight_fn()
        self.grouping = cfg.grouping()
        sizes = self.data.partition.sizes
        self.kappa = duration_scale(sizes, cfg.largest_duration, cfg.duration_exponent)
        self.duration_fn = duration_fn or self._default_duration
        self.clock = VirtualClock()
        self.cache = ModelCache(cfg.tau + 1)
        self.tracker = ParticipationTracker(cfg.n_clients)
        self.pending: list[Upload] = []
        self.ledgers: list[RoundLedger] = []
        self.version = 0
        self.last_round_time = 0.0
        self.clients: list[ClientRecord] = []

    # -- helpers
    def _default_duration(self, cid: int, run_index: int) -> float:
        c = self.cfg
        rng = rng_for(c.seed, "duration", cid, run_index)
        return simulate_duration(
            self.data.partition.sizes[cid], rng, self.kappa, c.duration_exponent,
            c.duration_sigma, c.spike_prob, c.spike_factor,
        )

    def _optimizer(self, lr: float) -> OptimizerState:
        return OptimizerState(self.cfg.optimizer, lr, l1=self.cfg.l1)

    def _start_run(self, rec: ClientRecord) -> None:
        rec.token += 1
        rec.status = TRAINING
        rec.run_start = self.clock.now
        d = float(self.duration_fn(rec.id, rec.run_index))
        if not d > 0 or not math.isfinite(d):
            raise ProtocolError(f"client {rec.id} got invalid duration {d}")
        self.clock.schedule(self.clock.now + d, rec.id, EVENT_DONE, rec.token)

    def _server_pass(self, start: ParamVector, epochs: int, key) -> ParamVector:
        params, _ = server_supervised_training(
            start, self.data.server, self.spec, epochs, self.cfg.batch_size,
            self._optimizer(self.cfg.lr), derive_seed(self.cfg.seed, "server", key),
        )
        return params

    # -- phases
    def warm_up(self) -> ParamVector:
        init = init_params(self.spec, rng_for(self.cfg.seed, "init"))
        return self._server_pass(init, self.cfg.warmup_epochs, "warmup")

    def start(self) -> dict:
        cfg = self.cfg
        global_params = self.warm_up()
        self.global_model = VersionedModel(global_params, 0)
        self.cache.put(0, global_params)
        part = self.data.partition
        for cid in range(cfg.n_clients):
            idx = part.client_indices[cid]
            rec = ClientRecord(
                id=cid,
                size=int(idx.size),
                view=self.data.client_view(cid),
                true_histogram=part.histograms[cid],
                model=self.global_model,
                lr=cfg.lr,
            )
            self.clients.append(rec)
        for rec in self.clients:
            self._start_run(rec)
        return evaluate(global_params, self.spec, self.data.test)

    def _finish_run(self, rec: ClientRecord) -> Upload:
        seed = derive_seed(self.cfg.seed, "client", rec.id, rec.run_index)
        new, stats = client_local_training(
            rec.model, rec.view, self.spec, self.pl_cfg, self._optimizer(rec.lr), seed
        )
        hist = stats.class_histogram()
        hist = normalize_histogram(np.zeros(self.spec.n_classes) if hist is None else hist)
        if rec.model.version not in self.cache:
            raise StaleBaseError(
                f"client {rec.id} uploads against version {rec.model.version}, "
                f"cache holds {self.cache.versions()}"
            )
        tr = send(new, rec.model.params, rec.model.version, self.cfg.zero_threshold, self.cfg.transport)
        rec.run_index += 1
        rec.status = AWAITING
        self._coverage[rec.id] = stats.coverage[-1] if stats.coverage else 0.0
        return Upload(
            rec.id, tr.params, rec.model.version, rec.size, hist, self.clock.now,
            tr.sent_bytes, tr.dense_bytes, 1.0 - tr.nnz / len(new),
        )

    def _groups(self, uploads: list[Upload]) -> dict[int, int]:
        if self.grouping.source == "oracle":
            hists = [(u.client_id, normalize_histogram(self.clients[u.client_id].true_histogram))
                     for u in uploads]
        else:
            hists = [(u.client_id, u.histogram) for u in uploads]
        return group_clients(hists, self.grouping, self.version)

    def global_update(self, uploads: list[Upload]) -> tuple[ParamVector, dict[int, int], float]:
        """Server pass, grouping and aggregation; bumps the global version."""
        cfg = self.cfg
        v = self.version
        server = self._server_pass(self.global_model.params, cfg.epochs, v)
        groups = self._groups(uploads)
        parts = [
            Participant(u.client_id, VersionedModel(u.params, u.base_version), u.size,
                        groups[u.client_id])
            for u in uploads
        ]
        server_size = len(self.data.server)
        new = aggregate(server, parts, v, self.schedule, self.g, cfg.normalize,
                        server_size=server_size)
        f = self.schedule(v, server_size=server_size, client_sizes=[p.size for p in parts])
        ids = [u.client_id for u in uploads]
        self.tracker.record(v, ids)
        for cid in sorted(ids):
            self.clients[cid].history.append(v)
        self.version = v + 1
        self.global_model = VersionedModel(new, self.version)
        self.cache.put(self.version, new)
        return new, groups, float(f)

    def current_rates(self) -> np.ndarray:
        cfg = self.cfg
        if cfg.adaptive_lr:
            return adaptive_rates(self.tracker, self.h, cfg.lr, cfg.lr_clamp)
        return np.full(cfg.n_clients, cfg.lr)

    def _deliver(self, rec: ClientRecord, params: ParamVector, version: int, lr: float):
        tr = send(params, rec.model.params, rec.model.version, self.cfg.zero_threshold,
                  self.cfg.transport)
        rec.model = VersionedModel(tr.params, version)
        rec.lr = lr
        return tr

    def _ledger(self, uploads, groups, f, staleness, classes, down, down_dense, down_sparsity,
                rates) -> RoundLedger:
        now = self.clock.now
        v = self.version - 1
        ids = [u.client_id for u in uploads]
        ledger = RoundLedger(
            round=self.version,
            time=now,
            duration=now - self.last_round_time,
            participants=ids,
            gaps=[v - u.base_version for u in uploads],
            staleness=staleness,
            deprecated=sorted(c for c, k in classes.items() if k == DEPRECATED),
            tolerable=sorted(c for c, k in classes.items() if k == TOLERABLE),
            groups=[groups[i] for i in ids],
            supervised_weight=f,
            uplink_bytes=int(sum(u.sent_bytes for u in uploads)),
            downlink_bytes=int(down),
            dense_bytes=int(sum(u.dense_bytes for u in uploads) + down_dense),
            sparsity=[float(u.sparsity) for u in uploads] + [float(s) for s in down_sparsity],
            learning_rates=[float(r) for r in rates],
            coverage=[float(self._coverage[i]) for i in ids],
            metrics=evaluate(self.global_model.params, self.spec, self.data.test),
            checksum=model_checksum(self.global_model.params),
        )
        self.last_round_time = now
        self.ledgers.append(ledger)
        return ledger

    def aggregate_round(self) -> RoundLedger:
        """Consume ``q`` pending uploads, update, and distribute."""
        cfg = self.cfg
        uploads, self.pending = self.pending[: self.q], self.pending[self.q:]
        new, groups, f = self.global_update(uploads)
        rates = self.current_rates()
        bases = {c.id: c.model.version for c in self.clients}
        classes = classify_clients(bases, [u.client_id for u in uploads], self.version, cfg.tau)
        # latest clients are at gap 0 from now on; the rest report the gap
        # that decided their class (deprecated ones before the forced update)
        staleness = [
            0 if classes[c] == LATEST else self.version - bases[c] for c in range(cfg.n_clients)
        ]
        down = down_dense = 0
        down_sparsity = []
        for rec in self.clients:
            if classes[rec.id] == TOLERABLE:
                continue
            tr = self._deliver(rec, new, self.version, float(rates[rec.id]))
            down += tr.sent_bytes
            down_dense += tr.dense_bytes
            down_sparsity.append(1.0 - tr.nnz / len(new))
            if classes[rec.id] == DEPRECATED:
                rec.run_index += 1  # the aborted run keeps its index slot
            self._start_run(rec)
        return self._ledger(uploads, groups, f, staleness, classes, down, down_dense,
                            down_sparsity, rates)

    def _dump(self) -> str:
        rows = [f"t={self.clock.now:.3f} version={self.version} pending={[u.client_id for u in self.pending]}"]
        for c in self.clients:
            rows.append(f"  client {c.id}: status={c.status} base={c.model.version} run={c.run_index}")
        return "\n".join(rows)

    def run(self) -> RunResult:
        cfg = self.cfg
        self._coverage: dict[int, float] = {}
        warm = self.start()
        stopper = _EarlyStop(cfg.patience, cfg.min_delta) if cfg.early_stop else None
        stopped = False
        while self.version < cfg.rounds and not stopped:
            if not len(self.clock):
                raise ProtocolError("no pending events and no full quorum\n" + self._dump())
            _, cid, _, token = self.clock.pop()
            rec = self.clients[cid]
            if token != rec.token:
                continue  # aborted run
            self.pending.append(self._finish_run(rec))
            while len(self.pending) >= self.q and self.version < cfg.rounds:
                ledger = self.aggregate_round()
                if stopper is not None and stopper.update(ledger.metrics["overall_accuracy"]):
                    stopped = True
                    break
        return RunResult(cfg, self.global_model, self.spec, self.ledgers, warm, stopped)


def _run_partial(sim: Simulation) -> RunResult:
    """Synchronous FedAvg over ``q`` randomly pre-selected clients per round.

    The selected clients receive the current global model, train, and the
    round lasts as long as the slowest of them.
    """
    cfg = sim.cfg
    sim._coverage = {}
    warm = sim.start()
    sim.clock = VirtualClock()  # no asynchronous runs in this mode
    for rec in sim.clients:
        rec.status = IDLE
    stopper = _EarlyStop(cfg.patience, cfg.min_delta) if cfg.early_stop else None
    stopped = False
    while sim.version < cfg.rounds and not stopped:
        v = sim.version
        pick = rng_for(cfg.seed, "select", v).choice(cfg.n_clients, sim.q, replace=False)
        chosen = sorted(int(c) for c in pick)
        rates = sim.current_rates()
        down = down_dense = 0
        down_sparsity = []
        durations = []
        for cid in chosen:
            rec = sim.clients[cid]
            tr = sim._deliver(rec, sim.global_model.params, v, float(rates[cid]))
            down += tr.sent_bytes
            down_dense += tr.dense_bytes
            down_sparsity.append(1.0 - tr.nnz / len(tr.params))
            durations.append(float(sim.duration_fn(cid, rec.run_index)))
        sim.clock.now += max(durations)
        uploads = [sim._finish_run(sim.clients[cid]) for cid in chosen]
        for rec in sim.clients:
            rec.status = IDLE
        _, groups, f = sim.global_update(uploads)
        staleness = [sim.version - c.model.version for c in sim.clients]
        ledger = sim._ledger(uploads, groups, f, staleness, {}, down, down_dense,
                             down_sparsity, rates)
        if stopper is not None and stopper.update(ledger.metrics["overall_accuracy"]):
            stopped = True
    return RunResult(cfg, sim.global_model, sim.spec, sim.ledgers, warm, stopped)


def run_experiment(
    cfg: ExperimentConfig,
    *,
    data: PreparedData | None = None,
    duration_fn: DurationFn | None = None,
) -> RunResult:
    """Run one configured experiment to ``cfg.rounds`` global updates."""
    sim = Simulation(cfg, data, duration_fn)
    if sim.cfg.baseline == "fedavg-partial":
        return _run_partial(sim)
    return sim.run()


def run_centralized(
    cfg: ExperimentConfig,
    epochs: int,
    *,
    data: PreparedData | None = None,
) -> tuple[dict, list[float]]:
    """Local-SSL ceiling: the same warm-up, then every client's unlabeled rows
    pooled on one machine and trained alternately with the server labels.

    Returns the test metrics and the per-epoch pseudo-label coverage.
    """
    sim = Simulation(cfg, data)
    start = sim.warm_up()
    part = sim.data.partition
    pooled = sim.data.train.subset(np.concatenate(part.client_indices)).unlabeled()
    cfg = sim.cfg
    params, coverage = centralized_ssl(
        start, sim.data.server, pooled, sim.spec,
        PseudoLabelConfig(cfg.threshold, cfg.batch_size, 1), epochs,
        sim._optimizer(cfg.lr), derive_seed(cfg.seed, "centralized"),
    )
    return evaluate(params, sim.spec, sim.data.test), coverage
