"""Round orchestration for semi-supervised split learning over a constellation.

One round lasts one orbital period. Satellites train locally while out of
contact, push activations to the ground station (GS) during their window, and
the GS interpolates, trains the server-side sub-model and aggregates client
sub-models.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nn
from .config import ExperimentConfig
from .data import Dataset, GaussianMixtureTask, SatelliteData, load_csv_dataset, partition_dataset
from .interp import InterpConfig, interpolate_round
from .link import (
    ActivationRecord,
    TransferBudget,
    counts_bytes,
    select_for_upload,
)
from .orbit import (
    ContactWindow,
    OrbitConfig,
    contact_fraction,
    contact_windows,
    load_rate_trace,
    orbital_period,
)
from .ssl import (
    ClassCounts,
    SslHyper,
    ThresholdTable,
    auxiliary_loss,
    client_loss,
    compute_thresholds,
    contrastive_loss,
    ema_update,
    normalized_contrastive_loss,
    pseudo_label_batch,
    unsupervised_loss,
    weak_augment,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 0.005
    batch_size: int = 128
    ssl: SslHyper = field(default_factory=SslHyper)


@dataclass
class SatelliteState:
    id: int
    student_client: nn.SubModel
    student_head: nn.SubModel
    teacher_client: nn.SubModel
    teacher_head: nn.SubModel
    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    thresholds: np.ndarray
    rng: np.random.Generator
    n_classes: int
    counts: ClassCounts | None = None
    pseudo_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    pseudo_labels: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    low_conf_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    last_losses: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (
            self.student_client.same_architecture(self.teacher_client)
            and self.student_head.same_architecture(self.teacher_head)
        ):
            raise nn.DimensionError("student and teacher architectures differ")
        if self.counts is None:
            self.counts = ClassCounts(
                np.bincount(self.labeled_y, minlength=self.n_classes),
                np.zeros(self.n_classes, np.int64),
            )

    @property
    def data_size(self) -> int:
        return len(self.labeled_y) + len(self.unlabeled_x)


@dataclass
class GroundStationState:
    server_model: nn.SubModel
    n_classes: int
    activation_store: list[ActivationRecord] = field(default_factory=list)
    global_counts: dict[int, ClassCounts] = field(default_factory=dict)
    client_dist: np.ndarray | None = None


@dataclass
class RoundReport:
    round: int
    sim_time_s: float
    losses: list[tuple[float, float, float]]
    bytes_down: list[int]
    bytes_up: list[int]
    records_per_class: np.ndarray  # (N, M)
    pseudo_counts: np.ndarray  # (N, M)
    thresholds: np.ndarray  # (N, M), in force during this round
    relative_ratio: list[float]
    server_loss: float
    test_acc: float


# -- model plumbing ---------------------------------------------------------


def build_global_model(cfg: ExperimentConfig, rng: np.random.Generator, in_dim: int) -> nn.SubModel:
    h = cfg.hidden_dim
    return nn.init_submodel([in_dim, h, h, h, cfg.n_classes], rng, "global", last_linear=True)


def split_model(model: nn.SubModel, cut_index: int) -> tuple[nn.SubModel, nn.SubModel]:
    if not 0 < cut_index < len(model.layers):
        raise ValueError(f"cut_index must lie in (0, {len(model.layers)})")
    return (
        nn.SubModel(model.layers[:cut_index], "client"),
        nn.SubModel(model.layers[cut_index:], "server"),
    )


def build_aux_head(cut_dim: int, hidden: int, n_classes: int, rng: np.random.Generator) -> nn.SubModel:
    return nn.init_submodel([cut_dim, hidden, n_classes], rng, "auxiliary-head", last_linear=True)


def aggregate_clients(models: Sequence[nn.SubModel], weights: Sequence[float]) -> nn.SubModel:
    """Parameterwise weighted mean with weights normalised to sum to one."""
    if not models:
        raise ValueError("nothing to aggregate")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(models),) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    if not all(models[0].same_architecture(m) for m in models[1:]):
        raise nn.DimensionError("cannot aggregate different architectures")
    w = w / w.sum()
    params = []
    for group in zip(*(m.params() for m in models)):
        acc = np.zeros_like(group[0])
        for wi, p in zip(w, group):
            acc += wi * p
        params.append(acc)
    return models[0].with_params(params)


def evaluate(client: nn.SubModel, server: nn.SubModel, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        raise ValueError("test set is empty")
    logits = nn.predict(server, nn.predict(client, x))
    return float(np.mean(logits.argmax(axis=1) == np.asarray(y)))


# -- phases -----------------------------------------------------------------


def refresh_pseudo_labels(sat: SatelliteState) -> SatelliteState:
    """Label the whole unlabeled set with the teacher and current thresholds,
    splitting it into pseudo-labeled and low-confidence pools."""
    labeled = np.bincount(sat.labeled_y, minlength=sat.n_classes)
    if len(sat.unlabeled_x):
        mask, labels, _ = pseudo_label_batch(
            sat.teacher_client, sat.teacher_head, sat.unlabeled_x, sat.thresholds
        )
        sat.pseudo_idx = np.flatnonzero(mask)
        sat.pseudo_labels = labels[mask]
        sat.low_conf_idx = np.flatnonzero(~mask)
    else:
        sat.pseudo_idx = sat.low_conf_idx = sat.pseudo_labels = np.zeros(0, np.int64)
    sat.counts = ClassCounts(labeled, np.bincount(sat.pseudo_labels, minlength=sat.n_classes))
    return sat


def _sample(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.choice(n, size=min(k, n), replace=False)


def local_step(sat: SatelliteState, hyper: TrainHyper) -> tuple[float, float, float]:
    """One SGD step on the combined client loss, followed by the EMA update."""
    h = hyper.ssl
    rng = sat.rng
    client, head = sat.student_client, sat.student_head
    g_client = nn.zero_grads(client)
    g_head = nn.zero_grads(head)
    loss_x = loss_u = loss_v = 0.0

    if len(sat.labeled_y):
        idx = _sample(rng, len(sat.labeled_y), hyper.batch_size)
        loss_x, gc, gh = auxiliary_loss(
            client, head, sat.labeled_x[idx], sat.labeled_y[idx], rng, h.aug_strength
        )
        g_client, g_head = gc, gh

    if len(sat.unlabeled_x) and (h.lambda_u > 0 or h.lambda_v > 0):
        idx = _sample(rng, len(sat.unlabeled_x), hyper.batch_size)
        xu = sat.unlabeled_x[idx]
        mask, labels, _ = pseudo_label_batch(sat.teacher_client, sat.teacher_head, xu, sat.thresholds)
        if h.lambda_u > 0 and mask.any():
            loss_u, gc, gh = unsupervised_loss(
                client, head, (xu[mask], labels[mask]), rng, h.aug_strength
            )
            g_client = nn.add_grads(g_client, gc, h.lambda_u)
            g_head = nn.add_grads(g_head, gh, h.lambda_u)
        if h.lambda_v > 0 and (~mask).any():
            xl = xu[~mask]
            z, cache = nn.forward(client, weak_augment(xl, rng, h.aug_strength))
            z_teacher = nn.predict(sat.teacher_client, xl)
            contrast = normalized_contrastive_loss if h.normalize_features else contrastive_loss
            loss_v, gz = contrast(z, z_teacher, h.phi)
            gc, _ = nn.backward(client, cache, gz)
            g_client = nn.add_grads(g_client, gc, h.lambda_v)

    sat.student_client = nn.sgd_step(client, g_client, hyper.lr)
    sat.student_head = nn.sgd_step(head, g_head, hyper.lr)
    sat.teacher_client = ema_update(sat.teacher_client, sat.student_client, h.ema_decay)
    sat.teacher_head = ema_update(sat.teacher_head, sat.student_head, h.ema_decay)
    return loss_x, loss_u, loss_v


def non_contact_phase(sat: SatelliteState, steps: int, hyper: TrainHyper) -> SatelliteState:
    """Run ``steps`` local steps, then refresh class counts and pseudo-label pools.

    Mutates and returns ``sat``; ``sat.last_losses`` holds the mean loss
    components over the phase.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if steps == 0:
        return sat
    if not len(sat.labeled_y):
        log.warning("satellite %d has no labeled data; skipping the auxiliary loss", sat.id)
    totals = np.zeros(3)
    for _ in range(steps):
        totals += local_step(sat, hyper)
    lx, lu, lv = totals / steps
    sat.last_losses = (float(lx), float(lu), float(lv))
    return refresh_pseudo_labels(sat)


def activation_pool(sat: SatelliteState) -> list[ActivationRecord]:
    """Cut-layer activations of labeled and pseudo-labeled samples."""
    m = sat.n_classes
    xs = [sat.labeled_x, sat.unlabeled_x[sat.pseudo_idx]]
    ys = [sat.labeled_y, sat.pseudo_labels]
    origins = ["labeled", "pseudo"]
    pool = []
    for x, y, origin in zip(xs, ys, origins):
        if not len(y):
            continue
        feats = nn.predict(sat.student_client, x)
        onehot = nn.one_hot(y, m)
        pool.extend(
            ActivationRecord(f, lab, sat.id, origin) for f, lab in zip(feats, onehot)
        )
    return pool


@dataclass
class ContactReport:
    bytes_down: int = 0
    bytes_up: int = 0
    records: int = 0
    records_per_class: np.ndarray | None = None
    model_delivered: bool = False


def contact_phase(
    sat: SatelliteState,
    gs: GroundStationState,
    budget: TransferBudget,
    policy: str = "class-cycling-largest",
) -> tuple[GroundStationState, ContactReport]:
    """Satellite-to-GS half of a contact: class counts, then as many
    activations as the window allows."""
    m = sat.n_classes
    budget.charge_down(counts_bytes(m), force=True)
    gs.global_counts[sat.id] = sat.counts
    pool = activation_pool(sat)
    chosen = select_for_upload(pool, budget.remaining_down, policy, sat.rng)
    budget.charge_down(sum(r.size_bytes for r in chosen))
    gs.activation_store.extend(chosen)
    per_class = np.bincount([r.class_hint for r in chosen], minlength=m)
    return gs, ContactReport(
        bytes_down=budget.used_down,
        records=len(chosen),
        records_per_class=per_class,
    )


def deliver(
    sat: SatelliteState,
    budget: TransferBudget,
    thresholds: np.ndarray,
    client: nn.SubModel | None,
) -> tuple[int, bool]:
    """GS-to-satellite half of a contact: thresholds, then (if given and it
    fits) the aggregated client sub-model. Returns bytes sent and whether the
    model arrived."""
    if budget.charge_up(8 * thresholds.size):
        sat.thresholds = np.array(thresholds, dtype=np.float64)
    delivered = False
    if client is not None:
        if budget.charge_up(8 * client.n_params):
            sat.student_client = client.copy()
            sat.teacher_client = client.copy()
            delivered = True
        else:
            log.warning("satellite %d: aggregated model does not fit the uplink budget", sat.id)
    return budget.used_up, delivered


def server_phase(
    gs: GroundStationState,
    interp_cfg: InterpConfig,
    steps: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[GroundStationState, float]:
    """Interpolate the received activations and train the server sub-model on
    the grown set with soft-label cross-entropy. Returns the mean loss."""
    if not gs.activation_store:
        log.warning("activation store is empty; skipping server training")
        return gs, float("nan")
    records = gs.activation_store
    if interp_cfg.J > 0 and len(records) < 2:
        log.warning("fewer than two activations; skipping interpolation")
    elif interp_cfg.J > 0:
        records = interpolate_round(records, interp_cfg, rng)
    x = np.stack([r.features for r in records])
    y = np.stack([r.label for r in records])
    model = gs.server_model
    total = 0.0
    for _ in range(steps):
        idx = _sample(rng, len(x), batch_size)
        logits, cache = nn.forward(model, x[idx])
        loss, g = nn.softmax_cross_entropy(logits, y[idx])
        grads, _ = nn.backward(model, cache, g)
        model = nn.sgd_step(model, grads, lr)
        total += loss
    gs.server_model = model
    return gs, (total / steps if steps else float("nan"))


# -- experiment driver --------------------------------------------------------


@dataclass
class Experiment:
    cfg: ExperimentConfig
    sats: list[SatelliteState]
    gs: GroundStationState
    test: Dataset
    windows: list[list[ContactWindow]]  # per satellite, per round
    period_s: float
    contact_s: float
    gs_rng: np.random.Generator


def build_datasets(cfg: ExperimentConfig, rng: np.random.Generator) -> tuple[list[SatelliteData], Dataset]:
    n_train = cfg.satellites * cfg.samples_per_sat
    if cfg.dataset:
        full = load_csv_dataset(cfg.dataset)
        if int(full.y.max()) >= cfg.n_classes:
            raise ValueError("dataset has more classes than n_classes")
        perm = rng.permutation(len(full))
        n_test = min(cfg.test_size, len(full) // 5)
        test = full.subset(perm[:n_test])
        pool = full.subset(perm[n_test:])
        n_total = min(n_train, len(pool))
    else:
        task = GaussianMixtureTask(
            cfg.n_classes, cfg.feature_dim, cfg.informative_dims,
            cfg.separation, cfg.nuisance_scale, cfg.task_seed,
        )
        # oversample so skewed class mixes are not bent by exhausted classes
        pool = task.sample_balanced(2 * n_train, rng)
        test = task.sample_balanced(cfg.test_size, rng)
        n_total = n_train
    shards = partition_dataset(
        pool, cfg.satellites, cfg.dirichlet_alpha, cfg.quantity_ratios,
        cfg.labeling_rate, rng, n_classes=cfg.n_classes, n_total=n_total,
    )
    return shards, test


def setup_experiment(cfg: ExperimentConfig) -> Experiment:
    seeds = np.random.SeedSequence(cfg.seed).spawn(3 + cfg.satellites)
    data_rng = np.random.default_rng(seeds[0])
    model_rng = np.random.default_rng(seeds[1])
    gs_rng = np.random.default_rng(seeds[2])
    shards, test = build_datasets(cfg, data_rng)
    in_dim = test.x.shape[1]

    global_model = build_global_model(cfg, model_rng, in_dim)
    client, server = split_model(global_model, cfg.cut_index)
    head = build_aux_head(client.out_dim, cfg.hidden_dim, cfg.n_classes, model_rng)

    period = orbital_period(cfg.altitude_km)
    if cfg.continuous_link:
        contact = period
    else:
        contact = contact_fraction(cfg.altitude_km, cfg.min_elevation_deg) * period
    rates = load_rate_trace(cfg.rate_trace) if cfg.rate_trace else (cfg.downlink_bps, cfg.uplink_bps)
    horizon = max(cfg.rounds, 1) * period

    sats, windows = [], []
    for i, shard in enumerate(shards):
        sats.append(
            SatelliteState(
                id=i,
                student_client=client.copy(),
                student_head=head.copy(),
                teacher_client=client.copy(),
                teacher_head=head.copy(),
                labeled_x=shard.labeled.x,
                labeled_y=shard.labeled.y,
                unlabeled_x=shard.unlabeled_x,
                thresholds=np.full(cfg.n_classes, cfg.tau),
                rng=np.random.default_rng(seeds[3 + i]),
                n_classes=cfg.n_classes,
            )
        )
        if cfg.continuous_link:
            down, up = (rates.rate_at(0.0) if not isinstance(rates, tuple) else rates)
            windows.append(
                [ContactWindow(r * period, (r + 1) * period, down, up) for r in range(max(cfg.rounds, 1))]
            )
        else:
            orbit = OrbitConfig(cfg.altitude_km, cfg.min_elevation_deg, i * period / cfg.satellites)
            windows.append(contact_windows(orbit, horizon, rates))
    gs = GroundStationState(server_model=server, n_classes=cfg.n_classes)
    return Experiment(cfg, sats, gs, test, windows, period, contact, gs_rng)


def _thresholds_for_mode(cfg: ExperimentConfig, counts: list[ClassCounts]) -> ThresholdTable:
    if cfg.mode == "fixed-threshold":
        table = compute_thresholds(counts, cfg.tau, cfg.tau_cap)
        return ThresholdTable(
            np.full_like(table.tau, cfg.tau), cfg.tau, cfg.tau_cap,
            table.class_dist, table.size_ratio,
        )
    return compute_thresholds(
        counts, cfg.tau, cfg.tau_cap,
        use_class=cfg.mode != "no-pa-class",
        use_quantity=cfg.mode != "no-pa-quantity",
    )


def run_round(exp: Experiment, t: int) -> RoundReport:
    cfg, sats, gs = exp.cfg, exp.sats, exp.gs
    hyper = TrainHyper(
        cfg.lr, cfg.batch_size,
        SslHyper(
            cfg.lambda_u, cfg.lambda_v, cfg.phi, cfg.ema_decay, cfg.aug_strength,
            cfg.contrastive_normalize,
        ),
    )
    m = cfg.n_classes
    no_am = cfg.mode == "no-am"
    if cfg.continuous_link:
        train_s = exp.period_s
    elif no_am:
        train_s = exp.contact_s
    else:
        train_s = exp.period_s - exp.contact_s
    steps = int(math.floor(train_s / cfg.step_time_s + 1e-9))

    gs.activation_store = []  # stale activations are evicted every round
    tau_in_force = np.stack([s.thresholds for s in sats])
    budgets = [TransferBudget.from_window(exp.windows[s.id][t]) for s in sats]

    for sat in sats:
        # the teacher seeds the student at the start of every round
        sat.student_client = sat.teacher_client.copy()
        sat.student_head = sat.teacher_head.copy()
        if no_am:
            # without an auxiliary head the client can only learn through the
            # server-side model, and only while the link is up
            sat.student_head = gs.server_model.copy()
            sat.teacher_head = gs.server_model.copy()
        non_contact_phase(sat, steps, hyper)
        if steps == 0:
            refresh_pseudo_labels(sat)

    reports = []
    for sat, budget in zip(sats, budgets):
        _, rep = contact_phase(sat, gs, budget, cfg.selection_policy)
        reports.append(rep)

    table = _thresholds_for_mode(cfg, [gs.global_counts[s.id] for s in sats])
    gs.client_dist = table.class_dist
    j = 0 if cfg.mode == "no-aai" else cfg.interp_j
    interp_cfg = InterpConfig(J=j, beta=cfg.beta, target_dist=gs.client_dist)
    gs, server_loss = server_phase(gs, interp_cfg, cfg.server_steps, cfg.server_lr, cfg.batch_size, exp.gs_rng)

    weights = [s.data_size for s in sats]
    aggregated = aggregate_clients([s.student_client for s in sats], weights)
    broadcast = (t + 1) % cfg.agg_every == 0
    bytes_up = []
    for sat, budget in zip(sats, budgets):
        used, _ = deliver(sat, budget, table.tau[sat.id], aggregated if broadcast else None)
        bytes_up.append(used)

    acc = evaluate(aggregated, gs.server_model, exp.test.x, exp.test.y)
    return RoundReport(
        round=t,
        sim_time_s=(t + 1) * exp.period_s,
        losses=[s.last_losses for s in sats],
        bytes_down=[r.bytes_down for r in reports],
        bytes_up=bytes_up,
        records_per_class=np.stack([r.records_per_class for r in reports]),
        pseudo_counts=np.stack([s.counts.pseudo for s in sats]),
        thresholds=tau_in_force,
        relative_ratio=[r.records / s.data_size for r, s in zip(reports, sats)],
        server_loss=server_loss,
        test_acc=acc,
    )


def run_experiment(
    cfg: ExperimentConfig,
    on_round: Callable[[RoundReport], None] | None = None,
) -> list[RoundReport]:
    exp = setup_experiment(cfg)
    out = []
    for t in range(cfg.rounds):
        try:
            rep = run_round(exp, t)
        except Exception as exc:
            raise RuntimeError(f"round {t}: {exc}") from exc
        out.append(rep)
        if on_round is not None:
            on_round(rep)
    return out
