"""Training loop with epoch-boundary momentum statistics, two-stage
classifier retraining, and a small hyperparameter sweep harness.

Mini-batches are drawn uniformly per domain. Centroid statistics are never
computed from the batch being trained on: they are estimated from a full
pass at each epoch boundary and merged into the running store with
momentum, so every step consumes statistics that lag the current epoch.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluation, losses, model
from .datagen import Dataset
from .errors import ValidationError
from .numerics import make_rng
from .stats import build_graph, compute_stats, group_by_pair, momentum_update, transfer_stats


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000
    batch_per_domain: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"        # "adam" or "sgd" (momentum 0.9)
    omega: float = 0.1             # alignment weight; 0 gives plain ERM
    nu: float = 1.0
    alpha_m: float = 0.9           # statistics momentum
    variant: str = "calibrated_boda"
    decouple: bool = False
    decouple_steps: int = 1000
    seed: int = 0
    hidden: tuple = (64, 64)
    rep_dim: int = 16
    eval_every: int = 250

    def __post_init__(self):
        if self.steps < 1 or self.batch_per_domain < 1 or self.lr <= 0:
            raise ValidationError("steps, batch_per_domain, lr must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError("optimizer must be 'adam' or 'sgd'")
        if not 0.0 <= self.alpha_m <= 1.0:
            raise ValidationError("alpha_m must be in [0, 1]")
        if self.omega < 0 or self.nu < 0:
            raise ValidationError("omega and nu must be nonnegative")
        if self.variant not in losses.VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.decouple_steps < 1 or self.eval_every < 1:
            raise ValidationError("decouple_steps and eval_every must be >= 1")


@dataclass
class LogRow:
    step: int
    ce: float
    boda: float
    joint: float
    val_accuracy: float
    alpha: float
    beta: float
    gamma: float
    bound_gap: float
    stage: int = 1


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    step_joint: list = field(default_factory=list)   # per-step joint loss


class _Optimizer:
    """Adam or SGD-with-momentum over a flat list of parameter arrays."""

    def __init__(self, arrays, kind: str, lr: float):
        self.kind = kind
        self.lr = lr
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays, grads):
        self.t += 1
        if self.kind == "sgd":
            for a, g, m in zip(arrays, grads, self.m):
                m *= 0.9
                m += g
                a -= self.lr * m
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            a -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + eps)


def encode_features(params: model.ModelParams, split):
    z, _, _ = model.forward(params, split.x)
    return z


def _full_pass_stats(params, ds: Dataset):
    z = encode_features(params, ds.train)
    return compute_stats(group_by_pair(z, ds.train.domain, ds.train.label)), z


def _diagnostics(params, ds: Dataset, nu: float):
    """(alpha, beta, gamma, bound_gap) of the current representations."""
    z = encode_features(params, ds.train)
    groups = group_by_pair(z, ds.train.domain, ds.train.label)
    store = compute_stats(groups)
    try:
        graph = build_graph(store, groups)
        ts = transfer_stats(graph)
        alpha, beta, gamma = ts.alpha, ts.beta, ts.gamma
    except ValidationError:
        alpha = beta = gamma = float("nan")
    try:
        report = losses.verify_bound(z, ds.train.domain, ds.train.label,
                                     nu=nu, calibrated=False)
        bound_gap = report.gap
    except ValidationError:
        bound_gap = float("nan")
    return alpha, beta, gamma, bound_gap


def _val_accuracy(params, split) -> float:
    if len(split) == 0:
        return float("nan")
    _, logits, _ = model.forward(params, split.x)
    return float((logits.argmax(axis=1) == split.label).mean() * 100.0)


def train(ds: Dataset, cfg: TrainConfig):
    """Train encoder + classifier; returns (params, TrainLog).

    Deterministic in (dataset, config): the same seed reproduces the same
    checkpoint bit for bit. With ``omega == 0`` the alignment machinery is
    never touched and the run is plain cross-entropy ERM.
    """
    if len(ds.train) == 0:
        raise ValidationError("training set is empty")
    use_alignment = cfg.omega > 0
    train_domains = sorted(np.unique(ds.train.domain))
    if use_alignment:
        if len(train_domains) < 2 or len(np.unique(ds.train.label)) < 2:
            raise ValidationError(
                "alignment training needs >= 2 domains and >= 2 classes"
            )

    params = model.init(ds.input_dim, cfg.hidden, cfg.rep_dim,
                        ds.num_classes, cfg.seed)
    arrays = params.all_arrays()
    opt = _Optimizer(arrays, cfg.optimizer, cfg.lr)
    batch_rng = make_rng(cfg.seed, stream=11)
    idx_by_domain = {
        d: np.where(ds.train.domain == d)[0] for d in train_domains
    }
    steps_per_epoch = max(
        1, math.ceil(len(ds.train) / (cfg.batch_per_domain * len(train_domains)))
    )

    store = None
    store_refresh_step = -1
    if use_alignment:
        store, _ = _full_pass_stats(params, ds)
        store_refresh_step = 0

    log = TrainLog()
    for step in range(cfg.steps):
        if use_alignment and step > 0 and step % steps_per_epoch == 0:
            current, _ = _full_pass_stats(params, ds)
            store = momentum_update(store, current, cfg.alpha_m)
            store_refresh_step = step
        if use_alignment:
            epoch_start = (step // steps_per_epoch) * steps_per_epoch
            assert store_refresh_step <= epoch_start, \
                "statistics must lag the current epoch"

        batch_idx = np.concatenate([
            idx_by_domain[d][
                batch_rng.integers(0, len(idx_by_domain[d]),
                                   size=cfg.batch_per_domain)
            ]
            for d in train_domains
        ])
        xb = ds.train.x[batch_idx]
        db = ds.train.domain[batch_idx]
        cb = ds.train.label[batch_idx]

        z, logits, cache = model.forward(params, xb)
        ce, grad_logits = losses.ce_loss_batch(logits, cb)
        boda_value = 0.0
        grad_z = np.zeros_like(z)
        if use_alignment:
            result, g_align = losses.grad_by_variant(
                cfg.variant, z, db, cb, store, nu=cfg.nu, reduction="mean"
            )
            boda_value = result.value
            grad_z = cfg.omega * g_align
        joint = losses.joint_loss(ce, boda_value, cfg.omega)
        log.step_joint.append(joint)

        gw, gb, gcw, gcb = model.backward(params, cache, grad_z, grad_logits)
        opt.step(arrays, gw + gb + [gcw, gcb])

        done = step + 1
        if done % cfg.eval_every == 0 or done == cfg.steps:
            alpha, beta, gamma, bound_gap = _diagnostics(params, ds, cfg.nu)
            log.rows.append(LogRow(
                step=done, ce=ce, boda=boda_value, joint=joint,
                val_accuracy=_val_accuracy(params, ds.val),
                alpha=alpha, beta=beta, gamma=gamma,
                bound_gap=bound_gap, stage=1,
            ))
    return params, log


def retrain_classifier(params: model.ModelParams, ds: Dataset,
                       cfg: TrainConfig):
    """Stage two: freeze the encoder, retrain the classifier with sampling
    uniform over the nonzero domain-class pairs. Returns (params, log rows).
    """
    out = params.copy()
    pairs = ds.nonzero_pairs()
    if not pairs:
        raise ValidationError("no nonzero pairs to sample from")
    idx_by_pair = [
        np.where((ds.train.domain == d) & (ds.train.label == c))[0]
        for d, c in pairs
    ]
    pair_sizes = np.array([len(ix) for ix in idx_by_pair])
    rng = make_rng(cfg.seed, stream=13)
    batch = cfg.batch_per_domain * max(len(np.unique(ds.train.domain)), 1)
    cls_arrays = [out.cls_w, out.cls_b]
    opt = _Optimizer(cls_arrays, cfg.optimizer, cfg.lr)

    alpha, beta, gamma, bound_gap = _diagnostics(out, ds, cfg.nu)
    rows = []
    for step in range(cfg.decouple_steps):
        pick_pair = rng.integers(0, len(pairs), size=batch)
        offsets = np.floor(
            rng.random(batch) * pair_sizes[pick_pair]
        ).astype(np.int64)
        batch_idx = np.array([
            idx_by_pair[p][o] for p, o in zip(pick_pair, offsets)
        ])
        xb = ds.train.x[batch_idx]
        cb = ds.train.label[batch_idx]
        z, logits, cache = model.forward(out, xb)
        ce, grad_logits = losses.ce_loss_batch(logits, cb)
        g_cls_w = grad_logits.T @ z
        g_cls_b = grad_logits.sum(axis=0)
        opt.step(cls_arrays, [g_cls_w, g_cls_b])

        done = step + 1
        if done % cfg.eval_every == 0 or done == cfg.decouple_steps:
            rows.append(LogRow(
                step=done, ce=ce, boda=0.0, joint=ce,
                val_accuracy=_val_accuracy(out, ds.val),
                alpha=alpha, beta=beta, gamma=gamma,
                bound_gap=bound_gap, stage=2,
            ))
    return out, rows


@dataclass
class TrialRecord:
    trial: int
    lr: float
    hidden: int
    seed: int
    accuracy: float
    alpha: float
    beta: float
    gamma: float

    @property
    def score(self) -> float:
        """Separation-minus-alignment summary, (beta + gamma) - alpha."""
        return (self.beta + self.gamma) - self.alpha


def _run_trial(ds: Dataset, base_cfg: TrainConfig, trial: int, lr: float,
               width: int, trial_seed: int) -> TrialRecord:
    cfg = replace(base_cfg, lr=lr, hidden=(width, width),
                  seed=trial_seed, eval_every=base_cfg.steps)
    params, _ = train(ds, cfg)
    report = evaluation.accuracy_report(params, ds)
    alpha, beta, gamma, _ = _diagnostics(params, ds, cfg.nu)
    return TrialRecord(
        trial=trial, lr=lr, hidden=width, seed=trial_seed,
        accuracy=report.average, alpha=alpha, beta=beta, gamma=gamma,
    )


def sweep(ds: Dataset, base_cfg: TrainConfig, n_trials: int,
          param_ranges: dict | None = None, seed: int = 0,
          workers: int = 1):
    """Train ``n_trials`` configs with log-uniform lr / hidden width and
    record balanced-test accuracy alongside the transferability statistics.

    All trial hyperparameters are drawn up front, so the result is the same
    whether trials run sequentially or in parallel.
    """
    if n_trials < 1:
        raise ValidationError("n_trials must be >= 1")
    ranges = {"lr": (1e-5, 10 ** -3.5), "hidden": (16, 128)}
    ranges.update(param_ranges or {})
    rng = make_rng(seed, stream=23)
    plans = []
    for t in range(n_trials):
        lr = 10.0 ** rng.uniform(
            math.log10(ranges["lr"][0]), math.log10(ranges["lr"][1])
        )
        width = int(round(10.0 ** rng.uniform(
            math.log10(ranges["hidden"][0]), math.log10(ranges["hidden"][1])
        )))
        trial_seed = (seed * 1000003 + t) % (2 ** 63)
        plans.append((t, lr, width, trial_seed))

    if workers <= 1 or n_trials == 1:
        return [_run_trial(ds, base_cfg, *plan) for plan in plans]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=min(workers, n_trials)) as pool:
        futures = [
            pool.submit(_run_trial, ds, base_cfg, *plan) for plan in plans
        ]
        records = [f.result() for f in futures]
    return sorted(records, key=lambda r: r.trial)


# ---------------------------------------------------------------------------
# File formats: config JSON, log CSV, trial CSV
# ---------------------------------------------------------------------------

def config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "steps": cfg.steps,
        "batch_per_domain": cfg.batch_per_domain,
        "lr": cfg.lr,
        "optimizer": cfg.optimizer,
        "omega": cfg.omega,
        "nu": cfg.nu,
        "alpha_m": cfg.alpha_m,
        "variant": cfg.variant,
        "decouple": cfg.decouple,
        "decouple_steps": cfg.decouple_steps,
        "seed": cfg.seed,
        "hidden": list(cfg.hidden),
        "rep_dim": cfg.rep_dim,
        "eval_every": cfg.eval_every,
    }


def config_from_dict(data: dict) -> TrainConfig:
    known = set(config_to_dict(TrainConfig()))
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config fields: {sorted(unknown)}")
    if "hidden" in data:
        data = dict(data)
        data["hidden"] = tuple(int(v) for v in data["hidden"])
    return TrainConfig(**data)


def save_log_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "step", "stage", "ce", "boda", "joint", "val_accuracy",
            "alpha", "beta", "gamma", "bound_gap",
        ])
        for r in rows:
            writer.writerow([
                r.step, r.stage, repr(r.ce), repr(r.boda), repr(r.joint),
                repr(r.val_accuracy), repr(r.alpha), repr(r.beta),
                repr(r.gamma), repr(r.bound_gap),
            ])


def save_trials_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "trial", "lr", "hidden", "seed", "accuracy",
            "alpha", "beta", "gamma", "score",
        ])
        for r in records:
            writer.writerow([
                r.trial, repr(r.lr), r.hidden, r.seed, repr(r.accuracy),
                repr(r.alpha), repr(r.beta), repr(r.gamma), repr(r.score),
            ])
