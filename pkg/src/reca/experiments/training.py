"""Seeded training runs, accuracy metrics, multi-seed comparison and resource accounting."""
from __future__ import annotations

import logging
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from reca import activations as act
from reca import data as D
from reca.experiments.config import DATA_DIR_ENV, ConfigError, TrainConfig
from reca.nn import model as M
from reca.nn.functional import softmax_cross_entropy
from reca.optim import Optimizer, ScheduleSpec, apply_activation_l2, cosine_lr

log = logging.getLogger(__name__)

EPOCH_COLUMNS = ("epoch", "split", "loss", "top1", "top5", "lr",
                 "alpha_min", "alpha_mean", "alpha_max", "beta_mean", "delta_mean")


class TrainingDiverged(RuntimeError):
    pass


def topk_accuracy(logits, labels, k) -> float:
    """Fraction of rows whose label is among the ``k`` largest logits.

    Ties are broken in favour of the lower class index, so a tied label only
    counts if it is ranked within ``k`` by that rule.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    n, classes = logits.shape
    if not 1 <= k <= classes:
        raise ValueError(f"k must be in [1, {classes}], got {k}")
    if n == 0:
        return 0.0
    true = logits[np.arange(n), labels][:, None]
    lower = np.arange(classes)[None, :] < labels[:, None]
    rank = np.sum((logits > true) | ((logits == true) & lower), axis=1)
    return float(np.mean(rank < k))


def _topk_hits(logits, labels, k):
    return topk_accuracy(logits, labels, k) * len(labels)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_top1: float
    train_top5: float
    test_loss: float
    test_top1: float
    test_top5: float
    act_stats: dict = field(default_factory=dict)


@dataclass
class RunReport:
    seed: int
    activation: str
    epochs: list
    initial_loss: float
    wall_seconds: float
    params_total: int
    params_activation: int
    activation_shift: dict = field(default_factory=dict)

    @property
    def final(self) -> EpochRecord:
        return self.epochs[-1]

    def rows(self):
        """Per-epoch CSV rows (train and test) in ``EPOCH_COLUMNS`` order."""
        for r in self.epochs:
            s = r.act_stats
            stats = [s.get(k, "") for k in ("alpha_min", "alpha_mean", "alpha_max", "beta_mean", "delta_mean")]
            yield [r.epoch, "train", r.train_loss, r.train_top1, r.train_top5, r.lr] + stats
            yield [r.epoch, "test", r.test_loss, r.test_top1, r.test_top5, r.lr] + stats


def activation_stats(model: M.Model) -> dict:
    """min/mean/max of every learnable activation parameter across all sites."""
    by_name = {}
    for layer in model.activation_layers():
        for name, p in layer.params.items():
            by_name.setdefault(name, []).append(p.value.astype(np.float64).ravel())
    out = {}
    for name, parts in by_name.items():
        v = np.concatenate(parts)
        out[f"{name}_min"] = float(v.min())
        out[f"{name}_mean"] = float(v.mean())
        out[f"{name}_max"] = float(v.max())
    return out


def _activation_snapshot(model):
    return [{k: p.value.copy() for k, p in layer.params.items()} for layer in model.activation_layers()]


def _max_shift(before, after) -> dict:
    out = {}
    for b, a in zip(before, after):
        for name in b:
            d = float(np.max(np.abs(a[name].astype(np.float64) - b[name])))
            out[name] = max(out.get(name, 0.0), d)
    return out


def load_dataset(config: TrainConfig) -> D.Dataset:
    if config.dataset == "spirals":
        return D.synth_spirals(2000, config.spiral_noise, seed=config.split_seed)
    if config.dataset == "synthetic-cifar":
        return D.synth_cifar(config.synthetic_n, 10, seed=config.split_seed)
    directory = config.resolved_data_dir()
    if not directory:
        raise D.DataError(f"{config.dataset}: no data_dir configured and ${DATA_DIR_ENV} is unset")
    return D.load_cifar10(directory) if config.dataset == "cifar10" else D.load_cifar100(directory)


def build_spec(config: TrainConfig, dataset: D.Dataset) -> M.ModelSpec:
    return M.preset(config.model, config.activation_kind(), config.granularity,
                    num_classes=dataset.class_count, input_shape=dataset.images.shape[1:])


def prepare_split(config: TrainConfig, dataset: D.Dataset, run_seed: int):
    """Seeded 80/20 split (seed ``split_seed + run_seed``), limits, normalization."""
    train, test = D.split(dataset, D.SplitSpec(config.train_fraction, config.split_seed + run_seed))
    if config.train_limit:
        train = train.subset(np.arange(min(config.train_limit, len(train))))
    if config.test_limit:
        test = test.subset(np.arange(min(config.test_limit, len(test))))
    dtype = np.dtype(config.precision)
    if dataset.images.dtype == np.uint8:
        train, stats = D.normalize(train, dtype=dtype)
        test, _ = D.normalize(test, stats, dtype=dtype)
    else:
        train = D.Dataset(train.images.astype(dtype), train.labels, train.class_count, train.name)
        test = D.Dataset(test.images.astype(dtype), test.labels, test.class_count, test.name)
    return train, test


def evaluate(model: M.Model, dataset: D.Dataset, batch_size=500):
    """(mean loss, top-1, top-5) in eval mode; top-5 uses min(5, classes)."""
    k5 = min(5, dataset.class_count)
    loss = hits1 = hits5 = 0.0
    for x, y in D.batches(dataset, batch_size, shuffle=False):
        logits = model.forward(x, training=False)
        l, _ = softmax_cross_entropy(logits, y)
        loss += l * len(y)
        hits1 += _topk_hits(logits, y, 1)
        hits5 += _topk_hits(logits, y, k5)
    n = len(dataset)
    return loss / n, hits1 / n, hits5 / n


def train_run(config: TrainConfig, dataset: D.Dataset, run_seed: int, progress=None) -> RunReport:
    """One seeded run: split, initialize, train with the cosine schedule, evaluate per epoch."""
    start = time.perf_counter()
    train, test = prepare_split(config, dataset, run_seed)
    if len(train) < 2:
        raise ConfigError("train split has fewer than 2 samples")
    spec = build_spec(config, dataset)
    model = M.Model(spec, seed=run_seed, dtype=np.dtype(config.precision))
    total, act_count = M.count_parameters(model)
    opt = Optimizer(model.params(), config.optimizer, config.momentum, config.act_lr_scale)
    schedule = ScheduleSpec(config.lr0, config.epochs, config.eta_min)
    k5 = min(5, dataset.class_count)
    before = _activation_snapshot(model)
    initial_loss = None
    records = []
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, schedule)
        loss_sum = hits1 = hits5 = 0.0
        seen = 0
        for x, y in D.batches(train, config.batch, seed=run_seed, epoch=epoch):
            if len(y) < 2:
                continue  # batch statistics need two samples
            model.zero_grad()
            logits = model.forward(x, training=True)
            loss, d_logits = softmax_cross_entropy(logits, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"seed {run_seed}, epoch {epoch + 1}: non-finite loss {loss}")
            if initial_loss is None:
                initial_loss = loss
            model.backward(d_logits)
            apply_activation_l2(model.params(), config.l2)
            opt.step(lr)
            model.project()
            loss_sum += loss * len(y)
            hits1 += _topk_hits(logits, y, 1)
            hits5 += _topk_hits(logits, y, k5)
            seen += len(y)
        test_loss, test1, test5 = evaluate(model, test)
        rec = EpochRecord(epoch + 1, lr, loss_sum / seen, hits1 / seen, hits5 / seen,
                          test_loss, test1, test5, activation_stats(model))
        records.append(rec)
        log.info("seed %d %s epoch %d/%d lr %.5f train loss %.4f test top1 %.4f",
                 run_seed, config.activation, epoch + 1, config.epochs, lr, rec.train_loss, test1)
        if progress is not None:
            progress(run_seed, rec)
    return RunReport(run_seed, config.activation, records, initial_loss,
                     time.perf_counter() - start, total, act_count,
                     _max_shift(before, _activation_snapshot(model)))


def train_experiment(config: TrainConfig, dataset: D.Dataset | None = None, progress=None) -> list[RunReport]:
    """One ``RunReport`` per run seed, in seed order."""
    if dataset is None:
        dataset = load_dataset(config)
    build_spec(config, dataset)  # shape errors before any compute
    return [train_run(config, dataset, s, progress) for s in config.seeds]


# -- multi-seed comparison --------------------------------------------------------------

@dataclass
class SummaryRow:
    function: str
    metric: str
    mean: float
    median: float
    min: float
    max: float


@dataclass
class Comparison:
    rows: list
    curves: dict  # function -> {"test_top1": [...], "test_loss": [...]} per-epoch medians

    def get(self, function, metric="top1") -> SummaryRow:
        for r in self.rows:
            if r.function == function and r.metric == metric:
                return r
        raise KeyError((function, metric))


def _final_metrics(run):
    if isinstance(run, RunReport):
        return {"top1": run.final.test_top1, "top5": run.final.test_top5}
    if isinstance(run, dict):
        return dict(run)
    return {"top1": float(run)}


def compare_report(reports: dict) -> Comparison:
    """Mean/median/min/max of final accuracies per function, plus median curves.

    ``reports`` maps a function name to its runs; a run is a ``RunReport``, a
    ``{"top1": .., "top5": ..}`` dict, or a bare top-1 number.
    """
    counts = {name: len(runs) for name, runs in reports.items()}
    if len(set(counts.values())) > 1:
        raise ValueError(f"every function needs the same number of seeds, got {counts}")
    rows, curves = [], {}
    for name, runs in reports.items():
        finals = [_final_metrics(r) for r in runs]
        for metric in ("top1", "top5"):
            vals = [f[metric] for f in finals if metric in f]
            if not vals:
                continue
            rows.append(SummaryRow(name, metric, statistics.fmean(vals), statistics.median(vals),
                                   min(vals), max(vals)))
        reps = [r for r in runs if isinstance(r, RunReport)]
        if reps:
            n_epochs = min(len(r.epochs) for r in reps)
            curves[name] = {
                key: [statistics.median(getattr(r.epochs[e], key) for r in reps) for e in range(n_epochs)]
                for key in ("test_top1", "test_loss", "train_loss")
            }
    return Comparison(rows, curves)


# Published per-run accuracies (percent), keyed by model/dataset then function.
PUBLISHED_RUNS = {
    "resnet20-cifar10": {
        "relu": [83.96, 84.11, 83.27],
        "prelu": [83.02, 83.39, 82.52],
        "swish": [82.24, 81.85, 82.22],
        "reca": [85.07, 86.21, 86.41],
    },
    "wrn16-8-cifar10": {
        "relu": [88.69, 86.83, 86.71],
        "prelu": [87.30, 86.04, 86.00],
        "swish": [88.49, 88.48, 81.56],
        "reca": [88.70, 88.52, 88.73],
    },
    "resnet32-cifar100": {
        "relu": [47.90, 51.29, 51.34],
        "prelu": [46.68, 52.00, 53.49],
        "swish": [45.84, 45.57, 46.47],
        "reca": [53.65, 55.54, 56.76],
    },
    "resnet56-cifar100": {
        "relu": [47.17, 48.05, 51.99],
        "prelu": [46.81, 54.68, 51.84],
        "swish": [49.02, 51.20, 55.09],
        "reca": [54.70, 56.90, 57.31],
    },
    "densenet-bc-121-tinyimagenet": {
        "relu": [{"top1": 39.95, "top5": 63.9}, {"top1": 40.43, "top5": 64.42}, {"top1": 40.74, "top5": 64.35}],
        "reca": [{"top1": 41.29, "top5": 65.06}, {"top1": 41.56, "top5": 65.21}, {"top1": 41.80, "top5": 65.38}],
    },
    "mobilenetv3-small-tinyimagenet": {
        "relu": [{"top1": 25.67, "top5": 48.42}, {"top1": 24.48, "top5": 47.69}, {"top1": 23.74, "top5": 46.77}],
        "reca": [{"top1": 25.72, "top5": 49.50}, {"top1": 25.51, "top5": 48.64}, {"top1": 24.86, "top5": 47.77}],
    },
}


# -- resource accounting --------------------------------------------------------------

@dataclass
class ResourceReport:
    params_relu: int
    params_variant: int
    params_activation: int
    activation_channels: int
    seconds_relu: float
    seconds_variant: float

    @property
    def param_delta(self) -> int:
        return self.params_variant - self.params_relu

    @property
    def time_ratio(self) -> float:
        return self.seconds_variant / self.seconds_relu if self.seconds_relu > 0 else float("nan")


def _time_steps(spec, steps, batch, classes, dtype, seed):
    model = M.Model(spec, seed=seed, dtype=dtype)
    opt = Optimizer(model.params())
    rng = D.philox(seed, 30)
    x = rng.standard_normal((batch,) + tuple(spec.input_shape)).astype(dtype)
    y = rng.integers(0, classes, size=batch)
    start = time.perf_counter()
    for _ in range(steps):
        model.zero_grad()
        loss, d = softmax_cross_entropy(model.forward(x, training=True), y)
        model.backward(d)
        opt.step(0.01)
        model.project()
    return time.perf_counter() - start


def resource_report(config: TrainConfig, steps=10, input_shape=None, num_classes=None) -> ResourceReport:
    """Parameter counts and timed training steps of the ReLU twin vs the configured activation."""
    if input_shape is None:
        input_shape = (2,) if config.dataset == "spirals" else (3, 32, 32)
    if num_classes is None:
        num_classes = {"cifar100": 100, "spirals": 2}.get(config.dataset, 10)
    variant = M.preset(config.model, config.activation_kind(), config.granularity, num_classes, input_shape)
    relu = M.with_activation(variant, act.ReLU())
    dtype = np.dtype(config.precision)
    seed = config.seeds[0]
    total_relu, _ = M.count_parameters(relu)
    total_var, act_params = M.count_parameters(variant)
    t_relu = _time_steps(relu, steps, config.batch, num_classes, dtype, seed)
    t_var = _time_steps(variant, steps, config.batch, num_classes, dtype, seed)
    return ResourceReport(total_relu, total_var, act_params, M.activation_channels(variant), t_relu, t_var)
