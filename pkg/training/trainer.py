import logging
import time
from dataclasses import dataclass, field

import numpy as np

from autodiff import Tape, backward
from hypergraph.dataset import TASK_HYPERGRAPH, split_dataset
from metrics.evaluation import classification_report
from metrics.losses import compute_loss
from model.network import init_params, mean_alpha_over_samples, model_forward, predict as argmax_predict
from .optimizer import AdamState, adam_step

logger = logging.getLogger("Trainer")

SELECTION_METRICS = ("accuracy", "macro_f1")


class TrainConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 0.01
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 50
    patience: int = 30
    seed: int = 0
    selection_metric: str = "accuracy"
    log_every: int = 50
    snapshot_alpha: bool = True

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, config):
        """
        Build a training config from the 'training' settings section.

        Args:
            config (dict): Section dictionary
        """
        return cls(
            epochs=int(config.get('epochs', 500)),
            lr=float(config.get('lr', 0.01)),
            weight_decay=float(config.get('weight_decay', 0.0)),
            adam_beta1=float(config.get('adam_beta1', 0.9)),
            adam_beta2=float(config.get('adam_beta2', 0.999)),
            adam_eps=float(config.get('adam_eps', 1e-8)),
            batch_size=int(config.get('batch_size', 50)),
            patience=int(config.get('patience', 30)),
            seed=int(config.get('seed', 0)),
            selection_metric=config.get('selection_metric', 'accuracy'),
            log_every=int(config.get('log_every', 50)),
            snapshot_alpha=bool(config.get('snapshot_alpha', True)),
        )

    def validate(self):
        if self.epochs < 1:
            raise TrainConfigError("epochs must be at least 1")
        if self.lr <= 0 or self.adam_eps <= 0:
            raise TrainConfigError("learning rate and Adam epsilon must be positive")
        if self.weight_decay < 0:
            raise TrainConfigError("weight decay must be non-negative")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise TrainConfigError("Adam betas must lie in [0, 1)")
        if self.patience < 1 or self.batch_size < 1:
            raise TrainConfigError("patience and batch size must be at least 1")
        if self.selection_metric not in SELECTION_METRICS:
            raise TrainConfigError(f"selection metric must be one of {SELECTION_METRICS}")


@dataclass
class Evaluation:
    """Metrics and relevance scores of one evaluation pass."""
    metrics: dict
    loss: float
    predictions: np.ndarray
    alphas: list


@dataclass
class RunResult:
    model_cfg: object
    train_cfg: TrainConfig
    params: object = None
    best_epoch: int = 0
    epochs_run: int = 0
    stopped_early: bool = False
    diverged: bool = False
    train_metrics: dict = field(default_factory=dict)
    val_metrics: dict = field(default_factory=dict)
    test_metrics: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)
    alpha_snapshots: list = field(default_factory=list)
    final_alphas: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def best_val_score(self):
        return self.val_metrics.get(self.train_cfg.selection_metric, float("nan"))


class DivergenceDetected(RuntimeError):
    """The training loss became NaN or infinite; `result` holds the partial run."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


def evaluate(dataset, params, cfg, mask="test"):
    """
    Evaluate a model on one split.

    Args:
        dataset (Dataset): Dataset with split masks
        params (ModelParams): Parameters
        cfg (ModelConfig): Architecture
        mask: Split name ('train', 'val', 'test', 'all') or boolean mask

    Returns:
        Evaluation: Metrics on the selection plus predictions and per-layer α
            (averaged over samples for the hypergraph task) for the whole population
    """
    selection = dataset.mask(mask) if isinstance(mask, str) else np.asarray(mask, dtype=bool)
    output = model_forward(dataset.features, dataset.hypergraph, params, cfg, training=False)
    predictions = argmax_predict(output.logits)
    loss = float("nan")
    if selection.any():
        _, report = compute_loss(output, dataset.labels, selection, params, cfg)
        loss = report.total
        metrics = classification_report(predictions, dataset.labels, selection)
    else:
        metrics = {"accuracy": float("nan"), "macro_f1": float("nan"), "micro_f1": float("nan")}
    if dataset.task == TASK_HYPERGRAPH:
        alphas = [mean_alpha_over_samples(a, dataset.num_samples) for a in output.alphas]
    else:
        alphas = [a.data.copy() for a in output.alphas]
    return Evaluation(metrics, loss, predictions, alphas)


def predict(dataset, params, cfg):
    """Predicted class for every node, sample or hyperedge, depending on the task."""
    output = model_forward(dataset.features, dataset.hypergraph, params, cfg, training=False)
    return argmax_predict(output.logits)


class Trainer:
    """
    Full-batch (node and hyperedge tasks) or sample-mini-batch (hypergraph task) Adam
    training with early stopping on a validation metric.
    """

    def __init__(self, model_cfg, train_cfg, split_ratios=(0.5, 0.25, 0.25)):
        """
        Initialize the trainer.

        Args:
            model_cfg (ModelConfig): Architecture
            train_cfg (TrainConfig): Optimisation settings
            split_ratios (tuple): Used only when the dataset carries no split
        """
        self.model_cfg = model_cfg
        self.train_cfg = train_cfg
        self.split_ratios = tuple(split_ratios)
        logger.info(f"Trainer initialized: {model_cfg.variant} variant, lr={train_cfg.lr}, "
                    f"epochs≤{train_cfg.epochs}, patience {train_cfg.patience}")

    def _prepare(self, dataset):
        if not dataset.is_split:
            logger.info(f"Dataset has no split; drawing {self.split_ratios} with seed {self.train_cfg.seed}")
            dataset = split_dataset(dataset, self.split_ratios, self.train_cfg.seed)
        if not dataset.val_mask.any():
            raise ValueError("early stopping needs a non-empty validation split")
        return dataset

    def _batches(self, dataset, order_rng):
        train_index = np.flatnonzero(dataset.train_mask)
        if dataset.task != TASK_HYPERGRAPH:
            return [None]
        shuffled = order_rng.permutation(train_index)
        size = self.train_cfg.batch_size
        return [shuffled[i:i + size] for i in range(0, shuffled.size, size)]

    def _step(self, dataset, params, batch, state, dropout_rng):
        """Forward, backward and Adam update on one batch; returns its LossReport."""
        cfg = self.model_cfg
        with Tape() as tape:
            if batch is None:
                output = model_forward(dataset.features, dataset.hypergraph, params, cfg,
                                       training=True, rng=dropout_rng)
                loss, report = compute_loss(output, dataset.labels, dataset.train_mask, params, cfg)
            else:
                output = model_forward(dataset.features[batch], dataset.hypergraph, params, cfg,
                                       training=True, rng=dropout_rng)
                loss, report = compute_loss(output, dataset.labels[batch], None, params, cfg)
        if not report.finite:
            return report
        grads = backward(tape, loss)
        named = params.named_parameters()
        adam_step(named, {name: grads.get(t) for name, t in named.items()}, state, self.train_cfg)
        return report

    def fit(self, dataset):
        """
        Train a fresh model.

        Args:
            dataset (Dataset): Training data (split on the fly when unsplit)

        Returns:
            RunResult: Best-epoch parameters and metrics

        Raises:
            DivergenceDetected: The loss became NaN/Inf
        """
        tcfg = self.train_cfg
        dataset = self._prepare(dataset)
        init_ss, dropout_ss, order_ss = np.random.SeedSequence(tcfg.seed).spawn(3)
        init_rng = np.random.default_rng(init_ss)
        dropout_rng = np.random.default_rng(dropout_ss)
        order_rng = np.random.default_rng(order_ss)

        params = init_params(self.model_cfg, dataset.feature_dim, dataset.num_classes,
                             dataset.num_hyperedges, dataset.task, init_rng)
        state = AdamState()
        result = RunResult(self.model_cfg, tcfg, params)

        best_score, best_snapshot, waited = -np.inf, params.snapshot(), 0
        started = time.perf_counter()
        epoch_times = []

        for epoch in range(1, tcfg.epochs + 1):
            tick = time.perf_counter()
            reports = []
            for batch in self._batches(dataset, order_rng):
                report = self._step(dataset, params, batch, state, dropout_rng)
                weight = dataset.train_mask.sum() if batch is None else batch.size
                reports.append((report, weight))
                if not report.finite:
                    result.diverged = True
                    result.epochs_run = epoch
                    logger.error(f"Loss diverged at epoch {epoch}: {report.to_dict()}")
                    raise DivergenceDetected(f"loss became non-finite at epoch {epoch}", result)
            epoch_times.append(time.perf_counter() - tick)

            total_weight = float(sum(w for _, w in reports))
            train_loss = sum(r.total * w for r, w in reports) / total_weight
            task_part = sum(r.task_loss * w for r, w in reports) / total_weight
            dis_part = sum(r.dis_loss * w for r, w in reports) / total_weight

            val = evaluate(dataset, params, self.model_cfg, "val")
            score = val.metrics[tcfg.selection_metric]
            result.loss_curve.append({
                "epoch": epoch, "train_loss": train_loss, "task_loss": task_part, "dis_loss": dis_part,
                "val_loss": val.loss, "val_accuracy": val.metrics["accuracy"], "val_macro_f1": val.metrics["macro_f1"],
            })
            if tcfg.snapshot_alpha and val.alphas and (epoch == 1 or epoch % tcfg.log_every == 0):
                result.alpha_snapshots.append((epoch, val.alphas[-1]))

            if score > best_score:
                best_score, best_snapshot, waited = score, params.snapshot(), 0
                result.best_epoch = epoch
            else:
                waited += 1

            if epoch == 1 or epoch % tcfg.log_every == 0:
                logger.info(f"Epoch {epoch}: train loss {train_loss:.4f} (task {task_part:.4f}, dis {dis_part:.4f}), "
                            f"val {tcfg.selection_metric} {score:.4f}")
            result.epochs_run = epoch
            if waited >= tcfg.patience:
                result.stopped_early = True
                logger.info(f"Early stop at epoch {epoch}; best epoch {result.best_epoch} "
                            f"(val {tcfg.selection_metric} {best_score:.4f})")
                break

        params.restore(best_snapshot)
        for split in ("train", "val", "test"):
            setattr(result, f"{split}_metrics", evaluate(dataset, params, self.model_cfg, split).metrics
                    if dataset.mask(split).any() else {})
        result.final_alphas = evaluate(dataset, params, self.model_cfg, "all").alphas
        result.timings = {
            "train_seconds": time.perf_counter() - started,
            "mean_epoch_seconds": float(np.mean(epoch_times)) if epoch_times else 0.0,
        }
        logger.info(f"Training finished after {result.epochs_run} epochs: test {result.test_metrics}")
        return result


def train(dataset, model_cfg, train_cfg, split_ratios=(0.5, 0.25, 0.25)):
    """Train one model; see Trainer.fit."""
    return Trainer(model_cfg, train_cfg, split_ratios).fit(dataset)
