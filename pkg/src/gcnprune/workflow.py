"""Train, sparsify, retrain.

``iterative_sparsify`` trains a dense baseline (round 0) and then alternates
one sparsification round with warm-started retraining until test accuracy
(at the best-validation epoch) falls more than ``baseline_tolerance`` points
below the baseline, or ``max_rounds`` is reached. ``grid_search`` instead
sparsifies a trained baseline straight to each target triple of a grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import pruning
from .cost import model_cost_report
from .exceptions import ConfigError, TrainingError
from .graphs import GraphDataset, NormalizedAdjacency, build_normalized_adjacency
from .model import (
    GcnModel,
    accuracy,
    adam_step,
    backward,
    forward,
    init_weights,
    nll_loss,
)
from .pruning import PruneOutcome, PruneSpec, prune_adjacency, prune_mask
from .tensor import csr_transpose, mask_density

log = logging.getLogger(__name__)

GRID_KEYS = ("a", "w", "h")


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    split: str = "planetoid:20,500,1000,0"
    normalize_features: bool = True
    hidden_dim: int = 64
    max_epoch: int = 200
    lr: float = 0.01
    weight_decay: float = 0.0
    seed: int = 0
    # total targets, in percent of the original pool (topk: percent of the hidden width)
    adj_technique: str = "global_magnitude"
    adj_target: float = 0.0
    weight_technique: str = "global_magnitude"
    weight_target: float = 0.0
    sensitivity_lambda: float = 1.2
    embed_technique: str = "topk"
    embed_target: float = 0.0
    schedule: str = "additive"
    max_rounds: int = 5
    baseline_tolerance: float = 1.0
    warm_start: bool = True
    symmetric_pairing: bool = True
    bound_tolerance: float = 0.05
    grid_a: list = field(default_factory=lambda: [0.0])
    grid_w: list = field(default_factory=lambda: [0.0])
    grid_h: list = field(default_factory=lambda: [0.0])
    grid_key: str = "w,a,h"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> "ExperimentConfig":
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim: must be positive")
        if self.max_epoch < 0:
            raise ConfigError("max_epoch: must be >= 0")
        if self.max_rounds < 0:
            raise ConfigError("max_rounds: must be >= 0")
        if not self.lr > 0:
            raise ConfigError("lr: must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay: must be >= 0")
        if self.baseline_tolerance < 0:
            raise ConfigError("baseline_tolerance: must be >= 0")
        if self.schedule not in ("additive", "geometric"):
            raise ConfigError("schedule: expected 'additive' or 'geometric'")
        for key in ("adj_technique", "weight_technique", "embed_technique"):
            if getattr(self, key) not in pruning.TECHNIQUES:
                raise ConfigError(f"{key}: unknown technique {getattr(self, key)!r}")
        if self.adj_technique == pruning.SENSITIVITY:
            raise ConfigError("adj_technique: sensitivity pruning applies to weights only")
        if self.embed_technique == pruning.SENSITIVITY:
            raise ConfigError("embed_technique: sensitivity pruning applies to weights only")
        for key in ("adj_target", "weight_target", "embed_target"):
            if not 0.0 <= getattr(self, key) < 100.0:
                raise ConfigError(f"{key}: must be in [0, 100)")
        for key in ("grid_a", "grid_w", "grid_h"):
            vals = getattr(self, key)
            if not isinstance(vals, list) or not vals or any(not 0 <= float(v) < 100 for v in vals):
                raise ConfigError(f"{key}: must be a non-empty list of percentages in [0, 100)")
        if sorted(self.grid_key.replace(" ", "").split(",")) != sorted(GRID_KEYS):
            raise ConfigError("grid_key: must be a permutation of 'a,w,h'")
        if not self.sensitivity_lambda > 0:
            raise ConfigError("sensitivity_lambda: must be > 0")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class RoundRecord:
    round_index: int
    sparsity_state: dict
    epochs_trained: int
    best_epoch: int
    best_val_accuracy: float
    test_accuracy_at_best_val: float
    loss_curve: list
    curves: list = field(default_factory=list)
    prune_outcomes: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingContext:
    """Everything fixed for one experiment: graph, features, labels, split."""

    dataset: GraphDataset
    adj: NormalizedAdjacency
    x: np.ndarray
    original_nnz: int
    original_off_diagonal: int

    @classmethod
    def from_dataset(cls, dataset: GraphDataset, normalize_features: bool = True) -> "TrainingContext":
        if dataset.split is None:
            raise ConfigError("dataset has no train/val/test split")
        x = dataset.features
        if normalize_features:
            sums = x.sum(axis=1, keepdims=True)
            x = np.divide(x, sums, out=np.zeros_like(x), where=sums != 0)
        adj = build_normalized_adjacency(dataset)
        return cls(dataset, adj, x, adj.nnz, adj.off_diagonal_nnz())


def sparsity_state(model: GcnModel, adj: NormalizedAdjacency, original_off_diagonal: int) -> dict:
    w_total = model.w1.size + model.w2.size
    w_nonzero = int(model.mask_w1.sum() + model.mask_w2.sum())
    a = 1.0 - adj.off_diagonal_nnz() / original_off_diagonal if original_off_diagonal else 0.0
    return {
        "a": a,
        "w": 1.0 - w_nonzero / w_total,
        "w1": 1.0 - mask_density(model.mask_w1),
        "w2": 1.0 - mask_density(model.mask_w2),
        "h": 1.0 - mask_density(model.mask_h1),
    }


def train_to_convergence(model: GcnModel, adj: NormalizedAdjacency, ctx: TrainingContext,
                         max_epoch: int, lr: float = 0.01, weight_decay: float = 0.0,
                         round_index: int = 0) -> tuple[RoundRecord, GcnModel]:
    """Full-batch Adam on the training nodes; keep the best-validation snapshot.

    ``model`` is updated in place; the returned model is the snapshot taken
    at the epoch of best validation accuracy (epoch 0 = before any step).
    """
    split = ctx.dataset.split
    labels = ctx.dataset.labels
    x = ctx.x
    adj_t = csr_transpose(adj.matrix)

    curves = []
    losses = []

    def score(epoch: int, log_probs: np.ndarray, loss: float) -> float:
        row = {
            "epoch": epoch,
            "loss": loss,
            "train_acc": accuracy(log_probs, labels, split.train),
            "val_acc": accuracy(log_probs, labels, split.val) if len(split.val) else 0.0,
            "test_acc": accuracy(log_probs, labels, split.test) if len(split.test) else 0.0,
        }
        curves.append(row)
        return row["val_acc"]

    cache = forward(model, adj, x)
    loss = nll_loss(cache.log_probs, labels, split.train)
    if not math.isfinite(loss):
        raise TrainingError("non-finite training loss before the first step", 0)
    losses.append(loss)
    best_val = score(0, cache.log_probs, loss)
    best_epoch, best = 0, model.copy()

    for epoch in range(1, max_epoch + 1):
        grads = backward(model, adj, x, cache, labels, split.train, adj_t)
        adam_step(model, grads, lr=lr, weight_decay=weight_decay)
        cache = forward(model, adj, x)
        loss = nll_loss(cache.log_probs, labels, split.train)
        if not math.isfinite(loss):
            raise TrainingError("non-finite training loss", epoch)
        losses.append(loss)
        val = score(epoch, cache.log_probs, loss)
        if val > best_val:
            best_val, best_epoch, best = val, epoch, model.copy()

    record = RoundRecord(
        round_index=round_index,
        sparsity_state=sparsity_state(model, adj, ctx.original_off_diagonal),
        epochs_trained=max_epoch,
        best_epoch=best_epoch,
        best_val_accuracy=best_val,
        test_accuracy_at_best_val=curves[best_epoch]["test_acc"],
        loss_curve=losses,
        curves=curves,
    )
    return record, best


@dataclass
class RoundSpecs:
    adjacency: PruneSpec | None = None
    weight: PruneSpec | None = None  # applied to each layer separately
    embedding: PruneSpec | None = None

    def empty(self) -> bool:
        return self.adjacency is None and self.weight is None and self.embedding is None


def _spec(technique: str, target: str, value: float, seed: int, lam: float) -> PruneSpec | None:
    if technique == pruning.SENSITIVITY:
        return PruneSpec(technique, target, lam=lam, seed=seed)
    if technique == pruning.TOPK:
        k = int(value)
        return PruneSpec(technique, target, k=k, seed=seed) if k > 0 else None
    if value <= 0:
        return None
    return PruneSpec(technique, target, amount=min(100.0, value), seed=seed)


def _pool_relative(target_pct: float, current_frac: float) -> float:
    """Percent of the surviving pool to remove to move from ``current_frac`` to ``target_pct``."""
    remaining = 1.0 - current_frac
    if remaining <= 0:
        return 0.0
    return max(0.0, 100.0 * (target_pct / 100.0 - current_frac) / remaining)


def _cumulative_target(total: float, r: int, rounds: int, schedule: str) -> float:
    if rounds == 0:
        return 0.0
    if schedule == "geometric":
        return 100.0 * (1.0 - (1.0 - total / 100.0) ** (r / rounds))
    return total * r / rounds


def topk_total(embed_target: float, hidden_dim: int) -> int:
    """Entries per row removed by top-k embedding pruning for a percentage target."""
    return math.floor(embed_target / 100.0 * hidden_dim + 0.5)


def round_specs(config: ExperimentConfig, round_index: int, rounds: int, state: dict) -> RoundSpecs:
    """Per-round prune specs that move the cumulative sparsity along the schedule."""
    seed = config.seed * 1_000_003 + round_index
    sched = config.schedule
    a_pct = _pool_relative(_cumulative_target(config.adj_target, round_index, rounds, sched), state["a"])
    w_pct = _pool_relative(_cumulative_target(config.weight_target, round_index, rounds, sched), state["w"])
    if config.embed_technique == pruning.TOPK:
        k_total = topk_total(config.embed_target, config.hidden_dim)
        h_val = round(k_total * round_index / rounds) - round(k_total * (round_index - 1) / rounds) if rounds else 0
    else:
        h_val = _pool_relative(_cumulative_target(config.embed_target, round_index, rounds, sched), state["h"])
    return RoundSpecs(
        adjacency=_spec(config.adj_technique, "adjacency", a_pct, seed, config.sensitivity_lambda),
        weight=_spec(config.weight_technique, "weight", w_pct, seed + 7, config.sensitivity_lambda)
        if config.weight_technique == pruning.SENSITIVITY or config.weight_target > 0 else None,
        embedding=_spec(config.embed_technique, "embedding", h_val, seed + 13, config.sensitivity_lambda),
    )


def sparsify_round(model: GcnModel, adj: NormalizedAdjacency, x: np.ndarray, specs: RoundSpecs,
                   symmetric_pairing: bool = True) -> tuple[GcnModel, NormalizedAdjacency, dict]:
    """Apply adjacency, per-layer weight and embedding pruning (cumulative masks).

    The embedding criterion is |H1| of the trained model on the graph as it
    was before this round's pruning. Returns new objects; inputs are untouched.
    """
    model = model.copy()
    outcomes: dict[str, dict] = {}
    h1 = forward(model, adj, x).h1 if specs.embedding is not None else None

    if specs.adjacency is not None:
        adj, out = prune_adjacency(adj, specs.adjacency, symmetric_pairing=symmetric_pairing and adj.symmetric)
        outcomes["adjacency"] = out.to_dict()
    if specs.weight is not None:
        for layer, (w, name) in enumerate(((model.w1, "mask_w1"), (model.w2, "mask_w2")), start=1):
            new_mask, out = prune_mask(getattr(model, name), w, specs.weight)
            setattr(model, name, new_mask)
            outcomes[f"weight{layer}"] = out.to_dict()
        model.enforce_masks()
    if specs.embedding is not None:
        model.mask_h1, out = prune_mask(model.mask_h1, h1, specs.embedding)
        outcomes["embedding"] = out.to_dict()
    return model, adj, outcomes


@dataclass
class ExperimentResult:
    records: list
    verdict: dict
    baseline_accuracy: float
    final_model: GcnModel | None = None
    final_adj: NormalizedAdjacency | None = None


def _cost(model, adj, ctx, config) -> dict:
    return model_cost_report(model, adj, ctx.x, ctx.original_nnz, config.bound_tolerance).to_dict()


def train_baseline(config: ExperimentConfig, ctx: TrainingContext) -> tuple[RoundRecord, GcnModel]:
    ds = ctx.dataset
    model = init_weights(ds.n_features, config.hidden_dim, ds.n_classes, config.seed, ds.n_nodes)
    record, best = train_to_convergence(
        model, ctx.adj, ctx, config.max_epoch, config.lr, config.weight_decay, round_index=0
    )
    record.cost = _cost(best, ctx.adj, ctx, config)
    return record, best


def iterative_sparsify(config: ExperimentConfig, ctx: TrainingContext,
                       on_round=None) -> ExperimentResult:
    records: list[RoundRecord] = []
    record, best = train_baseline(config, ctx)
    records.append(record)
    if on_round:
        on_round(record)
    baseline = record.test_accuracy_at_best_val
    bar = baseline - config.baseline_tolerance / 100.0
    verdict_round = 0
    adj = ctx.adj
    ds = ctx.dataset
    stopped = "max_rounds"

    for r in range(1, config.max_rounds + 1):
        state = sparsity_state(best, adj, ctx.original_off_diagonal)
        specs = round_specs(config, r, config.max_rounds, state)
        model, adj, outcomes = sparsify_round(best, adj, ctx.x, specs, config.symmetric_pairing)
        if not config.warm_start:
            fresh = init_weights(ds.n_features, config.hidden_dim, ds.n_classes, config.seed, ds.n_nodes)
            model.w1, model.w2 = fresh.w1, fresh.w2
            model.enforce_masks()
        if specs.empty() and config.warm_start:
            # nothing pruned: the trained snapshot is already this round's result
            record = replace(records[-1], round_index=r, prune_outcomes={}, cost={})
        else:
            model.reset_optimizer()
            try:
                record, best = train_to_convergence(
                    model, adj, ctx, config.max_epoch, config.lr, config.weight_decay, round_index=r
                )
            except TrainingError:
                log.error("training diverged in round %d; keeping %d completed rounds", r, len(records))
                raise
        record.prune_outcomes = outcomes
        record.cost = _cost(best, adj, ctx, config)
        records.append(record)
        if on_round:
            on_round(record)
        log.info("round %d: sparsity %s test@best-val %.4f", r, record.sparsity_state,
                 record.test_accuracy_at_best_val)
        if record.test_accuracy_at_best_val < bar:
            stopped = "accuracy_drop"
            break
        verdict_round = r

    kept = records[verdict_round]
    verdict = {
        "round": verdict_round,
        "sparsity": kept.sparsity_state,
        "test_accuracy": kept.test_accuracy_at_best_val,
        "baseline_accuracy": baseline,
        "stopped_by": stopped,
    }
    return ExperimentResult(records, verdict, baseline, best, adj)


def _grid_key(config: ExperimentConfig):
    order = [k.strip() for k in config.grid_key.split(",")]
    return lambda cell: tuple(cell["target"][k] for k in order)


def grid_search(config: ExperimentConfig, ctx: TrainingContext, grid=None) -> dict:
    """Sparsify the trained baseline to every (a, w, h) target and retrain.

    Every cell starts from the same seeded baseline snapshot. The best cell
    maximizes the ``grid_key`` ordering among cells within tolerance.
    """
    if grid is None:
        grid = [(a, w, h) for a in config.grid_a for w in config.grid_w for h in config.grid_h]
    base_record, base_model = train_baseline(config, ctx)
    baseline = base_record.test_accuracy_at_best_val
    bar = baseline - config.baseline_tolerance / 100.0
    cells = []
    for a, w, h in grid:
        cell_cfg = ExperimentConfig(**{
            **config.to_dict(), "adj_target": float(a), "weight_target": float(w),
            "embed_target": float(h), "max_rounds": 1, "schedule": "additive",
        })
        state = sparsity_state(base_model, ctx.adj, ctx.original_off_diagonal)
        specs = round_specs(cell_cfg, 1, 1, state)
        model, adj, outcomes = sparsify_round(base_model, ctx.adj, ctx.x, specs, config.symmetric_pairing)
        if specs.empty():
            record = replace(base_record, round_index=1)
        else:
            model.reset_optimizer()
            record, _ = train_to_convergence(
                model, adj, ctx, config.max_epoch, config.lr, config.weight_decay, round_index=1
            )
        record.prune_outcomes = outcomes
        cells.append({
            "target": {"a": float(a), "w": float(w), "h": float(h)},
            "achieved": record.sparsity_state,
            "test_accuracy": record.test_accuracy_at_best_val,
            "best_val_accuracy": record.best_val_accuracy,
            "feasible": record.test_accuracy_at_best_val >= bar,
        })
    feasible = [c for c in cells if c["feasible"]]
    best_cell = max(feasible, key=_grid_key(config)) if feasible else None
    return {
        "baseline_accuracy": baseline,
        "baseline_record": base_record,
        "cells": cells,
        "best": best_cell,
        "verdict": "none feasible" if best_cell is None else "ok",
    }
