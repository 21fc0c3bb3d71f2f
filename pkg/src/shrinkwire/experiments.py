"""Reusable experiment drivers shared by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import NodeDataset, generate_sbm, split
from .gnn import TrainConfig, accuracy, init_model, prune_pipeline, train
from .lowrank import WidthPlan
from .rewiring import CoupledRewireHook, SignFlipInjector, link_threshold


def sbm_split_sizes(n: int, classes: int, per_class_train: int = 20) -> tuple[int, int]:
    """Validation gets a fifth of the nodes, test gets everything left over."""
    val = n // 5
    test = n - classes * per_class_train - val
    return val, test


def sbm_benchmark(
    seed: int,
    blocks: int = 2,
    nodes_per_block: int = 100,
    p_in: float = 0.1,
    p_out: float = 0.01,
    feature_dim: int = 16,
    feature_gap: float = 2.0,
    per_class_train: int = 20,
) -> NodeDataset:
    raw = generate_sbm(blocks, nodes_per_block, p_in, p_out, feature_dim, feature_gap, seed)
    val, test = sbm_split_sizes(raw.n, blocks, per_class_train)
    return split(raw, per_class_train, val, test, seed)


@dataclass
class FaultTrial:
    seed: int
    recall: float
    link_recall: float  # over flipped entries that were graph links at injection
    precision: float
    flagged: int
    corrupted: int
    acc_rewired: float
    acc_corrupted: float
    events: int


def fault_injection_trial(
    seed: int,
    delta: float = 1.0,
    hidden: int = 16,
    layer: int = 0,
    fraction: float = 0.05,
    inject_epoch: int = 20,
    epochs: int = 100,
    lr: float = 0.05,
    warmup: int = 20,
    cadence: int = 10,
    keep_fraction: float = 0.1,
) -> FaultTrial:
    """Corrupt one layer mid-training and compare a rewired arm to a plain arm.

    Both arms share the initialization and the same sign flips. The hook runs
    before the injector within an epoch, so its snapshot at ``inject_epoch``
    predates the corruption and the next snapshot is the first one after it.
    """
    data = sbm_benchmark(seed)
    cfg = TrainConfig(lr=lr, epochs=epochs, seed=seed, track_spectra=False)
    model0 = init_model([data.X.shape[1], hidden, data.class_count], "swish", seed)

    hook = CoupledRewireHook(delta, warmup, cadence, keep_fraction)
    injector = SignFlipInjector(layer, inject_epoch, fraction, seed + 10_000)
    link_truth: set[int] = set()

    def record_links(model, epoch):
        if epoch == inject_epoch:
            W = model.layers[layer].W
            thr = link_threshold(W, keep_fraction)
            R = W.shape[0]
            for r, c in injector.flipped:
                if abs(W[r, c]) > thr:
                    link_truth.update((r, R + c))
        return model

    rewired = train(model0, data, cfg, hooks=[hook, injector, record_links])
    plain = train(model0, data, cfg, hooks=[SignFlipInjector(layer, inject_epoch, fraction, seed + 10_000)])

    check = next(e for e in range(inject_epoch + 1, epochs + 1) if hook.due(e))
    flagged = set(hook.flagged.get((check, layer), []))
    truth = injector.corrupted_vertices
    hit = len(flagged & truth)
    return FaultTrial(
        seed=seed,
        recall=hit / len(truth),
        link_recall=len(flagged & link_truth) / len(link_truth) if link_truth else float("nan"),
        precision=hit / len(flagged) if flagged else float("nan"),
        flagged=len(flagged),
        corrupted=len(truth),
        acc_rewired=accuracy(rewired.model, data, data.test_mask),
        acc_corrupted=accuracy(plain.model, data, data.test_mask),
        events=len(hook.events),
    )


def summarize(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(np.nanmean(arr)), float(np.nanstd(arr))


@dataclass
class CitationRun:
    baseline_acc: float
    shrink_rewire_acc: float
    plan: WidthPlan


def citation_benchmark(
    data: NodeDataset,
    seed: int = 0,
    lr: float = 0.2,
    hidden: int = 16,
    wide: int = 64,
    epochs: int = 200,
    delta: float = 1.0,
    finetune_epochs: int = 50,
) -> CitationRun:
    """Baseline GCN against the shrink-then-rewire arm on one split.

    The second arm trains ``wide`` hidden units, shrinks to the planned width,
    and fine-tunes with the coupled rewiring hook active.
    """
    cfg = TrainConfig(lr=lr, epochs=epochs, seed=seed, track_spectra=False)
    dims = [data.X.shape[1], hidden, data.class_count]
    base = train(init_model(dims, "swish", seed), data, cfg)
    hook = CoupledRewireHook(delta, warmup=10, cadence=10)
    pruned = prune_pipeline(data, [wide], cfg, 0.99, finetune_epochs, finetune_hooks=[hook])
    return CitationRun(
        baseline_acc=accuracy(base.model, data, data.test_mask),
        shrink_rewire_acc=accuracy(pruned.model, data, data.test_mask),
        plan=pruned.plan,
    )
