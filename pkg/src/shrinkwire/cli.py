"""Command-line entry point.

Every command writes its artifacts under ``--out DIR`` with fixed names.
Options may also come from a flat JSON object given with ``--config``; keys
are the option names with dashes replaced by underscores, and explicit flags
win over the file. Exit status: 0 success, 1 runtime failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import consensus as cons
from .data import NodeDataset, load_citation, split
from .errors import InputError
from .experiments import sbm_benchmark, sbm_split_sizes
from .gnn import (
    TrainConfig,
    accuracy,
    evaluate,
    forward,
    history_to_csv,
    init_model,
    load_checkpoint,
    prune_pipeline,
    save_checkpoint,
    SpectraLog,
    train,
)
from .graph import WeightedGraph, read_edge_list
from .rewiring import CoupledRewireHook, SignFlipInjector, data_graph_scores, events_to_csv

log = logging.getLogger("shrinkwire")


class ConfigError(Exception):
    """Bad flags or config file; maps to exit status 2."""


# -- argument wiring ---------------------------------------------------------


def _dataset_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--data-dir", help="directory holding NAME.edges/.features/.labels")
    g.add_argument("--name", help="dataset name inside --data-dir")
    g.add_argument("--sbm", action="store_true", help="use a synthetic stochastic block model")
    g.add_argument("--blocks", type=int, default=2)
    g.add_argument("--nodes-per-block", type=int, default=100)
    g.add_argument("--p-in", type=float, default=0.1)
    g.add_argument("--p-out", type=float, default=0.01)
    g.add_argument("--feature-dim", type=int, default=16)
    g.add_argument("--feature-gap", type=float, default=2.0)
    g.add_argument("--per-class-train", type=int, default=20)
    g.add_argument("--val", type=int, default=None, help="validation nodes (default 100; SBM: n/5)")
    g.add_argument("--test", type=int, default=None, help="test nodes (default 1000; SBM: rest)")
    g.add_argument("--raw-adjacency", action="store_true", help="propagate with raw A instead of the renormalized form")


def _train_args(p: argparse.ArgumentParser, hidden_default: str) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float, help="learning rate (required)")
    g.add_argument("--epochs", type=int, default=200)
    g.add_argument("--momentum", type=float, default=0.9)
    g.add_argument("--weight-decay", type=float, default=5e-4)
    g.add_argument("--l1", type=float, default=0.0, help="L1 weight penalty (comparison only)")
    g.add_argument("--hidden", default=hidden_default, help="comma-separated hidden widths")
    g.add_argument("--activation", choices=["swish", "relu", "identity"], default="swish")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shrinkwire", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=False, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="flat JSON file of option defaults")

    p = sub.add_parser("train", help="train a GCN and log metrics and spectra")
    common(p)
    _dataset_args(p)
    _train_args(p, "16")

    p = sub.add_parser("prune", help="train wide, plan pyramidal widths, shrink, fine-tune")
    common(p)
    _dataset_args(p)
    _train_args(p, "64")
    p.add_argument("--energy-threshold", type=float, default=0.99)
    p.add_argument("--finetune-epochs", type=int, default=50)
    p.add_argument("--plan-source", choices=["activations", "both"], default="activations",
                   help="'both' also caps widths by the input feature rank")

    p = sub.add_parser("rewire", help="train with coupled rewiring over a grid of delta values")
    common(p)
    _dataset_args(p)
    _train_args(p, "16")
    p.add_argument("--deltas", default="0,0.1,0.5,1", help="comma-separated coupling coefficients")
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--cadence", type=int, default=10)
    p.add_argument("--keep-fraction", type=float, default=0.1)
    p.add_argument("--target", choices=["weights", "data"], default="weights",
                   help="'data' only reports link scores on the input graph")
    p.add_argument("--top", type=int, default=20, help="rows in the data-graph score report")
    p.add_argument("--corrupt-fraction", type=float, default=0.0)
    p.add_argument("--corrupt-epoch", type=int, default=20)
    p.add_argument("--corrupt-layer", type=int, default=0)

    p = sub.add_parser("consensus", help="simulate x(t+1) = A x(t)")
    common(p)
    src = p.add_argument_group("system")
    src.add_argument("--system", help="matrix text file for A followed by an x0 line")
    src.add_argument("--graph", help="edge-list file; A = I - eps L")
    src.add_argument("--cycle", type=int, help="use the n-cycle graph; A = I - eps L")
    src.add_argument("--eps", type=float, default=None, help="step gain (default 1/(1+d_max))")
    src.add_argument("--x0", help="comma-separated initial state (default 1..n)")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-steps", type=int, default=10_000)

    p = sub.add_parser("spectra", help="replay a checkpoint and report top singular values")
    common(p)
    _dataset_args(p)
    p.add_argument("--checkpoint", help="checkpoint written by train or prune")
    p.add_argument("--activation", choices=["swish", "relu", "identity"], default="swish")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        known = set(vars(args))
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        sub = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if not args.out:
        raise ConfigError("--out is required")
    return args


# -- helpers -----------------------------------------------------------------


def _ints(text: str, flag: str) -> list[int]:
    try:
        out = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"{flag}: {exc}") from exc
    if not out or min(out) < 1:
        raise ConfigError(f"{flag} needs positive integers")
    return out


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"{flag}: {exc}") from exc


def _train_config(args) -> TrainConfig:
    if args.lr is None:
        raise ConfigError("--lr is required")
    return TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        seed=args.seed,
        l1=args.l1,
    )


def _check_dataset_args(args) -> None:
    if args.sbm:
        return
    if not args.data_dir or not args.name:
        raise ConfigError("give --sbm or both --data-dir and --name")
    d = Path(args.data_dir)
    if not d.is_dir():
        raise ConfigError(f"dataset directory {d} does not exist")
    for ext in ("edges", "features", "labels"):
        if not (d / f"{args.name}.{ext}").is_file():
            raise ConfigError(f"missing dataset file {d / f'{args.name}.{ext}'}")


def _dataset(args) -> NodeDataset:
    renorm = not args.raw_adjacency
    if args.sbm:
        data = sbm_benchmark(
            args.seed, args.blocks, args.nodes_per_block, args.p_in, args.p_out,
            args.feature_dim, args.feature_gap, args.per_class_train,
        )
        if args.val is None and args.test is None and not args.raw_adjacency:
            return data
        from .data import generate_sbm

        raw = generate_sbm(args.blocks, args.nodes_per_block, args.p_in, args.p_out,
                           args.feature_dim, args.feature_gap, args.seed)
        val, test = sbm_split_sizes(raw.n, args.blocks, args.per_class_train)
        return split(raw, args.per_class_train, args.val if args.val is not None else val,
                     args.test if args.test is not None else test, args.seed, renorm)
    raw = load_citation(args.data_dir, args.name)
    return split(raw, args.per_class_train, 100 if args.val is None else args.val,
                 1000 if args.test is None else args.test, args.seed, renorm)


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


def _json(out: Path, name: str, obj) -> Path:
    return _write(out, name, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _finite(x: float):
    return None if x is None or not np.isfinite(x) else float(x)


# -- commands ----------------------------------------------------------------


def cmd_train(args) -> int:
    _check_dataset_args(args)
    cfg = _train_config(args)
    hidden = _ints(args.hidden, "--hidden")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    data = _dataset(args)
    model = init_model([data.X.shape[1], *hidden, data.class_count], args.activation, args.seed)
    result = train(model, data, cfg)
    _write(out, "metrics.csv", history_to_csv(result.history))
    _write(out, "spectra.csv", result.spectra.to_csv())
    save_checkpoint(out / "model.ckpt", result.model)
    val_accs = [h.val_acc for h in result.history if np.isfinite(h.val_acc)]
    summary = {
        "test_acc": _finite(accuracy(result.model, data, data.test_mask)),
        "best_val_acc": max(val_accs) if val_accs else None,
        "epochs": cfg.epochs,
    }
    _json(out, "summary.json", summary)
    print(json.dumps(summary))
    return 0


def cmd_prune(args) -> int:
    _check_dataset_args(args)
    cfg = _train_config(args)
    hidden = _ints(args.hidden, "--hidden")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    data = _dataset(args)
    res = prune_pipeline(
        data, hidden, cfg, args.energy_threshold, args.finetune_epochs,
        args.activation, include_input=args.plan_source == "both",
    )
    _write(out, "width_plan.json", res.plan.to_json() + "\n")
    _write(out, "metrics_dense.csv", history_to_csv(res.dense.history))
    _write(out, "metrics_finetune.csv", history_to_csv(res.finetuned.history))
    _write(out, "spectra.csv", res.finetuned.spectra.to_csv())
    save_checkpoint(out / "model.ckpt", res.model)
    summary = {
        "original_widths": hidden,
        "widths": list(res.plan.widths),
        "source_ranks": list(res.plan.source_ranks),
        "energy_threshold": res.plan.energy_threshold,
        "before_test_acc": _finite(accuracy(res.dense.model, data, data.test_mask)),
        "after_test_acc": _finite(accuracy(res.model, data, data.test_mask)),
    }
    _json(out, "prune_summary.json", summary)
    print(json.dumps(summary))
    return 0


def cmd_rewire(args) -> int:
    _check_dataset_args(args)
    cfg = _train_config(args)
    hidden = _ints(args.hidden, "--hidden")
    deltas = _floats(args.deltas, "--deltas")
    if any(d < 0 for d in deltas) or not deltas:
        raise ConfigError("--deltas must be non-negative numbers")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = _dataset(args)

    if args.target == "data":
        from .graph import weight_matrix_to_graph

        A = data.A_hat.copy()
        np.fill_diagonal(A, 0.0)
        g = weight_matrix_to_graph(A, 0.0, "square")
        rows = ["i,j,w,score"] + [
            f"{c.i},{c.j},{c.w:.17g},{c.score:.17g}" for c in data_graph_scores(g, args.top)
        ]
        _write(out, "data_scores.csv", "\n".join(rows) + "\n")
        return 0

    dims = [data.X.shape[1], *hidden, data.class_count]
    model0 = init_model(dims, args.activation, args.seed)
    conv = ["delta,epoch,train_loss,val_loss,val_acc"]
    summary = []
    for delta in deltas:
        hook = CoupledRewireHook(delta, args.warmup, args.cadence, args.keep_fraction)
        hooks = [hook]
        if args.corrupt_fraction > 0:
            hooks.append(SignFlipInjector(args.corrupt_layer, args.corrupt_epoch,
                                          args.corrupt_fraction, args.seed + 10_000))
        result = train(model0, data, cfg, hooks=hooks)
        conv += [
            f"{delta:g},{h.epoch},{h.train_loss:.17g},{h.val_loss:.17g},{h.val_acc:.17g}"
            for h in result.history
        ]
        _write(out, f"rewire_events_{delta:g}.csv", events_to_csv(hook.events))
        summary.append({
            "delta": delta,
            "test_acc": _finite(accuracy(result.model, data, data.test_mask)),
            "final_train_loss": result.history[-1].train_loss,
            "flagged": sum(len(v) for v in hook.flagged.values()),
            "events": len(hook.events),
        })
    _write(out, "convergence.csv", "\n".join(conv) + "\n")
    _json(out, "rewire_summary.json", summary)
    print(json.dumps(summary))
    return 0


def cmd_consensus(args) -> int:
    sources = [s for s in (args.system, args.graph, args.cycle) if s is not None]
    if len(sources) != 1:
        raise ConfigError("give exactly one of --system, --graph, --cycle")
    for path in (args.system, args.graph):
        if path is not None and not Path(path).is_file():
            raise ConfigError(f"file {path} does not exist")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.system:
        system = cons.read_system(args.system)
    else:
        if args.cycle is not None:
            if args.cycle < 3:
                raise ConfigError("--cycle needs n >= 3")
            n = args.cycle
            g = WeightedGraph(n, False, tuple((i, (i + 1) % n, 1.0) for i in range(n)))
        else:
            g = read_edge_list(args.graph)
        x0 = _floats(args.x0, "--x0") if args.x0 else list(range(1, g.n + 1))
        system = cons.ConsensusSystem(cons.consensus_matrix(g, args.eps), x0)
    verdict = cons.spectral_convergence_check(system.A)
    run = cons.run_to_consensus(system, args.tol, args.max_steps)
    _write(out, "trajectory.csv", cons.trajectory_to_csv(run.trajectory))
    report = {
        "verdict": verdict,
        "regime": run.regime,
        "steps": run.steps,
        "reached": run.reached,
        "mean_x0": float(system.x0.mean()),
        "x_final": run.x.tolist(),
    }
    _json(out, "verdict.json", report)
    print(json.dumps({k: report[k] for k in ("verdict", "regime", "steps", "reached")}))
    return 0


def cmd_spectra(args) -> int:
    _check_dataset_args(args)
    if not args.checkpoint or not Path(args.checkpoint).is_file():
        raise ConfigError(f"checkpoint {args.checkpoint} does not exist")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = _dataset(args)
    model = load_checkpoint(args.checkpoint, args.activation)
    log_ = SpectraLog(5)
    log_.add(0, forward(model, data))
    _write(out, "spectra.csv", log_.to_csv())
    return 0


COMMANDS = {
    "train": cmd_train,
    "prune": cmd_prune,
    "rewire": cmd_rewire,
    "consensus": cmd_consensus,
    "spectra": cmd_spectra,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any module failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
