"""``holograph`` command line driver.

Subcommands: prep, train, eval, explore, ablate, gradcheck, synth. Every
command reads an optional JSON config (``--config``), applies ``--set
key=value`` overrides, and writes its outputs under ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from holograph.config import PRESETS, RunConfig, load_dict, parse_override
from holograph.errors import ConfigError, HoloGraphError, InvalidArgumentError
from holograph.field import GridSpec, make_detector_layout
from holograph.graphprep import SampleStore, build_store, load_dataset
from holograph.network import NetworkConfig, build_setup, load_checkpoint, save_checkpoint
from holograph.rng import rng_stream
from holograph.synth import write_two_cliques
from holograph.training import (
    FitResult,
    confusion_matrix,
    evaluate,
    fit,
    grad_check,
)

log = logging.getLogger("holograph")

STORE_NAME = "samples.npz"
CHECKPOINT_NAME = "checkpoint.hgr"
METRICS_NAME = "metrics.csv"
CONFUSION_NAME = "confusion.csv"

K_SWEEP = (3, 5, 10, 20, 50, 100)
D_SWEEP = (40, 60, 80, 100, 120, 140)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return "" if x is None else repr(float(x))


# --- building blocks ---------------------------------------------------------

def prepare_store(cfg: RunConfig, out: Path | None = None) -> SampleStore:
    if cfg.dataset is None:
        raise ConfigError("no dataset directory configured (set 'dataset')")
    graph = load_dataset(cfg.dataset)
    log.info("loaded %s: V=%d E=%d D=%d C=%d", cfg.dataset, graph.num_nodes, graph.num_edges,
             graph.features.shape[1], graph.num_classes)
    store = build_store(
        graph, d=cfg.d, k=cfg.k, n=cfg.n, test_size=cfg.test_size, seed=cfg.seed,
        alpha=cfg.alpha, epsilon=cfg.epsilon, per_node_normalization=cfg.per_node_normalization,
        encode_score_on_phase=cfg.encode_score_on_phase,
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        store.save(out / STORE_NAME)
    return store


def _store_matches(store: SampleStore, cfg: RunConfig) -> bool:
    m = store.meta
    return (m.get("d") == cfg.d and m.get("k") == cfg.k and m.get("seed") == cfg.seed
            and m.get("test_size") == cfg.test_size and m.get("alpha") == cfg.alpha
            and m.get("epsilon") == cfg.epsilon
            and m.get("per_node_normalization") == cfg.per_node_normalization)


def get_store(cfg: RunConfig, out: Path) -> SampleStore:
    """Reuse ``out/samples.npz`` when it was built with the same parameters."""
    path = out / STORE_NAME
    if path.is_file():
        store = SampleStore.load(path)
        if _store_matches(store, cfg):
            return store.view(n=cfg.n, encode_score_on_phase=cfg.encode_score_on_phase)
    return prepare_store(cfg, out)


def network_for(cfg: RunConfig, num_classes: int) -> NetworkConfig:
    grid = cfg.grid()
    detector = make_detector_layout(grid.n, num_classes, side=cfg.region_side, gap=cfg.region_gap)
    return NetworkConfig.create(
        grid, num_layers=cfg.num_layers, skips=cfg.skips, detector=detector,
        rng=rng_stream(cfg.seed, "init"), feature_layers=cfg.feature_layers,
        detector_hops=cfg.detector_hops,
    )


def train_run(cfg: RunConfig, store: SampleStore, out: Path | None = None) -> FitResult:
    net = network_for(cfg, store.num_classes)
    started = time.perf_counter()

    def progress(row, _config, _state):
        log.info("epoch %d loss %.5f train %.4f test %.4f", row["epoch"], row["train_loss"],
                 row["train_acc"], row["test_acc"])

    result = fit(net, store, cfg.hyper(), seed=cfg.seed, callbacks=[progress])
    elapsed = time.perf_counter() - started
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(result.config, result.state, out / CHECKPOINT_NAME)
        _write_text(out / METRICS_NAME, result.metrics_csv())
        meta = {
            "config": cfg.to_dict(),
            "pitch_m": cfg.pitch,
            "num_nodes": int(store.labels.size),
            "num_train": int(store.train_ids.size),
            "num_test": int(store.test_ids.size),
            "final_test_acc": result.history[-1]["test_acc"] if result.history else None,
            "best_test_acc": result.best_test_acc() if result.history else None,
        }
        if not cfg.deterministic:
            # wall-clock data would break byte-identical reruns
            meta["timing"] = {"train_seconds": elapsed, "python": platform.python_version(),
                              "machine": platform.machine()}
        _write_text(out / "run.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return result


# --- commands ------------------------------------------------------------------

def cmd_prep(cfg: RunConfig) -> SampleStore:
    out = Path(cfg.out)
    store = prepare_store(cfg, out)
    _write_text(out / "config.json", cfg.dumps())
    print(f"prepared {store.labels.size} samples (k={store.k}, d={store.d}); "
          f"{store.train_ids.size} train / {store.test_ids.size} test -> {out / STORE_NAME}")
    return store


def cmd_train(cfg: RunConfig) -> FitResult:
    out = Path(cfg.out)
    store = get_store(cfg, out)
    _write_text(out / "config.json", cfg.dumps())
    result = train_run(cfg, store, out)
    last = result.history[-1] if result.history else None
    if last:
        print(f"epoch {last['epoch']}: test acc {last['test_acc']:.4f} (best {result.best_test_acc():.4f})")
    print(f"wrote {out / CHECKPOINT_NAME} and {out / METRICS_NAME}")
    return result


def confusion_csv(cm: np.ndarray) -> str:
    C = cm.shape[0]
    header = ["true_class"] + [f"pred_{j}" for j in range(C)]
    return _csv_text(header, [[i] + [int(x) for x in cm[i]] for i in range(C)])


def cmd_eval(cfg: RunConfig, checkpoint: Path | None = None) -> tuple[float, np.ndarray]:
    out = Path(cfg.out)
    checkpoint = Path(checkpoint) if checkpoint else out / CHECKPOINT_NAME
    net, _ = load_checkpoint(checkpoint)
    net = NetworkConfig(grid=net.grid, masks=net.masks, skips=net.skips, detector=net.detector,
                        feature_layers=cfg.feature_layers, detector_hops=cfg.detector_hops)
    store = get_store(cfg, out).view(n=net.grid.n)
    if store.test_ids.size == 0:
        raise InvalidArgumentError("test set is empty; nothing to evaluate")
    if net.num_classes != store.num_classes:
        raise InvalidArgumentError(
            f"checkpoint has {net.num_classes} detector regions, dataset has {store.num_classes} classes"
        )
    _, acc, preds = evaluate(net, store, store.test_ids)
    cm = confusion_matrix(store.labels[store.test_ids], preds, store.num_classes)
    _write_text(out / CONFUSION_NAME, confusion_csv(cm))
    print(f"test accuracy {acc:.4f} on {store.test_ids.size} nodes -> {out / CONFUSION_NAME}")
    return acc, cm


def _trajectory_csv(columns: dict[str, list[float]]) -> str:
    names = list(columns)
    epochs = max(len(v) for v in columns.values()) if columns else 0
    rows = []
    for e in range(epochs):
        rows.append([e + 1] + [_num(columns[c][e]) if e < len(columns[c]) else "" for c in names])
    return _csv_text(["epoch"] + names, rows)


def _summary_csv(results: dict[str, FitResult]) -> str:
    rows = []
    for name, res in results.items():
        accs = [r["test_acc"] for r in res.history]
        best = int(np.argmax(accs)) if accs else -1
        rows.append([name, _num(accs[-1] if accs else None), _num(accs[best] if accs else None), best + 1])
    return _csv_text(["run", "final_test_acc", "best_test_acc", "best_epoch"], rows)


def cmd_explore(cfg: RunConfig, setups: Sequence[str]) -> dict[str, FitResult]:
    """Train once per skip setup on a shared sample store."""
    setups = [str(s).strip().lower() for s in setups]
    for s in setups:
        build_setup(s)
    out = Path(cfg.out)
    store = get_store(cfg, out)
    results = {}
    for s in setups:
        run_cfg = cfg.replace(skips=s, out=str(out / f"setup_{s}"))
        log.info("explore: setup %s", s)
        results[f"setup_{s}"] = train_run(run_cfg, store, Path(run_cfg.out))
    columns = {name: [r["test_acc"] for r in res.history] for name, res in results.items()}
    _write_text(out / "explore.csv", _trajectory_csv(columns))
    _write_text(out / "explore_summary.csv", _summary_csv(results))
    print(_summary_csv(results), end="")
    return results


def cmd_ablate(cfg: RunConfig, axis: str, values: Sequence | None = None) -> dict[str, FitResult]:
    """Sweep k, d or the score-on-phase flag with everything else fixed."""
    out = Path(cfg.out)
    results: dict[str, FitResult] = {}
    if axis == "k":
        values = [int(v) for v in (values or K_SWEEP)]
        for v in values:
            run = cfg.replace(k=v, out=str(out / f"k_{v}"))
            results[f"k_{v}"] = train_run(run, get_store(run, Path(run.out)), Path(run.out))
    elif axis == "d":
        values = [int(v) for v in (values or D_SWEEP)]
        for v in values:
            run = cfg.replace(d=v, out=str(out / f"d_{v}"))
            results[f"d_{v}"] = train_run(run, get_store(run, Path(run.out)), Path(run.out))
    elif axis == "score":
        store = get_store(cfg, out)
        for flag in (False, True):
            name = "score_on" if flag else "score_off"
            run = cfg.replace(encode_score_on_phase=flag, out=str(out / name))
            results[name] = train_run(run, store.view(encode_score_on_phase=flag), Path(run.out))
    else:
        raise InvalidArgumentError(f"unknown ablation axis {axis!r}; expected k, d or score")
    columns = {name: [r["test_acc"] for r in res.history] for name, res in results.items()}
    _write_text(out / f"ablate_{axis}.csv", _trajectory_csv(columns))
    summary = _summary_csv(results)
    _write_text(out / f"ablate_{axis}_summary.csv", summary)
    print(summary, end="")
    if axis == "score" and all(r.history for r in results.values()):
        delta = results["score_on"].best_test_acc() - results["score_off"].best_test_acc()
        print(f"score-on-phase best-accuracy delta: {100 * delta:+.2f} pts")
    return results


def gradcheck_config(seed: int = 0, n: int = 16, layers: int = 2, skips=((0, 2),), num_classes: int = 2,
                     region_side: int = 4, zero_phase: bool = False) -> NetworkConfig:
    grid = GridSpec(n=n)
    rng = None if zero_phase else rng_stream(seed, "init")
    return NetworkConfig.create(grid, num_layers=layers, skips=list(skips), num_classes=num_classes,
                                region_side=region_side, rng=rng)


def cmd_gradcheck(seed: int = 0, num_params: int = 64, tol: float = 1e-5, **kwargs):
    net = gradcheck_config(seed=seed, **kwargs)
    report = grad_check(net, seed=seed, num_params=num_params)
    print(report.summary())
    print("PASS" if report.passed(tol) else f"FAIL (tolerance {tol:g})")
    return report


def cmd_synth(out_dir, seed: int = 0):
    graph = write_two_cliques(out_dir, seed=seed)
    print(f"wrote two-clique dataset (V={graph.num_nodes}, E={graph.num_edges}) to {out_dir}")
    return graph


# --- argument parsing ------------------------------------------------------------

def _resolve_config(args) -> RunConfig:
    data = dict(PRESETS[args.preset]) if getattr(args, "preset", None) else {}
    if args.config:
        data.update(load_dict(args.config))
    cfg = RunConfig.from_dict(data)
    changes = dict(parse_override(s) for s in (args.set or []))
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.deterministic:
        changes["deterministic"] = True
    if changes:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **changes})
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--preset", choices=sorted(PRESETS), help="apply a named preset")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--deterministic", action="store_true",
                        help="fixed reduction order and no wall-clock metadata in outputs")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="holograph", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("prep", parents=[common], help="build the preprocessed sample store")
    sub.add_parser("train", parents=[common], help="train and write checkpoint + metrics CSV")
    ev = sub.add_parser("eval", parents=[common], help="accuracy and confusion matrix of a checkpoint")
    ev.add_argument("--checkpoint", help="checkpoint file (default: OUT/checkpoint.hgr)")
    ex = sub.add_parser("explore", parents=[common], help="compare skip-channel setups")
    ex.add_argument("--setups", default="none,1,2,3,4,5,6", help="comma-separated setups")
    ab = sub.add_parser("ablate", parents=[common], help="sweep k, d or score encoding")
    ab.add_argument("--axis", required=True, choices=["k", "d", "score"])
    ab.add_argument("--values", help="comma-separated sweep values (k/d)")
    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    gc.add_argument("--n", type=int, default=16)
    gc.add_argument("--layers", type=int, default=2)
    gc.add_argument("--skips", default="0->2", help="comma-separated a->b channels, or 'none'")
    gc.add_argument("--classes", type=int, default=2)
    gc.add_argument("--region-side", type=int, default=4)
    gc.add_argument("--params", type=int, default=64)
    gc.add_argument("--tol", type=float, default=1e-5)
    gc.add_argument("--zero-phase", action="store_true")
    sub.add_parser("synth", parents=[common], help="write the two-clique sanity dataset")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "synth":
            if not args.out:
                raise ConfigError("synth needs --out")
            cmd_synth(args.out, seed=args.seed or 0)
            return 0
        if args.command == "gradcheck":
            skips = [] if args.skips.strip().lower() == "none" else build_setup(
                [s for s in args.skips.split(",") if s.strip()])
            report = cmd_gradcheck(seed=args.seed or 0, num_params=args.params, tol=args.tol, n=args.n,
                                   layers=args.layers, skips=skips, num_classes=args.classes,
                                   region_side=args.region_side, zero_phase=args.zero_phase)
            return 0 if report.passed(args.tol) else 1
        cfg = _resolve_config(args)
        if args.command == "prep":
            cmd_prep(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, args.checkpoint)
        elif args.command == "explore":
            cmd_explore(cfg, [s for s in args.setups.split(",") if s.strip()])
        elif args.command == "ablate":
            values = [v for v in args.values.split(",") if v.strip()] if args.values else None
            cmd_ablate(cfg, args.axis, values)
    except HoloGraphError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
