"""Command-line entry point: ``tgg <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import synth as synth_mod
from . import trainer as T
from .dataio import DataError, SyntheticSpec, generate_synthetic, load_attributes, load_dataset, save_dataset
from .dataio import with_fsl_support, write_features
from .propagate import ConfigError, EpisodeError, LabelMatrix, predict, propagate_closed_form
from .protograph import crop, from_attributes, from_edge_list
from .tensor import no_grad


def _dump(doc, path=None) -> None:
    text = json.dumps(doc, indent=2)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _absolute_paths(cfg: T.ExperimentConfig, base: Path) -> T.ExperimentConfig:
    """Resolve data and graph paths so a checkpoint can be evaluated from anywhere."""
    data = None if cfg.data is None else {k: str((base / v).resolve()) for k, v in cfg.data.items()}
    graph = None if cfg.graph is None else str((base / cfg.graph).resolve())
    return replace(cfg, data=data, graph=graph)


def _load_config(path) -> T.ExperimentConfig:
    cfg = T.ExperimentConfig.from_json(path)
    return _absolute_paths(cfg, Path(path).resolve().parent)


def _dataset_for(cfg: T.ExperimentConfig, mode: str):
    ds, g = T.load_experiment_data(cfg)
    if mode == "fsl" and not ds.shots():
        ds = with_fsl_support(ds, cfg.fsl_shots, cfg.seed)
    return ds, g


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, g = _dataset_for(cfg, cfg.mode)
    trained = T.train(ds, g, cfg, log_path=out / "log.csv")
    trained.save(out / "checkpoint.json")
    metrics = T.evaluate(trained, ds, cfg.mode)
    metrics.update({"best_val": trained.best_val, "stopped_at": trained.stopped_at})
    _dump(metrics, out / "metrics.json")
    _dump(metrics)
    return 0


def _export_graph(trained: T.Trained, ds, seed: int, path) -> None:
    ep = T.build_episode(ds, trained.graph, trained.synthesizer, trained.cfg, seed)
    rng = np.random.default_rng(seed)
    with no_grad():
        fw = trained.model.forward(ep, T.episode_graph(trained.graph, ep.classes), rng)
    doc = {
        "classes": [ds.class_names[c] for c in ep.classes],
        "labels": [int(y) if s else None for y, s in zip(ep.labels, ep.support)],
        "truth": ep.labels.tolist(),
        "unseen": ep.unseen.tolist(),
        "embeddings": fw.H.data.tolist(),
        "adjacency": fw.A.data.tolist(),
    }
    _dump(doc, path)


def cmd_eval(args) -> int:
    ds, _ = _dataset_for(T.load_checkpoint_config(args.checkpoint), args.mode)
    trained = T.load_checkpoint(args.checkpoint, ds)
    metrics = T.evaluate(trained, ds, args.mode, trials=args.trials)
    _dump(metrics, args.out)
    if args.out is not None:
        _dump(metrics)
    if args.export_graph:
        _export_graph(trained, ds, trained.cfg.seed, args.export_graph)
    return 0


def _thresholds(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"thresholds must be comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    ds, g = T.load_experiment_data(cfg)
    table = T.sensitivity_sweep(ds, g, cfg, args.thresholds, args.out)
    for t, acc in table:
        print(f"{t:g}\t{acc:.4f}")
    return 0


def cmd_synth_data(args) -> int:
    ds = generate_synthetic(SyntheticSpec.from_json(args.spec))
    for p in save_dataset(ds, args.out):
        print(p)
    return 0


def cmd_dataset_validate(args) -> int:
    ds = load_dataset(args.features, args.attributes, args.splits)
    problems = ds.validate()
    print(f"{len(ds.labels)} instances, {ds.n_classes} classes ({len(ds.seen_classes)} seen, "
          f"{len(ds.unseen_classes)} unseen), d={ds.feature_dim}, m={ds.attribute_dim}")
    for msg in problems:
        print(f"warning: {msg}")
    return 0


def cmd_graph_build(args) -> int:
    names, attributes = load_attributes(args.attributes)
    g = from_edge_list(args.edges, names) if args.edges else from_attributes(attributes, names)
    g.to_edge_list(args.out)
    print(f"{g.n_edges} edges over {len(names)} classes")
    return 0


def cmd_graph_crop(args) -> int:
    names, _ = load_attributes(args.attributes)
    g = crop(from_edge_list(args.graph, names), args.threshold)
    g.to_edge_list(args.out)
    print(f"{g.n_edges} edges kept at threshold {args.threshold:g}")
    return 0


def cmd_synth_fit(args) -> int:
    ds = load_dataset(args.features, args.attributes, args.splits)
    s = synth_mod.fit(ds, args.ridge)
    synth_mod.save(s, args.out, ds.class_names)
    print(f"residual {s.residual:.6g}" + (" (underdetermined)" if s.underdetermined else ""))
    return 0


def cmd_synth_sample(args) -> int:
    s, names = synth_mod.load(args.model)
    names = names or [str(i) for i in range(len(s.attributes))]
    if args.cls not in names:
        raise DataError(f"unknown class {args.cls!r}")
    rows = s.sample(names.index(args.cls), args.count, args.seed)
    write_features(args.out or sys.stdout, np.arange(args.count), [args.cls] * args.count, rows)
    return 0


def cmd_propagate(args) -> int:
    doc = json.loads(Path(args.graph).read_text())
    A = np.asarray(doc["adjacency"], dtype=float)
    labels = doc["labels"]
    classes = doc.get("classes") or [str(i) for i in range(max(y for y in labels if y is not None) + 1)]
    labeled = np.array([y is not None for y in labels])
    Y = LabelMatrix.from_labels(np.array([y or 0 for y in labels]), len(classes), labeled)
    probs = predict(propagate_closed_form(A, Y, args.mu))
    _dump({"predictions": [classes[j] for j in probs.argmax(1)], "probabilities": probs.tolist()}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tgg", description="Episodic graph-based zero- and few-shot classifier.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("train", help="train from a JSON config; writes checkpoint, log and metrics")
    c.add_argument("--config", required=True)
    c.add_argument("--out", default=".")
    c.set_defaults(func=cmd_train)

    c = sub.add_parser("eval", help="evaluate a checkpoint")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--mode", choices=T.MODES, required=True)
    c.add_argument("--trials", type=int, default=None)
    c.add_argument("--out", default=None, help="metrics JSON path (default: stdout)")
    c.add_argument("--export-graph", default=None, help="write one episode's instance graph as JSON")
    c.set_defaults(func=cmd_eval)

    c = sub.add_parser("sweep", help="crop-threshold sensitivity sweep")
    c.add_argument("--config", required=True)
    c.add_argument("--thresholds", type=_thresholds, default=[i / 10 for i in range(11)])
    c.add_argument("--out", default="sweep.csv")
    c.set_defaults(func=cmd_sweep)

    c = sub.add_parser("synth-data", help="generate a synthetic dataset from a spec JSON")
    c.add_argument("--spec", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_synth_data)

    def dataset_args(q):
        q.add_argument("--features", required=True)
        q.add_argument("--attributes", required=True)
        q.add_argument("--splits", required=True)

    ds = sub.add_parser("dataset", help="dataset utilities").add_subparsers(dest="action", required=True)
    c = ds.add_parser("validate", help="load a dataset and report invariant problems")
    dataset_args(c)
    c.set_defaults(func=cmd_dataset_validate)

    gr = sub.add_parser("graph", help="prototype graph utilities").add_subparsers(dest="action", required=True)
    c = gr.add_parser("build", help="prototype graph from attributes or a raw edge list")
    c.add_argument("--attributes", required=True)
    c.add_argument("--edges", default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_graph_build)
    c = gr.add_parser("crop", help="drop edges below a threshold")
    c.add_argument("--graph", required=True)
    c.add_argument("--attributes", required=True)
    c.add_argument("--threshold", type=float, required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_graph_crop)

    sy = sub.add_parser("synth", help="feature synthesizer").add_subparsers(dest="action", required=True)
    c = sy.add_parser("fit", help="fit the synthesizer on seen training instances")
    dataset_args(c)
    c.add_argument("--ridge", type=float, default=synth_mod.DEFAULT_RIDGE)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_synth_fit)
    c = sy.add_parser("sample", help="draw synthetic features for one class")
    c.add_argument("--model", required=True)
    c.add_argument("--class", dest="cls", required=True)
    c.add_argument("--count", type=int, required=True)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_synth_sample)

    c = sub.add_parser("propagate", help="label propagation on an exported instance graph")
    c.add_argument("--graph", required=True)
    c.add_argument("--mu", type=float, default=0.5)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_propagate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ConfigError, EpisodeError, T.DivergenceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
