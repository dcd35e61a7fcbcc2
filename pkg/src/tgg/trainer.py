"""Episodic training, evaluation and the crop-threshold sweep."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import synth as synth_mod
from .aggnet import AggregateNetwork, build_initial_instance_graph, sample_neighbors
from .dataio import Dataset, SyntheticSpec, generate_synthetic, load_dataset
from .nn import Module
from .optim import Adam
from .propagate import ConfigError, EpisodeError, LabelMatrix, balance_classes, dual_propagation_loss, predict, propagate_closed_form
from .protograph import PrototypeGraph, crop, from_attributes, from_edge_list
from .relkernel import GCN, EdgeLearner, edge_features, kernel_loss
from .tensor import Tensor, as_tensor, log_softmax, no_grad, save_arrays, load_arrays

MODES = ("zsl", "gzsl", "fsl")
BALANCE_MODES = ("predict", "both", "none")
ABLATIONS = ("no_aggregation", "no_attention", "no_gcn", "no_kernel", "no_dual")


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "zsl"
    n_way: int = 5
    k_shot: int = 3
    n_query: int = 10
    lambda1: float = 0.5
    lambda2: float = 0.5
    mu: float = 0.5
    delta: float = 1.0
    agg_dims: tuple[int, ...] = (64, 32)
    gcn_dims: tuple[int, ...] = (32, 16)
    edge_hidden: int = 32
    sample_sizes: tuple[int, ...] = (10, 5)
    k_nn: int = 0
    include_self: bool = True
    same_class_weight: float = 0.0
    crop_threshold: float = 1.0
    dummies_per_class: int | None = 30
    fsl_shots: int = 1
    fsl_fill: str = "dummy"
    dual_form: str = "subgraph"
    balance: str = "predict"
    wl_iterations: int = 2
    logit_scale: float = 1.0
    lr: float = 1e-3
    weight_decay: float = 5e-4
    episodes: int = 1000
    patience: int = 0
    val_every: int = 10
    val_episodes: int = 5
    eval_trials: int = 10
    eval_queries: int | None = 250
    synth_ridge: float = 0.1
    seed: int = 0
    no_aggregation: bool = False
    no_attention: bool = False
    no_gcn: bool = True
    no_kernel: bool = False
    no_dual: bool = False
    data: dict | None = None
    synthetic: dict | None = None
    graph: str | None = None

    def __post_init__(self):
        for name in ("agg_dims", "gcn_dims", "sample_sizes"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if not 0 < self.mu < 1:
            raise ConfigError(f"mu must lie in (0, 1), got {self.mu}")
        if self.delta <= 0:
            raise ConfigError("bandwidth delta must be positive")
        if self.n_way < 2 or self.k_shot < 1 or self.n_query < 0:
            raise ConfigError("need n_way >= 2, k_shot >= 1, n_query >= 0")
        if self.mode == "fsl" and self.fsl_shots not in (1, 3):
            raise ConfigError(f"fsl support must be 1 or 3 shots, got {self.fsl_shots}")
        if self.fsl_fill not in ("dummy", "repeat"):
            raise ConfigError(f"fsl_fill must be 'dummy' or 'repeat', got {self.fsl_fill!r}")
        if self.balance not in BALANCE_MODES:
            raise ConfigError(f"balance must be one of {BALANCE_MODES}, got {self.balance!r}")
        if not 0 <= self.crop_threshold <= 1:
            raise ConfigError("crop threshold must lie in [0, 1]")
        if len(self.sample_sizes) != len(self.agg_dims):
            raise ConfigError("one neighbor sample size per aggregation layer")
        if not self.gcn_dims or not self.agg_dims:
            raise ConfigError("layer dimension lists must be non-empty")

    @property
    def dummies(self) -> int:
        return self.k_shot if self.dummies_per_class is None else self.dummies_per_class

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


# -- episodes ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Episode:
    classes: np.ndarray  # [N] global class ids
    features: np.ndarray  # [n, d]
    labels: np.ndarray  # [n] positions into ``classes``
    support: np.ndarray  # [n] bool, labeled for propagation
    dummy: np.ndarray  # [n] bool, synthesized rows
    unseen: np.ndarray  # [n] bool, node belongs to an unseen class
    rows: np.ndarray  # [n] dataset row, -1 for synthesized nodes
    seed: int | None = None

    @property
    def n_way(self) -> int:
        return len(self.classes)

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def query(self) -> np.ndarray:
        return ~self.support

    def label_matrix(self, all_nodes: bool = False) -> LabelMatrix:
        mask = np.ones(self.n_nodes, dtype=bool) if all_nodes else self.support
        return LabelMatrix.from_labels(self.labels, self.n_way, mask)


def _assemble(ds: Dataset, sy, classes, support, queries, n_support, rng, fill="dummy") -> Episode:
    """Stack support then query nodes.

    ``support[c]`` holds real rows (may be shorter than ``n_support[c]``; the
    gap is filled with synthesized rows, or by repeating real rows when
    ``fill == "repeat"``).  ``queries[c]`` is an array of rows or an int
    count of synthesized query nodes.
    """
    blocks = []  # (features, local label, is_support, rows)
    for role in ("support", "query"):
        for j, c in enumerate(classes):
            if role == "support":
                real = np.asarray(support.get(c, ()), dtype=np.int64)[: n_support[c]]
                need = n_support[c] - len(real)
                rows = real
                if need and fill == "repeat" and len(real):
                    rows = np.concatenate([real, rng.choice(real, size=need)])
                    need = 0
                blocks.append((ds.features[rows], j, True, rows))
                if need:
                    blocks.append((sy.sample(c, need, rng), j, True, np.full(need, -1)))
            else:
                q = queries.get(c, 0)
                if isinstance(q, (int, np.integer)):
                    if q:
                        blocks.append((sy.sample(c, int(q), rng), j, False, np.full(int(q), -1)))
                else:
                    q = np.asarray(q, dtype=np.int64)
                    blocks.append((ds.features[q], j, False, q))
    feats = np.concatenate([b[0] for b in blocks]).reshape(-1, ds.feature_dim)
    labels = np.concatenate([np.full(len(b[3]), b[1]) for b in blocks]).astype(np.int64)
    supp = np.concatenate([np.full(len(b[3]), b[2]) for b in blocks]).astype(bool)
    rows = np.concatenate([b[3] for b in blocks]).astype(np.int64)
    classes = np.asarray(classes, dtype=np.int64)
    unseen = np.isin(classes[labels], list(ds.unseen_classes))
    return Episode(classes, feats, labels, supp, rows < 0, unseen, rows)


def unseen_support_size(cfg: ExperimentConfig, has_real: bool) -> int:
    """Support rows for an unseen class: real shots topped up with dummies (or repeats)."""
    if not has_real:
        return cfg.dummies
    return max(cfg.k_shot, cfg.dummies) if cfg.fsl_fill == "dummy" else cfg.k_shot


def _sample_classes(ds: Dataset, n_way: int, rng) -> np.ndarray:
    seen = sorted(ds.seen_classes)
    unseen = sorted(ds.unseen_classes)
    if not unseen:
        raise EpisodeError("episodes need at least one unseen class")
    if n_way > len(seen) + len(unseen):
        raise EpisodeError(f"{n_way}-way episodes need {n_way} classes, dataset has {len(seen) + len(unseen)}")
    everything = np.asarray(seen + unseen)
    while True:
        pick = rng.choice(everything, size=n_way, replace=False)
        has_unseen = np.isin(pick, unseen).any()
        if has_unseen and (np.isin(pick, seen).any() or not seen or n_way == 1):
            return np.sort(pick)


def _query_counts(n_way: int, total: int, rng) -> np.ndarray:
    counts = np.full(n_way, total // n_way)
    counts[rng.choice(n_way, size=total % n_way, replace=False)] += 1
    return counts


def build_episode(ds: Dataset, g: PrototypeGraph | None, sy, cfg: ExperimentConfig, seed, query_split: str = "train") -> Episode:
    """Training (or validation) episode over seen and unseen classes.

    Seen classes take real support and queries from the train split
    (queries from ``query_split`` when it differs).  Unseen classes take
    synthesized support, or their real shots in FSL mode, and synthesized
    queries.  With a held-out query split, unseen classes get no queries.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    classes = _sample_classes(ds, cfg.n_way, rng)
    if g is not None and len(g.class_ids) != ds.n_classes:
        raise EpisodeError("prototype graph does not cover the dataset classes")
    unseen = ds.unseen_classes
    holdout = query_split != "train"
    active = [c for c in classes if not (holdout and c in unseen)] or list(classes)
    q_counts = dict(zip(active, _query_counts(len(active), cfg.n_query, rng)))
    support, queries, n_support = {}, {}, {}
    for c in classes:
        q = int(q_counts.get(c, 0))
        if c in unseen:
            n_support[c] = unseen_support_size(cfg, cfg.mode == "fsl")
            if cfg.mode == "fsl":
                support[c] = rng.permutation(ds.instances_of(c, "train"))
            queries[c] = 0 if holdout else q
            continue
        n_support[c] = cfg.k_shot
        pool = rng.permutation(ds.instances_of(c, "train"))
        if holdout:
            # held-out queries are capped at what the split holds
            qpool = rng.permutation(ds.instances_of(c, query_split))
            if len(pool) < cfg.k_shot:
                raise EpisodeError(f"class {ds.class_names[c]} has too few train instances for this episode")
            support[c], queries[c] = pool[: cfg.k_shot], qpool[:q]
        else:
            if len(pool) < cfg.k_shot + q:
                raise EpisodeError(
                    f"class {ds.class_names[c]} has {len(pool)} train instances, episode needs {cfg.k_shot + q}"
                )
            support[c], queries[c] = pool[: cfg.k_shot], pool[cfg.k_shot : cfg.k_shot + q]
    ep = _assemble(ds, sy, classes, support, queries, n_support, rng, cfg.fsl_fill)
    return replace(ep, seed=seed if isinstance(seed, (int, np.integer)) else None)


def pseudo_labels(ep: Episode) -> np.ndarray:
    """Support labels as given; each query takes its cosine-nearest support class mean."""
    means = np.stack([ep.features[ep.support & (ep.labels == j)].mean(0) for j in range(ep.n_way)])
    unit = ep.features / np.maximum(np.linalg.norm(ep.features, axis=1, keepdims=True), 1e-12)
    mu = means / np.maximum(np.linalg.norm(means, axis=1, keepdims=True), 1e-12)
    out = ep.labels.copy()
    out[ep.query] = (unit[ep.query] @ mu.T).argmax(1)
    return out


def episode_graph(g: PrototypeGraph, classes: np.ndarray) -> PrototypeGraph:
    return PrototypeGraph(tuple(g.class_ids[c] for c in classes), g.subgraph(classes))


# -- model ---------------------------------------------------------------------------


@dataclass
class Forward:
    node_classes: np.ndarray
    H0: Tensor
    A0: Tensor
    H: Tensor
    A: Tensor
    Y_star: Tensor


@dataclass
class Losses:
    loss_c: Tensor
    loss_d: Tensor
    loss_k: Tensor
    total: Tensor
    forward: Forward

    def values(self) -> tuple[float, float, float, float]:
        return self.loss_c.item(), self.loss_d.item(), self.loss_k.item(), self.total.item()


class TGGModel(Module):
    def __init__(self, cfg: ExperimentConfig, d_in: int, rng: np.random.Generator):
        self.cfg = cfg
        self.agg = None if cfg.no_aggregation else AggregateNetwork(d_in, cfg.agg_dims, rng)
        h_dim = d_in if self.agg is None else self.agg.d_out
        self.edge = EdgeLearner(h_dim, cfg.edge_hidden, rng, cfg.delta)
        self.gcn = None if cfg.no_gcn else GCN(h_dim, cfg.gcn_dims, rng)
        self.edge_final = None if cfg.no_gcn else EdgeLearner(self.gcn.d_out, cfg.edge_hidden, rng, cfg.delta)

    def forward(self, ep: Episode, g_ep: PrototypeGraph, rng) -> Forward:
        cfg = self.cfg
        node_classes = pseudo_labels(ep)
        x = Tensor(ep.features)
        if self.agg is None:
            H0 = x
        else:
            cand = build_initial_instance_graph(
                ep.features, node_classes, g_ep, cfg.k_nn, cfg.include_self, same_class=cfg.same_class_weight > 0
            )
            nb = sample_neighbors(cand, cfg.sample_sizes, rng, node_classes)
            H0 = self.agg.forward(x, nb, g_ep, attention=not cfg.no_attention, same_class_weight=cfg.same_class_weight)
        A0 = edge_features(H0, self.edge)
        if self.gcn is None:
            H, A = H0, A0
        else:
            H = self.gcn.forward(H0, A0)
            A = edge_features(H, self.edge_final)
        Y = ep.label_matrix()
        Y_star = propagate_closed_form(A, Y, cfg.mu)
        if cfg.balance == "both" or (cfg.balance == "predict" and not self.training):
            Y_star = balance_classes(Y_star, Y)
        return Forward(node_classes, H0, A0, H, A, Y_star)


def classification_loss(Y_star, labels: np.ndarray, scale: float = 1.0) -> Tensor:
    """Cross-entropy of the softmax over ``scale * Y*``, summed over every node."""
    logp = log_softmax(as_tensor(Y_star) * scale)
    return -logp[np.arange(len(labels)), labels].sum()


def episode_loss(ep: Episode, model: TGGModel, g_ep: PrototypeGraph, rng) -> Losses:
    """Cross-entropy over every node plus weighted dual and kernel regularizers."""
    cfg = model.cfg
    fw = model.forward(ep, g_ep, rng)
    loss_c = classification_loss(fw.Y_star, ep.labels, cfg.logit_scale)
    zero = Tensor(0.0)
    if cfg.no_dual or cfg.lambda1 == 0:
        loss_d = zero
    else:
        loss_d = dual_propagation_loss(fw.A, ep.label_matrix(all_nodes=True), ~ep.unseen, ep.unseen, cfg.mu, cfg.dual_form)
    if cfg.no_kernel or cfg.lambda2 == 0:
        loss_k = zero
    else:
        loss_k = kernel_loss(fw.A, g_ep.weights, ep.labels, cfg.wl_iterations)
    total = loss_c + loss_d * cfg.lambda1 + loss_k * cfg.lambda2
    return Losses(loss_c, loss_d, loss_k, total, fw)


def query_predictions(model: TGGModel, ep: Episode, g_ep: PrototypeGraph, rng) -> np.ndarray:
    """Predicted local labels of the query nodes (eval mode, no gradients)."""
    was = model.training
    model.eval()
    try:
        with no_grad():
            fw = model.forward(ep, g_ep, rng)
    finally:
        model.train(was)
    return predict(fw.Y_star, np.flatnonzero(ep.query), model.cfg.logit_scale).argmax(1)


# -- training ------------------------------------------------------------------------


LOG_FIELDS = ("episode", "seed", "loss_c", "loss_d", "loss_k", "total", "acc", "val_acc")


@dataclass
class Trained:
    model: TGGModel
    synthesizer: synth_mod.ConditionalSynthesizer
    graph: PrototypeGraph  # cropped prototype graph used by the model
    cfg: ExperimentConfig
    log: list[dict] = field(default_factory=list)
    best_val: float | None = None
    stopped_at: int | None = None

    def save(self, path) -> None:
        arrays = self.model.state_dict()
        arrays["synthesizer.mapping"] = self.synthesizer.mapping
        arrays["synthesizer.noise"] = self.synthesizer.noise
        arrays["graph.weights"] = self.graph.weights
        save_arrays(path, arrays, {"config": self.cfg.to_dict(), "classes": list(self.graph.class_ids)})


def load_checkpoint_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_arrays(path)[1]["config"])


def load_checkpoint(path, ds: Dataset) -> Trained:
    arrays, extra = load_arrays(path)
    cfg = ExperimentConfig.from_dict(extra["config"])
    model = TGGModel(cfg, ds.feature_dim, np.random.default_rng(0))
    model.load_state_dict(arrays)
    sy = synth_mod.ConditionalSynthesizer(
        arrays["synthesizer.mapping"], arrays["synthesizer.noise"], ds.attributes, residual=float("nan")
    )
    g = PrototypeGraph(tuple(extra["classes"]), arrays["graph.weights"])
    return Trained(model.eval(), sy, g, cfg)


def episode_seed(base: int, i: int) -> int:
    return int(np.random.SeedSequence([base, i]).generate_state(1)[0])


def validation_accuracy(model: TGGModel, ds: Dataset, g: PrototypeGraph, sy, cfg: ExperimentConfig) -> float | None:
    """Query accuracy on held-out seen-class instances over fixed-seed episodes."""
    if ds.split("val").size == 0:
        return None
    hits = total = 0
    for j in range(cfg.val_episodes):
        rng = np.random.default_rng(episode_seed(cfg.seed, 1_000_000 + j))
        ep = build_episode(ds, g, sy, cfg, rng, query_split="val")
        pred = query_predictions(model, ep, episode_graph(g, ep.classes), rng)
        hits += int(np.sum(pred == ep.labels[ep.query]))
        total += int(ep.query.sum())
    return hits / total if total else None


def train(ds: Dataset, g: PrototypeGraph, cfg: ExperimentConfig, log_path=None) -> Trained:
    """Episodic Adam training with early stopping on validation accuracy."""
    sy = synth_mod.fit(ds, cfg.synth_ridge)
    gc = crop(g, cfg.crop_threshold)
    model = TGGModel(cfg, ds.feature_dim, np.random.default_rng(cfg.seed))
    opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    result = Trained(model, sy, gc, cfg)
    best_state, stale = None, 0
    for i in range(cfg.episodes + 1):
        val = None
        if cfg.val_every and i % cfg.val_every == 0:
            val = validation_accuracy(model, ds, gc, sy, cfg)
            if val is not None:
                if result.best_val is None or val > result.best_val:
                    result.best_val, best_state, stale = val, model.state_dict(), 0
                else:
                    if val == result.best_val:
                        # ties keep the later state; seen-class validation saturates early
                        best_state = model.state_dict()
                    stale += cfg.val_episodes
        if i == cfg.episodes or (cfg.patience and stale >= cfg.patience):
            result.stopped_at = i
            if val is not None:
                result.log.append(dict.fromkeys(LOG_FIELDS, "") | {"episode": i, "val_acc": val})
            break
        seed = episode_seed(cfg.seed, i)
        rng = np.random.default_rng(seed)
        ep = build_episode(ds, gc, sy, cfg, rng)
        ep_g = episode_graph(gc, ep.classes)
        opt.zero_grad()
        losses = episode_loss(ep, model, ep_g, rng)
        lc, ld, lk, total = losses.values()
        if not np.isfinite(total):
            raise DivergenceError(f"loss is {total} at episode {i} (seed {seed})")
        losses.total.backward()
        opt.step()
        pred = losses.forward.Y_star.data[ep.query].argmax(1)
        acc = float(np.mean(pred == ep.labels[ep.query])) if ep.query.any() else float("nan")
        result.log.append(
            {"episode": i, "seed": seed, "loss_c": lc, "loss_d": ld, "loss_k": lk, "total": total, "acc": acc,
             "val_acc": "" if val is None else val}
        )
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    if log_path is not None:
        write_log(result.log, log_path)
    return result


def write_log(log: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        w.writerows(log)


# -- evaluation ----------------------------------------------------------------------


def harmonic_mean(acc_s: float, acc_u: float) -> float:
    return 0.0 if acc_s + acc_u == 0 else 2 * acc_s * acc_u / (acc_s + acc_u)


def _predict_split(trained: Trained, ds: Dataset, classes, rows, rng, fill) -> np.ndarray:
    """Global predicted class for every row, in chunks of the query batch size."""
    cfg = trained.cfg
    chunk = cfg.eval_queries or cfg.n_query or len(rows)
    out = np.empty(len(rows), dtype=np.int64)
    order = rng.permutation(len(rows))
    g_ep = episode_graph(trained.graph, np.asarray(classes))
    for start in range(0, len(rows), chunk):
        sel = order[start : start + chunk]
        support, n_support = {}, {}
        for c in classes:
            if c in ds.unseen_classes:
                real = ds.instances_of(c, "train")
                support[c] = rng.permutation(real)
                n_support[c] = unseen_support_size(cfg, len(real) > 0)
            else:
                support[c] = rng.permutation(ds.instances_of(c, "train"))[: cfg.k_shot]
                n_support[c] = cfg.k_shot
        queries = {c: rows[sel][ds.labels[rows[sel]] == c] for c in classes}
        ep = _assemble(ds, trained.synthesizer, classes, support, queries, n_support, rng, fill)
        pred = np.asarray(classes)[query_predictions(trained.model, ep, g_ep, rng)]
        out[np.searchsorted(rows, ep.rows[ep.query])] = pred
    return out


def evaluate(trained: Trained, ds: Dataset, mode: str | None = None, trials: int | None = None, seed: int | None = None) -> dict:
    """Top-1 accuracies averaged over ``trials`` independent evaluation passes.

    ``zsl`` and ``fsl`` classify unseen test instances among unseen classes;
    ``gzsl`` classifies seen and unseen test instances among all classes.
    FSL needs a dataset whose train split carries the unseen shots.
    """
    cfg = trained.cfg
    mode = mode or cfg.mode
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "fsl" and not ds.shots():
        raise EpisodeError("fsl evaluation needs unseen support instances in the train split")
    if mode == "zsl" and ds.shots():
        raise EpisodeError("zsl evaluation needs a dataset without unseen support instances")
    trials = cfg.eval_trials if trials is None else trials
    seed = cfg.seed if seed is None else seed
    unseen = sorted(ds.unseen_classes)
    per_trial = []
    for t in range(trials):
        rng = np.random.default_rng(episode_seed(seed, 2_000_000 + t))
        if mode in ("zsl", "fsl"):
            rows = np.sort(ds.split("test_unseen"))
            pred = _predict_split(trained, ds, unseen, rows, rng, cfg.fsl_fill)
            per_trial.append({"acc": float(np.mean(pred == ds.labels[rows]))})
        else:
            rows = np.sort(np.concatenate([ds.split("test_seen"), ds.split("test_unseen")]))
            pred = _predict_split(trained, ds, sorted(ds.seen_classes | ds.unseen_classes), rows, rng, cfg.fsl_fill)
            hit = pred == ds.labels[rows]
            is_u = np.isin(ds.labels[rows], unseen)
            s, u = float(hit[~is_u].mean()), float(hit[is_u].mean())
            per_trial.append({"acc_s": s, "acc_u": u, "hm": harmonic_mean(s, u)})
    keys = per_trial[0].keys()
    metrics = {k: float(np.mean([p[k] for p in per_trial])) for k in keys}
    metrics.update({f"{k}_std": float(np.std([p[k] for p in per_trial])) for k in keys})
    metrics.update({"mode": mode, "trials": trials})
    return metrics


# -- sweep and setup -----------------------------------------------------------------


def sensitivity_sweep(ds: Dataset, g: PrototypeGraph, cfg: ExperimentConfig, thresholds, csv_path=None) -> list[tuple[float, float]]:
    """ZSL accuracy after training on the prototype graph cropped at each threshold."""
    thresholds = sorted(float(t) for t in thresholds)
    if any(not 0 <= t <= 1 for t in thresholds):
        raise ConfigError("thresholds must lie in [0, 1]")
    table, done = [], {}
    for t in thresholds:
        # thresholds that crop to the same graph give the same deterministic run
        key = crop(g, t).weights.tobytes()
        if key not in done:
            run = replace(cfg, crop_threshold=t, mode="zsl")
            done[key] = evaluate(train(ds, g, run), ds, "zsl")["acc"]
        table.append((t, done[key]))
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "accuracy"])
            w.writerows(table)
    return table


def load_experiment_data(cfg: ExperimentConfig, base: Path | None = None) -> tuple[Dataset, PrototypeGraph]:
    """Dataset and full prototype graph named by the config."""
    base = Path(".") if base is None else Path(base)
    if cfg.data is not None:
        paths = [base / cfg.data[k] for k in ("features", "attributes", "splits")]
        ds = load_dataset(*paths)
    elif cfg.synthetic is not None:
        ds = generate_synthetic(SyntheticSpec(**cfg.synthetic))
    else:
        raise ConfigError("config needs either a 'data' or a 'synthetic' section")
    if cfg.graph is not None:
        g = from_edge_list(base / cfg.graph, ds.class_names)
    else:
        g = from_attributes(ds.attributes, ds.class_names)
    return ds, g
