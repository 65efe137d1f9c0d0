"""Joint and single-task training with seeded determinism, document
batching, pooled per-task losses, and best-dev checkpointing."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import backward
from .checkpoint import load_checkpoint, restore_params, save_checkpoint
from .corpus import (
    Document, GraphStore, LabelScheme, REL_TYPES, StaticEventGraph,
)
from .embeddings import FrozenFileBackend, TrainableLookup
from .evaluator import evaluate
from .model import (
    ABLATE_STATIC, DEFAULT_EPSILONS, GraphEREModel, ModelConfig, joint_loss,
    task_losses,
)
from .optim import AdamW, ParamGroup

logger = logging.getLogger("graphere.trainer")

DEFAULT_LAMBDAS = {"coreference": 0.5, "temporal": 1.0, "causal": 5.0, "subevent": 5.0}


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    mode: str = "joint"  # "joint" or "split:<rel_type>"
    lambdas: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_LAMBDAS))
    beta: float = 0.8
    epsilons: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EPSILONS))
    epochs: int = 30
    batch_size: int = 8
    lr_backbone: float = 2e-5
    lr_other: float = 5e-4
    weight_decay: float = 0.01
    seed: int = 0
    d_h: int = 64
    head_count: int = 4
    dropout_rate: float = 0.3
    max_tokens: int = 512
    leaky_slope: float = 0.01
    activation: str = "relu"
    gcn_layers: int = 1
    dev_fraction: float = 0.1
    ablations: tuple[str, ...] = ()

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        for rel, lam in self.lambdas.items():
            if lam <= 0:
                raise ValueError(f"lambda for '{rel}' must be > 0, got {lam}")
        self.active_tasks()  # validates mode
        self.ablations = tuple(self.ablations)

    def active_tasks(self) -> tuple[str, ...]:
        if self.mode == "joint":
            return REL_TYPES
        if self.mode.startswith("split:"):
            rel = self.mode.split(":", 1)[1]
            if rel not in REL_TYPES:
                raise ValueError(f"unknown relation type in mode '{self.mode}'")
            return (rel,)
        raise ValueError(f"mode must be 'joint' or 'split:<rel_type>', got '{self.mode}'")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            d_h=self.d_h, head_count=self.head_count, dropout_rate=self.dropout_rate,
            beta=self.beta, epsilons=dict(self.epsilons), leaky_slope=self.leaky_slope,
            activation=self.activation, max_tokens=self.max_tokens,
            gcn_layers=self.gcn_layers, ablations=self.ablations,
        )

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "TrainConfig":
        raw = json.loads(Path(path).read_text())
        raw.update(overrides or {})
        return cls(**raw)


@dataclass
class CorpusBundle:
    documents: list[Document]
    graphs: dict[str, tuple[StaticEventGraph, StaticEventGraph]] | None
    backend: object
    scheme: LabelScheme

    def graphs_for(self, doc: Document):
        if self.graphs is None:
            return None
        return self.graphs.get(doc.doc_id)


def load_bundle(corpus_path, graphs_path=None, embeddings_dir=None,
                scheme: LabelScheme | None = None, d_h: int = 64,
                seed: int = 0, need_graphs: bool = True) -> CorpusBundle:
    """Assemble documents, static graphs, and an embedding backend from the
    on-disk formats. Without an embeddings dir, a trainable lookup over the
    corpus vocabulary is used."""
    scheme = scheme or LabelScheme.default()
    from .corpus import load_corpus  # local import to keep module load light
    docs = load_corpus(corpus_path, scheme)
    graphs = None
    if graphs_path is not None:
        store = GraphStore(graphs_path)
        graphs = {doc.doc_id: store.for_document(doc) for doc in docs}
    elif need_graphs:
        raise ValueError("static graphs are required unless the static pathway is ablated")
    if embeddings_dir is not None:
        backend = FrozenFileBackend(embeddings_dir)
    else:
        backend = TrainableLookup.from_documents(docs, dim=d_h, seed=seed)
    return CorpusBundle(docs, graphs, backend, scheme)


class _CompositeBackend:
    """Dispatch per-document embedding lookups across several backends
    (documents must not share ids)."""

    def __init__(self, backends):
        dims = {b.dim for b in backends}
        if len(dims) != 1:
            raise ValueError(f"backends disagree on dim: {sorted(dims)}")
        self.backends = list(backends)
        self.dim = dims.pop()
        self.kind = "composite"

    def parameters(self):
        out = {}
        for b in self.backends:
            out.update(b.parameters())
        return out

    def _owner(self, doc):
        for b in self.backends:
            entries = getattr(b, "entries", None)
            if entries is None or doc.doc_id in entries:
                return b
        raise KeyError(f"no backend holds document '{doc.doc_id}'")

    def embed_window(self, doc, window):
        return self._owner(doc).embed_window(doc, window)

    def embed_text_tokens(self, tokens):
        return self.backends[0].embed_text_tokens(tokens)


def merge_bundles(*bundles: CorpusBundle) -> CorpusBundle:
    """Concatenate corpora (distinct doc ids) into one bundle."""
    docs = []
    ids = set()
    for b in bundles:
        for d in b.documents:
            if d.doc_id in ids:
                raise ValueError(f"duplicate doc_id across bundles: '{d.doc_id}'")
            ids.add(d.doc_id)
            docs.append(d)
    graphs = None
    if any(b.graphs is not None for b in bundles):
        graphs = {}
        for b in bundles:
            graphs.update(b.graphs or {})
    backends = [b.backend for b in bundles]
    backend = backends[0] if len(set(map(id, backends))) == 1 else _CompositeBackend(backends)
    return CorpusBundle(docs, graphs, backend, bundles[0].scheme)


@dataclass
class EpochRecord:
    epoch: int
    task_losses: dict[str, float]
    dev_metrics: dict | None
    dev_selection_f1: float | None


@dataclass
class TrainReport:
    config: dict
    n_train_docs: int
    n_dev_docs: int
    n_batches: int
    epochs: list[EpochRecord]
    best_epoch: int | None
    checkpoint_path: str | None
    wall_clock_sec: float

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_train_docs": self.n_train_docs,
            "n_dev_docs": self.n_dev_docs,
            "n_batches": self.n_batches,
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "checkpoint_path": self.checkpoint_path,
            "wall_clock_sec": self.wall_clock_sec,
        }

    def deterministic_digest(self) -> str:
        """JSON of the seed-reproducible content (paths and timing excluded)."""
        d = self.to_dict()
        d.pop("wall_clock_sec")
        d.pop("checkpoint_path")
        return json.dumps(d, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def _optimizer_for(model: GraphEREModel, config: TrainConfig) -> AdamW:
    params = model.parameters()
    backbone_names = model.backbone_param_names()
    active = config.active_tasks()
    inactive = [rel for rel in REL_TYPES if rel not in active]

    def in_scope(name: str) -> bool:
        return not any(name.startswith(f"dynamic.{rel}.") or
                       name.startswith(f"classifier.{rel}.") for rel in inactive)

    backbone = {n: p for n, p in params.items() if n in backbone_names and in_scope(n)}
    other = {n: p for n, p in params.items() if n not in backbone_names and in_scope(n)}
    groups = []
    if backbone:
        groups.append(ParamGroup(backbone, lr=config.lr_backbone))
    groups.append(ParamGroup(other, lr=config.lr_other))
    return AdamW(groups, weight_decay=config.weight_decay)


def _selection_f1(metrics: dict, config: TrainConfig) -> float:
    active = config.active_tasks()
    return sum(metrics["tasks"][rel]["F1"] for rel in active) / len(active)


def fit(bundle: CorpusBundle, config: TrainConfig, out_dir,
        dev_documents: list[Document] | None = None) -> TrainReport:
    """Train a fresh model; returns the report and leaves the best-dev
    checkpoint plus report JSON in out_dir."""
    start = time.monotonic()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = GraphEREModel(config.model_config(), bundle.scheme, bundle.backend,
                          seed=config.seed)
    params = model.parameters()
    opt = _optimizer_for(model, config)
    opt_params = {n for g in opt.groups for n in g.params}
    active = config.active_tasks()

    docs = list(bundle.documents)
    if dev_documents is None:
        split_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 17]))
        n_dev = int(round(config.dev_fraction * len(docs)))
        dev_idx = set(map(int, split_rng.choice(len(docs), size=n_dev, replace=False))) \
            if n_dev else set()
        dev_docs = [d for i, d in enumerate(docs) if i in dev_idx]
        train_docs = [d for i, d in enumerate(docs) if i not in dev_idx]
    else:
        dev_docs = list(dev_documents)
        train_docs = docs

    epoch_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 23]))
    records: list[EpochRecord] = []
    best_f1 = -1.0
    best_epoch = None
    ckpt_path = out_dir / "checkpoint-best"
    n_batches_total = 0

    for epoch in range(1, config.epochs + 1):
        order = epoch_rng.permutation(len(train_docs)) if train_docs else []
        sums = {rel: 0.0 for rel in active}
        counts = {rel: 0 for rel in active}
        for b0 in range(0, len(order), config.batch_size):
            batch = [train_docs[i] for i in order[b0:b0 + config.batch_size]]
            n_batches_total += 1
            forwards = [
                model.forward_document(
                    doc, bundle.graphs_for(doc), training=True,
                    rng_seed=int(epoch_rng.integers(2 ** 63)), tasks=active)
                for doc in batch
            ]
            losses = task_losses(forwards)
            total = joint_loss(losses, config.lambdas, tasks=active)
            bad = [rel for rel in active
                   if losses[rel] is not None and not np.isfinite(losses[rel].data)]
            if bad or not np.isfinite(total.data):
                dump = {
                    "epoch": epoch, "batch_index": b0 // config.batch_size,
                    "doc_ids": [d.doc_id for d in batch],
                    "task_losses": {rel: (None if losses[rel] is None
                                          else float(losses[rel].data))
                                    for rel in active},
                }
                (out_dir / "nan_dump.json").write_text(json.dumps(dump, indent=1))
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; batch dumped to nan_dump.json")
            for rel in active:
                if losses[rel] is not None:
                    sums[rel] += float(losses[rel].data)
                    counts[rel] += 1
            if total.requires_grad:
                backward(total)
                for name in opt_params:
                    if params[name].grad is None:
                        params[name].grad = np.zeros_like(params[name].data)
                opt.step()

        mean_losses = {rel: (sums[rel] / counts[rel] if counts[rel] else 0.0)
                       for rel in active}
        dev_metrics = None
        dev_f1 = None
        if dev_docs:
            preds = []
            for doc in dev_docs:
                preds.extend(model.predict_document(doc, bundle.graphs_for(doc)))
            dev_metrics = evaluate(dev_docs, preds)
            dev_f1 = _selection_f1(dev_metrics, config)
            if dev_f1 > best_f1:
                best_f1 = dev_f1
                best_epoch = epoch
                save_checkpoint(params, ckpt_path)
        records.append(EpochRecord(epoch, mean_losses, dev_metrics, dev_f1))
        logger.info("epoch %d: losses=%s dev_f1=%s", epoch, mean_losses, dev_f1)

    if best_epoch is None:  # no dev set: keep the final parameters
        save_checkpoint(params, ckpt_path)
        best_epoch = config.epochs if train_docs else None
    else:  # leave the model holding the weights that were checkpointed
        restore_params(params, load_checkpoint(ckpt_path))

    report = TrainReport(
        config=_config_dict(config),
        n_train_docs=len(train_docs),
        n_dev_docs=len(dev_docs),
        n_batches=n_batches_total,
        epochs=records,
        best_epoch=best_epoch,
        checkpoint_path=str(ckpt_path),
        wall_clock_sec=time.monotonic() - start,
    )
    report.save(out_dir / "train_report.json")
    return report


def _config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["ablations"] = list(config.ablations)
    return d


def build_model(bundle: CorpusBundle, config: TrainConfig,
                checkpoint_dir=None) -> GraphEREModel:
    """Fresh model wired to the bundle; optionally restored from a checkpoint."""
    model = GraphEREModel(config.model_config(), bundle.scheme, bundle.backend,
                          seed=config.seed)
    if checkpoint_dir is not None:
        restore_params(model.parameters(), load_checkpoint(checkpoint_dir))
    return model
