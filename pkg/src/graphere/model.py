"""The full GraphERE forward pass: embeddings -> static-graph mix ->
node transformer -> per-task dynamic graphs -> pair classifiers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .classifier import PairPrediction, TaskClassifier, decode_predictions, init_classifier, pair_logits
from .corpus import (
    CandidatePair, Document, LabelScheme, REL_TYPES, StaticEventGraph, TEMPORAL,
    enumerate_pairs, segment_document,
)
from .dynamic_graph import (
    DynamicGraphHead, SimilarityMatrix, gcn_refine, init_head, retained_edges,
    sparsify, weighted_cosine,
)
from .embeddings import MentionEmbeddings, collect_mentions
from .node_transformer import NodeTransformerLayer, init_layer, node_transform
from .static_graph import GatLayer, encode_static_graphs

logger = logging.getLogger("graphere.model")

DEFAULT_EPSILONS = {"coreference": 0.6, "temporal": 0.4, "causal": 0.6, "subevent": 0.8}

ABLATE_STATIC = "static"
ABLATE_DYNAMIC = "dynamic"
ABLATE_TRANSFORMER = "transformer"
ABLATIONS = (ABLATE_STATIC, ABLATE_DYNAMIC, ABLATE_TRANSFORMER)


@dataclass
class ModelConfig:
    d_h: int = 64
    head_count: int = 4
    dropout_rate: float = 0.3
    beta: float = 0.8
    epsilons: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EPSILONS))
    leaky_slope: float = 0.01
    activation: str = "relu"
    max_tokens: int = 512
    gcn_layers: int = 1
    ablations: tuple[str, ...] = ()

    def __post_init__(self):
        for flag in self.ablations:
            if flag not in ABLATIONS:
                raise ValueError(f"unknown ablation '{flag}', expected one of {ABLATIONS}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"mix ratio must be in [0, 1], got {self.beta}")
        missing = [rel for rel in REL_TYPES if rel not in self.epsilons]
        if missing:
            raise ValueError(f"epsilons missing for {missing}")


@dataclass
class DocumentForward:
    """Per-task pair lists, logits, and gold labels for one document."""

    doc_id: str
    pairs: dict[str, list[CandidatePair]]
    logits: dict[str, Tensor]
    adjacency: dict[str, SimilarityMatrix | None]


class GraphEREModel:
    """All learnable components plus the forward pass over documents.

    Construction is seeded and deterministic; the parameter registry gives
    stable names for checkpointing and the optimizer.
    """

    def __init__(self, config: ModelConfig, scheme: LabelScheme, backend, seed: int = 0):
        self.config = config
        self.scheme = scheme
        self.backend = backend
        d = config.d_h
        if backend.dim != d:
            raise ValueError(f"backend dim {backend.dim} != configured d_h {d}")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0DE]))
        bound = 1.0 / np.sqrt(d)
        self.amr_layer = GatLayer(
            "amr", Tensor(rng.uniform(-bound, bound, size=(d, d)), requires_grad=True),
            leaky_slope=config.leaky_slope, activation=config.activation)
        self.ie_layer = GatLayer(
            "ie", Tensor(rng.uniform(-bound, bound, size=(d, d)), requires_grad=True),
            leaky_slope=config.leaky_slope, activation=config.activation)
        self.transformer = init_layer(d, config.head_count, rng,
                                      dropout_rate=config.dropout_rate)
        self.heads: dict[str, DynamicGraphHead] = {}
        self.classifiers: dict[str, TaskClassifier] = {}
        for rel in REL_TYPES:
            self.heads[rel] = init_head(rel, d, config.epsilons[rel], rng,
                                        gcn_layers=config.gcn_layers,
                                        activation=config.activation)
            self.classifiers[rel] = init_classifier(rel, d, scheme.class_count(rel), rng)
        self._frozen_masks: dict[tuple[str, str], np.ndarray] | None = None

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        params.update(self.backend.parameters())
        params["gat.amr.weight"] = self.amr_layer.transform
        params["gat.ie.weight"] = self.ie_layer.transform
        for k, proj in enumerate(self.transformer.head_projections):
            params[f"transformer.head{k}.projection"] = proj
        params["transformer.output"] = self.transformer.output
        for rel in REL_TYPES:
            head = self.heads[rel]
            params[f"dynamic.{rel}.cosine_weight"] = head.cosine_weight
            for l, (w, b) in enumerate(zip(head.gcn_weights, head.gcn_biases)):
                params[f"dynamic.{rel}.gcn{l}.weight"] = w
                params[f"dynamic.{rel}.gcn{l}.bias"] = b
            clf = self.classifiers[rel]
            params[f"classifier.{rel}.weight"] = clf.weight
            params[f"classifier.{rel}.bias"] = clf.bias
        return params

    def backbone_param_names(self) -> set[str]:
        return set(self.backend.parameters())

    # -- mask freezing (for finite-difference checks) -----------------------

    def freeze_masks(self) -> None:
        """Reuse the sparsification masks captured on the next forward passes;
        finite-difference probes then see a fixed graph topology."""
        self._frozen_masks = {}

    def unfreeze_masks(self) -> None:
        self._frozen_masks = None

    # -- forward ------------------------------------------------------------

    def forward_document(self, doc: Document,
                         graphs: tuple[StaticEventGraph, StaticEventGraph] | None,
                         training: bool, rng_seed: int = 0,
                         tasks: tuple[str, ...] = REL_TYPES) -> DocumentForward:
        cfg = self.config
        windows = segment_document(doc, cfg.max_tokens)
        mentions = collect_mentions(doc, windows, self.backend)
        p, q = mentions.n_events, mentions.n_timexes

        if ABLATE_STATIC in cfg.ablations or graphs is None:
            gh_events = ad.slice_rows(mentions.matrix, 0, p)
        else:
            gh_events = encode_static_graphs(
                mentions, graphs[0], graphs[1], doc, self.backend,
                self.amr_layer, self.ie_layer, cfg.beta)
        if q:
            gh = ad.concat_rows([gh_events, ad.slice_rows(mentions.matrix, p, p + q)])
        else:
            gh = gh_events

        if ABLATE_TRANSFORMER in cfg.ablations:
            refined_input = gh
        else:
            refined_input = node_transform(self.transformer, gh, training, rng_seed)

        pairs: dict[str, list[CandidatePair]] = {}
        logits: dict[str, Tensor] = {}
        adjacency: dict[str, SimilarityMatrix | None] = {}
        for rel in tasks:
            rel_pairs = enumerate_pairs(doc, rel, self.scheme)
            if rel == TEMPORAL or q == 0:
                node_rows = refined_input
            else:
                node_rows = ad.slice_rows(refined_input, 0, p)
            adjacency[rel] = None
            if ABLATE_DYNAMIC in cfg.ablations or node_rows.data.shape[0] == 0:
                refined = node_rows
            else:
                head = self.heads[rel]
                sim = weighted_cosine(node_rows, head.cosine_weight)
                if self._frozen_masks is not None:
                    key = (doc.doc_id, rel)
                    if key not in self._frozen_masks:
                        self._frozen_masks[key] = sparsify(sim, head.epsilon).mask
                    mask = self._frozen_masks[key]
                    adj = SimilarityMatrix(sim, mask, ad.mul_mask(sim, mask))
                else:
                    adj = sparsify(sim, head.epsilon)
                adjacency[rel] = adj
                refined = gcn_refine(node_rows, adj, head)
            pairs[rel] = rel_pairs
            logits[rel] = pair_logits(refined, rel_pairs, self.classifiers[rel])
        return DocumentForward(doc.doc_id, pairs, logits, adjacency)

    def predict_document(self, doc: Document,
                         graphs: tuple[StaticEventGraph, StaticEventGraph] | None
                         ) -> list[PairPrediction]:
        fwd = self.forward_document(doc, graphs, training=False)
        preds: list[PairPrediction] = []
        for rel in REL_TYPES:
            preds.extend(decode_predictions(
                doc.doc_id, rel, fwd.pairs[rel], fwd.logits[rel], self.scheme))
        return preds

    def dump_dynamic_edges(self, doc: Document,
                           graphs: tuple[StaticEventGraph, StaticEventGraph] | None
                           ) -> list[dict]:
        """Retained dynamic edges per head for one document (diagnostics)."""
        fwd = self.forward_document(doc, graphs, training=False)
        records = []
        for rel in REL_TYPES:
            adj = fwd.adjacency[rel]
            if adj is None:
                continue
            for i, j, s in retained_edges(adj):
                records.append({"doc_id": doc.doc_id, "type": rel,
                                "i": i, "j": j, "similarity": s})
        return records


def task_losses(forwards: list[DocumentForward]) -> dict[str, Tensor | None]:
    """Pooled mean cross-entropy per task over all candidate pairs in the
    batch; tasks with no pairs contribute None (exactly zero loss)."""
    losses: dict[str, Tensor | None] = {}
    for rel in REL_TYPES:
        logit_blocks, labels = [], []
        for fwd in forwards:
            if fwd.pairs.get(rel):
                logit_blocks.append(fwd.logits[rel])
                labels.extend(p.gold_class for p in fwd.pairs[rel])
        if not logit_blocks:
            losses[rel] = None
            continue
        block = logit_blocks[0] if len(logit_blocks) == 1 else ad.concat_rows(logit_blocks)
        losses[rel] = ad.cross_entropy_from_logits(block, np.array(labels))
    return losses


def joint_loss(losses: dict[str, Tensor | None], lambdas: dict[str, float],
               tasks: tuple[str, ...] = REL_TYPES) -> Tensor:
    """Lambda-weighted sum of the per-task losses over the given tasks."""
    total: Tensor | None = None
    for rel in tasks:
        loss = losses.get(rel)
        if loss is None:
            continue
        term = ad.scale(loss, lambdas[rel])
        total = term if total is None else ad.add(total, term)
    if total is None:
        return Tensor(np.zeros(()))
    return total
