"""Graph attention encoding of static event graphs and the mix into
graph-enhanced event embeddings.

Attention is single-layer, single-head: coefficients are inner products of
transformed features over the undirected neighborhood (no self-loops), passed
through LeakyReLU and normalized per node. Events keep a residual connection,
so nodes missing from a graph simply contribute nothing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Document, StaticEventGraph
from .embeddings import MentionEmbeddings

logger = logging.getLogger("graphere.static_graph")


@dataclass
class GatLayer:
    flavor: str
    transform: Tensor  # (d, d)
    leaky_slope: float = 0.01
    activation: str = "relu"


def neighbor_mask(graph: StaticEventGraph) -> np.ndarray:
    """Undirected adjacency over node order, zero diagonal."""
    index = {n.node_id: i for i, n in enumerate(graph.nodes)}
    n = len(graph.nodes)
    mask = np.zeros((n, n))
    for src, dst, _ in graph.edges:
        i, j = index[src], index[dst]
        if i != j:
            mask[i, j] = 1.0
            mask[j, i] = 1.0
    return mask


def build_node_features(mentions: MentionEmbeddings, graph: StaticEventGraph,
                        doc: Document, backend) -> Tensor:
    """Initial node features: aligned event nodes reuse the event's mention
    embedding; other nodes get the mean embedding of their surface tokens."""
    event_row = {m.mention_id: i for i, m in enumerate(doc.events)}
    rows = []
    for node in graph.nodes:
        mention_id = graph.alignment.get(node.node_id)
        if mention_id is not None:
            rows.append(mentions.event_rows[event_row[mention_id]])
        else:
            rows.append(backend.embed_text_tokens(node.surface.split() or [node.surface]))
    if not rows:
        return Tensor(np.zeros((0, backend.dim)))
    return ad.concat_rows(rows)


def attention_coefficients(layer: GatLayer, node_feats: Tensor,
                           graph: StaticEventGraph) -> tuple[Tensor, np.ndarray]:
    """Normalized attention weights over each node's neighbors.

    Returns the (N, N) alpha matrix (rows with no neighbors are zero) and the
    constant neighbor mask used.
    """
    mask = neighbor_mask(graph)
    projected = ad.matmul(node_feats, layer.transform.T)
    scores = ad.matmul(projected, projected.T)
    scores = ad.leaky_relu(scores, layer.leaky_slope)
    alpha = ad.masked_softmax_rows(scores, mask)
    return alpha, mask


def gat_node_update(layer: GatLayer, node_feats: Tensor,
                    graph: StaticEventGraph) -> Tensor:
    """One round of attention-weighted neighbor aggregation (isolated nodes
    receive the zero vector before the activation)."""
    if len(graph.nodes) == 0:
        return node_feats
    alpha, _ = attention_coefficients(layer, node_feats, graph)
    projected = ad.matmul(node_feats, layer.transform.T)
    agg = ad.matmul(alpha, projected)
    return ad.ACTIVATIONS[layer.activation](agg)


def event_rows_from_graph(node_out: Tensor, graph: StaticEventGraph,
                          doc: Document) -> Tensor:
    """Scatter per-node GAT outputs into one row per document event.

    Events with no aligned node get a zero row; if several nodes align to the
    same event their outputs are averaged.
    """
    p = len(doc.events)
    n = len(graph.nodes)
    event_row = {m.mention_id: i for i, m in enumerate(doc.events)}
    if n == 0:
        return Tensor(np.zeros((p, node_out.data.shape[1])))
    sel = np.zeros((p, n))
    counts = np.zeros(p)
    for ni, node in enumerate(graph.nodes):
        mention_id = graph.alignment.get(node.node_id)
        if mention_id is not None:
            sel[event_row[mention_id], ni] = 1.0
            counts[event_row[mention_id]] += 1
    nonzero = counts > 0
    sel[nonzero] /= counts[nonzero, None]
    return ad.matmul(Tensor(sel), node_out)


def mix_embeddings(h_event: Tensor, h_amr: Tensor, h_ie: Tensor,
                   beta: float) -> Tensor:
    """Residual mix of the two graph encodings: h + beta*amr + (1-beta)*ie."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"mix ratio must be in [0, 1], got {beta}")
    return ad.add(h_event, ad.add(ad.scale(h_amr, beta), ad.scale(h_ie, 1.0 - beta)))


def encode_static_graphs(mentions: MentionEmbeddings, amr: StaticEventGraph,
                         ie: StaticEventGraph, doc: Document, backend,
                         amr_layer: GatLayer, ie_layer: GatLayer,
                         beta: float) -> Tensor:
    """Full static-graph pathway for one document's events: GAT per flavor,
    scatter to event rows, then the residual mix."""
    p = len(doc.events)
    dim = backend.dim
    parts = []
    for graph, layer in ((amr, amr_layer), (ie, ie_layer)):
        if len(graph.nodes) == 0:
            parts.append(Tensor(np.zeros((p, dim))))
            continue
        feats = build_node_features(mentions, graph, doc, backend)
        node_out = gat_node_update(layer, feats, graph)
        parts.append(event_rows_from_graph(node_out, graph, doc))
    h_event = ad.slice_rows(mentions.matrix, 0, p) if p else Tensor(np.zeros((0, dim)))
    return mix_embeddings(h_event, parts[0], parts[1], beta)
