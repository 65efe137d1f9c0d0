"""Task-specific dynamic event graphs: weighted-cosine similarity,
threshold sparsification, and degree-normalized graph convolution.

One head per relation type. The similarity matrix is symmetric with a unit
diagonal, so any threshold below 1 keeps every node's self-loop. The
threshold mask is a constant during backward (gradients only flow through
the surviving similarity values), and the convolution follows the adjacency
as a neighbor-set indicator: retained edge weights do not scale messages.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

logger = logging.getLogger("graphere.dynamic_graph")


@dataclass
class DynamicGraphHead:
    rel_type: str
    cosine_weight: Tensor  # (d,)
    epsilon: float
    gcn_weights: list[Tensor]  # (d, d) per layer
    gcn_biases: list[Tensor]  # (d,) per layer
    activation: str = "relu"

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(
                f"threshold for '{self.rel_type}' must be in [0, 1), got {self.epsilon}"
            )


def init_head(rel_type: str, d_h: int, epsilon: float, rng: np.random.Generator,
              gcn_layers: int = 1, activation: str = "relu") -> DynamicGraphHead:
    bound = 1.0 / np.sqrt(d_h)
    weights = [Tensor(rng.uniform(-bound, bound, size=(d_h, d_h)), requires_grad=True)
               for _ in range(gcn_layers)]
    biases = [Tensor(np.zeros(d_h), requires_grad=True) for _ in range(gcn_layers)]
    # Hadamard identity: plain cosine until anything changes it
    cosine_weight = Tensor(np.ones(d_h), requires_grad=True)
    return DynamicGraphHead(rel_type, cosine_weight, epsilon, weights, biases,
                            activation=activation)


@dataclass
class SimilarityMatrix:
    similarities: Tensor  # S: (N, N), symmetric, unit diagonal
    mask: np.ndarray  # {0,1}, constant
    adjacency: Tensor  # A = mask * S


def weighted_cosine(features: Tensor, weight: Tensor) -> Tensor:
    """Pairwise cosine similarity of weight-scaled rows, diagonal forced to 1.

    Rows whose weighted vector has zero norm similarity to everything is 0
    (logged); their diagonal entry is still 1.
    """
    weighted = ad.mul(features, weight)
    norms = np.linalg.norm(weighted.data, axis=1)
    if (norms <= 1e-12).any():
        dead = int((norms <= 1e-12).sum())
        logger.warning("weighted cosine: %d zero-norm rows, similarities set to 0", dead)
    unit = ad.row_normalize(weighted)
    sim = ad.matmul(unit, unit.T)
    return ad.set_diag_one(sim)


def sparsify(similarities: Tensor, epsilon: float) -> SimilarityMatrix:
    """Zero out entries <= epsilon; the mask is a stop-gradient constant."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"threshold must be in [0, 1), got {epsilon}")
    mask = (similarities.data > epsilon).astype(np.float64)
    return SimilarityMatrix(
        similarities=similarities,
        mask=mask,
        adjacency=ad.mul_mask(similarities, mask),
    )


def gcn_refine(features: Tensor, adjacency: SimilarityMatrix,
               head: DynamicGraphHead) -> Tensor:
    """Degree-normalized neighbor aggregation over the retained edges.

    Message from j to i is scaled by 1/(sqrt(|A(i)|) sqrt(|A(j)|)); the
    adjacency serves purely as the neighbor-set indicator. Self-loops are
    guaranteed by the unit similarity diagonal.
    """
    mask = adjacency.mask
    degrees = mask.sum(axis=1)
    inv_sqrt = np.divide(1.0, np.sqrt(degrees), out=np.zeros_like(degrees),
                         where=degrees > 0)
    norm = mask * np.outer(inv_sqrt, inv_sqrt)
    out = features
    for w, b in zip(head.gcn_weights, head.gcn_biases):
        agg = ad.matmul(Tensor(norm), ad.matmul(out, w.T))
        out = ad.ACTIVATIONS[head.activation](ad.add(agg, b))
    return out


def dynamic_refine(features: Tensor, head: DynamicGraphHead) -> tuple[Tensor, SimilarityMatrix]:
    """Full per-head pass: similarity, sparsify, refine."""
    sim = weighted_cosine(features, head.cosine_weight)
    adj = sparsify(sim, head.epsilon)
    return gcn_refine(features, adj, head), adj


def retained_edges(adjacency: SimilarityMatrix) -> list[tuple[int, int, float]]:
    """Edge list (i, j, similarity) of retained off-diagonal entries."""
    edges = []
    n = adjacency.mask.shape[0]
    for i in range(n):
        for j in range(n):
            if i != j and adjacency.mask[i, j]:
                edges.append((i, j, float(adjacency.similarities.data[i, j])))
    return edges
