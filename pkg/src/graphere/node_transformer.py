"""Multi-head self-attention over mention-node embeddings.

Each head projects the input to d/heads dimensions and applies scaled
dot-product self-attention on the projected features (per-head projections
make the heads distinct); head outputs are concatenated and mixed by a
learnable output matrix, with dropout at training time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class NodeTransformerLayer:
    head_projections: list[Tensor]  # each (d, d/heads)
    output: Tensor  # (d, d)
    dropout_rate: float = 0.3
    d_h: int = 0

    def __post_init__(self):
        if self.d_h == 0:
            self.d_h = self.output.data.shape[0]
        if self.d_h % len(self.head_projections) != 0:
            raise ValueError(
                f"dimension {self.d_h} not divisible by {len(self.head_projections)} heads"
            )

    @property
    def head_count(self) -> int:
        return len(self.head_projections)


def init_layer(d_h: int, head_count: int, rng: np.random.Generator,
               dropout_rate: float = 0.3) -> NodeTransformerLayer:
    if d_h % head_count != 0:
        raise ValueError(f"dimension {d_h} not divisible by {head_count} heads")
    bound = 1.0 / np.sqrt(d_h)
    projections = [Tensor(rng.uniform(-bound, bound, size=(d_h, d_h // head_count)),
                          requires_grad=True)
                   for _ in range(head_count)]
    output = Tensor(rng.uniform(-bound, bound, size=(d_h, d_h)), requires_grad=True)
    return NodeTransformerLayer(projections, output, dropout_rate=dropout_rate, d_h=d_h)


def self_attention_head(layer: NodeTransformerLayer, gh: Tensor,
                        head_index: int) -> Tensor:
    """Scaled dot-product self-attention on one head's projected features."""
    proj = ad.matmul(gh, layer.head_projections[head_index])
    scores = ad.scale(ad.matmul(proj, proj.T), 1.0 / np.sqrt(layer.d_h))
    attn = ad.softmax_rows(scores)
    return ad.matmul(attn, proj)


def node_transform(layer: NodeTransformerLayer, gh: Tensor, training: bool,
                   rng_seed: int = 0) -> Tensor:
    """Concatenate all head outputs, mix with the output matrix, and apply
    dropout when training."""
    if gh.data.shape[0] == 0:
        return gh
    heads = [self_attention_head(layer, gh, k) for k in range(layer.head_count)]
    mixed = ad.matmul(ad.concat_cols(heads), layer.output)
    return ad.dropout(mixed, layer.dropout_rate, training, rng_seed)
