"""Task-specific linear classifiers over concatenated pair features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import CandidatePair, LabelScheme


@dataclass
class TaskClassifier:
    rel_type: str
    weight: Tensor  # (C, 2d)
    bias: Tensor  # (C,)

    @property
    def class_count(self) -> int:
        return self.weight.data.shape[0]


def init_classifier(rel_type: str, d_h: int, class_count: int,
                    rng: np.random.Generator) -> TaskClassifier:
    if class_count < 2:
        raise ValueError(f"classifier for '{rel_type}' needs at least 2 classes")
    bound = 1.0 / np.sqrt(2 * d_h)
    weight = Tensor(rng.uniform(-bound, bound, size=(class_count, 2 * d_h)),
                    requires_grad=True)
    bias = Tensor(np.zeros(class_count), requires_grad=True)
    return TaskClassifier(rel_type, weight, bias)


def pair_logits(refined: Tensor, pairs: list[CandidatePair],
                clf: TaskClassifier) -> Tensor:
    """Logits for ordered pairs from [source ; target] feature concatenation."""
    if not pairs:
        return Tensor(np.zeros((0, clf.class_count)))
    src = np.array([p.source_row for p in pairs], dtype=np.int64)
    tgt = np.array([p.target_row for p in pairs], dtype=np.int64)
    n_rows = refined.data.shape[0]
    bad = [p for p in pairs if p.source_row >= n_rows or p.target_row >= n_rows]
    if bad:
        raise IndexError(
            f"pair ({bad[0].source_id}, {bad[0].target_id}) indexes row outside "
            f"the {n_rows}-row feature matrix"
        )
    feats = ad.concat_cols([ad.gather_rows(refined, src), ad.gather_rows(refined, tgt)])
    return ad.add(ad.matmul(feats, clf.weight.T), clf.bias)


@dataclass(frozen=True)
class PairPrediction:
    doc_id: str
    rel_type: str
    source: str
    target: str
    subtype: str
    prob: float


def decode_predictions(doc_id: str, rel_type: str, pairs: list[CandidatePair],
                       logits: Tensor, scheme: LabelScheme) -> list[PairPrediction]:
    """Argmax decoding (ties break to the lowest class index); NONE omitted."""
    if not pairs:
        return []
    probs = ad.softmax_rows(logits).data
    out = []
    for row, pair in enumerate(pairs):
        cls = int(np.argmax(probs[row]))  # argmax returns the first maximum
        if cls == 0:
            continue
        out.append(PairPrediction(
            doc_id=doc_id, rel_type=rel_type,
            source=pair.source_id, target=pair.target_id,
            subtype=scheme.class_label(rel_type, cls),
            prob=float(probs[row, cls]),
        ))
    return out
