"""Scoring: link-based MUC for coreference clusters, micro-averaged P/R/F1
for relation triples, and report formatting."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .classifier import PairPrediction
from .corpus import COREFERENCE, Document, REL_TYPES


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _check_partition(clusters: list[set]) -> None:
    seen = set()
    for cluster in clusters:
        overlap = seen & cluster
        if overlap:
            raise ValueError(f"overlapping clusters: {sorted(overlap)} appear twice")
        seen |= cluster


def _vilain_half(primary: list[set], other: list[set]) -> tuple[int, int]:
    """Sum over primary clusters S of |S| - |partition of S by other|, and
    the denominator sum of |S| - 1. Mentions absent from `other` count as
    singleton parts."""
    membership: dict = {}
    for idx, cluster in enumerate(other):
        for m in cluster:
            membership[m] = idx
    num = den = 0
    for cluster in primary:
        parts = {membership[m] for m in cluster if m in membership}
        unaligned = sum(1 for m in cluster if m not in membership)
        num += len(cluster) - (len(parts) + unaligned)
        den += len(cluster) - 1
    return num, den


def muc_score(key: list[set], response: list[set]) -> Scores:
    """Vilain et al. link-based coreference score; 0/0 ratios are 0."""
    _check_partition(key)
    _check_partition(response)
    r_num, r_den = _vilain_half(key, response)
    p_num, p_den = _vilain_half(response, key)
    recall = r_num / r_den if r_den else 0.0
    precision = p_num / p_den if p_den else 0.0
    return Scores(precision, recall, _f1(precision, recall))


def clusters_from_pairs(pairs: list[tuple[str, str]], universe: list[str]) -> list[set]:
    """Transitive closure of pairwise links over the mention universe
    (union-find); singletons included."""
    parent = {m: m for m in universe}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        if a in parent and b in parent:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[rb] = ra
    groups = defaultdict(set)
    for m in universe:
        groups[find(m)].add(m)
    return list(groups.values())


def gold_clusters(doc: Document) -> list[set]:
    groups = defaultdict(set)
    for m in doc.events:
        groups[m.event_id].add(m.mention_id)
    return list(groups.values())


def micro_prf(gold: set, predicted: set) -> Scores:
    """Exact-match counting over normalized triples; 0/0 ratios are 0."""
    tp = len(gold & predicted)
    fp = len(predicted - gold)
    fn = len(gold - predicted)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return Scores(precision, recall, _f1(precision, recall))


def relation_triples(docs: list[Document], rel_type: str) -> set:
    return {(d.doc_id, r.source, r.target, r.subtype)
            for d in docs for r in d.relations if r.rel_type == rel_type}


def predicted_triples(predictions: list[PairPrediction], rel_type: str) -> set:
    return {(p.doc_id, p.source, p.target, p.subtype)
            for p in predictions if p.rel_type == rel_type}


def evaluate(docs: list[Document], predictions: list[PairPrediction]) -> dict:
    """Micro P/R/F1 per relation type plus MUC for coreference clusters.

    Returns {"tasks": {rel: {P, R, F1}}, "coreference_muc": {P, R, F1},
    "mean_f1": float}.
    """
    report = {"tasks": {}}
    for rel in REL_TYPES:
        scores = micro_prf(relation_triples(docs, rel), predicted_triples(predictions, rel))
        report["tasks"][rel] = {"P": scores.precision, "R": scores.recall, "F1": scores.f1}

    by_doc = defaultdict(list)
    for p in predictions:
        if p.rel_type == COREFERENCE:
            by_doc[p.doc_id].append((p.source, p.target))
    muc_p = muc_r = 0.0
    p_den_total = r_den_total = 0
    p_num_total = r_num_total = 0
    for doc in docs:
        universe = [m.mention_id for m in doc.events]
        key = gold_clusters(doc)
        response = clusters_from_pairs(by_doc.get(doc.doc_id, []), universe)
        r_num, r_den = _vilain_half(key, response)
        p_num, p_den = _vilain_half(response, key)
        r_num_total += r_num
        r_den_total += r_den
        p_num_total += p_num
        p_den_total += p_den
    muc_p = p_num_total / p_den_total if p_den_total else 0.0
    muc_r = r_num_total / r_den_total if r_den_total else 0.0
    report["coreference_muc"] = {"P": muc_p, "R": muc_r, "F1": _f1(muc_p, muc_r)}
    report["mean_f1"] = sum(report["tasks"][rel]["F1"] for rel in REL_TYPES) / len(REL_TYPES)
    return report


def format_report_table(report: dict, label: str = "model") -> str:
    """Plain-text table: one row of P/R/F1 per relation type."""
    header = f"{'':18s}" + "".join(f"{c:>8s}" for c in ("P", "R", "F1"))
    lines = [f"== {label} ==", header]
    for rel in REL_TYPES:
        s = report["tasks"][rel]
        lines.append(f"{rel:18s}" + "".join(
            f"{100 * s[c]:8.2f}" for c in ("P", "R", "F1")))
    muc = report["coreference_muc"]
    lines.append(f"{'coreference (MUC)':18s}" + "".join(
        f"{100 * muc[c]:8.2f}" for c in ("P", "R", "F1")))
    lines.append(f"{'mean F1':18s}{'':16s}{100 * report['mean_f1']:8.2f}")
    return "\n".join(lines)
