import numpy as np
import pytest

from graphere.classifier import PairPrediction
from graphere.corpus import CAUSAL, COREFERENCE, REL_TYPES, RelationTuple
from graphere.evaluator import (
    Scores, clusters_from_pairs, evaluate, format_report_table, gold_clusters,
    micro_prf, muc_score, relation_triples,
)

from test_corpus import make_doc


def test_muc_perfect_match():
    key = [{"a", "b", "c"}, {"d"}]
    got = muc_score(key, [{"a", "b", "c"}, {"d"}])
    assert got == Scores(1.0, 1.0, 1.0)


def test_muc_hand_case():
    key = [{"a", "b", "c"}]
    response = [{"a", "b"}, {"c"}]
    got = muc_score(key, response)
    assert got.recall == pytest.approx(0.5)   # (3-2)/(3-1)
    assert got.precision == pytest.approx(1.0)  # (2-1)/(2-1)
    assert got.f1 == pytest.approx(2 / 3)


def test_muc_all_singletons_is_zero_by_convention():
    key = [{"a"}, {"b"}, {"c"}]
    got = muc_score(key, [{"a"}, {"b"}, {"c"}])
    assert got == Scores(0.0, 0.0, 0.0)


def test_muc_rejects_overlapping_clusters():
    with pytest.raises(ValueError, match="overlap"):
        muc_score([{"a", "b"}, {"b", "c"}], [{"a"}])


def all_partitions(items):
    """Every set partition of the given tuple of items."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in all_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [part[i] | {first}] + part[i + 1:]
        yield part + [{first}]


def vilain_oracle(key, response):
    """Brute-force: literally build the induced partition of each cluster."""
    def half(primary, other):
        num = den = 0
        for s in primary:
            parts = [s & c for c in other if s & c]
            covered = set().union(*parts) if parts else set()
            parts += [{m} for m in s - covered]
            num += len(s) - len(parts)
            den += len(s) - 1
        return num, den

    r_num, r_den = half(key, response)
    p_num, p_den = half(response, key)
    r = r_num / r_den if r_den else 0.0
    p = p_num / p_den if p_den else 0.0
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return Scores(p, r, f1)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_muc_matches_exhaustive_oracle_small(n):
    mentions = tuple(f"m{i}" for i in range(n))
    parts = list(all_partitions(mentions))
    for key in parts:
        for response in parts:
            assert muc_score(key, response) == vilain_oracle(key, response)


def test_muc_matches_exhaustive_oracle_up_to_six():
    # spot-check n=5,6 on a deterministic sample of partition pairs; the
    # acceptance suite runs the full cross product
    rng = np.random.default_rng(0)
    for n in (5, 6):
        mentions = tuple(f"m{i}" for i in range(n))
        parts = list(all_partitions(mentions))
        idx = rng.integers(0, len(parts), size=(300, 2))
        for a, b in idx:
            key, response = parts[a], parts[b]
            assert muc_score(key, response) == vilain_oracle(key, response)


def test_clusters_from_pairs_transitive_closure():
    clusters = clusters_from_pairs([("a", "b"), ("b", "c"), ("d", "e")],
                                   ["a", "b", "c", "d", "e", "f"])
    as_sets = {frozenset(c) for c in clusters}
    assert as_sets == {frozenset("abc"), frozenset("de"), frozenset("f")}


def test_micro_perfect():
    gold = {("d", "a", "b", "X")}
    assert micro_prf(gold, set(gold)) == Scores(1.0, 1.0, 1.0)


def test_micro_empty_prediction():
    gold = {("d", "a", "b", "X")}
    assert micro_prf(gold, set()) == Scores(0.0, 0.0, 0.0)


def test_micro_hand_case():
    gold = {"A", "B"}
    pred = {"A", "C"}
    got = micro_prf(gold, pred)
    assert got == Scores(0.5, 0.5, 0.5)


def test_f1_between_p_and_r():
    rng = np.random.default_rng(1)
    for _ in range(50):
        tp = int(rng.integers(1, 10))
        fp = int(rng.integers(0, 10))
        fn = int(rng.integers(0, 10))
        gold = {("g", i) for i in range(tp)} | {("fn", i) for i in range(fn)}
        pred = {("g", i) for i in range(tp)} | {("fp", i) for i in range(fp)}
        s = micro_prf(gold, pred)
        if s.precision > 0 and s.recall > 0:
            assert min(s.precision, s.recall) <= s.f1 <= max(s.precision, s.recall)


def make_eval_docs():
    doc_a = make_doc("a", n_events=3, n_timexes=0, relations=[
        RelationTuple("e0", "e1", CAUSAL, "CAUSE"),
        RelationTuple("e0", "e1", COREFERENCE, "COREFERENCE"),
    ])
    doc_b = make_doc("b", n_events=2, n_timexes=0, relations=[
        RelationTuple("e1", "e0", CAUSAL, "PRECONDITION"),
    ])
    return [doc_a, doc_b]


def gold_predictions(docs):
    preds = []
    for d in docs:
        for r in d.relations:
            preds.append(PairPrediction(d.doc_id, r.rel_type, r.source, r.target,
                                        r.subtype, 1.0))
    return preds


def test_evaluate_gold_predictions_all_ones():
    docs = make_eval_docs()
    report = evaluate(docs, gold_predictions(docs))
    for rel in (CAUSAL, COREFERENCE):
        assert report["tasks"][rel]["F1"] == 1.0
    assert report["mean_f1"] <= 1.0


def test_evaluate_symmetric_under_document_permutation():
    docs = make_eval_docs()
    preds = gold_predictions(docs)
    a = evaluate(docs, preds)
    b = evaluate(list(reversed(docs)), preds)
    assert a == b


def test_gold_clusters_group_by_event_id():
    doc = make_doc("a", n_events=3, n_timexes=0)
    object.__setattr__(doc.events[1], "event_id", doc.events[0].event_id)
    clusters = {frozenset(c) for c in gold_clusters(doc)}
    assert frozenset({"e0", "e1"}) in clusters


def test_report_table_formats():
    docs = make_eval_docs()
    report = evaluate(docs, gold_predictions(docs))
    table = format_report_table(report, "demo")
    assert "coreference (MUC)" in table
    assert "mean F1" in table
    for rel in REL_TYPES:
        assert rel in table
