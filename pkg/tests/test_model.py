import numpy as np
import pytest

from graphere import autodiff as ad
from graphere.autodiff import Tensor
from graphere.classifier import decode_predictions, init_classifier, pair_logits
from graphere.corpus import (
    CAUSAL, COREFERENCE, REL_TYPES, SUBEVENT, TEMPORAL,
    CandidatePair, LabelScheme, RelationTuple, enumerate_pairs,
)
from graphere.embeddings import TrainableLookup
from graphere.gradcheck import check_gradients
from graphere.model import (
    GraphEREModel, ModelConfig, joint_loss, task_losses,
)

from test_corpus import make_doc
from test_static_graph import aligned_graphs

PAPER_LAMBDAS = {"coreference": 0.5, "temporal": 1.0, "causal": 5.0, "subevent": 5.0}


def small_model(docs, seed=0, **cfg_kwargs):
    cfg = ModelConfig(d_h=8, head_count=2, dropout_rate=0.0, max_tokens=512,
                      **cfg_kwargs)
    scheme = LabelScheme.default()
    backend = TrainableLookup.from_documents(docs, dim=cfg.d_h, seed=seed)
    return GraphEREModel(cfg, scheme, backend, seed=seed)


# ---------------------------------------------------------------------------
# classifier


def test_zero_classifier_gives_uniform_probs():
    rng = np.random.default_rng(0)
    clf = init_classifier(CAUSAL, 4, 3, rng)
    clf.weight.data[:] = 0.0
    clf.bias.data[:] = 0.0
    pairs = [CandidatePair("a", "b", 0, 1, 0)]
    logits = pair_logits(Tensor(rng.normal(size=(2, 4))), pairs, clf)
    probs = ad.softmax_rows(logits).data
    np.testing.assert_allclose(probs, np.full((1, 3), 1 / 3), atol=1e-12)


def test_direction_sensitivity_of_concat():
    rng = np.random.default_rng(1)
    clf = init_classifier(CAUSAL, 4, 3, rng)
    feats = Tensor(rng.normal(size=(2, 4)))
    fwd = pair_logits(feats, [CandidatePair("a", "b", 0, 1, 0)], clf).data
    rev = pair_logits(feats, [CandidatePair("b", "a", 1, 0, 0)], clf).data
    assert not np.allclose(fwd, rev)
    # with equal halves the direction information vanishes
    d = 4
    clf.weight.data[:, :d] = clf.weight.data[:, d:]
    fwd = pair_logits(feats, [CandidatePair("a", "b", 0, 1, 0)], clf).data
    rev = pair_logits(feats, [CandidatePair("b", "a", 1, 0, 0)], clf).data
    np.testing.assert_allclose(fwd, rev, atol=1e-12)


def test_pair_logits_matches_per_pair_loop_oracle():
    rng = np.random.default_rng(2)
    d, c = 5, 4
    clf = init_classifier(TEMPORAL, d, c, rng)
    feats = rng.normal(size=(6, d))
    pairs = [CandidatePair(f"s{i}", f"t{j}", i, j, 0)
             for i in range(6) for j in range(6) if i != j]
    got = pair_logits(Tensor(feats), pairs, clf).data
    for row, p in enumerate(pairs):
        concat = np.concatenate([feats[p.source_row], feats[p.target_row]])
        expected = clf.weight.data @ concat + clf.bias.data
        np.testing.assert_allclose(got[row], expected, atol=1e-12)


def test_pair_logits_index_out_of_range():
    clf = init_classifier(CAUSAL, 3, 2, np.random.default_rng(3))
    with pytest.raises(IndexError, match="ghost"):
        pair_logits(Tensor(np.zeros((2, 3))), [CandidatePair("a", "ghost", 0, 5, 0)], clf)


def test_decode_omits_none_and_ties_break_low():
    scheme = LabelScheme.default()
    pairs = [CandidatePair("a", "b", 0, 1, 0)]
    logits = Tensor(np.zeros((1, scheme.class_count(CAUSAL))))  # exact tie
    assert decode_predictions("d", CAUSAL, pairs, logits, scheme) == []
    hot = np.zeros((1, scheme.class_count(CAUSAL)))
    hot[0, 2] = 5.0
    preds = decode_predictions("d", CAUSAL, pairs, Tensor(hot), scheme)
    assert len(preds) == 1 and preds[0].subtype == "PRECONDITION"
    assert 0 < preds[0].prob <= 1


# ---------------------------------------------------------------------------
# losses


def test_task_loss_uniform_is_log_c():
    docs = [make_doc(n_events=2, n_timexes=0)]
    model = small_model(docs)
    clf = model.classifiers[CAUSAL]
    clf.weight.data[:] = 0.0
    clf.bias.data[:] = 0.0
    fwd = model.forward_document(docs[0], None, training=False)
    losses = task_losses([fwd])
    c = model.scheme.class_count(CAUSAL)
    assert losses[CAUSAL].item() == pytest.approx(np.log(c), abs=1e-12)


def test_task_loss_no_pairs_contributes_zero():
    docs = [make_doc(n_events=1, n_timexes=0)]
    model = small_model(docs)
    fwd = model.forward_document(docs[0], None, training=False)
    losses = task_losses([fwd])
    assert all(v is None for v in losses.values())
    total = joint_loss(losses, PAPER_LAMBDAS)
    assert total.item() == 0.0


def test_task_loss_hand_computed_three_pairs():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(3, 3))
    labels = np.array([0, 2, 1])
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    expected = float(-np.log(probs[np.arange(3), labels]).mean())
    got = ad.cross_entropy_from_logits(Tensor(logits), labels)
    assert got.item() == pytest.approx(expected, abs=1e-12)


def test_joint_loss_weighted_sum_exact():
    losses = {rel: Tensor(np.asarray(1.0)) for rel in REL_TYPES}
    total = joint_loss(losses, PAPER_LAMBDAS)
    assert total.item() == 11.5


def test_joint_loss_single_task_mode():
    losses = {CAUSAL: Tensor(np.asarray(0.7))}
    total = joint_loss(losses, PAPER_LAMBDAS, tasks=(CAUSAL,))
    assert total.item() == pytest.approx(5.0 * 0.7, abs=1e-15)


def test_joint_loss_zero_losses():
    losses = {rel: Tensor(np.asarray(0.0)) for rel in REL_TYPES}
    assert joint_loss(losses, PAPER_LAMBDAS).item() == 0.0


# ---------------------------------------------------------------------------
# forward / predict


def relations_for(doc):
    return [
        RelationTuple("e0", "e1", CAUSAL, "CAUSE"),
        RelationTuple("e0", "e1", COREFERENCE, "COREFERENCE"),
        RelationTuple("e1", "e2", SUBEVENT, "SUBEVENT"),
        RelationTuple("e0", "t0", TEMPORAL, "BEFORE"),
    ]


def test_untrained_zero_classifier_predicts_nothing():
    docs = [make_doc(n_events=3, n_timexes=1)]
    model = small_model(docs)
    for clf in model.classifiers.values():
        clf.weight.data[:] = 0.0
        clf.bias.data[:] = 0.0
    preds = model.predict_document(docs[0], None)
    assert preds == []


def test_single_event_document_predicts_nothing():
    docs = [make_doc(n_events=1, n_timexes=0)]
    model = small_model(docs)
    assert model.predict_document(docs[0], None) == []


def test_predict_deterministic_in_eval_mode():
    doc = make_doc(n_events=3, n_timexes=1)
    model = small_model([doc], seed=7)
    graphs = tuple(aligned_graphs(doc, seed=1))
    a = model.predict_document(doc, graphs)
    b = model.predict_document(doc, graphs)
    assert a == b


def test_prediction_probs_are_valid():
    doc = make_doc(n_events=4, n_timexes=1)
    model = small_model([doc], seed=8)
    fwd = model.forward_document(doc, None, training=False)
    for rel in REL_TYPES:
        probs = ad.softmax_rows(fwd.logits[rel]).data
        if probs.shape[0]:
            np.testing.assert_allclose(probs.sum(axis=1), np.ones(probs.shape[0]),
                                       atol=1e-9)


def test_no_ablation_flags_identical_forward():
    doc = make_doc(n_events=3, n_timexes=0)
    graphs = tuple(aligned_graphs(doc, seed=2))
    model_a = small_model([doc], seed=9)
    model_b = small_model([doc], seed=9, ablations=())
    fa = model_a.forward_document(doc, graphs, training=False)
    fb = model_b.forward_document(doc, graphs, training=False)
    for rel in REL_TYPES:
        np.testing.assert_array_equal(fa.logits[rel].data, fb.logits[rel].data)


def test_static_ablation_invariant_to_graphs():
    doc = make_doc(n_events=3, n_timexes=0)
    model = small_model([doc], seed=10, ablations=("static",))
    fwd_with = model.forward_document(doc, tuple(aligned_graphs(doc, seed=3)),
                                      training=False)
    fwd_without = model.forward_document(doc, tuple(aligned_graphs(doc, seed=99)),
                                         training=False)
    for rel in REL_TYPES:
        np.testing.assert_array_equal(fwd_with.logits[rel].data,
                                      fwd_without.logits[rel].data)


def test_transformer_ablation_skips_attention():
    doc = make_doc(n_events=3, n_timexes=0)
    model = small_model([doc], seed=11, ablations=("transformer", "static", "dynamic"))
    fwd = model.forward_document(doc, None, training=False)
    # with everything ablated, the pipeline is lookup -> classifier only
    assert fwd.logits[CAUSAL].data.shape == (6, model.scheme.class_count(CAUSAL))


def test_dynamic_edge_dump_schema():
    doc = make_doc(n_events=3, n_timexes=0)
    model = small_model([doc], seed=12)
    records = model.dump_dynamic_edges(doc, None)
    for rec in records:
        assert set(rec) == {"doc_id", "type", "i", "j", "similarity"}
        assert rec["i"] != rec["j"]


def test_end_to_end_gradient_check_small():
    doc = make_doc(n_events=4, n_timexes=1, relations=relations_for(None))
    model = small_model([doc], seed=13)
    graphs = tuple(aligned_graphs(doc, seed=4))
    model.freeze_masks()

    def build():
        fwd = model.forward_document(doc, graphs, training=False)
        return joint_loss(task_losses([fwd]), PAPER_LAMBDAS)

    errs = check_gradients(build, model.parameters(), h=1e-5)
    model.unfreeze_masks()
    for name, err in errs.items():
        assert err <= 1e-4, f"{name}: rel err {err:.3e}"
