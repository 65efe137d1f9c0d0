import json

import numpy as np
import pytest

from graphere.autodiff import backward
from graphere.checkpoint import load_checkpoint
from graphere.corpus import CAUSAL, REL_TYPES, SUBEVENT
from graphere.embeddings import FrozenFileBackend, write_frozen_embeddings
from graphere.model import joint_loss, task_losses
from graphere.synthetic import SynthConfig, build_corpus, generate
from graphere.trainer import (
    CorpusBundle, TrainConfig, TrainingDiverged, build_model, fit, load_bundle,
)


def synth_bundle(tmp_path, num_docs=8, dim=16, seed=5, **synth_kwargs):
    cfg = SynthConfig(seed=seed, num_docs=num_docs, events_min=3, events_max=5,
                      dim=dim, **synth_kwargs)
    paths = generate(cfg, tmp_path / "data")
    return load_bundle(paths["corpus"], paths["graphs"], paths["embeddings"])


def fast_config(**kwargs):
    base = dict(epochs=2, batch_size=4, d_h=16, head_count=2, dropout_rate=0.1,
                seed=1, dev_fraction=0.25)
    base.update(kwargs)
    return TrainConfig(**base)


def test_epochs_zero_disallowed():
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=0)


def test_bad_mode_rejected():
    with pytest.raises(ValueError, match="mode"):
        TrainConfig(mode="both")
    with pytest.raises(ValueError):
        TrainConfig(mode="split:nope")


def test_config_file_round_trip(tmp_path):
    cfg = fast_config(mode="split:causal", beta=0.5)
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"mode": "split:causal", "beta": 0.5, "epochs": 2,
                                "batch_size": 4, "d_h": 16, "head_count": 2,
                                "dropout_rate": 0.1, "seed": 1,
                                "dev_fraction": 0.25}))
    loaded = TrainConfig.from_file(path)
    assert loaded.mode == cfg.mode and loaded.beta == cfg.beta
    overridden = TrainConfig.from_file(path, overrides={"beta": 0.9})
    assert overridden.beta == 0.9


def test_empty_corpus_single_epoch_zero_batches(tmp_path):
    bundle = CorpusBundle([], None, _tiny_backend(tmp_path), _scheme())
    report = fit(bundle, fast_config(epochs=1), tmp_path / "run")
    assert report.n_batches == 0
    assert report.epochs[0].task_losses == {rel: 0.0 for rel in REL_TYPES}


def _scheme():
    from graphere.corpus import LabelScheme
    return LabelScheme.default()


def _tiny_backend(tmp_path):
    write_frozen_embeddings(tmp_path / "emb", {"unused": np.zeros((1, 16), np.float32)})
    return FrozenFileBackend(tmp_path / "emb")


def test_overfit_single_batch_loss_decreases(tmp_path):
    bundle = synth_bundle(tmp_path, num_docs=4)
    config = fast_config(epochs=50, batch_size=4, dev_fraction=0.0,
                         dropout_rate=0.0, lr_other=1e-3)
    report = fit(bundle, config, tmp_path / "run")
    first = sum(report.epochs[0].task_losses.values())
    last = sum(report.epochs[-1].task_losses.values())
    assert last < first * 0.5, (first, last)


def test_same_seed_bitwise_identical_params_and_report(tmp_path):
    def run(tag):
        bundle = synth_bundle(tmp_path / tag, num_docs=6)
        config = fast_config(epochs=2)
        report = fit(bundle, config, tmp_path / tag / "run")
        return report, load_checkpoint(tmp_path / tag / "run" / "checkpoint-best")

    report_a, ckpt_a = run("a")
    report_b, ckpt_b = run("b")
    assert report_a.deterministic_digest() == report_b.deterministic_digest()
    assert set(ckpt_a) == set(ckpt_b)
    for name in ckpt_a:
        assert np.array_equal(ckpt_a[name], ckpt_b[name]), name


def test_split_mode_never_touches_other_heads(tmp_path):
    bundle = synth_bundle(tmp_path, num_docs=6)
    config = fast_config(mode=f"split:{CAUSAL}", epochs=2)
    model = build_model(bundle, config)
    before = {name: p.data.copy() for name, p in model.parameters().items()}
    fit(bundle, config, tmp_path / "run")
    trained = load_checkpoint(tmp_path / "run" / "checkpoint-best")
    for rel in REL_TYPES:
        for kind in ("classifier", "dynamic"):
            names = [n for n in before if n.startswith(f"{kind}.{rel}.")]
            assert names
            for n in names:
                if rel == CAUSAL:
                    continue
                np.testing.assert_array_equal(trained[n], before[n])
    # the active head did move
    moved = [n for n in before if n.startswith(f"classifier.{CAUSAL}.")]
    assert any(not np.array_equal(trained[n], before[n]) for n in moved)


def test_split_mode_gradients_of_other_heads_exactly_zero(tmp_path):
    bundle = synth_bundle(tmp_path, num_docs=4)
    config = fast_config(mode=f"split:{SUBEVENT}")
    model = build_model(bundle, config)
    doc = bundle.documents[0]
    fwd = model.forward_document(doc, bundle.graphs_for(doc), training=False,
                                 tasks=(SUBEVENT,))
    losses = task_losses([fwd])
    total = joint_loss(losses, config.lambdas, tasks=(SUBEVENT,))
    backward(total)
    for name, p in model.parameters().items():
        for rel in REL_TYPES:
            if rel != SUBEVENT and (name.startswith(f"classifier.{rel}.")
                                    or name.startswith(f"dynamic.{rel}.")):
                assert p.grad is None or not np.abs(p.grad).any()


def test_lambda_scales_task_gradient_linearly(tmp_path):
    bundle = synth_bundle(tmp_path, num_docs=4)
    config = fast_config()
    model = build_model(bundle, config)
    doc = bundle.documents[0]

    def grad_for(lam):
        for p in model.parameters().values():
            p.grad = None
        fwd = model.forward_document(doc, bundle.graphs_for(doc), training=False)
        lambdas = dict(config.lambdas)
        lambdas[CAUSAL] = lam
        backward(joint_loss(task_losses([fwd]), lambdas))
        return model.parameters()[f"classifier.{CAUSAL}.weight"].grad.copy()

    g1 = grad_for(1.0)
    g2 = grad_for(2.0)
    np.testing.assert_allclose(g2, 2.0 * g1, rtol=1e-10)


def test_nan_loss_aborts_with_dump(tmp_path):
    bundle = synth_bundle(tmp_path, num_docs=4)
    # poison one document's frozen vectors
    doc_id = bundle.documents[0].doc_id
    vecs = bundle.backend._doc_vectors(bundle.documents[0])
    bundle.backend._doc_cache[doc_id] = np.full_like(vecs, np.nan)
    config = fast_config(epochs=1, dev_fraction=0.0,
                         ablations=("static", "transformer", "dynamic"))
    with pytest.raises(TrainingDiverged):
        fit(bundle, config, tmp_path / "run")
    dump = json.loads((tmp_path / "run" / "nan_dump.json").read_text())
    assert "doc_ids" in dump and dump["epoch"] == 1


def test_best_checkpoint_selected_on_dev(tmp_path):
    bundle = synth_bundle(tmp_path, num_docs=8)
    config = fast_config(epochs=3)
    report = fit(bundle, config, tmp_path / "run")
    assert report.best_epoch is not None
    assert (tmp_path / "run" / "checkpoint-best" / "manifest.json").exists()
    assert (tmp_path / "run" / "train_report.json").exists()
    dev_f1s = [e.dev_selection_f1 for e in report.epochs]
    assert report.epochs[report.best_epoch - 1].dev_selection_f1 == max(dev_f1s)


def test_report_losses_finite(tmp_path):
    bundle = synth_bundle(tmp_path, num_docs=6)
    report = fit(bundle, fast_config(), tmp_path / "run")
    for rec in report.epochs:
        assert all(np.isfinite(v) for v in rec.task_losses.values())
