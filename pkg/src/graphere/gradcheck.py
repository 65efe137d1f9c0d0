"""Central finite-difference gradient checking: primitives, the per-op
suite, composite checks, and the end-to-end model check."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward

OP_TOLERANCE = 1e-6
END_TO_END_TOLERANCE = 1e-4


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max absolute difference scaled by the larger magnitude present."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(a - n).max() if a.size else 0.0
    denom = max(np.abs(a).max() if a.size else 0.0,
                np.abs(n).max() if n.size else 0.0,
                floor)
    return float(diff / denom)


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of f w.r.t. every element of x (perturbed in place)."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def check_gradients(build_loss: Callable[[], Tensor],
                    inputs: dict[str, Tensor],
                    h: float = 1e-5) -> dict[str, float]:
    """Compare backward() gradients of a rebuilt scalar loss against central
    differences, per input tensor. Returns name -> relative error."""
    loss = build_loss()
    for t in inputs.values():
        t.grad = None
    backward(loss)
    analytic = {}
    for name, t in inputs.items():
        analytic[name] = np.zeros_like(t.data) if t.grad is None else t.grad.copy()

    def scalar_eval() -> float:
        return float(build_loss().data)

    errors = {}
    for name, t in inputs.items():
        num = numeric_grad(scalar_eval, t.data, h=h)
        errors[name] = rel_error(analytic[name], num)
    for t in inputs.values():
        t.grad = None
    return errors


# ---------------------------------------------------------------------------
# the canonical per-op suite


def _weighted_sum(out: Tensor, r: np.ndarray) -> Tensor:
    return ad.mul(out, Tensor(r)).sum()


def op_gradient_cases() -> dict[str, Callable]:
    """Name -> builder; each builder returns (build_loss, inputs dict)."""
    cases: dict[str, Callable] = {}

    def case(name):
        def deco(fn):
            cases[name] = fn
            return fn
        return deco

    @case("matmul")
    def _(rng):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        r = rng.normal(size=(3, 2))
        return lambda: _weighted_sum(ad.matmul(a, b), r), {"a": a, "b": b}

    @case("add")
    def _(rng):
        a = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        r = rng.normal(size=(3, 3))
        return lambda: _weighted_sum(ad.add(a, b), r), {"a": a, "b": b}

    @case("add_bias")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=3), requires_grad=True)
        r = rng.normal(size=(4, 3))
        return lambda: _weighted_sum(ad.add(a, b), r), {"a": a, "b": b}

    @case("mul")
    def _(rng):
        a = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        r = rng.normal(size=(3, 5))
        return lambda: _weighted_sum(ad.mul(a, b), r), {"a": a, "b": b}

    @case("mul_row")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        w = Tensor(rng.normal(size=6), requires_grad=True)
        r = rng.normal(size=(4, 6))
        return lambda: _weighted_sum(ad.mul(a, w), r), {"a": a, "w": w}

    @case("scale_neg")
    def _(rng):
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        r = rng.normal(size=(2, 3))
        return lambda: _weighted_sum(ad.neg(ad.scale(a, 2.5)), r), {"a": a}

    @case("sum_mean")
    def _(rng):
        a = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        return lambda: ad.add(ad.scale(a.mean(), 3.0), ad.scale(a.sum(), 0.25)), {"a": a}

    @case("mean_rows")
    def _(rng):
        a = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        r = rng.normal(size=(1, 4))
        return lambda: _weighted_sum(ad.mean_rows(a), r), {"a": a}

    @case("transpose")
    def _(rng):
        a = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
        r = rng.normal(size=(5, 2))
        return lambda: _weighted_sum(a.T, r), {"a": a}

    @case("concat_rows")
    def _(rng):
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        r = rng.normal(size=(6, 3))
        return lambda: _weighted_sum(ad.concat_rows([a, b]), r), {"a": a, "b": b}

    @case("concat_cols")
    def _(rng):
        a = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        r = rng.normal(size=(3, 6))
        return lambda: _weighted_sum(ad.concat_cols([a, b]), r), {"a": a, "b": b}

    @case("gather_rows")
    def _(rng):
        a = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        idx = np.array([0, 2, 2, 4])
        r = rng.normal(size=(4, 3))
        return lambda: _weighted_sum(ad.gather_rows(a, idx), r), {"a": a}

    @case("slice_rows_cols")
    def _(rng):
        a = Tensor(rng.normal(size=(5, 6)), requires_grad=True)
        r = rng.normal(size=(2, 3))
        return lambda: _weighted_sum(
            ad.slice_cols(ad.slice_rows(a, 1, 3), 2, 5), r), {"a": a}

    @case("softmax_rows")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        r = rng.normal(size=(4, 5))
        return lambda: _weighted_sum(ad.softmax_rows(a), r), {"a": a}

    @case("masked_softmax_rows")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        mask = (rng.random((4, 4)) < 0.6).astype(float)
        mask[2] = 0.0
        mask[0, 0] = 1.0
        r = rng.normal(size=(4, 4))
        return lambda: _weighted_sum(ad.masked_softmax_rows(a, mask), r), {"a": a}

    @case("leaky_relu")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 4)) + 0.05, requires_grad=True)
        r = rng.normal(size=(4, 4))
        return lambda: _weighted_sum(ad.leaky_relu(a, 0.2), r), {"a": a}

    @case("relu_tanh")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 4)) + 0.05, requires_grad=True)
        r = rng.normal(size=(4, 4))
        return lambda: _weighted_sum(ad.tanh(ad.relu(a)), r), {"a": a}

    @case("row_normalize")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        r = rng.normal(size=(4, 5))
        return lambda: _weighted_sum(ad.row_normalize(a), r), {"a": a}

    @case("set_diag_one")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        r = rng.normal(size=(4, 4))
        return lambda: _weighted_sum(ad.set_diag_one(a), r), {"a": a}

    @case("cross_entropy")
    def _(rng):
        a = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        labels = rng.integers(0, 3, size=5)
        return lambda: ad.cross_entropy_from_logits(a, labels), {"a": a}

    @case("mul_mask")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        mask = (rng.random((4, 4)) < 0.5).astype(float)
        r = rng.normal(size=(4, 4))
        return lambda: _weighted_sum(ad.mul_mask(a, mask), r), {"a": a}

    @case("dropout_fixed_seed")
    def _(rng):
        a = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        r = rng.normal(size=(4, 4))
        return lambda: _weighted_sum(
            ad.dropout(a, 0.4, training=True, rng_seed=3), r), {"a": a}

    return cases


@dataclass
class SuiteRow:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def run_op_suite(seed: int = 0) -> list[SuiteRow]:
    rows = []
    for name, builder in sorted(op_gradient_cases().items()):
        rng = np.random.default_rng(np.random.SeedSequence([seed, abs(hash(name)) % 2**31]))
        build, inputs = builder(rng)
        errs = check_gradients(build, inputs, h=1e-5)
        rows.append(SuiteRow(f"op/{name}", max(errs.values()), OP_TOLERANCE))
    return rows


def end_to_end_case(n_events: int = 6, d_h: int = 16, seed: int = 0):
    """A full forward pass on one synthetic document, ready for checking:
    returns (build_loss, params). Masks are frozen and eval mode is used so
    the loss is differentiable at the base point."""
    from .model import GraphEREModel, joint_loss, task_losses
    from .synthetic import SynthConfig, build_corpus
    from .trainer import DEFAULT_LAMBDAS, TrainConfig
    from .embeddings import TrainableLookup
    from .corpus import LabelScheme

    cfg = SynthConfig(seed=seed, num_docs=1, events_min=n_events, events_max=n_events,
                      dim=d_h, timexes_min=1, timexes_max=1)
    corpus = build_corpus(cfg)
    doc = corpus.documents[0]
    graphs = corpus.graphs[doc.doc_id]
    backend = TrainableLookup.from_documents([doc], dim=d_h, seed=seed)
    model_cfg = TrainConfig(d_h=d_h, head_count=2, dropout_rate=0.0).model_config()
    model = GraphEREModel(model_cfg, LabelScheme.default(), backend, seed=seed)
    model.freeze_masks()

    def build():
        fwd = model.forward_document(doc, graphs, training=False)
        return joint_loss(task_losses([fwd]), DEFAULT_LAMBDAS)

    build()  # prime the frozen masks
    return build, model.parameters()


def run_end_to_end(seed: int = 0) -> list[SuiteRow]:
    build, params = end_to_end_case(seed=seed)
    errs = check_gradients(build, params, h=1e-5)
    worst = max(errs.values())
    return [SuiteRow("end-to-end/graphere-forward", worst, END_TO_END_TOLERANCE)]


def run_gradient_suite(seed: int = 0, include_end_to_end: bool = True) -> list[SuiteRow]:
    rows = run_op_suite(seed)
    if include_end_to_end:
        rows.extend(run_end_to_end(seed))
    return rows


def format_suite(rows: list[SuiteRow]) -> str:
    lines = [f"{'check':36s}{'max rel err':>14s}{'tolerance':>12s}  result"]
    for row in rows:
        lines.append(f"{row.name:36s}{row.max_rel_error:14.3e}{row.tolerance:12.0e}"
                     f"  {'pass' if row.passed else 'FAIL'}")
    n_fail = sum(not r.passed for r in rows)
    lines.append(f"{len(rows) - n_fail}/{len(rows)} checks passed")
    return "\n".join(lines)
