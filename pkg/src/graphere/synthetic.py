"""Seeded synthetic corpora with planted, learnable relation structure.

Each event carries latent attributes: a time bucket, a shared-entity marker
flag, a containment child flag, and a causal role. Gold relations are
deterministic functions of these attributes:

  coreference  <- both events marked (one shared-entity cluster per doc)
  temporal     <- source bucket strictly before target bucket (BEFORE)
  causal       <- agent-role source, patient-role target (CAUSE)
  subevent     <- marked source (the container), child-flagged target

Attributes are exposed through configurable channels: token embeddings
(explicit coordinates plus hash noise) and/or static-graph argument nodes
whose surfaces encode the attribute. Presets wire the channels for the
standard learning task, the argument-overlap ablation task (graph-only
signal), the complementary two-graph task, and a sparse-subevent variant.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import PairPrediction
from .corpus import (
    COREFERENCE, CAUSAL, Document, EventMention, GraphNode, RelationTuple,
    StaticEventGraph, SUBEVENT, TEMPORAL, TimexMention, save_corpus, save_graphs,
)
from .embeddings import hashed_unit_vector, write_frozen_embeddings

PRESETS = ("standard", "argument-overlap", "complementary", "subevent-sparse")

AGENT, PATIENT, NEUTRAL = "agent", "patient", "neutral"

FLAG_NAMES = ("marker", "child", "agent", "patient")


@dataclass
class SynthConfig:
    seed: int = 0
    num_docs: int = 50
    events_min: int = 4
    events_max: int = 8
    timexes_min: int = 1
    timexes_max: int = 2
    vocab_size: int = 40
    n_arg_symbols: int = 3
    dim: int = 64
    buckets: int = 4
    marker_prob: float = 0.45
    child_prob: float = 0.4
    role_probs: tuple[float, float] = (0.35, 0.35)  # agent, patient
    preset: str = "standard"
    argument_overlap_strength: float = 1.0
    subevent_doc_fraction: float = 1.0
    doc_prefix: str = "doc"
    # embedding geometry: one-hot bucket block, then one coordinate per flag,
    # hash noise in the remaining dimensions. The relative scales put
    # same-bucket pairs above the temporal threshold and everything else
    # below the coreference/causal thresholds, so the dynamic graphs cluster
    # compatibly with each head's task.
    signal_scale: float = 16.0
    flag_scale: float = 5.7
    noise_scale: float = 12.6
    trigger_variants: int = 50  # distinct identity suffixes per attribute combo

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset '{self.preset}', expected one of {PRESETS}")
        if not 0 < self.events_min <= self.events_max:
            raise ValueError("events range invalid")
        if not 0.0 <= self.argument_overlap_strength <= 1.0:
            raise ValueError("argument_overlap_strength must be in [0, 1]")
        if self.dim < self.n_signal_coords + 8:
            raise ValueError(
                f"dim={self.dim} too small for {self.n_signal_coords} signal "
                f"coordinates plus noise")

    @property
    def n_signal_coords(self) -> int:
        return self.buckets + len(FLAG_NAMES)


def make_argument_overlap_task(config: SynthConfig, strength: float | None = None) -> SynthConfig:
    """Variant whose labels are carried by static-graph arguments only (at
    strength 1.0 token embeddings are pure noise). Timexes are dropped since
    they never enter the static graphs."""
    return replace(config, preset="argument-overlap",
                   timexes_min=0, timexes_max=0,
                   argument_overlap_strength=(
                       config.argument_overlap_strength if strength is None else strength))


@dataclass
class EventLatent:
    mention_id: str
    bucket: int
    marker: bool
    child: bool
    role: str
    channels: dict[str, list[str]]  # attr -> channels carrying it


@dataclass
class DocLatent:
    doc_id: str
    events: list[EventLatent]
    timex_buckets: dict[str, int]


def _preset_channels(cfg: SynthConfig, rng: np.random.Generator) -> dict[str, list[str]]:
    if cfg.preset == "complementary":
        return {"bucket": ["amr"], "marker": ["token"], "child": ["token"],
                "role": ["ie"]}
    if cfg.preset == "argument-overlap":
        if rng.random() < cfg.argument_overlap_strength:
            return {attr: ["amr", "ie"] for attr in ("bucket", "marker", "child", "role")}
        return {attr: ["token"] for attr in ("bucket", "marker", "child", "role")}
    if cfg.preset == "subevent-sparse":
        # markerness lives only in the graphs: the sparse subevent task can
        # barely identify it alone, while the dense coreference loss can
        return {"bucket": ["token", "amr"], "marker": ["amr", "ie"],
                "child": ["token"], "role": ["token", "ie"]}
    # standard: token plus one graph flavor per attribute
    return {"bucket": ["token", "amr"], "marker": ["token", "amr", "ie"],
            "child": ["token", "ie"], "role": ["token", "amr", "ie"]}


def _sample_latents(cfg: SynthConfig, doc_id: str, rng: np.random.Generator) -> DocLatent:
    p = int(rng.integers(cfg.events_min, cfg.events_max + 1))
    q = int(rng.integers(cfg.timexes_min, cfg.timexes_max + 1))
    with_subevents = rng.random() < cfg.subevent_doc_fraction
    events = []
    for i in range(p):
        marker = bool(rng.random() < cfg.marker_prob)
        child = bool((not marker) and with_subevents and rng.random() < cfg.child_prob)
        u = rng.random()
        role = AGENT if u < cfg.role_probs[0] else (
            PATIENT if u < cfg.role_probs[0] + cfg.role_probs[1] else NEUTRAL)
        events.append(EventLatent(
            mention_id=f"{doc_id}e{i}",
            bucket=int(rng.integers(0, cfg.buckets)),
            marker=marker, child=child, role=role,
            channels=_preset_channels(cfg, rng),
        ))
    timex_buckets = {f"{doc_id}t{k}": int(rng.integers(0, cfg.buckets))
                     for k in range(q)}
    return DocLatent(doc_id, events, timex_buckets)


def relations_from_latents(latent: DocLatent) -> list[RelationTuple]:
    """The planted rules; the Bayes-optimal oracle reads these off exactly."""
    rels = []
    ev = latent.events
    for i, a in enumerate(ev):
        for j, b in enumerate(ev):
            if i == j:
                continue
            if a.marker and b.marker:
                rels.append(RelationTuple(a.mention_id, b.mention_id,
                                          COREFERENCE, "COREFERENCE"))
            if a.bucket < b.bucket:
                rels.append(RelationTuple(a.mention_id, b.mention_id,
                                          TEMPORAL, "BEFORE"))
            if a.role == AGENT and b.role == PATIENT:
                rels.append(RelationTuple(a.mention_id, b.mention_id,
                                          CAUSAL, "CAUSE"))
            if a.marker and b.child:
                rels.append(RelationTuple(a.mention_id, b.mention_id,
                                          SUBEVENT, "SUBEVENT"))
        for timex_id, tb in latent.timex_buckets.items():
            if a.bucket < tb:
                rels.append(RelationTuple(a.mention_id, timex_id,
                                          TEMPORAL, "BEFORE"))
    return rels


def _trigger_token(cfg: SynthConfig, e: EventLatent, rng: np.random.Generator) -> str:
    parts = [f"b{e.bucket}" if "token" in e.channels["bucket"] else "bx",
             f"m{int(e.marker)}" if "token" in e.channels["marker"] else "mx",
             f"c{int(e.child)}" if "token" in e.channels["child"] else "cx",
             f"r{e.role[0]}" if "token" in e.channels["role"] else "rx"]
    return "EV_" + "_".join(parts) + f"_{int(rng.integers(0, cfg.trigger_variants))}"


def _token_vector(cfg: SynthConfig, token: str, bucket: int | None,
                  flags: dict[str, bool] | None) -> np.ndarray:
    """Structured vector: one-hot bucket block (own bucket positive, the
    rest slightly negative so distinct buckets anti-correlate), centered
    flag coordinates, hash-noise identity in the remaining dimensions."""
    noise = hashed_unit_vector(token, cfg.dim).copy()
    noise[:cfg.n_signal_coords] = 0.0
    norm = np.linalg.norm(noise)
    if norm > 0:
        noise = noise / norm * cfg.noise_scale
    vec = noise
    if bucket is not None:
        vec[:cfg.buckets] = -cfg.signal_scale / max(cfg.buckets - 1, 1)
        vec[bucket] = cfg.signal_scale
    if flags is not None:
        for k, name in enumerate(FLAG_NAMES):
            vec[cfg.buckets + k] = cfg.flag_scale if flags[name] else -cfg.flag_scale
    return vec


def _event_token_payload(cfg: SynthConfig, e: EventLatent
                         ) -> tuple[int | None, dict[str, bool] | None]:
    bucket = e.bucket if "token" in e.channels["bucket"] else None
    any_flag_visible = any("token" in e.channels[a] for a in ("marker", "child", "role"))
    if not any_flag_visible:
        return bucket, None
    flags = {
        "marker": e.marker if "token" in e.channels["marker"] else False,
        "child": e.child if "token" in e.channels["child"] else False,
        "agent": (e.role == AGENT) if "token" in e.channels["role"] else False,
        "patient": (e.role == PATIENT) if "token" in e.channels["role"] else False,
    }
    return bucket, flags


def _argument_surfaces(cfg: SynthConfig, e: EventLatent, flavor: str,
                       rng: np.random.Generator) -> list[str]:
    """Static-graph argument node surfaces carrying this event's attributes
    in the given graph flavor."""
    surfaces = []
    k = int(rng.integers(0, cfg.n_arg_symbols))
    if flavor in e.channels["bucket"]:
        surfaces.append(f"TIMEARG_{e.bucket}")
    if flavor in e.channels["marker"]:
        surfaces.append("ENTARG_COMMON" if e.marker else f"ENTARG_SOLO_{k}")
    if flavor in e.channels["child"] and e.child:
        surfaces.append(f"LEVARG_CHILD_{k}")
    if flavor in e.channels["role"] and e.role != NEUTRAL:
        surfaces.append(f"ROLEARG_{e.role.upper()}_{k}")
    return surfaces


def _build_document(cfg: SynthConfig, latent: DocLatent,
                    rng: np.random.Generator) -> tuple[Document, dict, np.ndarray]:
    tokens: list[str] = []
    sentences: list[tuple[int, int]] = []
    vectors: list[np.ndarray] = []
    events: list[EventMention] = []
    timexes: list[TimexMention] = []
    fillers = [f"w{i}" for i in range(cfg.vocab_size)]

    def filler():
        tok = fillers[int(rng.integers(0, cfg.vocab_size))]
        return tok, _token_vector(cfg, tok, None, None)

    marker_cluster = f"{latent.doc_id}_shared"
    for e in latent.events:
        start = len(tokens)
        trig = _trigger_token(cfg, e, rng)
        bucket, flags = _event_token_payload(cfg, e)
        for tok, vec in (filler(), (trig, _token_vector(cfg, trig, bucket, flags)), filler()):
            tokens.append(tok)
            vectors.append(vec)
        sentences.append((start, start + 3))
        events.append(EventMention(
            e.mention_id, start + 1, start + 2,
            marker_cluster if e.marker else f"{e.mention_id}_c"))
    for timex_id, bucket in latent.timex_buckets.items():
        start = len(tokens)
        tok = f"TX_b{bucket}"
        for t2, vec in (filler(), (tok, _token_vector(cfg, tok, bucket, None)), filler()):
            tokens.append(t2)
            vectors.append(vec)
        sentences.append((start, start + 3))
        timexes.append(TimexMention(timex_id, start + 1, start + 2))

    doc = Document(latent.doc_id, tokens, sentences, events, timexes,
                   relations_from_latents(latent))

    graphs = {}
    for flavor in ("amr", "ie"):
        nodes = []
        edges = []
        alignment = {}
        arg_nodes: dict[str, str] = {}
        for i, (e, mention) in enumerate(zip(latent.events, events)):
            node_id = f"{flavor}_e{i}"
            nodes.append(GraphNode(node_id, tokens[mention.start]))
            alignment[node_id] = mention.mention_id
            for surface in _argument_surfaces(cfg, e, flavor, rng):
                if surface not in arg_nodes:
                    arg_nodes[surface] = f"{flavor}_arg{len(arg_nodes)}"
                    nodes.append(GraphNode(arg_nodes[surface], surface))
                edges.append((node_id, arg_nodes[surface], "arg"))
        graphs[flavor] = StaticEventGraph(flavor, nodes, edges, alignment)

    return doc, graphs, np.vstack(vectors) if vectors else np.zeros((0, cfg.dim))


@dataclass
class SynthCorpus:
    documents: list[Document]
    graphs: dict[str, tuple[StaticEventGraph, StaticEventGraph]]
    vectors: dict[str, np.ndarray]
    answer_key: dict


def build_corpus(cfg: SynthConfig) -> SynthCorpus:
    """Deterministic in-memory generation; same seed, same corpus."""
    root = np.random.SeedSequence(cfg.seed)
    doc_seeds = root.spawn(cfg.num_docs)
    documents, graphs, vectors = [], {}, {}
    key_docs = []
    for di in range(cfg.num_docs):
        rng = np.random.default_rng(doc_seeds[di])
        doc_id = f"{cfg.doc_prefix}{di:04d}"
        latent = _sample_latents(cfg, doc_id, rng)
        doc, doc_graphs, vecs = _build_document(cfg, latent, rng)
        documents.append(doc)
        graphs[doc_id] = (doc_graphs["amr"], doc_graphs["ie"])
        vectors[doc_id] = vecs
        key_docs.append({
            "doc_id": doc_id,
            "events": [{
                "mention_id": e.mention_id, "bucket": e.bucket,
                "marker": e.marker, "child": e.child, "role": e.role,
                "channels": e.channels,
            } for e in latent.events],
            "timex_buckets": latent.timex_buckets,
        })
    answer_key = {"config": asdict(cfg), "docs": key_docs}
    return SynthCorpus(documents, graphs, vectors, answer_key)


def generate(cfg: SynthConfig, out_dir) -> dict[str, Path]:
    """Write the full corpus bundle: corpus.jsonl, graphs.jsonl, an
    embeddings/ directory, and answer_key.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = build_corpus(cfg)
    paths = {
        "corpus": out_dir / "corpus.jsonl",
        "graphs": out_dir / "graphs.jsonl",
        "embeddings": out_dir / "embeddings",
        "answer_key": out_dir / "answer_key.json",
    }
    save_corpus(corpus.documents, paths["corpus"])
    save_graphs(corpus.graphs, paths["graphs"])
    write_frozen_embeddings(paths["embeddings"], corpus.vectors)
    paths["answer_key"].write_text(json.dumps(corpus.answer_key, indent=1, sort_keys=True))
    return paths


# ---------------------------------------------------------------------------
# oracles


def relations_from_answer_key(answer_key: dict) -> set:
    """(doc_id, source, target, rel_type, subtype) triples derived purely from
    the recorded latent attributes."""
    triples = set()
    for doc in answer_key["docs"]:
        latent = DocLatent(
            doc_id=doc["doc_id"],
            events=[EventLatent(e["mention_id"], e["bucket"], e["marker"],
                                e["child"], e["role"], e["channels"])
                    for e in doc["events"]],
            timex_buckets=doc["timex_buckets"],
        )
        for r in relations_from_latents(latent):
            triples.add((doc["doc_id"], r.source, r.target, r.rel_type, r.subtype))
    return triples


def graph_rule_oracle(documents: list[Document],
                      graphs: dict[str, tuple[StaticEventGraph, StaticEventGraph]]
                      ) -> list[PairPrediction]:
    """Predict relations using static-graph adjacency alone: read each
    event's attributes off its argument-node surfaces (both flavors pooled);
    events with no visible attribute stay unknown."""
    preds = []
    for doc in documents:
        attrs: dict[str, dict] = {m.mention_id: {} for m in doc.events}
        for graph in graphs[doc.doc_id]:
            surface = {n.node_id: n.surface for n in graph.nodes}
            for src, dst, _ in graph.edges:
                mention = graph.alignment.get(src)
                if mention is None:
                    continue
                arg = surface[dst]
                a = attrs[mention]
                if arg.startswith("TIMEARG_"):
                    a["bucket"] = int(arg.split("_")[1])
                elif arg == "ENTARG_COMMON":
                    a["marker"] = True
                elif arg.startswith("ENTARG_SOLO"):
                    a.setdefault("marker", False)
                elif arg.startswith("LEVARG_CHILD"):
                    a["child"] = True
                elif arg.startswith("ROLEARG_"):
                    a["role"] = arg.split("_")[1].lower()
        for a_id, a in attrs.items():
            for b_id, b in attrs.items():
                if a_id == b_id:
                    continue
                if a.get("marker") and b.get("marker"):
                    preds.append(PairPrediction(doc.doc_id, COREFERENCE, a_id, b_id,
                                                "COREFERENCE", 1.0))
                if "bucket" in a and "bucket" in b and a["bucket"] < b["bucket"]:
                    preds.append(PairPrediction(doc.doc_id, TEMPORAL, a_id, b_id,
                                                "BEFORE", 1.0))
                if a.get("role") == AGENT and b.get("role") == PATIENT:
                    preds.append(PairPrediction(doc.doc_id, CAUSAL, a_id, b_id,
                                                "CAUSE", 1.0))
                if a.get("marker") and b.get("child"):
                    preds.append(PairPrediction(doc.doc_id, SUBEVENT, a_id, b_id,
                                                "SUBEVENT", 1.0))
    return preds
