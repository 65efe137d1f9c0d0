"""Document corpus model: mentions, gold relations, static event graphs,
JSON Lines ingestion, windowing and candidate-pair enumeration."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger("graphere.corpus")

COREFERENCE = "coreference"
TEMPORAL = "temporal"
CAUSAL = "causal"
SUBEVENT = "subevent"
REL_TYPES = (COREFERENCE, TEMPORAL, CAUSAL, SUBEVENT)

NONE_LABEL = "NONE"

# mirrors the common four-type / ten-subtype annotation scheme
DEFAULT_SCHEME = {
    COREFERENCE: ["COREFERENCE"],
    TEMPORAL: ["BEFORE", "OVERLAP", "CONTAINS", "SIMULTANEOUS", "BEGINS-ON", "ENDS-ON"],
    CAUSAL: ["CAUSE", "PRECONDITION"],
    SUBEVENT: ["SUBEVENT"],
}


class CorpusValidationError(ValueError):
    pass


@dataclass(frozen=True)
class LabelScheme:
    """Ordered subtype lists per relation type; class index 0 is always NONE."""

    subtypes: dict[str, tuple[str, ...]]

    def __post_init__(self):
        for rel in REL_TYPES:
            subs = self.subtypes.get(rel)
            if not subs:
                raise CorpusValidationError(f"label scheme missing subtypes for '{rel}'")
            if len(set(subs)) != len(subs):
                raise CorpusValidationError(f"duplicate subtypes for '{rel}': {subs}")
            if NONE_LABEL in subs:
                raise CorpusValidationError(f"'{NONE_LABEL}' is implicit, not a subtype")

    @classmethod
    def default(cls) -> "LabelScheme":
        return cls({rel: tuple(subs) for rel, subs in DEFAULT_SCHEME.items()})

    @classmethod
    def from_file(cls, path) -> "LabelScheme":
        raw = json.loads(Path(path).read_text())
        return cls({rel: tuple(subs) for rel, subs in raw.items()})

    def class_count(self, rel_type: str) -> int:
        return 1 + len(self.subtypes[rel_type])

    def class_index(self, rel_type: str, subtype: str | None) -> int:
        if subtype is None or subtype == NONE_LABEL:
            return 0
        try:
            return 1 + self.subtypes[rel_type].index(subtype)
        except ValueError:
            raise CorpusValidationError(
                f"unknown subtype '{subtype}' for relation type '{rel_type}'"
            ) from None

    def class_label(self, rel_type: str, index: int) -> str:
        if index == 0:
            return NONE_LABEL
        return self.subtypes[rel_type][index - 1]


@dataclass(frozen=True)
class EventMention:
    mention_id: str
    start: int
    end: int  # exclusive
    event_id: str  # cluster identity for coreference gold


@dataclass(frozen=True)
class TimexMention:
    mention_id: str
    start: int
    end: int


@dataclass(frozen=True)
class RelationTuple:
    source: str
    target: str
    rel_type: str
    subtype: str


@dataclass
class Document:
    doc_id: str
    tokens: list[str]
    sentences: list[tuple[int, int]]
    events: list[EventMention]
    timexes: list[TimexMention]
    relations: list[RelationTuple]

    def __post_init__(self):
        self.validate()

    def validate(self, scheme: LabelScheme | None = None) -> None:
        n = len(self.tokens)
        doc = self.doc_id
        prev_end = 0
        for i, (s, e) in enumerate(self.sentences):
            if s != prev_end or e <= s or e > n:
                raise CorpusValidationError(
                    f"document '{doc}': sentences must tile [0, {n}), got sentence {i} = [{s}, {e})"
                )
            prev_end = e
        if self.sentences and prev_end != n:
            raise CorpusValidationError(
                f"document '{doc}': sentences cover [0, {prev_end}) but document has {n} tokens"
            )
        if not self.sentences and n > 0:
            raise CorpusValidationError(f"document '{doc}': non-empty document needs sentences")

        def check_spans(mentions, kind):
            last_start = -1
            for m in mentions:
                if not (0 <= m.start < m.end <= n):
                    raise CorpusValidationError(
                        f"document '{doc}': {kind} '{m.mention_id}' span [{m.start}, {m.end}) "
                        f"outside [0, {n}) or empty"
                    )
                if m.start < last_start:
                    raise CorpusValidationError(
                        f"document '{doc}': {kind} mentions not sorted by start offset"
                    )
                last_start = m.start

        check_spans(self.events, "event")
        check_spans(self.timexes, "timex")

        event_ids = {m.mention_id for m in self.events}
        timex_ids = {m.mention_id for m in self.timexes}
        if len(event_ids) != len(self.events) or len(timex_ids) != len(self.timexes):
            raise CorpusValidationError(f"document '{doc}': duplicate mention_id")
        if event_ids & timex_ids:
            raise CorpusValidationError(f"document '{doc}': mention_id shared between event and timex")

        seen = set()
        for r in self.relations:
            if r.rel_type not in REL_TYPES:
                raise CorpusValidationError(
                    f"document '{doc}': unknown relation type '{r.rel_type}'"
                )
            if r.source not in event_ids:
                raise CorpusValidationError(
                    f"document '{doc}': relation source '{r.source}' is not a known event mention"
                )
            if r.target in timex_ids:
                if r.rel_type != TEMPORAL:
                    raise CorpusValidationError(
                        f"document '{doc}': event-timex relation '{r.source}'->'{r.target}' "
                        f"only allowed under '{TEMPORAL}', got '{r.rel_type}'"
                    )
            elif r.target not in event_ids:
                raise CorpusValidationError(
                    f"document '{doc}': relation target '{r.target}' is not a known mention"
                )
            if r.source == r.target:
                raise CorpusValidationError(
                    f"document '{doc}': self-relation on '{r.source}'"
                )
            key = (r.source, r.target, r.rel_type)
            if key in seen:
                raise CorpusValidationError(
                    f"document '{doc}': duplicate relation {key}"
                )
            seen.add(key)
            if scheme is not None:
                scheme.class_index(r.rel_type, r.subtype)

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def mention_span(self, mention_id: str) -> tuple[int, int]:
        for m in self.events:
            if m.mention_id == mention_id:
                return (m.start, m.end)
        for m in self.timexes:
            if m.mention_id == mention_id:
                return (m.start, m.end)
        raise KeyError(mention_id)


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    surface: str


@dataclass
class StaticEventGraph:
    """Fixed per-document graph (AMR or IE flavor) with an event alignment."""

    flavor: str  # "amr" | "ie"
    nodes: list[GraphNode]
    edges: list[tuple[str, str, str]]  # (src, dst, label)
    alignment: dict[str, str]  # node_id -> event mention_id

    def validate(self, doc: Document) -> None:
        ids = {n.node_id for n in self.nodes}
        if len(ids) != len(self.nodes):
            raise CorpusValidationError(
                f"graph '{self.flavor}' for '{doc.doc_id}': duplicate node_id"
            )
        for src, dst, _ in self.edges:
            if src not in ids or dst not in ids:
                raise CorpusValidationError(
                    f"graph '{self.flavor}' for '{doc.doc_id}': dangling edge ({src}, {dst})"
                )
        event_ids = {m.mention_id for m in doc.events}
        for node_id, mention_id in self.alignment.items():
            if node_id not in ids:
                raise CorpusValidationError(
                    f"graph '{self.flavor}' for '{doc.doc_id}': alignment from unknown node '{node_id}'"
                )
            if mention_id not in event_ids:
                raise CorpusValidationError(
                    f"graph '{self.flavor}' for '{doc.doc_id}': alignment to unknown mention '{mention_id}'"
                )

    def unaligned_events(self, doc: Document) -> list[str]:
        aligned = set(self.alignment.values())
        return [m.mention_id for m in doc.events if m.mention_id not in aligned]

    @classmethod
    def empty(cls, flavor: str) -> "StaticEventGraph":
        return cls(flavor=flavor, nodes=[], edges=[], alignment={})


# ---------------------------------------------------------------------------
# JSON Lines I/O


def _doc_from_record(rec: dict) -> Document:
    events = [EventMention(e["mention_id"], e["span"][0], e["span"][1], e["event_id"])
              for e in rec.get("events", [])]
    timexes = [TimexMention(t["mention_id"], t["span"][0], t["span"][1])
               for t in rec.get("timexes", [])]
    relations = [RelationTuple(r["source"], r["target"], r["type"], r["subtype"])
                 for r in rec.get("relations", [])]
    return Document(
        doc_id=rec["doc_id"],
        tokens=list(rec["tokens"]),
        sentences=[tuple(s) for s in rec["sentences"]],
        events=events,
        timexes=timexes,
        relations=relations,
    )


def _doc_to_record(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "tokens": doc.tokens,
        "sentences": [list(s) for s in doc.sentences],
        "events": [{"mention_id": m.mention_id, "span": [m.start, m.end],
                    "event_id": m.event_id} for m in doc.events],
        "timexes": [{"mention_id": m.mention_id, "span": [m.start, m.end]}
                    for m in doc.timexes],
        "relations": [{"source": r.source, "target": r.target, "type": r.rel_type,
                       "subtype": r.subtype} for r in doc.relations],
    }


def load_corpus(path, scheme: LabelScheme | None = None) -> list[Document]:
    """Load and validate a JSON Lines corpus; one document per line."""
    scheme = scheme or LabelScheme.default()
    docs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusValidationError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            try:
                doc = _doc_from_record(rec)
                doc.validate(scheme)
            except (KeyError, TypeError, IndexError) as exc:
                raise CorpusValidationError(
                    f"{path}:{lineno}: bad document record: {exc!r}"
                ) from exc
            docs.append(doc)
    stats = corpus_stats(docs)
    logger.info("loaded %s: %s", path, stats)
    return docs


def save_corpus(docs: list[Document], path) -> None:
    with open(path, "w") as fh:
        for doc in docs:
            fh.write(json.dumps(_doc_to_record(doc)) + "\n")


def corpus_stats(docs: list[Document]) -> dict:
    counts = {rel: 0 for rel in REL_TYPES}
    for doc in docs:
        for r in doc.relations:
            counts[r.rel_type] += 1
    return {
        "documents": len(docs),
        "events": sum(len(d.events) for d in docs),
        "timexes": sum(len(d.timexes) for d in docs),
        "relations": counts,
    }


def _graph_from_record(flavor: str, rec: dict) -> StaticEventGraph:
    nodes = [GraphNode(n["node_id"], n["surface"]) for n in rec.get("nodes", [])]
    edges = [(e[0], e[1], e[2]) for e in rec.get("edges", [])]
    alignment = dict(rec.get("alignment", {}))
    return StaticEventGraph(flavor=flavor, nodes=nodes, edges=edges, alignment=alignment)


def graph_to_record(graph: StaticEventGraph) -> dict:
    return {
        "nodes": [{"node_id": n.node_id, "surface": n.surface} for n in graph.nodes],
        "edges": [list(e) for e in graph.edges],
        "alignment": graph.alignment,
    }


class GraphStore:
    """All static event graphs from one JSON Lines file, keyed by doc_id."""

    def __init__(self, path):
        self.path = str(path)
        self._records: dict[str, dict] = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusValidationError(
                        f"{path}:{lineno}: malformed JSON: {exc}"
                    ) from exc
                self._records[rec["doc_id"]] = rec

    def for_document(self, doc: Document) -> tuple[StaticEventGraph, StaticEventGraph]:
        if doc.doc_id not in self._records:
            raise CorpusValidationError(
                f"{self.path}: no static graphs for document '{doc.doc_id}'"
            )
        rec = self._records[doc.doc_id]
        amr = _graph_from_record("amr", rec.get("amr", {}))
        ie = _graph_from_record("ie", rec.get("ie", {}))
        amr.validate(doc)
        ie.validate(doc)
        for g in (amr, ie):
            missing = g.unaligned_events(doc)
            if missing:
                logger.warning(
                    "document '%s': %d events unaligned in %s graph: %s",
                    doc.doc_id, len(missing), g.flavor, missing,
                )
        return amr, ie


def load_static_graphs(path, doc: Document) -> tuple[StaticEventGraph, StaticEventGraph]:
    return GraphStore(path).for_document(doc)


def save_graphs(records: dict[str, tuple[StaticEventGraph, StaticEventGraph]], path) -> None:
    with open(path, "w") as fh:
        for doc_id, (amr, ie) in records.items():
            fh.write(json.dumps({
                "doc_id": doc_id,
                "amr": graph_to_record(amr),
                "ie": graph_to_record(ie),
            }) + "\n")


# ---------------------------------------------------------------------------
# windowing


def segment_document(doc: Document, max_tokens: int) -> list[tuple[int, int]]:
    """Split a document into disjoint windows of at most max_tokens tokens.

    Cuts fall on sentence boundaries where possible; a window never splits a
    mention span. Raises if a single mention exceeds max_tokens.
    """
    n = doc.n_tokens
    if n == 0:
        return []
    spans = [(m.start, m.end) for m in doc.events] + [(m.start, m.end) for m in doc.timexes]
    for s, e in spans:
        if e - s > max_tokens:
            raise CorpusValidationError(
                f"document '{doc.doc_id}': mention span [{s}, {e}) longer than "
                f"max_tokens={max_tokens}"
            )

    def splittable(pos: int) -> bool:
        return not any(s < pos < e for s, e in spans)

    boundaries = [e for _, e in doc.sentences[:-1]]
    cut_points = [b for b in boundaries if splittable(b)]

    windows = []
    start = 0
    while start < n:
        if n - start <= max_tokens:
            windows.append((start, n))
            break
        limit = start + max_tokens
        # furthest sentence boundary that still fits
        candidates = [c for c in cut_points if start < c <= limit]
        if candidates:
            cut = candidates[-1]
        else:
            # forced intra-sentence cut; back off until off every mention
            cut = limit
            while cut > start and not splittable(cut):
                cut -= 1
            if cut == start:
                raise CorpusValidationError(
                    f"document '{doc.doc_id}': cannot place a window cut after token {start}"
                )
        windows.append((start, cut))
        start = cut
    return windows


# ---------------------------------------------------------------------------
# candidate pairs


@dataclass(frozen=True)
class CandidatePair:
    """Ordered candidate with row indices into the mention matrix
    (events 0..p-1 in document order, timexes p..p+q-1)."""

    source_id: str
    target_id: str
    source_row: int
    target_row: int
    gold_class: int  # index into the LabelScheme classes; 0 = NONE


def enumerate_pairs(doc: Document, rel_type: str,
                    scheme: LabelScheme | None = None) -> list[CandidatePair]:
    """All ordered event-event pairs, plus event->timex pairs for temporal."""
    scheme = scheme or LabelScheme.default()
    gold = {(r.source, r.target): r.subtype
            for r in doc.relations if r.rel_type == rel_type}
    p = len(doc.events)
    pairs = []
    for i, src in enumerate(doc.events):
        for j, tgt in enumerate(doc.events):
            if i == j:
                continue
            subtype = gold.get((src.mention_id, tgt.mention_id))
            pairs.append(CandidatePair(
                src.mention_id, tgt.mention_id, i, j,
                scheme.class_index(rel_type, subtype),
            ))
        if rel_type == TEMPORAL:
            for k, tx in enumerate(doc.timexes):
                subtype = gold.get((src.mention_id, tx.mention_id))
                pairs.append(CandidatePair(
                    src.mention_id, tx.mention_id, i, p + k,
                    scheme.class_index(rel_type, subtype),
                ))
    return pairs
