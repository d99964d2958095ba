"""From head outputs to entities.

Spans the span head accepts become graph nodes; same-type pairs the pair
head labels as succession become edges. Every maximal clique of that graph
is one entity (an isolated node is a singleton clique). Only succession
matters here: the overlapping class is training signal, and flipping it
with the other class must never change decoded output.
"""

import json
from dataclasses import dataclass

import numpy as np

from .corpus import Fragment


@dataclass(frozen=True)
class ScoredFragment:
    span: Fragment
    entity_type: str
    confidence: float


@dataclass(frozen=True)
class EntityPrediction:
    entity_type: str
    fragments: tuple  # of Fragment, sorted
    confidence: float  # mean of member fragment confidences


def _scored_fragments(model, sentence):
    """Accepted spans plus their row numbers in the span feature matrix."""
    spans, mat, probs = model.span_forward(sentence)
    best = probs.data.argmax(axis=1)  # ties resolve to the lowest class index
    scored, rows = [], []
    for k, c in enumerate(best):
        if c != 0:
            scored.append(ScoredFragment(span=spans[k], entity_type=model.span_classes[c],
                                         confidence=float(probs.data[k, c])))
            rows.append(k)
    return scored, rows, mat


def predict_fragments(model, sentence):
    """Spans whose argmax class is an entity type, in span order."""
    return _scored_fragments(model, sentence)[0]


def predict_relations(model, spans_mat, fragments, rows):
    """Succession edges between same-type fragments, as index pairs u < v.

    All C(F,2) pairs are scored in one batch; fragments arrive in span
    order, so (u, v) with u < v is already the canonical pair order.
    """
    pairs = [(u, v) for u in range(len(fragments)) for v in range(u + 1, len(fragments))]
    if not pairs:
        return set()
    probs = model.pair_probs(spans_mat, [(rows[u], rows[v]) for u, v in pairs])
    best = probs.data.argmax(axis=1)
    return {
        (u, v)
        for (u, v), c in zip(pairs, best)
        if c == 0 and fragments[u].entity_type == fragments[v].entity_type
    }


def maximal_cliques(n_nodes, edges):
    """All maximal cliques as sorted index tuples, canonically ordered.

    Bron-Kerbosch with pivoting; isolated nodes appear as singletons.
    Iteration is over sorted candidates so the output never depends on
    set-iteration internals.
    """
    if n_nodes == 0:
        return []
    adj = [set() for _ in range(n_nodes)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    cliques = []

    def expand(taken, candidates, excluded):
        if not candidates and not excluded:
            cliques.append(tuple(sorted(taken)))
            return
        pivot = max(sorted(candidates | excluded), key=lambda u: len(adj[u] & candidates))
        for v in sorted(candidates - adj[pivot]):
            expand(taken | {v}, candidates & adj[v], excluded & adj[v])
            candidates = candidates - {v}
            excluded = excluded | {v}

    expand(set(), set(range(n_nodes)), set())
    return sorted(cliques, key=lambda c: (c[0], len(c), c))


def find_complete_subgraphs(n_nodes, edges):
    return maximal_cliques(n_nodes, edges)


def decode(model, sentence):
    """Predict the entity set of one sentence."""
    fragments, rows, spans_mat = _scored_fragments(model, sentence)
    if not fragments:
        return []
    edges = predict_relations(model, spans_mat, fragments, rows)
    entities = []
    seen = set()
    for clique in maximal_cliques(len(fragments), edges):
        members = [fragments[k] for k in clique]
        spans = tuple(sorted(m.span for m in members))
        key = (members[0].entity_type, spans)
        if key in seen:
            continue
        seen.add(key)
        entities.append(EntityPrediction(
            entity_type=members[0].entity_type,
            fragments=spans,
            confidence=float(np.mean([m.confidence for m in members])),
        ))
    return entities


# ---------------------------------------------------------------------------
# predictions file


def write_predictions(path, entities_per_sentence):
    with open(path, "w", encoding="utf-8") as f:
        for k, entities in enumerate(entities_per_sentence):
            record = {
                "sentence_index": k,
                "entities": [
                    {"type": e.entity_type,
                     "fragments": [[f.start, f.end] for f in e.fragments],
                     "confidence": e.confidence}
                    for e in entities
                ],
            }
            f.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_predictions(path):
    by_index = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            entities = [
                EntityPrediction(
                    entity_type=item["type"],
                    fragments=tuple(Fragment(int(s), int(e)) for s, e in item["fragments"]),
                    confidence=float(item.get("confidence", 0.0)),
                )
                for item in record["entities"]
            ]
            by_index[int(record["sentence_index"])] = entities
    if not by_index:
        return []
    return [by_index.get(k, []) for k in range(max(by_index) + 1)]
