"""Sentence data model and file formats.

A sentence carries its tokens, an unlabeled-for-modeling dependency graph,
and entity annotations in which one entity may span several disjoint
fragments and distinct entities may share tokens. This module owns the
JSONL corpus format, validation of all structural invariants, derivation
of gold span/pair labels for training, a synthetic corpus generator, and
the plain-text word-embedding format.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .seeding import stream

SUCCESSION = "succession"
OVERLAPPING = "overlapping"
OTHER = "other"
RELATION_CLASSES = (SUCCESSION, OVERLAPPING, OTHER)


class CorpusError(ValueError):
    """Malformed corpus file or annotation."""


@dataclass(frozen=True, order=True)
class Fragment:
    """Closed interval of token indices: width = end - start + 1."""

    start: int
    end: int

    @property
    def width(self):
        return self.end - self.start + 1

    def overlaps(self, other):
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True)
class DependencyEdge:
    head: int
    dependent: int
    label: str = None


@dataclass(frozen=True)
class Entity:
    entity_type: str
    fragments: tuple  # of Fragment, sorted by (start, end)


@dataclass(eq=False)
class AnnotatedSentence:
    tokens: tuple  # of str
    dep_edges: tuple = ()
    entities: tuple = ()
    vectors: np.ndarray = None  # optional N x d_ctx precomputed rows

    def __len__(self):
        return len(self.tokens)


def validate(sentence):
    """Return every invariant violation as a human-readable string."""
    errors = []
    n = len(sentence.tokens)
    if n == 0:
        errors.append("sentence has no tokens")
    for i, text in enumerate(sentence.tokens):
        if not isinstance(text, str) or not text:
            errors.append(f"token {i} has empty text")
    for e in sentence.dep_edges:
        if e.head == e.dependent:
            errors.append(f"dependency edge {e.head}->{e.dependent} is a self-loop")
        if not (0 <= e.head < n and 0 <= e.dependent < n):
            errors.append(f"dependency edge {e.head}->{e.dependent} out of bounds for {n} tokens")
    seen_entities = set()
    span_types = {}
    for k, ent in enumerate(sentence.entities):
        if not ent.fragments:
            errors.append(f"entity {k} has no fragments")
            continue
        for f in ent.fragments:
            if not (0 <= f.start <= f.end < n):
                errors.append(f"entity {k} fragment ({f.start},{f.end}) out of bounds for {n} tokens")
            prior = span_types.setdefault(f, ent.entity_type)
            if prior != ent.entity_type:
                errors.append(
                    f"fragment ({f.start},{f.end}) annotated with conflicting types "
                    f"{prior!r} and {ent.entity_type!r}"
                )
        if list(ent.fragments) != sorted(ent.fragments):
            errors.append(f"entity {k} fragments not sorted by (start, end)")
        else:
            for a, b in zip(ent.fragments, ent.fragments[1:]):
                if a.overlaps(b):
                    errors.append(
                        f"entity {k} fragments ({a.start},{a.end}) and ({b.start},{b.end}) overlap"
                    )
        key = (ent.entity_type, ent.fragments)
        if key in seen_entities:
            errors.append(f"duplicate entity {ent.entity_type!r} {[(f.start, f.end) for f in ent.fragments]}")
        seen_entities.add(key)
    if sentence.vectors is not None:
        v = np.asarray(sentence.vectors)
        if v.ndim != 2 or v.shape[0] != n:
            errors.append(f"precomputed vectors shape {v.shape} does not match {n} tokens")
    return errors


# ---------------------------------------------------------------------------
# JSONL corpus format


def _sentence_from_record(record):
    tokens = tuple(record["tokens"])
    edges = []
    for item in record.get("dep_edges", []):
        if len(item) == 2:
            edges.append(DependencyEdge(int(item[0]), int(item[1])))
        elif len(item) == 3:
            edges.append(DependencyEdge(int(item[0]), int(item[1]), str(item[2])))
        else:
            raise CorpusError(f"dependency edge {item!r} is not [head, dependent(, label)]")
    entities = []
    for ent in record.get("entities", []):
        fragments = tuple(Fragment(int(s), int(e)) for s, e in ent["fragments"])
        entities.append(Entity(entity_type=str(ent["type"]), fragments=fragments))
    vectors = record.get("vectors")
    if vectors is not None:
        vectors = np.asarray(vectors, dtype=np.float64)
    return AnnotatedSentence(tokens, tuple(edges), tuple(entities), vectors)


def load_corpus(path, format="jsonl"):
    """Parse a JSONL corpus; every sentence is validated on the way in."""
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    sentences = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                sentence = _sentence_from_record(record)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from exc
            problems = validate(sentence)
            if problems:
                raise CorpusError(f"{path}: line {lineno}: " + "; ".join(problems))
            sentences.append(sentence)
    return sentences


def _sentence_to_record(s):
    record = {
        "tokens": list(s.tokens),
        "dep_edges": [
            [e.head, e.dependent] if e.label is None else [e.head, e.dependent, e.label]
            for e in s.dep_edges
        ],
        "entities": [
            {"type": ent.entity_type, "fragments": [[f.start, f.end] for f in ent.fragments]}
            for ent in s.entities
        ],
    }
    if s.vectors is not None:
        record["vectors"] = np.asarray(s.vectors).tolist()
    return record


def write_corpus(path, sentences):
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(json.dumps(_sentence_to_record(s), separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# gold labels


def enumerate_fragments(n_tokens, max_width):
    """All candidate spans (i, j), i <= j, width-capped, ordered by (i, j).

    Single source of truth for span ordering: labels, feature matrices and
    classifier rows all index spans through this list.
    """
    return [
        Fragment(i, j)
        for i in range(n_tokens)
        for j in range(i, min(i + max_width, n_tokens))
    ]


def gold_fragments(sentence):
    """Unique gold fragments in canonical (start, end) order."""
    return sorted({f for ent in sentence.entities for f in ent.fragments})


def derive_span_labels(sentence, max_width):
    """Label every enumerated span with its entity type, or None.

    Returns (labels, n_excluded) where n_excluded counts gold fragments
    wider than the cap — unreachable recall the caller may warn about.
    """
    by_span = {}
    for ent in sentence.entities:
        for f in ent.fragments:
            by_span[f] = ent.entity_type
    labels = {f: by_span.get(f) for f in enumerate_fragments(len(sentence), max_width)}
    n_excluded = sum(1 for f in by_span if f.width > max_width)
    return labels, n_excluded


def derive_pair_labels(sentence):
    """Relation label for every unordered pair of gold fragments.

    Keyed by (smaller, larger) fragment. A pair is SUCCESSION when some
    entity contains both fragments (so each entity's fragments form a
    complete clique), else OVERLAPPING when their ranges intersect, else
    OTHER; succession wins when both conditions hold.
    """
    fragments = gold_fragments(sentence)
    entity_sets = [frozenset(ent.fragments) for ent in sentence.entities]
    labels = {}
    for i in range(len(fragments)):
        for j in range(i + 1, len(fragments)):
            a, b = fragments[i], fragments[j]
            if any(a in members and b in members for members in entity_sets):
                labels[(a, b)] = SUCCESSION
            elif a.overlaps(b):
                labels[(a, b)] = OVERLAPPING
            else:
                labels[(a, b)] = OTHER
    return labels


# ---------------------------------------------------------------------------
# synthetic corpus

_FILLER_WORDS = (
    "the", "was", "of", "and", "with", "were", "noted", "in",
    "on", "mildly", "slightly", "appears", "again", "still",
)

_CONTENT_POOLS = {
    "Disorder": ("stenosis", "thrombus", "edema", "lesion", "embolism",
                 "fracture", "atrophy", "infarct"),
    "Finding": ("elevated", "dilated", "thickened", "enlarged", "reduced",
                "calcified", "prolapsed", "impaired"),
}


def _content_pool(entity_type):
    pool = _CONTENT_POOLS.get(entity_type)
    if pool is None:
        pool = tuple(f"{entity_type.lower()}_{k}" for k in range(8))
    return pool


@dataclass
class SynthSpec:
    """Recipe for a synthetic corpus.

    p_overlap / p_discont are the proportions of sentences built around an
    overlapped-entity pattern and a discontinuous-entity pattern; the rest
    carry one regular entity.
    """

    sentences: int
    p_overlap: float = 0.0
    p_discont: float = 0.0
    entity_types: tuple = ("Disorder", "Finding")
    min_tokens: int = 8
    max_tokens: int = 14


def _pick(rng, pool):
    return pool[int(rng.integers(0, len(pool)))]


def _random_tree_edges(rng, n):
    # attach every token to a random earlier one: a single tree rooted at 0
    return tuple(DependencyEdge(int(rng.integers(0, i)), i) for i in range(1, n))


def _regular_entity(rng, n, types):
    width = min(int(rng.integers(1, 3)), n)
    start = int(rng.integers(0, n - width + 1))
    etype = _pick(rng, types)
    pool = _content_pool(etype)
    return [Entity(etype, (Fragment(start, start + width - 1),))], {
        t: pool for t in range(start, start + width)
    }


def _overlapped_entities(rng, n, types):
    start = int(rng.integers(0, n - 2))
    type_a, type_b = _pick(rng, types), _pick(rng, types)
    staggered = rng.integers(0, 2) == 0
    if staggered:  # [a a][b] with the middle token shared
        frag_a, frag_b = Fragment(start, start + 1), Fragment(start + 1, start + 2)
    else:  # nested: inner token inside a width-3 outer span
        frag_a, frag_b = Fragment(start, start + 2), Fragment(start + 1, start + 1)

    # the two layouts cover the same three positions with the same type
    # pattern, so draw their words from disjoint halves of each pool — the
    # surface form has to carry the structure or 100% recovery is impossible
    def half(etype):
        pool = _content_pool(etype)
        mid = len(pool) // 2
        return pool[:mid] if staggered else pool[mid:]

    words = {start: half(type_a), start + 1: half(type_b), start + 2: half(type_a)}
    return [Entity(type_a, (frag_a,)), Entity(type_b, (frag_b,))], words


def _discontinuous_entity(rng, n, types):
    widths = [int(rng.integers(1, 3)), int(rng.integers(1, 3))]
    gap = int(rng.integers(1, 3))
    while widths[0] + gap + widths[1] > n:  # shrink to fit short sentences
        if gap > 1:
            gap -= 1
        elif widths[0] > 1:
            widths[0] -= 1
        else:
            widths[1] -= 1
    total = widths[0] + gap + widths[1]
    start = int(rng.integers(0, n - total + 1))
    first = Fragment(start, start + widths[0] - 1)
    second_start = first.end + 1 + gap
    second = Fragment(second_start, second_start + widths[1] - 1)
    etype = _pick(rng, types)
    pool = _content_pool(etype)
    words = {t: pool for f in (first, second) for t in range(f.start, f.end + 1)}
    return [Entity(etype, (first, second))], words


def synthesize_corpus(spec, seed):
    """Generate a deterministic corpus matching the recipe's proportions.

    Sentence counts per pattern are fixed quotas (rounded), not per-sentence
    coin flips, so small corpora hit the requested proportions exactly.
    """
    if spec.sentences < 0:
        raise ValueError("sentences must be >= 0")
    if not (0.0 <= spec.p_overlap <= 1.0 and 0.0 <= spec.p_discont <= 1.0):
        raise ValueError("pattern proportions must lie in [0, 1]")
    if spec.p_overlap + spec.p_discont > 1.0 + 1e-9:
        raise ValueError("p_overlap + p_discont must not exceed 1")
    if not (1 <= spec.min_tokens <= spec.max_tokens):
        raise ValueError("need 1 <= min_tokens <= max_tokens")
    if not spec.entity_types:
        raise ValueError("need at least one entity type")

    n_discont = round(spec.p_discont * spec.sentences)
    n_overlap = round(spec.p_overlap * spec.sentences)
    if n_discont + n_overlap > spec.sentences:
        n_overlap = spec.sentences - n_discont
    if n_discont > 0 and spec.min_tokens < 3:
        raise ValueError(f"a {spec.min_tokens}-token sentence cannot host a discontinuous entity")
    if n_overlap > 0 and spec.min_tokens < 3:
        raise ValueError(f"a {spec.min_tokens}-token sentence cannot host overlapped entities")

    builders = ([_discontinuous_entity] * n_discont
                + [_overlapped_entities] * n_overlap
                + [_regular_entity] * (spec.sentences - n_discont - n_overlap))
    rng = stream(seed, "synth")
    rng.shuffle(builders)

    types = tuple(spec.entity_types)
    sentences = []
    for build in builders:
        n = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
        tokens = [_pick(rng, _FILLER_WORDS) for _ in range(n)]
        entities, content_positions = build(rng, n, types)
        for position, pool in content_positions.items():
            tokens[position] = _pick(rng, pool)
        sentences.append(AnnotatedSentence(
            tokens=tuple(tokens),
            dep_edges=_random_tree_edges(rng, n),
            entities=tuple(sorted(entities, key=lambda e: (e.fragments, e.entity_type))),
        ))
    return sentences


# ---------------------------------------------------------------------------
# plain-text embeddings


def load_embeddings(path):
    """Read "V D" header then V lines of "word f1 .. fD"; returns (words, V x D)."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise CorpusError(f"{path}: embedding header must be 'V D'")
        v_count, dim = int(header[0]), int(header[1])
        words, rows = [], []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise CorpusError(f"{path}: line {lineno}: expected {dim} values")
            words.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(words) != v_count:
        raise CorpusError(f"{path}: header promises {v_count} words, found {len(words)}")
    matrix = np.asarray(rows, dtype=np.float64).reshape(len(words), dim)
    return words, matrix
