"""Exact-match entity scoring with a category breakdown.

An entity counts as correct only when its type and complete fragment set
match a gold entity. Entities are categorized as discontinuous (more than
one fragment), else overlapped (sharing at least one token with another
entity on its own side of the comparison), else regular — discontinuous
wins when both apply. Reports cover the cumulative groups r, r+o, r+d and
r+o+d: a group keeps only in-group entities on BOTH sides, dropping the
rest from numerator and denominator alike.
"""

import json
from dataclasses import dataclass

REGULAR = "regular"
OVERLAPPED = "overlapped"
DISCONTINUOUS = "discontinuous"

GROUPS = (
    ("r", frozenset({REGULAR})),
    ("r+o", frozenset({REGULAR, OVERLAPPED})),
    ("r+d", frozenset({REGULAR, DISCONTINUOUS})),
    ("r+o+d", frozenset({REGULAR, OVERLAPPED, DISCONTINUOUS})),
)


@dataclass(frozen=True)
class Scores:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    overall: Scores
    groups: dict  # label -> Scores

    def to_json_dict(self):
        def unpack(s):
            return {"tp": s.tp, "fp": s.fp, "fn": s.fn,
                    "precision": s.precision, "recall": s.recall, "f1": s.f1}

        return {"overall": unpack(self.overall),
                "groups": {label: unpack(s) for label, s in self.groups.items()}}

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_table(self):
        rows = [("group", "P", "R", "F1", "TP", "FP", "FN")]
        for label, s in [("overall", self.overall)] + list(self.groups.items()):
            rows.append((label, f"{s.precision:.4f}", f"{s.recall:.4f}", f"{s.f1:.4f}",
                         str(s.tp), str(s.fp), str(s.fn)))
        widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
            for row in rows
        )


def _key(entity):
    return (entity.entity_type, frozenset(entity.fragments))


def _tokens(entity):
    return {t for f in entity.fragments for t in range(f.start, f.end + 1)}


def match_entity(pred, gold):
    """Exact match: same type and identical fragment set; never partial."""
    return _key(pred) == _key(gold)


def category_of(entity, peers):
    """Category of one entity among the entities of its own sentence side."""
    if len(entity.fragments) > 1:
        return DISCONTINUOUS
    mine = _tokens(entity)
    own = _key(entity)
    for other in peers:
        if _key(other) != own and _tokens(other) & mine:
            return OVERLAPPED
    return REGULAR


def _scores(tp, n_pred, n_gold):
    if n_pred == 0 and n_gold == 0:
        return Scores(0, 0, 0, 1.0, 1.0, 1.0)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Scores(tp, n_pred - tp, n_gold - tp, precision, recall, f1)


def _categorized(entities):
    """Deduplicated (key, category) pairs for one sentence side."""
    unique = []
    seen = set()
    for e in entities:
        k = _key(e)
        if k not in seen:
            seen.add(k)
            unique.append(e)
    return [(_key(e), category_of(e, unique)) for e in unique]


def evaluate(pred_sentences, gold_sentences):
    """Score aligned per-sentence entity lists; returns an EvalReport."""
    if len(pred_sentences) != len(gold_sentences):
        raise ValueError(
            f"{len(pred_sentences)} predicted sentences vs {len(gold_sentences)} gold")
    tallies = {label: [0, 0, 0] for label, _ in GROUPS}  # tp, n_pred, n_gold
    for preds, golds in zip(pred_sentences, gold_sentences):
        pred_cats = _categorized(preds)
        gold_cats = _categorized(golds)
        for label, members in GROUPS:
            pred_keys = {k for k, c in pred_cats if c in members}
            gold_keys = {k for k, c in gold_cats if c in members}
            t = tallies[label]
            t[0] += len(pred_keys & gold_keys)
            t[1] += len(pred_keys)
            t[2] += len(gold_keys)
    groups = {label: _scores(*tallies[label]) for label, _ in GROUPS}
    return EvalReport(overall=groups["r+o+d"], groups=groups)
