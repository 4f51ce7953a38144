"""Lexical policy retrieval: hybrid sequence/token-overlap scoring, top-k.

Every rule is scored against the mission text with two similarities —
Ratcliff/Obershelp sequence matching over the raw lowercased strings and
Jaccard overlap over token sets — and the top-k rules by combined score are
handed to prompt construction. 30 rules are scanned linearly; no index.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from difflib import SequenceMatcher

from .knowledge import PolicyRule, RuleSet

# Equal weighting of the two similarity components; callers may rebalance.
SEQ_WEIGHT = 0.5
JACCARD_WEIGHT = 0.5

_TOKEN_RE = re.compile(r"[0-9a-z]+")


@dataclass(frozen=True)
class ScoredRule:
    rule: PolicyRule
    seq_score: float
    jaccard_score: float
    combined: float

    def to_dict(self) -> dict:
        return {
            "id": self.rule.id,
            "domain": self.rule.domain,
            "priority": self.rule.priority,
            "text": self.rule.text,
            "seq_score": self.seq_score,
            "jaccard_score": self.jaccard_score,
            "combined": self.combined,
        }


def tokenize(text: str) -> set[str]:
    """Lowercase, split on every non-alphanumeric run, drop empties."""
    return set(_TOKEN_RE.findall(text.lower()))


def jaccard(a: set[str], b: set[str]) -> float:
    """|a ∩ b| / |a ∪ b|; two empty sets score 0."""
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def seq_ratio(a: str, b: str) -> float:
    """Ratcliff/Obershelp similarity of the lowercased strings: 2M/T.

    autojunk is disabled so long inputs are scored by the same rule as
    short ones. Two empty strings score 1.0.
    """
    return SequenceMatcher(None, a.lower(), b.lower(), autojunk=False).ratio()


def score_rule(query: str, rule: PolicyRule,
               seq_weight: float = SEQ_WEIGHT,
               jaccard_weight: float = JACCARD_WEIGHT) -> ScoredRule:
    s = seq_ratio(query, rule.text)
    j = jaccard(tokenize(query), tokenize(rule.text))
    return ScoredRule(rule=rule, seq_score=s, jaccard_score=j,
                      combined=seq_weight * s + jaccard_weight * j)


def retrieve_top_k(query: str, rules: RuleSet, k: int = 3,
                   seq_weight: float = SEQ_WEIGHT,
                   jaccard_weight: float = JACCARD_WEIGHT) -> list[ScoredRule]:
    """Score every rule against the query; return the k best.

    Descending combined score, ties broken by rule id ascending so equal
    inputs always produce the identical list.
    """
    if len(rules) == 0:
        raise ValueError("rule set is empty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scored = [score_rule(query, rule, seq_weight, jaccard_weight) for rule in rules]
    scored.sort(key=lambda s: (-s.combined, s.rule.id))
    return scored[:k]
