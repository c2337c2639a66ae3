"""Attribution and causal-consistency metrics plus the paired statistics
used to compare prompting conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .claims import Claim, ClaimSet, extract_causal_relations
from .errors import DegenerateVariance, EmptyClaimSet, EmptyList, ValidationError, ZeroTokens
from .graph import find_cycle
from .knowledge import KnowledgeGraph


@dataclass(frozen=True)
class MetricReport:
    attributable_count_raw: int
    n_claims: int
    ccs: int
    eid_proxy: float
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 <= self.attributable_count_raw <= max(self.n_claims, 0):
            raise ValidationError("attributable count exceeds claim count")
        if self.ccs not in (0, 1):
            raise ValidationError("ccs must be 0 or 1")

    @property
    def ar_exact(self) -> Fraction:
        if self.n_claims == 0:
            return Fraction(0)
        return Fraction(self.attributable_count_raw, self.n_claims)

    @property
    def ar(self) -> float:
        return float(self.ar_exact)

    def to_dict(self) -> dict:
        return {
            "ar": self.ar,
            "attributable_count_raw": self.attributable_count_raw,
            "n_claims": self.n_claims,
            "ccs": self.ccs,
            "eid_proxy": self.eid_proxy,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(d["attributable_count_raw"], d["n_claims"], d["ccs"], d["eid_proxy"], tuple(d.get("flags", ())))


@dataclass(frozen=True)
class StatsSummary:
    mean_diff: float
    t_stat: float
    p_value: float
    cohens_d: float
    significant_after_bonferroni: bool
    m_comparisons: int = 7
    n_pairs: int = 0
    notes: tuple[str, ...] = field(default=())


def claim_is_attributable(claim: Claim, kg: KnowledgeGraph, max_path_len: int = 2) -> bool:
    return kg.has_path(claim.subject, claim.object, claim.relation_kind, max_path_len)


def attributable_rate(cs: ClaimSet, kg: KnowledgeGraph, max_path_len: int = 2) -> tuple[float, int]:
    """Fraction of claims backed by a same-kind path of at most ``max_path_len``
    edges from subject to object in ``kg``. Returns ``(ar, raw_count)``."""
    if not cs.claims:
        raise EmptyClaimSet("attributable rate is undefined for zero claims")
    raw = sum(claim_is_attributable(c, kg, max_path_len) for c in cs.claims)
    return raw / len(cs.claims), raw


def is_acyclic(pairs: Sequence[tuple[str, str]]) -> bool:
    adj: dict[str, list[str]] = {}
    for a, b in pairs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, [])
    for succ in adj.values():
        succ.sort()
    return find_cycle(adj) is None


def ccs_response(cs: ClaimSet) -> int:
    """1 if the response's causal claims form a DAG; zero causal claims count as a DAG."""
    return int(is_acyclic(extract_causal_relations(cs)))


def ccs_aggregate(scores: Sequence[int]) -> float:
    if len(scores) == 0:
        raise EmptyList("cannot aggregate an empty score list")
    return math.fsum(scores) / len(scores)


def attributable_count(ar: float, n_avg: float) -> float:
    if not 0.0 <= ar <= 1.0:
        raise ValidationError(f"ar {ar} outside [0, 1]")
    if n_avg < 0:
        raise ValidationError(f"n_avg {n_avg} is negative")
    return ar * n_avg


def eid_proxy(attributable: int, token_count: int) -> float:
    """Attributable claims per whitespace token."""
    if token_count <= 0:
        raise ZeroTokens("token count must be positive")
    return attributable / token_count


def score_claims(cs: ClaimSet, kg: KnowledgeGraph, max_path_len: int = 2) -> MetricReport:
    """Full report for one response. Empty claim sets score AR 0 and are flagged."""
    flags = []
    if cs.claims:
        _, raw = attributable_rate(cs, kg, max_path_len)
    else:
        raw = 0
        flags.append("empty_claims")
    if cs.source_token_count > 0:
        eid = eid_proxy(raw, cs.source_token_count)
    else:
        eid = 0.0
        flags.append("zero_tokens")
    return MetricReport(raw, len(cs.claims), ccs_response(cs), eid, tuple(flags))


def paired_t_test(diffs: Sequence[float]) -> tuple[float, float]:
    """Two-sided one-sample t-test of the differences against zero.

    t = mean(d) / (sd(d) / sqrt(n)) with n - 1 degrees of freedom.
    """
    d = np.asarray(diffs, dtype=float)
    n = d.size
    if n < 2:
        raise DegenerateVariance("need at least two paired differences")
    sd = d.std(ddof=1)
    if sd == 0 or not np.isfinite(sd):
        raise DegenerateVariance("paired differences have zero variance")
    t = d.mean() / (sd / math.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), n - 1)
    return float(t), float(min(max(p, 0.0), 1.0))


def cohens_d(group_a: Sequence[float], group_b: Sequence[float]) -> float:
    """(mean_a - mean_b) / sqrt((var_a + var_b) / 2), sample variances."""
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateVariance("each group needs at least two samples")
    pooled = math.sqrt((a.var(ddof=1) + b.var(ddof=1)) / 2.0)
    if pooled == 0:
        raise DegenerateVariance("both groups have zero variance")
    return float((a.mean() - b.mean()) / pooled)


def bonferroni_gate(p: float, m: int = 7, alpha: float = 0.001) -> bool:
    if m < 1:
        raise ValidationError("m must be at least 1")
    return p < alpha / m
