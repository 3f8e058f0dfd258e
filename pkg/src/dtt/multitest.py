"""Combining group p-values into discovery sets.

Bonferroni and Benjamini-Hochberg ignore order.  The accumulation test and
Selective SeqStep consume p-values in a fixed, externally supplied order
(decreasing ordering weight) and reject within a prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

P_CLAMP = 1 - 1e-12

GUARANTEES = {
    "bonferroni": "FWER",
    "bh": "FDR (independent or PRDS p-values)",
    "accumulation": "modified FDR",
    "seqstep": "FDR (independent null p-values)",
}


@dataclass
class DiscoverySet:
    """Indices (into the input order) of rejected hypotheses."""

    rejected: np.ndarray
    procedure: str
    alpha: float
    m: int
    params: dict = field(default_factory=dict)

    @property
    def guarantee(self) -> str:
        return GUARANTEES[self.procedure]

    @property
    def mask(self) -> np.ndarray:
        out = np.zeros(self.m, bool)
        out[self.rejected] = True
        return out

    def __len__(self):
        return len(self.rejected)

    def __contains__(self, i):
        return int(i) in set(self.rejected.tolist())


def _check(pvals, alpha):
    p = np.asarray(pvals, dtype=float).ravel()
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InputError("p-values must lie in [0, 1]")
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    return p


def _result(idx, name, alpha, m, **params):
    return DiscoverySet(np.asarray(idx, dtype=np.int64), name, float(alpha), m, params)


def bonferroni(pvals, alpha: float = 0.05) -> DiscoverySet:
    p = _check(pvals, alpha)
    m = p.size
    return _result(np.flatnonzero(p <= alpha / max(m, 1)), "bonferroni", alpha, m)


def benjamini_hochberg(pvals, alpha: float = 0.1) -> DiscoverySet:
    p = _check(pvals, alpha)
    m = p.size
    if m == 0:
        return _result([], "bh", alpha, 0)
    order = np.argsort(p, kind="stable")
    ok = np.flatnonzero(p[order] <= alpha * np.arange(1, m + 1) / m)
    if ok.size == 0:
        return _result([], "bh", alpha, m)
    k = ok[-1] + 1
    return _result(np.sort(order[:k]), "bh", alpha, m)


def hinge_exp(p, c: float = 2.0) -> np.ndarray:
    """``c log(1 / (c (1 - p)))`` above ``1 - 1/c`` and zero below; ``p``
    is clamped to ``1 - 1e-12`` so that ``p = 1`` stays finite."""
    if c <= 1:
        raise InputError("hinge-exponential needs c > 1")
    p = np.minimum(np.asarray(p, dtype=float), P_CLAMP)
    out = np.zeros_like(p)
    hi = p > 1 - 1 / c
    out[hi] = c * np.log(1 / (c * (1 - p[hi])))
    return out


def accumulation_test(ordered_pvals, alpha: float = 0.2, c: float = 2.0) -> DiscoverySet:
    """Reject the first ``k`` hypotheses, ``k`` the largest index whose
    running mean of ``hinge_exp(p)`` is at most ``alpha``."""
    p = _check(ordered_pvals, alpha)
    h = hinge_exp(p, c)
    m = p.size
    run = np.cumsum(h) / np.arange(1, m + 1)
    ok = np.flatnonzero(run <= alpha)
    k = ok[-1] + 1 if ok.size else 0
    return _result(np.arange(k), "accumulation", alpha, m, c=c, shape="hinge-exp", k_hat=int(k))


def selective_seqstep(ordered_pvals, alpha: float = 0.2, c: float = 0.5) -> DiscoverySet:
    """Selective SeqStep: largest ``k`` with
    ``c/(1-c) (1 + #{j<=k: p_j > c}) / max(1, #{j<=k: p_j <= c}) <= alpha``;
    rejects the ``p_j <= c`` within that prefix."""
    if not 0 < c < 1:
        raise InputError("SeqStep threshold must lie in (0, 1)")
    p = _check(ordered_pvals, alpha)
    m = p.size
    small = p <= c
    n_small = np.cumsum(small)
    n_big = np.arange(1, m + 1) - n_small
    est = c / (1 - c) * (1 + n_big) / np.maximum(1, n_small)
    ok = np.flatnonzero(est <= alpha)
    k = ok[-1] + 1 if ok.size else 0
    return _result(np.flatnonzero(small[:k]), "seqstep", alpha, m, c=c, k_hat=int(k))


METHODS = {
    "bonferroni": bonferroni,
    "bh": benjamini_hochberg,
    "accumulation": accumulation_test,
    "seqstep": selective_seqstep,
}
ORDERED = ("accumulation", "seqstep")


def combine(table, method: str, alpha: float, c=None) -> DiscoverySet:
    """Apply ``method`` to a :class:`PValueTable`; see :func:`combine_arrays`."""
    return combine_arrays(table.pvalues, table.weights, method, alpha, c)


def combine_arrays(pvals, weights, method: str, alpha: float, c=None) -> DiscoverySet:
    """Ordered procedures see the p-values sorted by decreasing weight (ties
    in input order, which callers keep genomic); the returned indices refer
    to the input rows."""
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    pvals = np.asarray(pvals, dtype=float)
    if method not in ORDERED:
        return METHODS[method](pvals, alpha)
    order = np.argsort(-np.asarray(weights, dtype=float), kind="stable")
    kw = {} if c is None else {"c": c}
    res = METHODS[method](pvals[order], alpha, **kw)
    res.rejected = np.sort(order[res.rejected])
    res.params["order"] = order
    return res


def false_discovery_proportion(rejected, is_null) -> float:
    rejected = np.asarray(rejected, dtype=np.int64)
    if rejected.size == 0:
        return 0.0
    return float(np.mean(np.asarray(is_null)[rejected]))
