"""Test statistics for the digital twin tests.

A statistic maps a (possibly real-valued, masked) genotype matrix and the
phenotype to a score where larger means stronger evidence.  Besides plain
evaluation, each statistic scores whole blocks of twin replicates in which
only a few columns differ from a base matrix, which is where the tests spend
their time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats as sps

from .errors import InputError

MODEL_MAGIC = "# dtt-model v1"

_FAMILIES = {
    "logistic": "logistic", "binomial": "logistic", "binary": "logistic",
    "gaussian": "gaussian", "linear": "gaussian", "continuous": "gaussian",
}


def check_family(family: str) -> str:
    try:
        return _FAMILIES[str(family).lower()]
    except KeyError:
        raise InputError(f"unknown model family {family!r}") from None


def _binary(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise InputError("statistic needs a binary (0/1) phenotype")
    return y


@dataclass
class FittedModel:
    """Penalised regression fit on external data (original genotype scale)."""

    intercept: float
    coefficients: np.ndarray
    family: str = "logistic"
    lam: float = 0.0
    cv_score: float = float("nan")
    site_ids: Optional[list] = None
    cv_curve: Optional[np.ndarray] = field(default=None, repr=False)
    lambdas: Optional[np.ndarray] = field(default=None, repr=False)
    kkt: float = float("nan")
    objective_trace: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.family = check_family(self.family)
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 1:
            raise InputError("coefficients must be a vector")
        if self.site_ids is not None and len(self.site_ids) != len(self.coefficients):
            raise InputError("one site id per coefficient is required")
        if not (np.isfinite(self.intercept) and np.all(np.isfinite(self.coefficients))):
            raise InputError("model has non-finite parameters")

    @property
    def p(self) -> int:
        return len(self.coefficients)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients != 0)

    def linear_predictor(self, genotypes) -> np.ndarray:
        G = np.asarray(genotypes, dtype=float)
        if G.shape[-1] != self.p:
            raise InputError(f"model has {self.p} coefficients, genotypes have {G.shape[-1]} columns")
        s = self.support
        return self.intercept + G[..., s] @ self.coefficients[s]

    def save(self, path) -> None:
        ids = self.site_ids or [f"site{j + 1}" for j in range(self.p)]
        lines = [
            MODEL_MAGIC,
            f"family\t{self.family}",
            f"intercept\t{self.intercept!r}",
            f"lambda\t{self.lam!r}",
            f"cv_score\t{self.cv_score!r}",
            "site_id\tcoefficient",
        ]
        lines += [f"{s}\t{float(c)!r}" for s, c in zip(ids, self.coefficients)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "FittedModel":
        text = Path(path).read_text().splitlines()
        if not text or text[0].strip() != MODEL_MAGIC:
            raise InputError("not a model file (bad header)", file=path, line=1)
        meta = {}
        ln = 1
        for ln, line in enumerate(text[1:], start=2):
            key, _, val = line.partition("\t")
            if key == "site_id":
                break
            meta[key] = val
        else:
            raise InputError("missing coefficient table", file=path)
        ids, coefs = [], []
        for k, line in enumerate(text[ln:], start=ln + 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InputError("expected site_id and coefficient", file=path, line=k)
            try:
                coefs.append(float(parts[1]))
            except ValueError:
                raise InputError("coefficient is not a number", file=path, line=k, field="coefficient") from None
            ids.append(parts[0])
        try:
            return cls(
                float(meta["intercept"]), np.array(coefs), meta["family"],
                float(meta.get("lambda", "0")), float(meta.get("cv_score", "nan")), ids,
            )
        except KeyError as e:
            raise InputError(f"missing header field {e.args[0]!r}", file=path) from None


# ---------------------------------------------------------------- plain statistics


def tdt_statistic(genotypes, phenotype) -> float:
    """Sum of case genotypes; for several columns the largest column sum."""
    y = _binary(phenotype)
    G = np.asarray(genotypes, dtype=float)
    sums = y @ G
    return float(np.max(sums)) if np.ndim(sums) else float(sums)


def loss_statistic(model: FittedModel, genotypes, phenotype) -> float:
    """Negated total loss of ``model`` on the data (larger is a better fit)."""
    y = np.asarray(phenotype, dtype=float)
    eta = model.linear_predictor(genotypes)
    if not np.all(np.isfinite(eta)):
        raise InputError("model produced non-finite predictions")
    return _neg_loss(eta, y, model.family)


def _neg_loss(eta, y, family):
    if family == "gaussian":
        return -np.sum((eta - y) ** 2, axis=-1)
    return np.sum(y * eta - np.logaddexp(0.0, eta), axis=-1)


def tdt_counts(data, sites=None):
    """Transmission counts ``(b, c)`` of allele 1 / allele 0 from heterozygous
    parents to affected offspring, per site."""
    y = _binary(data.phenotype).astype(bool)
    cols = slice(None) if sites is None else np.asarray(sites)
    b = 0
    c = 0
    for hap, parents, present in (data.side(0), data.side(1)):
        keep = y & present
        par = parents[keep][:, :, cols]
        x = hap[keep][:, cols]
        het = par[:, 0] != par[:, 1]
        b = b + np.sum(het & (x == 1), axis=0)
        c = c + np.sum(het & (x == 0), axis=0)
    return np.asarray(b), np.asarray(c)


def tdt_analytic(data, sites=None):
    """Classical TDT: ``(b - c)^2 / (b + c)`` against chi-square(1).

    Returns p-values (1 where no heterozygous transmission is observed).
    """
    b, c = tdt_counts(data, sites)
    return tdt_pvalue(b, c)


def tdt_pvalue(b, c):
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    n = b + c
    stat = np.divide((b - c) ** 2, n, out=np.zeros_like(n), where=n > 0)
    p = np.where(n > 0, sps.chi2.sf(stat, 1), 1.0)
    return p if p.ndim else float(p)


def group_weights(model: FittedModel, partition) -> np.ndarray:
    """Ordering weight ``sum_{j in g} |beta_j|`` for each group."""
    a = np.abs(model.coefficients)
    cs = np.r_[0.0, np.cumsum(a)]
    if partition.ends.max() >= model.p:
        raise InputError("partition extends past the model's coefficients")
    return cs[partition.ends + 1] - cs[partition.starts]


def support_mask(model: FittedModel) -> np.ndarray:
    return model.coefficients != 0


# ---------------------------------------------------------------- twin scoring


class Statistic:
    """Scoring contract used by the twin tests.

    ``prepare`` caches whatever depends only on the base matrix and the
    phenotype; ``score_block`` then scores ``B`` variants that differ from the
    base only at ``cols`` (given as a ``(B, n, len(cols))`` block).
    """

    name = "statistic"

    def check(self, y) -> None:
        pass

    def localize(self, cols) -> "Statistic":
        """The statistic used when the hypothesis concerns ``cols``."""
        return self

    def needed(self, cols) -> np.ndarray:
        """Columns among ``cols`` whose values can change the score."""
        return np.asarray(cols)

    def prepare(self, base, y):
        return {"base": np.asarray(base, dtype=float), "y": np.asarray(y, dtype=float)}

    def score_block(self, ctx, cols, block) -> np.ndarray:
        out = np.empty(block.shape[0])
        G = ctx["base"].copy()
        for b in range(block.shape[0]):
            G[:, cols] = block[b]
            out[b] = self(G, ctx["y"])
        return out

    def __call__(self, genotypes, phenotype) -> float:
        raise NotImplementedError


class TDTStatistic(Statistic):
    """Largest case-genotype column sum over ``scope`` (all columns if None)."""

    name = "tdt"

    def __init__(self, scope=None):
        self.scope = None if scope is None else np.asarray(scope, dtype=np.int64)

    def check(self, y):
        _binary(y)

    def localize(self, cols):
        return TDTStatistic(cols)

    def needed(self, cols):
        cols = np.asarray(cols)
        return cols if self.scope is None else np.intersect1d(cols, self.scope)

    def _scope(self, p):
        return np.arange(p) if self.scope is None else self.scope

    def prepare(self, base, y):
        y = _binary(y)
        base = np.asarray(base)
        scope = self._scope(base.shape[-1])
        sums = y @ base[:, scope].astype(float)
        return {"y": y, "case": y.astype(bool), "scope": scope, "sums": sums}

    def score_block(self, ctx, cols, block):
        scope = ctx["scope"]
        keep = ~np.isin(scope, cols)
        rest = ctx["sums"][keep].max(initial=-np.inf)
        inside = np.isin(cols, scope)
        sums = block[:, ctx["case"]][:, :, inside].astype(float).sum(axis=1)
        return np.maximum(rest, sums.max(axis=1, initial=-np.inf))

    def __call__(self, genotypes, phenotype):
        G = np.asarray(genotypes)
        return tdt_statistic(G[:, self._scope(G.shape[-1])], phenotype)


class LossStatistic(Statistic):
    """Negated loss of an externally fitted model."""

    name = "loss"

    def __init__(self, model: FittedModel):
        self.model = model

    def check(self, y):
        if self.model.family == "logistic":
            try:
                _binary(y)
            except InputError:
                raise InputError("logistic model needs a binary phenotype") from None

    def needed(self, cols):
        cols = np.asarray(cols)
        return cols[self.model.coefficients[cols] != 0]

    def prepare(self, base, y):
        base = np.asarray(base)
        if base.shape[-1] != self.model.p:
            raise InputError(
                f"model has {self.model.p} coefficients, genotypes have {base.shape[-1]} columns"
            )
        s = self.model.support
        beta = self.model.coefficients
        return {"y": np.asarray(y, dtype=float), "base": base, "eta": self.model.intercept + base[:, s] @ beta[s]}

    def score_block(self, ctx, cols, block):
        beta = self.model.coefficients[cols]
        eta0 = ctx["eta"] - ctx["base"][:, cols] @ beta
        eta = eta0 + block.astype(float) @ beta
        return _neg_loss(eta, ctx["y"], self.model.family)

    def __call__(self, genotypes, phenotype):
        return loss_statistic(self.model, genotypes, phenotype)
