"""Two-sample KS, chi-square goodness of fit, and moment summaries.

Distribution comparisons in the experiments are gated on the KS statistic
against a fixed asymptotic critical value (default level 0.1%) rather than
on p-values, so fixed-seed runs give stable verdicts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import OffspringLaw


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float
    n: int
    m: int

    def critical_value(self, alpha: float = 0.001) -> float:
        return ks_critical_value(self.n, self.m, alpha)


def _kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution, 2*sum (-1)^(j-1) exp(-2 j^2 x^2)."""
    if x <= 0.0:
        return 1.0
    total = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1.0) ** (j - 1) * math.exp(-2.0 * j * j * x * x)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, total))


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> KsResult:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    D is the sup over pooled points of |F_a - F_b| with both empirical CDFs
    evaluated right-continuously, which handles ties; the statistic is
    symmetric in (a, b) and invariant under any common strictly increasing
    transform because it only sees ranks.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if np.any(np.isnan(a)) or np.any(np.isnan(b)):
        raise ValueError("samples must not contain NaN")
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    pooled = np.concatenate([a_sorted, b_sorted])
    cdf_a = np.searchsorted(a_sorted, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b_sorted, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    return KsResult(statistic=d, pvalue=_kolmogorov_sf(d * math.sqrt(n_eff)),
                    n=a.size, m=b.size)


def ks_critical_value(n: int, m: int, alpha: float = 0.001) -> float:
    """Asymptotic two-sample rejection threshold c(alpha)*sqrt((n+m)/(n m))."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 1 or m < 1:
        raise ValueError("sample sizes must be >= 1")
    c = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    return c * math.sqrt((n + m) / (n * m))


@dataclass(frozen=True)
class Chi2Result:
    statistic: float
    pvalue: float
    dof: int
    cells: int

    @property
    def vacuous(self) -> bool:
        return self.dof == 0


def chi2_gof(counts: Mapping[int, int], law: OffspringLaw,
             min_expected: float = 5.0) -> Chi2Result:
    """Pearson chi-square of observed batch counts against a batch law.

    Cells above the largest observed-or-supported value are pooled from the
    tail downward until every expected count reaches min_expected; if even
    full pooling cannot reach it, the sample is too small and this errors
    rather than returning an untrustworthy statistic. A single cell after
    pooling has zero degrees of freedom and is reported as a vacuous pass.
    """
    from scipy.stats import chi2 as _chi2

    for k in counts:
        if k not in law.pmf:
            raise ValueError(f"observed batch size {k} is outside the law's support")
    n = sum(counts.values())
    if n <= 0:
        raise ValueError("counts must sum to a positive total")
    observed = np.array([counts.get(int(k), 0) for k in law.support], dtype=np.float64)
    expected = n * law.probs.copy()

    # pool the tail (highest batch sizes) until expectations clear the floor
    while expected.size > 1 and expected[-1] < min_expected:
        expected[-2] += expected[-1]
        observed[-2] += observed[-1]
        expected = expected[:-1]
        observed = observed[:-1]
    if np.any(expected < min_expected):
        raise ValueError(
            f"expected counts below {min_expected} even after tail pooling; "
            "draw more samples"
        )
    if expected.size == 1:
        return Chi2Result(statistic=0.0, pvalue=1.0, dof=0, cells=1)
    stat = float(np.sum((observed - expected) ** 2 / expected))
    dof = expected.size - 1
    return Chi2Result(statistic=stat, pvalue=float(_chi2.sf(stat, dof)),
                      dof=dof, cells=int(expected.size))


@dataclass(frozen=True)
class MomentSummary:
    n: int
    mean: float
    se_mean: float
    variance: float
    se_variance: float


def moments_with_se(values: np.ndarray) -> MomentSummary:
    """Mean and unbiased variance with standard errors.

    se(variance) uses the fourth central moment: Var(s^2) is approximately
    (m4 - (n-3)/(n-1) m2^2)/n, exact for the plug-in moments.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least two values")
    mean = float(np.mean(x))
    centered = x - mean
    m2 = float(np.mean(centered**2))
    m4 = float(np.mean(centered**4))
    var = m2 * n / (n - 1)
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt(max(m4 - (n - 3) / (n - 1) * m2 * m2, 0.0) / n)
    return MomentSummary(n=n, mean=mean, se_mean=se_mean, variance=var, se_variance=se_var)


class SamplePool:
    """A labeled batch of scalar samples plus the settings that produced it."""

    def __init__(self, label: str, values: np.ndarray, meta: Mapping[str, object] | None = None):
        self.label = str(label)
        self.values = np.asarray(values, dtype=np.float64).ravel()
        self.meta: dict[str, str] = {str(k): str(v) for k, v in (meta or {}).items()}

    def summary(self) -> MomentSummary:
        return moments_with_se(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# label: {self.label}\n")
            for k in sorted(self.meta):
                fh.write(f"# {k}: {self.meta[k]}\n")
            fh.write("value\n")
            for v in self.values:
                fh.write(f"{float(v)!r}\n")

    @staticmethod
    def from_csv(path) -> "SamplePool":
        label = ""
        meta: dict[str, str] = {}
        values: list[float] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].partition(":")
                    key = key.strip()
                    val = val.strip()
                    if key == "label":
                        label = val
                    else:
                        meta[key] = val
                elif line != "value":
                    values.append(float(line))
        return SamplePool(label, np.array(values), meta)
