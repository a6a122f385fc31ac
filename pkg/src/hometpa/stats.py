"""One-way fixed-effects analysis of variance."""

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats

from .errors import ContractError


@dataclass(frozen=True)
class AnovaResult:
    F: float
    p: float
    df_between: int
    df_within: int
    defined: bool = True

    def to_dict(self):
        return {
            "F": None if math.isnan(self.F) else self.F,
            "p": None if math.isnan(self.p) else self.p,
            "df_between": self.df_between,
            "df_within": self.df_within,
            "defined": self.defined,
        }


def anova_oneway(groups):
    """F statistic and p-value for equality of group means.

    Each group needs at least two values. When every group has zero spread the
    F ratio is undefined; equal means then give ``F = nan`` with
    ``defined=False`` and unequal means give ``F = inf, p = 0``.
    """
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2:
        raise ContractError("ANOVA needs at least two groups")
    if any(g.size < 2 for g in groups):
        raise ContractError("every ANOVA group needs at least two values")
    k = len(groups)
    n = sum(g.size for g in groups)
    grand = np.concatenate(groups).mean()
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(np.sum((g - g.mean()) ** 2) for g in groups)
    df_b, df_w = k - 1, n - k
    if ss_within == 0:
        if ss_between == 0:
            return AnovaResult(math.nan, math.nan, df_b, df_w, defined=False)
        return AnovaResult(math.inf, 0.0, df_b, df_w)
    F = (ss_between / df_b) / (ss_within / df_w)
    return AnovaResult(float(F), float(stats.f.sf(F, df_b, df_w)), df_b, df_w)
