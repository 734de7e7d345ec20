"""Significance tests and effect sizes."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from ..errors import DegenerateTestError, PairingError

EXACT_WILCOXON_MAX_N = 25


@dataclass(frozen=True)
class StatTestResult:
    test: str
    statistic: float
    p_value: float
    n: int
    effect_size: float | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _paired(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise PairingError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise PairingError("paired samples are empty")
    return a, b


def bootstrap_diff_test(
    a: Sequence[float],
    b: Sequence[float],
    n_resamples: int = 20_000,
    seed: int = 0,
    chunk: int = 1000,
) -> StatTestResult:
    """One-sided paired bootstrap for "A scores higher than B".

    Items are resampled with replacement. The p-value is the share of
    resamples in which mean(A) does not exceed mean(B), with exact ties
    counted as half, so identical methods give p = 0.5.
    """
    a, b = _paired(a, b)
    d = a - b
    n = d.size
    rng = np.random.default_rng(seed)
    below = ties = 0
    done = 0
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        idx = rng.integers(0, n, size=(m, n))
        s = d[idx].sum(axis=1)
        below += int((s < 0).sum())
        ties += int((s == 0).sum())
        done += m
    p = (below + 0.5 * ties) / n_resamples
    return StatTestResult("bootstrap", float(d.mean()), float(p), int(n),
                          detail=f"{n_resamples} resamples, seed {seed}, one-sided")


def cohens_dz(a, b=None) -> float:
    d = np.asarray(a, dtype=np.float64) if b is None else np.subtract(*_paired(a, b))
    if d.size < 2:
        raise DegenerateTestError("Cohen's d_z needs at least two differences")
    sd = d.std(ddof=1)
    if sd == 0:
        raise DegenerateTestError("Cohen's d_z is undefined for zero-variance differences")
    return float(d.mean() / sd)


def paired_t_test(a, b, alternative: str = "two-sided") -> StatTestResult:
    a, b = _paired(a, b)
    d = a - b
    if d.size < 2 or d.std(ddof=1) == 0:
        raise DegenerateTestError("paired t-test is undefined for zero-variance differences")
    res = stats.ttest_rel(a, b, alternative=alternative)
    return StatTestResult("paired_t", float(res.statistic), float(res.pvalue), int(d.size),
                          effect_size=cohens_dz(d), detail=f"df={d.size - 1}, {alternative}")


def wilcoxon_signed_rank(a, b, alternative: str = "two-sided") -> StatTestResult:
    """Wilcoxon signed-rank test on paired differences.

    Exact null distribution for n <= 25 without zero or tied differences;
    otherwise the normal approximation with tie and continuity correction
    (zero differences dropped).
    """
    a, b = _paired(a, b)
    d = a - b
    nz = d[d != 0]
    if nz.size == 0:
        raise DegenerateTestError("all paired differences are zero")
    absd = np.abs(nz)
    use_exact = nz.size == d.size and nz.size <= EXACT_WILCOXON_MAX_N and len(np.unique(absd)) == absd.size
    method = "exact" if use_exact else "approx"
    res = stats.wilcoxon(d, zero_method="wilcox", correction=not use_exact, alternative=alternative,
                         method=method)
    return StatTestResult("wilcoxon", float(res.statistic), float(res.pvalue), int(d.size),
                          detail=f"{method}, {alternative}")


def paired_tests(a, b, alternative: str = "two-sided") -> dict[str, StatTestResult | float]:
    return {
        "t_test": paired_t_test(a, b, alternative),
        "wilcoxon_signed_rank": wilcoxon_signed_rank(a, b, alternative),
        "cohens_dz": cohens_dz(a, b),
    }


def mannwhitney_u(x, y, alternative: str = "two-sided") -> StatTestResult:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise DegenerateTestError("Mann-Whitney U needs two non-empty samples")
    res = stats.mannwhitneyu(x, y, alternative=alternative, method="auto")
    # rank-biserial correlation as effect size
    rbc = 2.0 * float(res.statistic) / (x.size * y.size) - 1.0
    return StatTestResult("mannwhitney_u", float(res.statistic), float(res.pvalue), int(x.size + y.size),
                          effect_size=rbc, detail=alternative)
