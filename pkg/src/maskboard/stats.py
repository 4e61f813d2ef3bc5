"""Two-corpus proportion comparison.

The primary test is the pooled two-proportion z-test (two-sided, normal
approximation via erfc, absolute error < 1e-12); Fisher's exact test is
always computed alongside it as the small-count companion. Fisher uses
exact rational arithmetic and the common "small-p" two-sided rule: sum of
hypergeometric probabilities no larger than the observed table's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidInput

# below this expected cell count the normal approximation is not reported
MIN_EXPECTED_CELL = 5.0


@dataclass(frozen=True)
class ComparisonResult:
    theme_id: str
    k1: int
    n1: int
    k2: int
    n2: int
    p1: float
    p2: float
    z: float  # nan when the pooled rate is degenerate
    p_z: float | None  # None when the normal approximation is unreliable
    p_fisher: float
    method_note: str = ""

    def significant(self, alpha: float = 0.01) -> bool:
        p = self.p_z if self.p_z is not None else self.p_fisher
        return p < alpha

    def as_dict(self) -> dict:
        return {
            "theme": self.theme_id,
            "k1": self.k1, "n1": self.n1, "k2": self.k2, "n2": self.n2,
            "pct1": 100.0 * self.p1, "pct2": 100.0 * self.p2,
            "z": self.z, "p_z": self.p_z, "p_fisher": self.p_fisher,
            "method_note": self.method_note,
        }


def _check_counts(k1: int, n1: int, k2: int, n2: int) -> None:
    for label, k, n in (("first", k1, n1), ("second", k2, n2)):
        if n < 1:
            raise InvalidInput(f"{label} sample size must be >= 1")
        if not 0 <= k <= n:
            raise InvalidInput(f"{label} count must satisfy 0 <= k <= n (got k={k}, n={n})")


def normal_two_sided_p(z: float) -> float:
    """2 * (1 - Phi(|z|)) = erfc(|z| / sqrt(2))."""
    return math.erfc(abs(z) / math.sqrt(2.0))


def fisher_exact(k1: int, n1: int, k2: int, n2: int) -> float:
    """Two-sided Fisher exact p-value under the small-p rule.

    All hypergeometric probabilities share the denominator C(n1+n2, m), so
    the tie comparisons and the tail sum run on exact integers; the single
    division at the end is correctly rounded.
    """
    _check_counts(k1, n1, k2, n2)
    m = k1 + k2
    lo = max(0, m - n2)
    hi = min(n1, m)
    observed = math.comb(n1, k1) * math.comb(n2, k2)
    total = 0
    for k in range(lo, hi + 1):
        weight = math.comb(n1, k) * math.comb(n2, m - k)
        if weight <= observed:
            total += weight
    return float(min(Fraction(total, math.comb(n1 + n2, m)), Fraction(1)))


def two_proportion_test(k1: int, n1: int, k2: int, n2: int, theme_id: str = "") -> ComparisonResult:
    """Pooled two-sided z-test plus Fisher exact.

    z = (p1 - p2) / sqrt(pbar (1 - pbar) (1/n1 + 1/n2)) with
    pbar = (k1 + k2) / (n1 + n2). When pbar is 0 or 1 the statistic is
    undefined: z is nan and p_z is 1 with a note. When the smallest
    expected cell is under 5 the normal p-value is withheld (None) and
    Fisher stands alone.
    """
    _check_counts(k1, n1, k2, n2)
    p1 = k1 / n1
    p2 = k2 / n2
    pbar = (k1 + k2) / (n1 + n2)
    p_fisher = fisher_exact(k1, n1, k2, n2)
    note = ""

    if pbar in (0.0, 1.0):
        z = math.nan
        p_z: float | None = 1.0
        note = "pooled rate degenerate; z undefined, exact test applies"
    else:
        se = math.sqrt(pbar * (1.0 - pbar) * (1.0 / n1 + 1.0 / n2))
        z = (p1 - p2) / se
        min_expected = min(n1 * pbar, n1 * (1 - pbar), n2 * pbar, n2 * (1 - pbar))
        if min_expected < MIN_EXPECTED_CELL:
            p_z = None
            note = f"expected cell {min_expected:.2f} < {MIN_EXPECTED_CELL:g}; normal approximation not reported"
        else:
            p_z = normal_two_sided_p(z)

    return ComparisonResult(
        theme_id=theme_id, k1=k1, n1=n1, k2=k2, n2=n2,
        p1=p1, p2=p2, z=z, p_z=p_z, p_fisher=p_fisher, method_note=note,
    )


def compare_theme(theme_id: str, counts_a, counts_b) -> ComparisonResult:
    """Comparison row for one theme given (k, n) review counts per corpus.

    `counts_a` / `counts_b` are (k, n) pairs or ThemeCounts-like objects;
    partially reviewed windows are annotated in the method note.
    """
    def unpack(c):
        if hasattr(c, "k") and hasattr(c, "n"):
            return int(c.k), int(c.n), bool(getattr(c, "partial", False))
        k, n = c
        return int(k), int(n), False

    k1, n1, part1 = unpack(counts_a)
    k2, n2, part2 = unpack(counts_b)
    result = two_proportion_test(k1, n1, k2, n2, theme_id=theme_id)
    if part1 or part2:
        note = "partial review window"
        note = f"{result.method_note}; {note}" if result.method_note else note
        result = ComparisonResult(**{**result.__dict__, "method_note": note})
    return result
