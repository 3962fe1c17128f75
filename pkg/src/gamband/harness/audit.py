"""Growth-rate audits on regret measured at geometric checkpoints."""

from __future__ import annotations

from dataclasses import dataclass

LAW_LIMITS = {"sqrtT": 2.5, "logT": 1.6}


@dataclass
class GrowthReport:
    law: str
    ratios: dict  # T -> R_{4T} / R_T
    ratio: float  # at the largest available pair
    limit: float
    passed: bool

    def __str__(self):
        status = "pass" if self.passed else "fail"
        pairs = ", ".join(f"R_{4 * T}/R_{T}={r:.3f}" for T, r in sorted(self.ratios.items()))
        return f"{self.law}: {status} (ratio {self.ratio:.3f} <= {self.limit}; {pairs})"


def _checkpoint_means(summary) -> dict:
    if isinstance(summary, dict) and "checkpoints" in summary:
        return {int(row["T"]): float(row["mean_R"]) for row in summary["checkpoints"]}
    return {int(T): float(R) for T, R in dict(summary).items()}


def growth_audit(summary, law: str) -> GrowthReport:
    """Compare mean regret at ``4T`` and ``T``.

    ``summary`` is one algorithm entry of a sweep summary or a plain mapping
    ``T -> mean R_T``.  Pure sqrt growth gives a ratio of 2 and linear growth
    4; logarithmic growth stays close to 1.  The verdict uses the largest
    pair of checkpoints, where the asymptotic rate is best resolved.
    """
    if law not in LAW_LIMITS:
        raise ValueError(f"law must be one of {tuple(LAW_LIMITS)}")
    means = _checkpoint_means(summary)
    ratios = {}
    for T, R in means.items():
        if 4 * T in means:
            ratios[T] = means[4 * T] / R if R > 0 else (1.0 if means[4 * T] == 0 else float("inf"))
    if not ratios:
        raise ValueError("growth audit needs checkpoints T and 4T")
    top = max(ratios)
    limit = LAW_LIMITS[law]
    return GrowthReport(law, ratios, ratios[top], limit, ratios[top] <= limit)
