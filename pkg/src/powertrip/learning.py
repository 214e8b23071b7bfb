"""Surrogate learning curve and the dynamic policy's gain projection.

No model is trained. Accuracy is a saturating function of cumulative
effective work, which is what every policy comparison ultimately measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple


@dataclass(frozen=True)
class LearningCurveParams:
    alpha_max: float = 0.85
    w_char: float = 50_000.0
    noise_sigma: float = 0.0
    # per-round work is discounted as k**-exponent; 0 gives work-conserving rounds
    stat_efficiency_exponent: float = 0.1

    def validate(self) -> None:
        if not 0.0 < self.alpha_max <= 1.0:
            raise ValueError("curve.alpha_max must lie in (0, 1]")
        if not self.w_char > 0:
            raise ValueError("curve.w_char must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("curve.noise_sigma must be >= 0")
        if not 0.0 <= self.stat_efficiency_exponent < 1.0:
            raise ValueError("curve.stat_efficiency_exponent must lie in [0, 1)")


@dataclass
class AccuracyHistory:
    accuracies: List[float] = field(default_factory=list)
    cumulative_work: float = 0.0

    def append(self, accuracy: float, work: float) -> None:
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError(f"accuracy {accuracy} outside [0,1]")
        self.accuracies.append(accuracy)
        self.cumulative_work += work

    @property
    def rounds(self) -> List[Tuple[int, float]]:
        return list(enumerate(self.accuracies))

    def last_two(self) -> Tuple[float, float]:
        """(alpha_r, alpha_{r-1}); accuracy before round 0 is taken as 0."""
        if not self.accuracies:
            return 0.0, 0.0
        prev = self.accuracies[-2] if len(self.accuracies) > 1 else 0.0
        return self.accuracies[-1], prev


def accuracy_after(cumulative_work: float, params: LearningCurveParams,
                   round_noise: float = 0.0) -> float:
    if cumulative_work < 0:
        raise ValueError("cumulative_work must be >= 0")
    alpha = params.alpha_max * -math.expm1(-cumulative_work / params.w_char)
    return min(1.0, max(0.0, alpha + round_noise))


def round_work(k: int, round_work_units: float, local_epochs: int,
               params: LearningCurveParams) -> float:
    """Effective work one synchronous round over k sites contributes."""
    work = round_work_units * local_epochs
    if params.stat_efficiency_exponent > 0:
        work *= k ** -params.stat_efficiency_exponent
    return work


def project_accuracy_gain(k: int, k_current: int, alpha_r: float, alpha_prev: float) -> float:
    """Projected per-round gain with k sites, from the last observed gain.

    Linear scaling below the current count, logarithmic diminishing returns
    above it; the two branches meet at k == k_current.
    """
    if k < 1 or k_current < 1:
        raise ValueError("k and k_current must be >= 1")
    delta = max(0.0, alpha_r - alpha_prev)
    if k <= k_current:
        return delta * (k / k_current)
    return delta * (1.0 + math.log(k / k_current))
