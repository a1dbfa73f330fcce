from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..cost import CostReport, InflationReport
from ..errors import ValidationError


@dataclass(frozen=True)
class AttackConfig:
    """Budget and knobs shared by every attack.

    ``epsilon`` is an L-infinity radius for continuous inputs and an edit
    count for text. ``alpha`` defaults to ``epsilon / 10``.
    """

    epsilon: float = 0.1
    steps: int = 50
    alpha: float | None = None
    query_budget: int = 200
    seed: int = 0
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValidationError("epsilon", f"must be >= 0, got {self.epsilon}")
        if self.steps < 0:
            raise ValidationError("steps", f"must be >= 0, got {self.steps}")
        if self.query_budget < 0:
            raise ValidationError("query_budget", f"must be >= 0, got {self.query_budget}")
        if self.alpha is not None and self.alpha < 0:
            raise ValidationError("alpha", f"must be >= 0, got {self.alpha}")
        if not self.lo <= self.hi:
            raise ValidationError("lo", f"lower bound {self.lo} exceeds upper bound {self.hi}")

    @property
    def step_size(self):
        return self.epsilon / 10 if self.alpha is None else self.alpha


@dataclass(frozen=True)
class AttackResult:
    adversarial: object
    benign_cost: CostReport | None
    adversarial_cost: CostReport | None
    inflation: InflationReport | None
    queries_used: int
    constraint_satisfied: bool
    loss_trajectory: tuple = ()
    edits: tuple = field(default_factory=tuple)


def box_bounds(x, cfg: AttackConfig):
    """Per-coordinate feasible interval: the epsilon-ball intersected with the domain."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x - cfg.epsilon, cfg.lo), np.minimum(x + cfg.epsilon, cfg.hi)


def within_box(x, x_adv, cfg: AttackConfig) -> bool:
    """L-infinity and domain check, evaluated against the same bounds the
    projection used so that rounding in ``x + eps`` cannot cause a false alarm."""
    lo, hi = box_bounds(x, cfg)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    return bool(np.all(x_adv >= lo) and np.all(x_adv <= hi))
