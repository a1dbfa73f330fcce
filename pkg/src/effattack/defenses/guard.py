"""Runtime FLOP ceiling around inference."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import DomainError
from ..models.core import BREACH_POLICIES, check_policy
from ..target import CostTarget


@dataclass(frozen=True)
class GuardConfig:
    """Stop inference before cumulative FLOPs exceed ``ceiling``.

    ``abort-and-flag`` returns no output on a breach; ``exit-now`` returns
    whatever is already available (the last completed exit, the tokens so
    far, the boxes kept so far, the light path's answer).
    """

    ceiling: float
    policy: str = "abort-and-flag"

    def __post_init__(self):
        if not self.ceiling > 0:
            raise DomainError(f"FLOP ceiling must be > 0, got {self.ceiling}")
        check_policy(self.policy)


@dataclass(frozen=True)
class GuardedResult:
    output: object
    cost: object
    breached: bool
    trace: object = None

    def __iter__(self):
        return iter((self.output, self.cost, self.breached))


def guarded_infer(target, x, guard: GuardConfig) -> GuardedResult:
    """Run ``target`` (a CostTarget or bare model) under ``guard``.

    Checks happen where the trace already records cumulative FLOPs, so the
    reported FLOPs never exceed the ceiling. An infinite ceiling gives the
    unguarded result.
    """
    if not isinstance(target, CostTarget):
        target = CostTarget(target)
    ceiling = None if guard.ceiling == math.inf else guard.ceiling
    res = target.infer(x, ceiling=ceiling, policy=guard.policy)
    return GuardedResult(res.output, target.cost_of(res), res.breached, res.trace)


__all__ = ["BREACH_POLICIES", "GuardConfig", "GuardedResult", "guarded_infer"]
