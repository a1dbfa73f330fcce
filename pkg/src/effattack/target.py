"""A deployed model: network, inference thresholds and hardware profile."""

from __future__ import annotations

from dataclasses import dataclass, field

from .cost import DEFAULT_PROFILE, CostReport, HardwareProfile, derive_cost
from .models.core import DynModel, InferenceResult, Thresholds
from .models.detection import detect
from .models.early_exit import early_exit_infer
from .models.gating import gated_infer
from .models.generator import generate


@dataclass(frozen=True)
class CostTarget:
    model: DynModel
    thresholds: Thresholds = field(default_factory=Thresholds)
    profile: HardwareProfile = DEFAULT_PROFILE

    @property
    def behavior(self):
        return self.model.behavior

    def infer(self, x, ceiling=None, policy="abort-and-flag") -> InferenceResult:
        t = self.thresholds
        b = self.model.behavior
        if b == "D1":
            return early_exit_infer(self.model, x, t.tau, ceiling=ceiling, policy=policy)
        if b == "D2":
            return generate(self.model, x, ceiling=ceiling, policy=policy)
        if b == "D3":
            return detect(self.model, x, t.conf, t.iou, ceiling=ceiling, policy=policy)
        return gated_infer(self.model, x, t.theta, ceiling=ceiling, policy=policy)

    def cost_of(self, result: InferenceResult) -> CostReport:
        trace = result.trace
        iterations = trace.length if self.behavior == "D2" else 1
        outputs = len(result.output) if self.behavior == "D3" and result.output is not None else 1
        return derive_cost(result.flops, iterations, outputs, self.profile)

    def measure(self, x) -> CostReport:
        return self.cost_of(self.infer(x))

    def with_model(self, model):
        return CostTarget(model, self.thresholds, self.profile)
