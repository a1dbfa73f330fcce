"""Cost of an inference run: exact FLOPs plus latency/energy proxies.

Latency and energy are affine functions of FLOPs under a
:class:`HardwareProfile`; nothing is timed on the wall clock.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import DomainError, UndefinedBaselineError, UsageError, ValidationError
from .models.detection import nms_flops
from .models.spec import ModelSpec
from .tensor import stack_flops


@dataclass(frozen=True)
class HardwareProfile:
    throughput: float = 1e6  # FLOPs per millisecond
    energy_per_flop: float = 1e-6  # millijoules
    idle_power: float = 0.0  # milliwatts

    def __post_init__(self):
        for name in ("throughput", "energy_per_flop", "idle_power"):
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                raise ValidationError(name, "must be a finite number")
        if self.throughput <= 0:
            raise ValidationError("throughput", "must be > 0")
        if self.energy_per_flop < 0:
            raise ValidationError("energy_per_flop", "must be >= 0")
        if self.idle_power < 0:
            raise ValidationError("idle_power", "must be >= 0")

    def to_dict(self):
        return asdict(self)


DEFAULT_PROFILE = HardwareProfile()


@dataclass(frozen=True)
class CostReport:
    flops: int
    latency_ms: float
    energy_mj: float
    iterations: int = 1
    outputs: int = 1

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class InflationReport:
    flops_pct: float
    latency_pct: float
    energy_pct: float | None
    benign: CostReport
    adversarial: CostReport

    def to_dict(self):
        return {
            "flops_pct": self.flops_pct,
            "latency_pct": self.latency_pct,
            "energy_pct": self.energy_pct,
            "benign": self.benign.to_dict(),
            "adversarial": self.adversarial.to_dict(),
        }


def derive_cost(flops: int, iterations: int = 1, outputs: int = 1,
                profile: HardwareProfile = DEFAULT_PROFILE) -> CostReport:
    if flops < 0:
        raise DomainError(f"flops must be >= 0, got {flops}")
    latency = flops / profile.throughput
    energy = flops * profile.energy_per_flop + profile.idle_power * latency / 1000.0
    return CostReport(int(flops), latency, energy, int(iterations), int(outputs))


def _pct(benign, adv):
    return 100.0 * (adv - benign) / benign


def inflation(benign: CostReport, adv: CostReport) -> InflationReport:
    """Percent increase of each cost metric over the benign run."""
    if benign.flops <= 0:
        raise UndefinedBaselineError("benign run has zero FLOPs; percent change undefined")
    if benign.energy_mj > 0:
        energy = _pct(benign.energy_mj, adv.energy_mj)
    else:
        energy = 0.0 if adv.energy_mj == 0 else None
    return InflationReport(_pct(benign.flops, adv.flops), _pct(benign.latency_ms, adv.latency_ms),
                           energy, benign, adv)


METRICS = ("flops_pct", "latency_pct", "energy_pct")


def aggregate(reports) -> dict:
    """Mean, max and min of each percentage over ``reports``.

    ``math.fsum`` makes the mean independent of input order.
    """
    reports = list(reports)
    if not reports:
        raise UsageError("cannot aggregate an empty list of reports")
    out = {}
    for metric in METRICS:
        vals = [getattr(r, metric) for r in reports]
        vals = [v for v in vals if v is not None]
        if not vals:
            out[metric] = {"mean": None, "max": None, "min": None}
            continue
        out[metric] = {"mean": math.fsum(vals) / len(vals), "max": max(vals), "min": min(vals)}
    return out


def flops_closed_form(spec: ModelSpec, path) -> int:
    """FLOPs of one run along ``path``, from the layer formulas alone.

    ``path`` is the exit index (D1), number of generation steps (D2),
    ``(passing, retained)`` box counts (D3) or ``"light"``/``"heavy"`` (D4).
    """
    stacks = spec.stacks()
    b = spec.behavior
    if b == "D1":
        n = len(spec.exit_positions)
        if not isinstance(path, int) or not 0 <= path < n:
            raise DomainError(f"D1 exit index must be in [0, {n}), got {path!r}")
        return sum(stack_flops(stacks[f"seg{j}"]) + stack_flops(stacks[f"head{j}"]) for j in range(path + 1))
    if b == "D2":
        if not isinstance(path, int) or not 0 <= path <= spec.max_len:
            raise DomainError(f"D2 step count must be in [0, {spec.max_len}], got {path!r}")
        return path * (stack_flops(stacks["embed"]) + stack_flops(stacks["body"]))
    if b == "D3":
        try:
            passing, retained = path
        except (TypeError, ValueError):
            raise DomainError(f"D3 path must be (passing, retained), got {path!r}") from None
        if not 0 <= retained <= passing <= spec.grid:
            raise DomainError(f"need 0 <= retained <= passing <= {spec.grid}, got {path!r}")
        return stack_flops(stacks["backbone"]) + nms_flops(passing) + spec.c_out * retained
    if path not in ("light", "heavy"):
        raise DomainError(f"D4 route must be 'light' or 'heavy', got {path!r}")
    return stack_flops(stacks["gate"]) + stack_flops(stacks[path])


def executed_path(trace):
    """The path descriptor a trace took, for :func:`flops_closed_form`."""
    if trace.behavior == "D1":
        return trace.exit_index
    if trace.behavior == "D2":
        return trace.length
    if trace.behavior == "D3":
        return (trace.passing_count, trace.retained_count)
    return trace.route
