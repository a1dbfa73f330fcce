"""Built models, inference traces and shared stack executors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, UsageError
from ..rng import uniform_init
from ..tensor import activation_forward, dense_forward
from .spec import ModelSpec


@dataclass(frozen=True)
class Thresholds:
    """Inference-time knobs: exit confidence, detection thresholds, gate cut."""

    tau: float = 0.9
    conf: float = 0.5
    iou: float = 0.5
    theta: float = 0.5

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise DomainError(f"tau must lie in (0, 1], got {self.tau}")
        for name in ("conf", "iou"):
            if not 0 < getattr(self, name) < 1:
                raise DomainError(f"{name} threshold must lie in (0, 1), got {getattr(self, name)}")
        if not 0 <= self.theta <= 1:
            raise DomainError(f"theta must lie in [0, 1], got {self.theta}")


@dataclass
class InferenceTrace:
    """What one inference run did, recorded at each decision point."""

    behavior: str
    cumulative_flops: list = field(default_factory=list)
    # D1
    exit_confidences: list = field(default_factory=list)
    exit_index: int | None = None
    n_exits: int | None = None
    # D2
    tokens: list = field(default_factory=list)
    eos_probs: list = field(default_factory=list)
    length: int | None = None
    max_len: int | None = None
    # D3
    candidate_scores: list = field(default_factory=list)
    passing_count: int | None = None
    retained_count: int | None = None
    # D4
    gate_score: float | None = None
    route: str | None = None

    @property
    def flops(self) -> int:
        return self.cumulative_flops[-1] if self.cumulative_flops else 0


@dataclass(frozen=True)
class InferenceResult:
    """Output of an inference run plus its trace and FLOP total.

    ``breached`` is set when a FLOP ceiling stopped the run early; ``output``
    is then whatever was available at that point (``None`` if nothing).
    """

    output: object
    trace: InferenceTrace
    flops: int
    breached: bool = False

    def __iter__(self):
        # unpacks as (output, trace, flops)
        return iter((self.output, self.trace, self.flops))


class DynModel:
    """A built model: its spec plus an immutable parameter dict.

    Parameters are keyed ``"<stack>.<layer>.W"`` / ``".b"`` (``".E"`` for
    embedding tables). Arrays are read-only; use :meth:`with_params` to
    derive a modified copy.
    """

    def __init__(self, spec: ModelSpec, params: dict):
        self.spec = spec
        self.stacks = spec.stacks()
        frozen = {}
        for key, val in params.items():
            arr = np.array(val, dtype=np.float64)
            arr.setflags(write=False)
            frozen[key] = arr
        self.params = frozen
        self._step_cache = {}

    @property
    def behavior(self):
        return self.spec.behavior

    def with_params(self, updates: dict) -> "DynModel":
        params = dict(self.params)
        unknown = set(updates) - set(params)
        if unknown:
            raise UsageError(f"unknown parameters {sorted(unknown)}")
        params.update(updates)
        return DynModel(self.spec, params)

    def same_params(self, other: "DynModel") -> bool:
        return self.params.keys() == other.params.keys() and all(
            np.array_equal(self.params[k], other.params[k]) for k in self.params)

    def require(self, behavior):
        if self.behavior != behavior:
            raise UsageError(f"operation needs a {behavior} model, got {self.behavior}")

    def __repr__(self):
        return f"DynModel({self.spec.behavior}, {len(self.params)} tensors)"


def build_model(spec: ModelSpec) -> DynModel:
    """Initialise parameters deterministically from ``spec.seed``."""
    spec.validate()
    params = {}
    for name, layers in spec.stacks().items():
        for i, layer in enumerate(layers):
            key = f"{name}.{i}"
            if layer.kind == "dense":
                params[f"{key}.W"] = uniform_init(spec.seed, f"{key}.W", (layer.out_dim, layer.in_dim), layer.in_dim)
                if layer.has_bias:
                    params[f"{key}.b"] = uniform_init(spec.seed, f"{key}.b", (layer.out_dim,), layer.in_dim)
            elif layer.kind == "embedding-lookup":
                params[f"{key}.E"] = uniform_init(spec.seed, f"{key}.E", (layer.in_dim, layer.out_dim), layer.in_dim)
    return DynModel(spec, params)


def run_stack(model: DynModel, name: str, x, upto=None):
    """Numpy forward through stack ``name``; returns ``(output, flops)``.

    ``upto`` stops before that layer index (e.g. to read pre-activations).
    """
    layers = model.stacks[name]
    flops = 0
    for i, layer in enumerate(layers[:upto]):
        if layer.kind == "dense":
            x, f = dense_forward(layer, model.params[f"{name}.{i}.W"],
                                 model.params.get(f"{name}.{i}.b"), x, name=f"{name}.{i}")
        else:
            x, f = activation_forward(layer.kind, x)
        flops += f
    return x, flops


def tape_stack(tape, pvars: dict, model: DynModel, name: str, x, upto=None):
    """Tape version of :func:`run_stack`; ``x`` may carry leading batch axes."""
    for i, layer in enumerate(model.stacks[name][:upto]):
        if layer.kind == "dense":
            x = tape.dense(pvars[f"{name}.{i}.W"], pvars.get(f"{name}.{i}.b"), x)
        elif layer.kind == "relu":
            x = tape.relu(x)
        elif layer.kind == "sigmoid":
            x = tape.sigmoid(x)
        elif layer.kind == "softmax":
            x = tape.softmax(x)
    return x


def param_leaves(tape, model: DynModel, trainable=True) -> dict:
    """Put every parameter on ``tape``; named leaves when ``trainable``."""
    return {k: tape.leaf(v, k if trainable else None) for k, v in model.params.items()}


def check_input(model: DynModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.spec.in_dim,):
        raise DomainError(f"input shape {x.shape} does not match in_dim {model.spec.in_dim}")
    return x


BREACH_POLICIES = ("abort-and-flag", "exit-now")


def fits(spent: int, cost: int, ceiling) -> bool:
    return ceiling is None or ceiling == math.inf or spent + cost <= ceiling


def check_policy(policy):
    if policy not in BREACH_POLICIES:
        raise DomainError(f"unknown breach policy {policy!r}; expected one of {BREACH_POLICIES}")
