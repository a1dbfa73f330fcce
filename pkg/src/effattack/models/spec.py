"""Declarative architecture descriptions for the four dynamic behaviours.

* ``D1`` early-exit classifier: backbone segments, each followed by an exit head.
* ``D2`` autoregressive character generator over a sliding context window.
* ``D3`` grid detector whose downstream cost scales with the number of boxes kept.
* ``D4`` two-stage pipeline where a gate routes inputs to a light or heavy path.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..errors import ValidationError
from ..tensor import LayerSpec, stack_flops
from .vocab import DEFAULT_ALPHABET, EOS_ID, PAD_ID

BEHAVIORS = ("D1", "D2", "D3", "D4")

# per-candidate box channels: cx, cy, w, h, confidence
BOX_CHANNELS = 5


@dataclass(frozen=True)
class ModelSpec:
    behavior: str
    in_dim: int = 8
    widths: tuple = (8, 8, 8)
    n_classes: int = 2
    seed: int = 0
    # D1: indices into ``widths`` after which an exit head sits (default: all)
    exits: tuple | None = None
    # D2
    alphabet: str = DEFAULT_ALPHABET
    embed_dim: int = 8
    context: int = 4
    max_len: int = 64
    eos_id: int = EOS_ID
    # D3
    grid: int = 64
    c_out: int = 500
    # D4
    gate_widths: tuple = (8,)
    light_widths: tuple = ()
    heavy_widths: tuple = (64, 64)

    def __post_init__(self):
        for name in ("widths", "gate_widths", "light_widths", "heavy_widths"):
            object.__setattr__(self, name, tuple(int(w) for w in getattr(self, name)))
        if self.exits is not None:
            object.__setattr__(self, "exits", tuple(int(e) for e in self.exits))
        self.validate()

    # -- validation -------------------------------------------------------

    def validate(self):
        if self.behavior not in BEHAVIORS:
            raise ValidationError("behavior", f"must be one of {BEHAVIORS}, got {self.behavior!r}")
        if self.in_dim < 1:
            raise ValidationError("in_dim", "must be >= 1")
        if self.n_classes < 2:
            raise ValidationError("n_classes", "must be >= 2")
        for name in ("widths", "gate_widths", "light_widths", "heavy_widths"):
            if any(w < 1 for w in getattr(self, name)):
                raise ValidationError(name, "every width must be >= 1")
        check = getattr(self, f"_validate_{self.behavior.lower()}")
        check()

    def _validate_d1(self):
        if not self.widths:
            raise ValidationError("widths", "D1 needs at least one backbone layer")
        exits = self.exit_positions
        if len(exits) < 2:
            raise ValidationError("exits", "D1 needs at least two exits")
        if list(exits) != sorted(set(exits)) or exits[0] < 0:
            raise ValidationError("exits", "exit positions must be strictly increasing and >= 0")
        if exits[-1] != len(self.widths) - 1:
            raise ValidationError("exits", "the last exit must sit after the last backbone layer")

    def _validate_d2(self):
        if len(self.alphabet) < 1:
            raise ValidationError("alphabet", "vocabulary would be empty")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValidationError("alphabet", "duplicate characters")
        if not 0 <= self.eos_id < self.vocab_size or self.eos_id == PAD_ID:
            raise ValidationError("eos_id", f"must be a non-PAD id below vocab size {self.vocab_size}")
        if self.max_len < 1:
            raise ValidationError("max_len", "must be >= 1")
        if self.context < 1:
            raise ValidationError("context", "must be >= 1")
        if self.embed_dim < 1:
            raise ValidationError("embed_dim", "must be >= 1")

    def _validate_d3(self):
        if self.grid < 1:
            raise ValidationError("grid", "must be >= 1")
        if round(self.grid ** 0.5) ** 2 != self.grid:
            raise ValidationError("grid", "must be a perfect square")
        if self.c_out < 0:
            raise ValidationError("c_out", "must be >= 0")

    def _validate_d4(self):
        stacks = self.stacks()
        if stack_flops(stacks["heavy"]) <= stack_flops(stacks["light"]):
            raise ValidationError("heavy_widths", "heavy path must cost strictly more than the light path")

    # -- derived structure --------------------------------------------------

    @property
    def exit_positions(self):
        if self.exits is None:
            return tuple(range(len(self.widths)))
        return self.exits

    @property
    def vocab_size(self):
        return len(self.alphabet) + 2  # PAD and EOS come first

    @property
    def grid_side(self):
        return round(self.grid ** 0.5)

    def stacks(self) -> dict:
        """Layer stacks keyed by name, in execution order."""
        return getattr(self, f"_stacks_{self.behavior.lower()}")()

    def _stacks_d1(self):
        out, prev, start = {}, self.in_dim, 0
        for j, pos in enumerate(self.exit_positions):
            seg = []
            for w in self.widths[start:pos + 1]:
                seg += [LayerSpec("dense", prev, w), LayerSpec("relu", w, w)]
                prev = w
            out[f"seg{j}"] = tuple(seg)
            out[f"head{j}"] = _mlp(prev, (), self.n_classes, "softmax")
            start = pos + 1
        return out

    def _stacks_d2(self):
        V = self.vocab_size
        return {
            "embed": (LayerSpec("embedding-lookup", V, self.embed_dim, has_bias=False),),
            "body": _mlp(self.context * self.embed_dim, self.widths, V, "softmax"),
        }

    def _stacks_d3(self):
        return {"backbone": _mlp(self.in_dim, self.widths, BOX_CHANNELS * self.grid, "sigmoid")}

    def _stacks_d4(self):
        return {
            "gate": _mlp(self.in_dim, self.gate_widths, 1, "sigmoid"),
            "light": _mlp(self.in_dim, self.light_widths, self.n_classes, "softmax"),
            "heavy": _mlp(self.in_dim, self.heavy_widths, self.n_classes, "softmax"),
        }

    # -- (de)serialisation ------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for key, val in d.items():
            if isinstance(val, tuple):
                d[key] = list(val)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(unknown[0], "unknown model key")
        if "behavior" not in data:
            raise ValidationError("behavior", "required")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValidationError("model", str(exc)) from None


def _mlp(in_dim, hidden, out_dim, final_activation):
    layers, prev = [], in_dim
    for w in hidden:
        layers += [LayerSpec("dense", prev, w), LayerSpec("relu", w, w)]
        prev = w
    layers += [LayerSpec("dense", prev, out_dim), LayerSpec(final_activation, out_dim, out_dim)]
    return tuple(layers)


def reference_d1_spec(in_dim=1024, seed=0) -> ModelSpec:
    """3-exit binary classifier with segment widths 16/64/64.

    The wide input is what lets a 0.1 L-infinity budget move an input
    across the exit decision boundary. Reaching the last exit costs about a
    third more FLOPs than leaving at the first.
    """
    return ModelSpec("D1", in_dim=in_dim, widths=(16, 64, 64), n_classes=2, seed=seed)


def default_spec(behavior: str, **overrides) -> ModelSpec:
    base = {
        "D1": dict(in_dim=8, widths=(8, 8, 8)),
        "D2": dict(widths=(64,)),
        "D3": dict(in_dim=64, widths=(32,), grid=64),
        "D4": dict(in_dim=8),
    }[behavior]
    base.update(overrides)
    return ModelSpec(behavior, **base)


__all__ = ["BEHAVIORS", "BOX_CHANNELS", "ModelSpec", "default_spec", "reference_d1_spec"]
