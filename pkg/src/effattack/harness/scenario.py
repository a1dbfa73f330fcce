"""Scenario files: a strict, human-writable description of one experiment.

A scenario is a YAML mapping. Every section is validated on load and any
unknown key is rejected, with the error naming the dotted key path::

    id: d1-pgd
    seed: 0
    model: {behavior: D1, in_dim: 1024, widths: [16, 64, 64]}
    dataset: {kind: gauss-blobs, n: 1000}
    training: {epochs: 20, lr: 0.05}
    attack: {name: pgd, epsilon: 0.1, steps: 50}
    defense: {name: detector, train_size: 200}
    eval_size: 100

``attack`` may also be a list of attacks, and ``epsilon`` a list of
budgets; each (attack, epsilon) pair becomes one campaign.

Seeds: every random stream is derived from the master ``seed`` with
``derive_seed(seed, label)``; the labels are listed in ``SEED_LABELS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from ..cost import HardwareProfile
from ..datasets import DATASET_KINDS
from ..errors import EffAttackError, ValidationError
from ..models.core import BREACH_POLICIES, Thresholds
from ..models.spec import ModelSpec
from ..rng import derive_seed

ATTACKS = ("none", "pgd", "random-noise", "blackbox", "text")
DEFENSES = ("detector", "transform", "guard")
TRANSFORM_KINDS = ("quantize", "mean_smooth", "text_normalize")
DATA_POISON = ("uniform-soft-label",)
MODEL_POISON = {"exit-temperature": "D1", "eos-bias": "D2"}
DATASET_FOR = {"D1": "gauss-blobs", "D2": "token-corpus", "D3": "scene-vectors", "D4": "gauss-blobs"}
# input domain used when the attack section does not give one
DEFAULT_DOMAIN = {"D3": (0.0, 1.0)}

SEED_LABELS = {
    "model": "model-init",
    "train_data": "train-data",
    "eval_data": "eval-data",
    "poison": "poison",
    "training": "training",
    "attack": "attack",
    "detector_data": "detector-data",
    "detector": "detector",
}


def sub_seed(master: int, purpose: str) -> int:
    return derive_seed(master, SEED_LABELS[purpose])


# -- value checks -------------------------------------------------------------


def _num(path, value, *, integer=False, minimum=None, above=None, allow_inf=False):
    if isinstance(value, bool):
        raise ValidationError(path, f"expected a number, got {value!r}")
    if isinstance(value, str):
        # YAML 1.1 reads "1e-6" as a string
        try:
            value = float(value)
        except ValueError:
            raise ValidationError(path, f"expected a number, got {value!r}") from None
    if not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ValidationError(path, f"must be finite, got {value}")
    if integer:
        if value != int(value):
            raise ValidationError(path, f"expected an integer, got {value}")
        value = int(value)
    if minimum is not None and value < minimum:
        raise ValidationError(path, f"must be >= {minimum}, got {value}")
    if above is not None and not value > above:
        raise ValidationError(path, f"must be > {above}, got {value}")
    return value


def _choice(path, value, options):
    if value not in options:
        raise ValidationError(path, f"must be one of {list(options)}, got {value!r}")
    return value


def _mapping(path, data, allowed, required=()):
    if not isinstance(data, dict):
        raise ValidationError(path, f"expected a mapping, got {type(data).__name__}")
    for key in data:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}" if path else str(key), "unknown key")
    for key in required:
        if key not in data:
            raise ValidationError(f"{path}.{key}" if path else key, "required")
    return data


def _wrap(prefix, fn, *args, **kwargs):
    # re-raise a component's validation error under this section's key path
    try:
        return fn(*args, **kwargs)
    except ValidationError as exc:
        raise ValidationError(f"{prefix}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except (EffAttackError, TypeError) as exc:
        raise ValidationError(prefix, str(exc)) from None


# -- sections -----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSection:
    kind: str
    n: int = 1000
    seed: int | None = None
    options: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, data, behavior):
        _mapping("dataset", data, {f.name for f in fields(cls)}, ("kind",))
        kind = _choice("dataset.kind", data["kind"], DATASET_KINDS)
        if kind != DATASET_FOR[behavior]:
            raise ValidationError("dataset.kind", f"{behavior} models train on {DATASET_FOR[behavior]}")
        n = _num("dataset.n", data.get("n", 1000), integer=True, minimum=1)
        seed = data.get("seed")
        if seed is not None:
            seed = _num("dataset.seed", seed, integer=True, minimum=0)
        opts = _mapping("dataset.options", data.get("options") or {}, _OPTION_KEYS[kind])
        return cls(kind, n, seed, dict(opts))

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n}
        if self.seed is not None:
            d["seed"] = self.seed
        if self.options:
            d["options"] = dict(self.options)
        return d


_OPTION_KEYS = {
    "gauss-blobs": {"dim", "separation"},
    "token-corpus": {"alphabet"},
    "scene-vectors": {"grid", "background", "foreground", "noise"},
}


@dataclass(frozen=True)
class TrainingSection:
    epochs: int = 20
    lr: float = 0.05
    batch_size: int = 16

    @classmethod
    def parse(cls, data):
        _mapping("training", data, {f.name for f in fields(cls)})
        return cls(
            _num("training.epochs", data.get("epochs", cls.epochs), integer=True, minimum=0),
            _num("training.lr", data.get("lr", cls.lr), minimum=0),
            _num("training.batch_size", data.get("batch_size", cls.batch_size), integer=True, minimum=1),
        )

    def to_dict(self):
        return {"epochs": self.epochs, "lr": self.lr, "batch_size": self.batch_size}


@dataclass(frozen=True)
class PoisonSection:
    data_scheme: str | None = None
    fraction: float = 0.0
    model_scheme: str | None = None
    magnitude: float = 1.0

    @classmethod
    def parse(cls, data, behavior):
        _mapping("poison", data, {"data", "model"})
        out = {}
        if "data" in data:
            d = _mapping("poison.data", data["data"], {"scheme", "fraction"}, ("scheme", "fraction"))
            out["data_scheme"] = _choice("poison.data.scheme", d["scheme"], DATA_POISON)
            if behavior != "D1":
                raise ValidationError("poison.data.scheme", "soft-label poisoning targets D1 exit heads")
            frac = _num("poison.data.fraction", d["fraction"], minimum=0)
            if frac > 1:
                raise ValidationError("poison.data.fraction", f"must be <= 1, got {frac}")
            out["fraction"] = frac
        if "model" in data:
            m = _mapping("poison.model", data["model"], {"scheme", "magnitude"}, ("scheme", "magnitude"))
            scheme = _choice("poison.model.scheme", m["scheme"], tuple(MODEL_POISON))
            if MODEL_POISON[scheme] != behavior:
                raise ValidationError("poison.model.scheme", f"{scheme} applies to {MODEL_POISON[scheme]} models")
            out["model_scheme"] = scheme
            above = 0 if scheme == "exit-temperature" else None
            out["magnitude"] = _num("poison.model.magnitude", m["magnitude"], above=above)
        return cls(**out)

    def to_dict(self):
        d = {}
        if self.data_scheme:
            d["data"] = {"scheme": self.data_scheme, "fraction": self.fraction}
        if self.model_scheme:
            d["model"] = {"scheme": self.model_scheme, "magnitude": self.magnitude}
        return d


@dataclass(frozen=True)
class AttackSection:
    name: str
    epsilons: tuple = (0.1,)
    steps: int = 50
    alpha: float | None = None
    query_budget: int = 200
    lo: float = -math.inf
    hi: float = math.inf
    level: str | None = None
    mode: str | None = None

    KEYS = ("name", "epsilon", "steps", "alpha", "query_budget", "lo", "hi", "level", "mode")

    @classmethod
    def parse(cls, data, behavior, path="attack"):
        _mapping(path, data, set(cls.KEYS), ("name",))
        name = _choice(f"{path}.name", data["name"], ATTACKS)
        text = behavior == "D2"
        if name in ("pgd", "random-noise") and text:
            raise ValidationError(f"{path}.name", f"{name} needs continuous inputs; use text for D2")
        if name == "text" and not text:
            raise ValidationError(f"{path}.name", "text attacks apply to D2 models")
        eps = data.get("epsilon", 1 if text else 0.1)
        eps = tuple(eps) if isinstance(eps, (list, tuple)) else (eps,)
        if not eps:
            raise ValidationError(f"{path}.epsilon", "empty list")
        if text and name != "none":
            eps = tuple(_num(f"{path}.epsilon", e, integer=True, minimum=1) for e in eps)
        else:
            eps = tuple(_num(f"{path}.epsilon", e, minimum=0) for e in eps)
        lo_d, hi_d = DEFAULT_DOMAIN.get(behavior, (-math.inf, math.inf))
        out = dict(
            name=name,
            epsilons=eps,
            steps=_num(f"{path}.steps", data.get("steps", 50), integer=True, minimum=0),
            alpha=None if data.get("alpha") is None else _num(f"{path}.alpha", data["alpha"], minimum=0),
            query_budget=_num(f"{path}.query_budget", data.get("query_budget", 200), integer=True, minimum=0),
            lo=_num(f"{path}.lo", data.get("lo", lo_d), allow_inf=True),
            hi=_num(f"{path}.hi", data.get("hi", hi_d), allow_inf=True),
        )
        if out["lo"] > out["hi"]:
            raise ValidationError(f"{path}.lo", f"lower bound {out['lo']} exceeds upper bound {out['hi']}")
        if text and name in ("text", "blackbox"):
            out["level"] = _choice(f"{path}.level", data.get("level", "character"), ("character", "word"))
        elif "level" in data:
            raise ValidationError(f"{path}.level", "only text-model attacks take an edit level")
        if name == "text":
            out["mode"] = _choice(f"{path}.mode", data.get("mode", "blackbox"), ("whitebox", "blackbox"))
        elif "mode" in data:
            raise ValidationError(f"{path}.mode", "only the text attack takes a mode")
        return cls(**out)

    @property
    def label(self):
        """Report row name; text and D2 black-box attacks carry their edit level."""
        return f"{self.name}-{self.level}" if self.level is not None else self.name

    @property
    def mode_label(self):
        if self.name == "text":
            return self.mode
        return {"pgd": "whitebox", "blackbox": "blackbox", "random-noise": "baseline"}.get(self.name, "none")

    def to_dict(self):
        d = {"name": self.name, "epsilon": list(self.epsilons) if len(self.epsilons) > 1 else self.epsilons[0],
             "steps": self.steps, "query_budget": self.query_budget, "lo": self.lo, "hi": self.hi}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.level is not None:
            d["level"] = self.level
        if self.mode is not None:
            d["mode"] = self.mode
        return d


@dataclass(frozen=True)
class DefenseSection:
    name: str
    params: dict = field(default_factory=dict)

    PARAMS = {
        "detector": {"train_size": (int, 100), "epochs": (int, 500), "lr": (float, 0.5)},
        "guard": {"ceiling": (float, None), "policy": (str, "abort-and-flag")},
        "transform": {"kind": (str, None), "bits": (int, None), "window": (int, None),
                      "max_tokens": (int, None)},
    }
    TRANSFORM_PARAM = {"quantize": "bits", "mean_smooth": "window", "text_normalize": "max_tokens"}

    @classmethod
    def parse(cls, data, behavior, attacks):
        _mapping("defense", data, {"name"} | set().union(*(set(p) for p in cls.PARAMS.values())), ("name",))
        name = _choice("defense.name", data["name"], DEFENSES)
        spec = cls.PARAMS[name]
        _mapping("defense", data, {"name"} | set(spec))
        params = {}
        for key, (kind, default) in spec.items():
            val = data.get(key, default)
            if val is None:
                continue
            if kind is int:
                val = _num(f"defense.{key}", val, integer=True, minimum=1)
            elif kind is float:
                val = _num(f"defense.{key}", val, above=0, allow_inf=True)
            params[key] = val
        if name == "guard":
            if "ceiling" not in params:
                raise ValidationError("defense.ceiling", "required")
            _choice("defense.policy", params["policy"], BREACH_POLICIES)
        if name == "detector" and params["train_size"] < 2:
            raise ValidationError("defense.train_size", "need at least 2 inputs")
        if name == "transform":
            kind = _choice("defense.kind", params.get("kind"), TRANSFORM_KINDS)
            wanted = cls.TRANSFORM_PARAM[kind]
            for other in cls.TRANSFORM_PARAM.values():
                if other != wanted and other in params:
                    raise ValidationError(f"defense.{other}", f"not a {kind} parameter")
            if wanted not in params:
                raise ValidationError(f"defense.{wanted}", "required")
            if (kind == "text_normalize") != (behavior == "D2"):
                raise ValidationError("defense.kind", f"{kind} does not apply to {behavior} inputs")
            if kind == "quantize":
                for a in attacks:
                    if not (math.isfinite(a.lo) and math.isfinite(a.hi)):
                        raise ValidationError("defense.kind", "quantize needs finite attack.lo/attack.hi")
        return cls(name, params)

    @property
    def label(self):
        return self.params["kind"] if self.name == "transform" else self.name

    def to_dict(self):
        return {"name": self.name, **self.params}


def _section(cls, data, path):
    data = dict(_mapping(path, data or {}, {f.name for f in fields(cls)}))
    for key, val in data.items():
        data[key] = _num(f"{path}.{key}", val)
    return _wrap(path, cls, **data)


@dataclass(frozen=True)
class Scenario:
    id: str
    seed: int
    model: ModelSpec
    dataset: DatasetSection
    attacks: tuple
    training: TrainingSection = TrainingSection()
    thresholds: Thresholds = Thresholds()
    poison: PoisonSection = PoisonSection()
    defense: DefenseSection | None = None
    hardware: HardwareProfile = HardwareProfile()
    eval_size: int = 100

    TOP_KEYS = ("id", "seed", "model", "dataset", "training", "thresholds", "poison", "attack",
                "defense", "hardware", "eval_size")

    @property
    def behavior(self):
        return self.model.behavior

    @classmethod
    def from_dict(cls, data, default_id="scenario") -> "Scenario":
        _mapping("", data, set(cls.TOP_KEYS), ("model", "dataset", "attack"))
        sid = str(data.get("id", default_id))
        seed = _num("seed", data.get("seed", 0), integer=True, minimum=0)
        mdata = _mapping("model", data["model"], {f.name for f in fields(ModelSpec)} - {"seed"}, ("behavior",))
        _choice("model.behavior", mdata["behavior"], ("D1", "D2", "D3", "D4"))
        model = _wrap("model", ModelSpec.from_dict, dict(mdata, seed=sub_seed(seed, "model")))
        behavior = model.behavior
        dataset = DatasetSection.parse(data["dataset"], behavior)
        _check_options(dataset, model)
        raw = data["attack"]
        raw = raw if isinstance(raw, list) else [raw]
        if not raw:
            raise ValidationError("attack", "empty attack list")
        attacks = tuple(AttackSection.parse(a, behavior, f"attack[{i}]" if len(raw) > 1 else "attack")
                        for i, a in enumerate(raw))
        defense = None
        if data.get("defense") is not None:
            defense = DefenseSection.parse(data["defense"], behavior, attacks)
        return cls(
            id=sid,
            seed=seed,
            model=model,
            dataset=dataset,
            attacks=attacks,
            training=TrainingSection.parse(data.get("training") or {}),
            thresholds=_section(Thresholds, data.get("thresholds"), "thresholds"),
            poison=PoisonSection.parse(data.get("poison") or {}, behavior),
            defense=defense,
            hardware=_section(HardwareProfile, data.get("hardware"), "hardware"),
            eval_size=_num("eval_size", data.get("eval_size", 100), integer=True, minimum=1),
        )

    def with_seed(self, seed: int) -> "Scenario":
        d = self.to_dict()
        d["seed"] = int(seed)
        return Scenario.from_dict(d)

    def to_dict(self) -> dict:
        model = self.model.to_dict()
        model.pop("seed")
        d = {
            "id": self.id,
            "seed": self.seed,
            "model": model,
            "dataset": self.dataset.to_dict(),
            "training": self.training.to_dict(),
            "thresholds": {f.name: getattr(self.thresholds, f.name) for f in fields(Thresholds)},
            "attack": [a.to_dict() for a in self.attacks] if len(self.attacks) > 1 else self.attacks[0].to_dict(),
            "hardware": self.hardware.to_dict(),
            "eval_size": self.eval_size,
        }
        if self.poison.to_dict():
            d["poison"] = self.poison.to_dict()
        if self.defense is not None:
            d["defense"] = self.defense.to_dict()
        return d

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _check_options(dataset, model):
    want = {"gauss-blobs": ("dim", model.in_dim), "scene-vectors": ("grid", model.grid),
            "token-corpus": ("alphabet", model.alphabet)}[dataset.kind]
    key, val = want
    if key in dataset.options and dataset.options[key] != val:
        raise ValidationError(f"dataset.options.{key}", f"must match the model ({val!r})")


def parse_scenario(text: str, default_id="scenario") -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError("<file>", f"not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("<file>", "top level must be a mapping")
    return Scenario.from_dict(data, default_id)


def load_scenario(path) -> Scenario:
    """Read and fully validate a scenario file; the id defaults to the file stem."""
    path = Path(path)
    return parse_scenario(path.read_text(), default_id=path.stem)
