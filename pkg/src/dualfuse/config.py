"""Declarative experiment configuration (JSON in, dataclasses out)."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .datasim import CorpusSpec, ModalitySpec, default_modalities

ABLATION_SWITCHES = (
    "uncertainty_off",
    "fluctuation_off",
    "calibration_off",
    "static_weights",
    "tied_projections",
    "reconstruction_off",
    "normalization_off",
    "input_scaling_off",
    "paper_layer_rule",
    "true_js",
    "recon_average",
)


@dataclass
class ModelConfig:
    dim: int = 64
    layers: int = 4
    heads: int = 1
    tokens_per_modality: int = 1
    history: int = 8

    def validate(self):
        if self.dim <= 0 or self.layers <= 0 or self.heads <= 0:
            raise ValueError("model dims must be positive")
        if self.dim % self.tokens_per_modality != 0:
            raise ValueError(
                f"dim {self.dim} not divisible by tokens_per_modality {self.tokens_per_modality}"
            )
        if (self.dim // self.tokens_per_modality) % self.heads != 0:
            raise ValueError("token width must be divisible by heads")


@dataclass
class LossConfig:
    lambda_a: float = 0.1
    lambda_c: float = 0.1


@dataclass
class OptimConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    mask_prob: float = 0.3

    def validate(self):
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("lr and eps must be positive")
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("batch_size and epochs must be positive")
        if not 0.0 <= self.mask_prob < 1.0:
            raise ValueError("mask_prob must lie in [0, 1)")


@dataclass
class AblationConfig:
    uncertainty_off: bool = False
    fluctuation_off: bool = False
    calibration_off: bool = False
    static_weights: bool = False
    tied_projections: bool = False
    reconstruction_off: bool = False
    normalization_off: bool = False
    input_scaling_off: bool = False
    paper_layer_rule: bool = False
    true_js: bool = False
    recon_average: bool = False

    def active(self):
        return [k for k in ABLATION_SWITCHES if getattr(self, k)]

    @classmethod
    def from_names(cls, names):
        kwargs = {}
        for raw in names:
            key = raw.strip().replace("-", "_")
            if not key:
                continue
            if key not in ABLATION_SWITCHES:
                raise ValueError(f"unknown ablation switch {raw!r}; known: "
                                 + ", ".join(s.replace("_", "-") for s in ABLATION_SWITCHES))
            kwargs[key] = True
        return cls(**kwargs)


@dataclass
class SweepConfig:
    noise_rates: list = field(default_factory=lambda: [0.0, 0.5, 1.0])
    missing_rates: list = field(default_factory=lambda: [0.0, 0.5])
    missing_modalities: list = field(default_factory=lambda: [1])
    seeds: list = field(default_factory=lambda: [0, 1, 2])


@dataclass
class ExperimentConfig:
    data: CorpusSpec = field(default_factory=CorpusSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    ablate: AblationConfig = field(default_factory=AblationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    train_frac: float = 0.8
    seed: int = 0

    def __post_init__(self):
        self.model.validate()
        self.optim.validate()
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError("train_frac must lie in (0, 1)")
        # the corpus history length drives the temporal heads
        self.data.history = self.model.history

    def to_dict(self):
        return _to_jsonable(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def config_hash(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, raw):
        raw = copy.deepcopy(dict(raw))
        data = raw.pop("data", {})
        mods = data.pop("modalities", None)
        if mods is not None:
            data["modalities"] = [ModalitySpec(**m) for m in mods]
        else:
            data["modalities"] = default_modalities()
        if "noise_magnitude" in data:
            data["noise_magnitude"] = tuple(data["noise_magnitude"])
        kwargs = {
            "data": CorpusSpec(**data),
            "model": ModelConfig(**raw.pop("model", {})),
            "loss": LossConfig(**raw.pop("loss", {})),
            "optim": _optim_from(raw.pop("optim", {})),
            "ablate": AblationConfig(**raw.pop("ablate", {})),
            "sweep": SweepConfig(**raw.pop("sweep", {})),
        }
        for key in ("train_frac", "seed"):
            if key in raw:
                kwargs[key] = raw.pop(key)
        if raw:
            raise ValueError(f"unknown config keys: {sorted(raw)}")
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_ablations(self, names):
        cfg = ExperimentConfig.from_dict(self.to_dict())
        extra = AblationConfig.from_names(names)
        for key in ABLATION_SWITCHES:
            if getattr(extra, key):
                setattr(cfg.ablate, key, True)
        return cfg


def _optim_from(raw):
    raw = dict(raw)
    if "betas" in raw:
        raw["betas"] = tuple(raw["betas"])
    return OptimConfig(**raw)


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(x) for x in obj]
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    raise TypeError(f"cannot serialize {type(obj)}")
