"""Declarative run configuration.

One TOML file configures every stage; unknown keys are rejected with the
full key path, and CLI ``--set block.key=value`` overrides map one-for-one
onto the same schema. Defaults are the published full-scale training recipe.
"""

from __future__ import annotations

import dataclasses
import types
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Union, get_args, get_origin, get_type_hints

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    root: str = ""
    resolution: int = 128
    ratio_min: float = 0.20
    ratio_max: float = 0.40
    num_strokes: tuple[int, int] = (1, 4)
    brush_width: tuple[int, int] = (5, 25)


@dataclass
class EncoderBlock:
    base_channels: int = 64
    num_residual_blocks: int = 3
    vit_layers: int = 6
    vit_heads: int = 8
    vit_dim: int = 768
    patch_size: int = 8
    mode: str = "hybrid"
    fused_channels: int = 0  # 0 = same width as the CNN output


@dataclass
class Stage1Block:
    num_classes: int = 20
    label_provider: str = "none"
    labels_dir: str = ""


@dataclass
class Stage2Block:
    attention: bool = True
    scales: tuple[int, ...] = (1, 2, 4)
    key_dim: int = 64
    literal_attention_mask: bool = False
    sigma_train: float = 0.1
    alpha_init: float = 0.01


@dataclass
class CriticsBlock:
    base_channels: int = 64


@dataclass
class LossBlock:
    w_gp: float = 5.0
    perc_extractor: str = "identity"  # identity | vgg19
    vgg_weights: str = ""
    perc_layer_weights: tuple[float, ...] = (1 / 32, 1 / 16, 1 / 8, 1 / 4)
    boundary_radius: int = 0  # 0 = scale the 3px@128 default with resolution


@dataclass
class ScheduleBlock:
    phase1_end: int = 20
    phase2_end: int = 50
    critic_freqs: tuple[int, int, int] = (3, 5, 7)
    adv_start: float = 0.005
    final: tuple[float, float, float, float] = (0.01, 0.5, 0.08, 0.5)


@dataclass
class TrainBlock:
    epochs: int = 250
    batch_size: int = 16
    g_lr: float = 1e-5
    d_lr: float = 5e-6
    beta1: float = 0.5
    beta2: float = 0.999
    clip_norm: float = 0.5
    seed: int = 0
    mixed_precision: bool = False
    val_every: int = 1
    checkpoint_every: int = 5
    mask_mode: str = "random"
    out_dir: str = "runs/default"


@dataclass
class EvalBlock:
    seed: int = 0
    sigma: float = 0.0
    batch_size: int = 8
    fid: str = "none"    # none | stub
    lpips: str = "none"  # none | stub
    max_samples: int = 0  # 0 = whole split


@dataclass
class ServiceBlock:
    host: str = "127.0.0.1"
    port: int = 8080
    max_payload_mb: int = 8
    max_concurrency: int = 2
    queue_limit: int = 8
    cors_origins: tuple[str, ...] = ("*",)


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderBlock = field(default_factory=EncoderBlock)
    stage1: Stage1Block = field(default_factory=Stage1Block)
    stage2: Stage2Block = field(default_factory=Stage2Block)
    critics: CriticsBlock = field(default_factory=CriticsBlock)
    losses: LossBlock = field(default_factory=LossBlock)
    schedule: ScheduleBlock = field(default_factory=ScheduleBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    eval: EvalBlock = field(default_factory=EvalBlock)
    service: ServiceBlock = field(default_factory=ServiceBlock)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# strict construction
# ---------------------------------------------------------------------------

def _coerce(value: Any, hint: Any, path: str) -> Any:
    origin = get_origin(hint)
    if origin in (Union, types.UnionType):
        args = [a for a in get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a table, got {type(value).__name__}")
        return _from_mapping(hint, value, path)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected an array, got {value!r}")
        args = get_args(hint)
        if origin is tuple and len(args) == 2 and args[1] is Ellipsis:
            elem_types = [args[0]] * len(value)
        elif origin is tuple:
            if len(value) != len(args):
                raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
            elem_types = list(args)
        else:
            elem_types = [args[0] if args else str] * len(value)
        coerced = [
            _coerce(v, t, f"{path}[{i}]") for i, (v, t) in enumerate(zip(value, elem_types))
        ]
        return tuple(coerced) if origin is tuple else coerced
    raise ConfigError(f"{path}: unsupported config field type {hint!r}")


def _from_mapping(cls, mapping: dict, path: str = "") -> Any:
    hints = get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    unknown = set(mapping) - set(known)
    if unknown:
        where = path or cls.__name__
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in mapping.items():
        child = f"{path}.{name}" if path else name
        kwargs[name] = _coerce(value, hints[name], child)
    return cls(**kwargs)


def config_from_dict(mapping: dict) -> RunConfig:
    return _from_mapping(RunConfig, mapping)


def load_run_config(path: str | Path) -> RunConfig:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        mapping = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    return config_from_dict(mapping)


def _parse_scalar(text: str) -> Any:
    lowered = text.strip()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered.startswith("["):
        try:
            loaded = tomllib.loads(f"v = {lowered}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"bad array literal {text!r}: {exc}") from exc
        return loaded["v"]
    for caster in (int, float):
        try:
            return caster(lowered)
        except ValueError:
            continue
    return text


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``block.key=value`` assignments on top of a config."""
    tree = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form block.key=value")
        key, _, raw_value = item.partition("=")
        parts = key.strip().split(".")
        node = tree
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"override {key!r}: no config table {part!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"override {key!r}: unknown key")
        node[parts[-1]] = _parse_scalar(raw_value)
    return config_from_dict(tree)


def describe_defaults() -> str:
    """Flat reference of every key with its default, for `faceinpaint config`."""
    lines = []
    cfg = RunConfig()
    for block_field in fields(cfg):
        block = getattr(cfg, block_field.name)
        lines.append(f"[{block_field.name}]")
        for f in fields(block):
            value = getattr(block, f.name)
            if isinstance(value, tuple):
                value = list(value)
            lines.append(f"{f.name} = {value!r}")
        lines.append("")
    return "\n".join(lines)
