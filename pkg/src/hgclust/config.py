"""Flat key=value run configuration.

Grammar: one ``key = value`` per line; blank lines and ``#`` comments are
ignored; keys are case-sensitive snake_case; unknown keys are errors.
Values parse by the key's declared type (int, float, bool true/false, or
string). The same format is written back as the run-directory snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, UsageError
from .model import TransformerConfig
from .training import TrainConfig

TEXT_MODES = ("auto", "file", "fallback", "zeros")
WALK_EDGE_MODES = ("all", "train")


@dataclass
class EmbeddingSettings:
    d_structural: int = 128
    walk_length: int = 40
    walks_per_node: int = 10
    window: int = 5
    negatives: int = 5
    sg_epochs: int = 5
    sg_lr: float = 0.025
    text_dim: int = 64          # fallback/zeros width when no vector file
    text_mode: str = "auto"     # auto | file | fallback | zeros
    walk_edges: str = "all"     # all | train (structure for the walk corpus)

    def validate(self) -> None:
        if self.text_mode not in TEXT_MODES:
            raise UsageError(f"text_mode must be one of {TEXT_MODES}")
        if self.walk_edges not in WALK_EDGE_MODES:
            raise UsageError(f"walk_edges must be one of {WALK_EDGE_MODES}")
        for name in ("d_structural", "walk_length", "walks_per_node", "window",
                     "negatives", "sg_epochs", "text_dim"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")


@dataclass
class RunSettings:
    train: TrainConfig = field(default_factory=TrainConfig)
    transformer: TransformerConfig = field(default_factory=TransformerConfig)
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)


# key -> (section attribute, field name, type)
_SCHEMA: dict[str, tuple[str, str, type]] = {}
for _f, _t in [("alpha", float), ("beta", float), ("k", int), ("margin", float),
               ("lr", float), ("epochs", int), ("warmup_epochs", int),
               ("seed", int), ("train_frac", float), ("val_frac", float),
               ("test_frac", float), ("batch_size", int),
               ("clustering_enabled", bool), ("cluster_layer", int)]:
    _SCHEMA[_f] = ("train", _f, _t)
for _f, _t in [("layers", int), ("heads", int), ("hidden", int),
               ("ffn_hidden", int), ("head_hidden", int), ("dropout", float)]:
    _SCHEMA[_f] = ("transformer", _f, _t)
for _f, _t in [("d_structural", int), ("walk_length", int),
               ("walks_per_node", int), ("window", int), ("negatives", int),
               ("sg_epochs", int), ("sg_lr", float), ("text_dim", int),
               ("text_mode", str), ("walk_edges", str)]:
    _SCHEMA[_f] = ("embedding", _f, _t)


def _parse_value(key: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        return kind(raw)
    except ValueError as exc:
        raise UsageError(f"config key '{key}': cannot parse {raw!r} as "
                         f"{kind.__name__} ({exc})")


def parse_config_text(text: str) -> RunSettings:
    settings = RunSettings()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise UsageError(f"config line {lineno}: unknown key '{key}'")
        section, attr, kind = _SCHEMA[key]
        setattr(getattr(settings, section), attr, _parse_value(key, raw, kind))
    settings.embedding.validate()
    try:
        settings.train.validate()
    except DataError as exc:  # config values are a usage problem
        raise UsageError(str(exc))
    # input_dim/label_width are derived from data later; validate the rest.
    if settings.transformer.layers < 1:
        raise UsageError("layers must be >= 1")
    if settings.transformer.hidden % settings.transformer.heads != 0:
        raise UsageError("hidden must be divisible by heads")
    return settings


def load_config(path: str | Path) -> RunSettings:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    return parse_config_text(text)


def settings_to_text(settings: RunSettings, extra: dict | None = None) -> str:
    """Serialize back to the flat format (the run-dir snapshot)."""
    lines = []
    for key, (section, attr, kind) in _SCHEMA.items():
        value = getattr(getattr(settings, section), attr)
        if kind is bool:
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key} = {value}")
    return "\n".join(lines) + "\n"
