"""Run configuration: one flat key=value namespace with strict parsing.

Every knob of the engine lives here with its default. Config files are
plain ``key = value`` lines (# comments allowed); command-line overrides
are applied on top. Unknown keys and unparseable values are rejected, and
validation reports every problem at once rather than the first one.
"""

from dataclasses import dataclass, fields


@dataclass
class RunConfig:
    # encoder
    d_emb: int = 50
    d_h: int = 400
    d_f: int = 20
    n_head: int = 4
    gcn_blocks: int = 2
    dense_sublayers: int = 2
    bilstm: bool = True
    embedding_path: str = None
    # span and pair heads
    max_span_width: int = 8
    mlp_layers: int = 1
    mlp_hidden: int = 150
    entity_type_set: tuple = None  # None: discover from the training corpus
    # training
    lr_encoder: float = 1e-3
    lr_heads: float = 1e-3
    patience: int = 15
    max_epochs: int = 200
    batch_size: int = 8
    alpha: float = 1.0
    beta: float = 1.0
    neg_downsample: float = 0.0  # 0 disables; else fraction of negative spans kept
    seed: int = 42
    # ablations
    no_gcn: bool = False
    no_overlap_relation: bool = False

    def replace(self, **kwargs):
        merged = {f.name: getattr(self, f.name) for f in fields(self)}
        merged.update(kwargs)
        return RunConfig(**merged)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if d["entity_type_set"] is not None:
            d["entity_type_set"] = list(d["entity_type_set"])
        return d

    @staticmethod
    def from_dict(d):
        cfg = RunConfig(**d)
        if cfg.entity_type_set is not None:
            cfg.entity_type_set = tuple(cfg.entity_type_set)
        return cfg


class ConfigError(ValueError):
    """One or more config problems; message lists all of them."""


_BOOL_WORDS = {"on": True, "true": True, "1": True, "yes": True,
               "off": False, "false": False, "0": False, "no": False}


def _parse_value(key, raw, kind):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() not in _BOOL_WORDS:
            raise ValueError(f"{key}: expected on/off, got {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if key == "entity_type_set":
        if raw.lower() in ("", "auto", "none"):
            return None
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    # plain string keys; empty and "none" mean unset
    return None if raw.lower() in ("", "none") else raw


def _field_kinds():
    defaults = RunConfig()
    kinds = {}
    for f in fields(RunConfig):
        default = getattr(defaults, f.name)
        kinds[f.name] = type(default) if default is not None else str
    return kinds


def parse_overrides(cfg, pairs):
    """Apply "key=value" strings on top of cfg; unknown keys rejected."""
    kinds = _field_kinds()
    updates = {}
    errors = []
    for pair in pairs:
        if "=" not in pair:
            errors.append(f"override {pair!r} is not key=value")
            continue
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in kinds:
            errors.append(f"unknown config key {key!r}")
            continue
        try:
            updates[key] = _parse_value(key, raw, kinds[key])
        except ValueError as exc:
            errors.append(f"bad value for {key}: {exc}")
    if errors:
        raise ConfigError("; ".join(errors))
    return cfg.replace(**updates)


def load_config(path, base=None):
    """Parse a key=value file into a RunConfig on top of the defaults."""
    cfg = base or RunConfig()
    pairs = []
    errors = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                errors.append(f"{path}: line {lineno}: expected key = value")
                continue
            pairs.append(stripped)
    if errors:
        raise ConfigError("; ".join(errors))
    try:
        return parse_overrides(cfg, pairs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def validate_config(cfg):
    """Return every constraint violation; empty list means usable."""
    errors = []

    def positive(name):
        if getattr(cfg, name) <= 0:
            errors.append(f"{name} must be positive")

    for name in ("d_emb", "d_h", "d_f", "n_head", "gcn_blocks", "dense_sublayers",
                 "max_span_width", "mlp_hidden", "patience", "max_epochs", "batch_size",
                 "lr_encoder", "lr_heads"):
        positive(name)
    if cfg.mlp_layers < 1:
        errors.append("mlp_layers must be >= 1")
    if cfg.alpha < 0 or cfg.beta < 0:
        errors.append("alpha and beta must be >= 0")
    if cfg.alpha == 0 and cfg.beta == 0:
        errors.append("alpha and beta cannot both be zero")
    if not (0.0 <= cfg.neg_downsample <= 1.0):
        errors.append("neg_downsample must lie in [0, 1]")
    if cfg.bilstm and cfg.d_h % 2 != 0:
        errors.append("d_h must be even to split across two directions")
    if cfg.bilstm and not cfg.no_gcn and cfg.d_h % cfg.n_head != 0:
        errors.append("n_head must divide d_h")
    if cfg.entity_type_set is not None and len(cfg.entity_type_set) == 0:
        errors.append("entity_type_set cannot be empty")
    return errors
