"""JSON configuration document with dotted-path overrides."""

import copy
import json
from pathlib import Path

from .errors import ValidationError

SECTIONS = ("phantom", "coils", "acquisition", "degradation", "recon", "scenario_distribution",
            "unet", "train", "eval")


def load_config(path=None, overrides=()):
    """Read a config file (or start empty) and apply ``key.path=value`` overrides."""
    cfg = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ValidationError(f"{p}: config file not found")
        try:
            cfg = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise ValidationError(f"{p}: config must be a JSON object")
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        set_dotted(cfg, item)
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ValidationError(f"unknown config sections {sorted(unknown)}; expected {list(SECTIONS)}")
    return cfg


def parse_value(text):
    """JSON literal if it parses, plain string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(cfg, item):
    if "=" not in item:
        raise ValidationError(f"override {item!r} must look like section.key=value")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    if len(parts) < 2 or not all(parts):
        raise ValidationError(f"override path {key!r} must name a section and a field")
    node = cfg
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ValidationError(f"override path {key!r} crosses a non-object value")
        node = nxt
    node[parts[-1]] = parse_value(value)
    return cfg


def section(cfg, name):
    value = cfg.get(name) or {}
    if not isinstance(value, dict):
        raise ValidationError(f"config section {name!r} must be an object")
    return value
