"""Run configuration: sectioned key-value text (INI) with typed, validated fields."""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields

from .errors import ConfigError


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _fmt(value):
    if isinstance(value, list):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


@dataclass
class RunConfig:
    # manifold
    family: str = "flat"
    amplitude: float = 0.0
    width: float = 1.0
    # grid
    h: float = 0.05
    T: float = 1.0
    n1: int = 40
    n_pad: int = 20
    band_margin: float = 25.0
    # quasimode
    delta: float = 1.0
    order: int = 2
    n: int = 3
    # single quasimode run
    k: float = 20.0
    tau: float = 1.0
    lam: float = 0.0
    # coefficient (compact smooth bump)
    c_amplitude: float = 1.0
    c_x1: float = 0.5
    c_w1: float = 0.4
    c_center_x: float = 0.1
    c_center_y: float = -0.1
    c_radius: float = 0.8
    # reconstruction and sweep
    k_list: list = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    eps_list: list = field(default_factory=lambda: [1e-3])
    y0_spacing: float = 0.3
    margin: float = 0.4
    n_lambda: int = 3
    min_angle: float = 30.0
    # run
    seed: int = 0
    threads: int = 1
    out: str = "out"


_SECTIONS = {
    "manifold": ("family", "amplitude", "width"),
    "grid": ("h", "T", "n1", "n_pad", "band_margin"),
    "quasimode": ("delta", "order", "n", "k", "tau", "lam"),
    "coefficient": ("c_amplitude", "c_x1", "c_w1", "c_center_x", "c_center_y", "c_radius"),
    "reconstruct": ("k_list", "eps_list", "y0_spacing", "margin", "n_lambda", "min_angle"),
    "run": ("seed", "threads", "out"),
}

_CHECKS = {
    "family": (lambda v: v in ("flat", "constant", "gaussian_bump"), "must be flat, constant or gaussian_bump"),
    "width": (_positive, "must be positive"),
    "h": (lambda v: 0 < v < 0.5, "must lie in (0, 0.5)"),
    "T": (_positive, "must be positive"),
    "n1": (lambda v: v >= 2, "must be at least 2"),
    "n_pad": (_nonneg, "must be non-negative"),
    "band_margin": (_positive, "must be positive"),
    "delta": (_positive, "must be positive"),
    "order": (lambda v: v == 2, "only order 2 is implemented"),
    "n": (lambda v: v >= 3, "must be at least 3"),
    "k": (_nonneg, "must be non-negative"),
    "tau": (lambda v: v >= 1, "must be at least 1"),
    "c_w1": (_positive, "must be positive"),
    "c_radius": (_positive, "must be positive"),
    "k_list": (lambda v: len(v) > 0 and all(x > 1 for x in v), "must be a nonempty list of values > 1"),
    "eps_list": (lambda v: len(v) > 0 and all(0 <= x < 1 for x in v), "must be a nonempty list in [0, 1)"),
    "y0_spacing": (_positive, "must be positive"),
    "margin": (lambda v: 0 <= v < 1, "must lie in [0, 1)"),
    "n_lambda": (lambda v: v >= 1, "must be at least 1"),
    "min_angle": (lambda v: 0 < v <= 90, "must lie in (0, 90]"),
    "seed": (lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer"),
    "threads": (lambda v: v >= 1, "must be at least 1"),
}


def _section_of(name):
    for sec, keys in _SECTIONS.items():
        if name in keys:
            return sec
    raise KeyError(name)


def _parse_value(name, kind, text):
    try:
        if kind is list:
            return _floats(text)
        if kind is int:
            return int(text)
        if kind is float:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        return text.strip()
    except ValueError:
        raise ConfigError(f"{_section_of(name)}.{name}: cannot parse {text!r}") from None


def validate(cfg: RunConfig) -> RunConfig:
    for f in fields(cfg):
        check = _CHECKS.get(f.name)
        if check and not check[0](getattr(cfg, f.name)):
            raise ConfigError(f"{_section_of(f.name)}.{f.name} {check[1]} (got {getattr(cfg, f.name)!r})")
    return cfg


def parse(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    kinds = {f.name: (list if f.name.endswith("_list") else f.type if isinstance(f.type, type) else
                      {"str": str, "float": float, "int": int, "list": list}[f.type]) for f in fields(RunConfig)}
    values = {}
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        for key, text in cp.items(sec):
            if key not in _SECTIONS[sec]:
                raise ConfigError(f"{sec}.{key}: unknown key")
            values[key] = _parse_value(key, kinds[key], text)
    return validate(RunConfig(**values))


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def serialize(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for sec, keys in _SECTIONS.items():
        cp[sec] = {k: _fmt(getattr(cfg, k)) for k in keys}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
