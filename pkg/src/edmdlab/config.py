"""Experiment configuration files.

The format is INI (``configparser``) with flat sections::

    [map]
    degree = 4
    cos = 0, 0, 0.08
    sin = 0, 0, 0, 0, 0, -0.4

    [density]
    kind = physical          ; physical | uniform | explicit
    cos =                    ; explicit only: 1 + sum cos[m-1] cos(mx) + ...
    sin =
    physical_order = 128

    [experiment]
    K_list = 8, 12, 16, 20, 24, 28, 32, 36, 40
    N_list = 1000, 10000, 100000, 1000000
    seeds = 8
    seed = 0
    sampling = trajectory    ; trajectory | iid
    tracked = 1, 2, 3, 4
    mode_rank = 1
    fig3_K = 8

    [oracle]
    K_oracle = 256
    modulus_floor = 0.001

    [weights]
    t = 0.2
    kappa =                  ; empty: taken from the map's expansion bound

    [opuc]
    K_big = 64
    ratio_K = 4, 8, 12, 16
    sigma_t = 0.4
    tau_t = 0.2

    [output]
    directory = edmdlab-out

Missing keys take the defaults shown, which describe the map
``4x - 0.4 sin 6x + 0.08 cos 3x`` with its physical density.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field, replace

from .circle_map import DensitySpec, ExpandingMap, NotExpandingError, DensityError

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "dump_config"]


class ConfigError(ValueError):
    """Invalid configuration, with the offending field and line if known."""


def _floats(s):
    s = s.strip()
    return tuple(float(v) for v in s.split(",") if v.strip()) if s else ()


def _ints(s):
    s = s.strip()
    return tuple(int(v) for v in s.split(",") if v.strip()) if s else ()


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _opt_float(s):
    s = s.strip()
    return float(s) if s else None


# (section, key, attribute, parser)
_SCHEMA = [
    ("map", "degree", "degree", int),
    ("map", "cos", "map_cos", _floats),
    ("map", "sin", "map_sin", _floats),
    ("density", "kind", "density_kind", str.strip),
    ("density", "cos", "density_cos", _floats),
    ("density", "sin", "density_sin", _floats),
    ("density", "physical_order", "physical_order", int),
    ("experiment", "K_list", "K_list", _ints),
    ("experiment", "N_list", "N_list", _ints),
    ("experiment", "seeds", "seeds", int),
    ("experiment", "seed", "seed", int),
    ("experiment", "sampling", "sampling", str.strip),
    ("experiment", "tracked", "tracked", _ints),
    ("experiment", "mode_rank", "mode_rank", int),
    ("experiment", "fig3_K", "fig3_K", int),
    ("oracle", "K_oracle", "K_oracle", int),
    ("oracle", "modulus_floor", "modulus_floor", float),
    ("weights", "t", "t", float),
    ("weights", "kappa", "kappa", _opt_float),
    ("opuc", "K_big", "K_big", int),
    ("opuc", "ratio_K", "ratio_K", _ints),
    ("opuc", "sigma_t", "sigma_t", float),
    ("opuc", "tau_t", "tau_t", float),
    ("output", "directory", "output_dir", str.strip),
]


@dataclass(frozen=True)
class ExperimentConfig:
    degree: int = 4
    map_cos: tuple = (0.0, 0.0, 0.08)
    map_sin: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, -0.4)
    density_kind: str = "physical"
    density_cos: tuple = ()
    density_sin: tuple = ()
    physical_order: int = 128
    K_list: tuple = (8, 12, 16, 20, 24, 28, 32, 36, 40)
    N_list: tuple = (1000, 10000, 100000, 1000000)
    seeds: int = 8
    seed: int = 0
    sampling: str = "trajectory"
    tracked: tuple = (1, 2, 3, 4)
    mode_rank: int = 1
    fig3_K: int = 8
    K_oracle: int = 256
    modulus_floor: float = 1e-3
    t: float = 0.2
    kappa: float | None = None
    K_big: int = 64
    ratio_K: tuple = (4, 8, 12, 16)
    sigma_t: float = 0.4
    tau_t: float = 0.2
    output_dir: str = "edmdlab-out"
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def build_map(self):
        try:
            return ExpandingMap(self.degree, cos=self.map_cos, sin=self.map_sin)
        except NotExpandingError as exc:
            raise ConfigError(f"[map]: {exc}") from exc

    def build_density(self, fmap=None):
        """Density named by the config; the physical one is computed once and cached."""
        kind = self.density_kind
        if kind == "uniform":
            return DensitySpec.uniform()
        if kind == "explicit":
            try:
                return DensitySpec.from_trig(cos=self.density_cos, sin=self.density_sin)
            except DensityError as exc:
                raise ConfigError(f"[density]: {exc}") from exc
        if "physical" not in self._cache:
            from .circle_map import invariant_density

            self._cache["physical"] = invariant_density(fmap or self.build_map(), self.physical_order)
        return self._cache["physical"]

    def with_overrides(self, **kw):
        return replace(self, _cache={}, **kw)

    def config_hash(self):
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


def _line_of(text, section, key):
    cur = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            cur = m.group(1).strip()
        elif cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s, flags=re.IGNORECASE):
            return i
    return None


def _validate(cfg):
    if cfg.density_kind not in ("physical", "uniform", "explicit"):
        raise ConfigError(f"[density] kind: unknown density kind {cfg.density_kind!r}")
    if cfg.sampling not in ("trajectory", "iid"):
        raise ConfigError(f"[experiment] sampling: unknown sampling {cfg.sampling!r}")
    for name in ("K_list", "N_list", "ratio_K"):
        v = getattr(cfg, name)
        if not v or any(b <= a for a, b in zip(v, v[1:])) or min(v) < 1:
            raise ConfigError(f"{name}: must be a non-empty ascending list of positive integers")
    if cfg.seeds < 1:
        raise ConfigError("[experiment] seeds: must be >= 1")
    if cfg.K_oracle < 64:
        raise ConfigError("[oracle] K_oracle: must be >= 64")
    if cfg.modulus_floor < 1e-4:
        raise ConfigError("[oracle] modulus_floor: must be >= 1e-4")
    if cfg.t <= 0:
        raise ConfigError("[weights] t: must be positive")
    cfg.build_map()


def parse_config(text):
    """Parse configuration text into an :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        With the section, key and line number of the offending entry.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    known = {(s, k.lower()) for s, k, _, _ in _SCHEMA}
    for sec in cp.sections():
        for key in cp[sec]:
            if (sec, key.lower()) not in known:
                line = _line_of(text, sec, key)
                raise ConfigError(f"[{sec}] {key} (line {line}): unknown field")
    kw = {}
    for sec, key, attr, parse in _SCHEMA:
        if not cp.has_section(sec):
            continue
        raw = next((cp[sec][k] for k in cp[sec] if k.lower() == key.lower()), None)
        if raw is None:
            continue
        try:
            kw[attr] = parse(raw)
        except ValueError as exc:
            line = _line_of(text, sec, key)
            raise ConfigError(f"[{sec}] {key} (line {line}): cannot parse {raw!r}: {exc}") from exc
    cfg = ExperimentConfig(**kw)
    _validate(cfg)
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    """Serialize every field; ``parse_config(dump_config(c)) == c``."""
    out = []
    cur = None
    for sec, key, attr, _ in _SCHEMA:
        if sec != cur:
            if cur is not None:
                out.append("")
            out.append(f"[{sec}]")
            cur = sec
        out.append(f"{key} = {_fmt(getattr(cfg, attr))}")
    return "\n".join(out) + "\n"

