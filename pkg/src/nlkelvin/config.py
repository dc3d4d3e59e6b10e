"""Flat INI-style run configuration.

Example::

    [domain]
    box = 0 1 0 1

    [kernel]
    delta = 0.1

Every other key has a default; unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .geometry import Domain
from .kernel import ConfigurationError, KernelFamily
from .material import AveragingScheme, Bounds
from .solvers import LINEAR_RTOL, SourcePreset


class ConfigError(ConfigurationError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# section -> key -> default (None marks keys without a default)
SCHEMA = {
    "domain": {"box": None},
    "mesh": {"h": None, "m": "4"},
    "kernel": {"family": KernelFamily.TRUNCATED_TENT.value, "delta": None, "delta_list": None},
    "material": {"kappa_min": "1.0", "kappa_max": "2.0", "gamma": "1.4",
                 "scheme": AveragingScheme.HARMONIC.value},
    "source": {"preset": SourcePreset.CONSTANT.value, "value": "1.0", "center": None, "width": "0.15",
               "amplitude": "1.0", "tiles": "4"},
    "solver": {"method": "cg", "tol": repr(LINEAR_RTOL)},
    "optimizer": {"max_iters": "200", "rel_tol": "1e-7", "seed": "0"},
    "output": {"dir": "out"},
}


@dataclass(frozen=True)
class RunConfig:
    domain: Domain
    delta: float | None
    delta_list: tuple
    h: float | None
    m: float
    family: KernelFamily
    bounds: Bounds
    scheme: AveragingScheme
    source: dict
    method: str
    tol: float
    max_iters: int
    rel_tol: float
    seed: int
    out_dir: str
    raw: dict = field(default_factory=dict, compare=False)

    def mesh_h(self, delta: float | None = None) -> float:
        delta = self.delta if delta is None else delta
        return self.h if self.h is not None else delta / self.m

    def resolved_text(self) -> str:
        """INI text with every key, defaults included (deterministic order)."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                value = self.raw.get(section, {}).get(key)
                if value is not None:
                    lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def _floats(key, text, count=None):
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(key, f"expected numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(key, f"expected {count} numbers, got {len(vals)}")
    return vals


def _float(key, text, positive=False):
    (v,) = _floats(key, text, 1)
    if positive and not v > 0:
        raise ConfigError(key, f"must be positive, got {v}")
    return v


def _int(key, text, minimum=None):
    try:
        v = int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    return v


def _choice(key, text, enum_cls):
    try:
        return enum_cls(text.strip().lower())
    except ValueError:
        options = ", ".join(e.value for e in enum_cls)
        raise ConfigError(key, f"unknown value {text!r} (expected one of {options})") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration, filling defaults."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None

    raw = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            raw.setdefault(section, {})[key] = value.strip()
    for section, keys in SCHEMA.items():
        for key, default in keys.items():
            if default is not None:
                raw.setdefault(section, {}).setdefault(key, default)

    def get(section, key):
        return raw.get(section, {}).get(key)

    box_text = get("domain", "box")
    if box_text is None:
        raise ConfigError("domain.box", "missing required key")
    box = _floats("domain.box", box_text)
    if len(box) not in (2, 4, 6):
        raise ConfigError("domain.box", "expected lo hi per axis (1 to 3 axes)")
    try:
        domain = Domain(box[0::2], box[1::2])
    except ConfigurationError as exc:
        raise ConfigError("domain.box", str(exc)) from None

    delta = _float("kernel.delta", get("kernel", "delta"), positive=True) if get("kernel", "delta") else None
    delta_list = _floats("kernel.delta_list", get("kernel", "delta_list")) if get("kernel", "delta_list") else ()
    if delta is None and not delta_list:
        raise ConfigError("kernel.delta", "missing required key (or kernel.delta_list)")
    if any(d <= 0 for d in delta_list):
        raise ConfigError("kernel.delta_list", "horizons must be positive")
    if any(b >= a for a, b in zip(delta_list, delta_list[1:])):
        raise ConfigError("kernel.delta_list", "must be strictly decreasing")

    h = _float("mesh.h", get("mesh", "h"), positive=True) if get("mesh", "h") else None
    m = _float("mesh.m", get("mesh", "m"), positive=True)
    if m < 2:
        raise ConfigError("mesh.m", "delta/h ratio must be at least 2")
    if delta_list and m < 4:
        raise ConfigError("mesh.m", "sweeps need delta/h >= 4")
    if delta is not None:
        hh = h if h is not None else delta / m
        if delta / hh < 2 * (1 - 1e-9):
            raise ConfigError("mesh.h", f"delta/h = {delta / hh:.3g} < 2 (kernel under-resolved)")
        for lo, hi in zip(domain.lo, domain.hi):
            k = round((hi - lo) / hh)
            if k < 1 or abs(k * hh - (hi - lo)) > 1e-9 * (hi - lo):
                raise ConfigError("mesh.h", f"cell width {hh} does not divide the domain extent {hi - lo}")

    family = _choice("kernel.family", get("kernel", "family"), KernelFamily)
    kmin = _float("material.kappa_min", get("material", "kappa_min"), positive=True)
    kmax = _float("material.kappa_max", get("material", "kappa_max"), positive=True)
    gamma = _float("material.gamma", get("material", "gamma"), positive=True)
    if not kmin < kmax:
        raise ConfigError("material.kappa_max", "must exceed kappa_min")
    if not kmin < gamma < kmax:
        raise ConfigError("material.gamma", "must lie strictly between kappa_min and kappa_max")
    bounds = Bounds(kmin, kmax, gamma)
    scheme = _choice("material.scheme", get("material", "scheme"), AveragingScheme)

    preset = _choice("source.preset", get("source", "preset"), SourcePreset)
    if preset is SourcePreset.CUSTOM:
        raise ConfigError("source.preset", "custom sources are only available from Python")
    source = {
        "preset": preset.value,
        "value": _float("source.value", get("source", "value")),
        "width": _float("source.width", get("source", "width"), positive=True),
        "amplitude": _float("source.amplitude", get("source", "amplitude")),
        "tiles": _int("source.tiles", get("source", "tiles"), minimum=1),
    }
    if get("source", "center"):
        source["center"] = _floats("source.center", get("source", "center"), domain.dim)

    method = get("solver", "method").strip().lower()
    if method not in ("cg", "direct"):
        raise ConfigError("solver.method", "expected 'cg' or 'direct'")
    tol = _float("solver.tol", get("solver", "tol"), positive=True)
    if tol > 1e-10:
        raise ConfigError("solver.tol", "must not exceed 1e-10")

    return RunConfig(
        domain=domain, delta=delta, delta_list=delta_list, h=h, m=m, family=family, bounds=bounds,
        scheme=scheme, source=source, method=method, tol=tol,
        max_iters=_int("optimizer.max_iters", get("optimizer", "max_iters"), minimum=1),
        rel_tol=_float("optimizer.rel_tol", get("optimizer", "rel_tol"), positive=True),
        seed=_int("optimizer.seed", get("optimizer", "seed"), minimum=0),
        out_dir=get("output", "dir"), raw=raw)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
