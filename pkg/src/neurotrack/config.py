"""Plain-text ``section.key = value`` configuration covering every default.

Sections map onto the frozen parameter dataclasses::

    plant.*       PlantParams
    loop.*        scalar fields of LoopConfig
    adaptation.*  AdaptationConfig
    hough.*       SnnHoughParams
    gains.*       kp / kd per degree, or ``auto`` for the backend default

Unknown keys are errors; missing keys keep their defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from .control import PdGains
from .loop import LoopConfig
from .plant import PlantParams

NESTED = ("gains", "adaptation", "hough")


class ConfigFileError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    loop: LoopConfig = field(default_factory=LoopConfig)

    def with_loop(self, **kw) -> "RunConfig":
        return replace(self, loop=replace(self.loop, **kw))

    def to_text(self) -> str:
        lines = []
        for name, obj in (("plant", self.plant), ("loop", self.loop),
                          ("adaptation", self.loop.adaptation), ("hough", self.loop.hough)):
            for f in dataclasses.fields(obj):
                if name == "loop" and f.name in NESTED:
                    continue
                lines.append(f"{name}.{f.name} = {_fmt(getattr(obj, f.name))}")
        g = self.loop.gains
        lines.append(f"gains.kp = {'auto' if g is None else _fmt(g.kp)}")
        lines.append(f"gains.kd = {'auto' if g is None else _fmt(g.kd)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(text: str, default):
    if isinstance(default, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config(text: str, base: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    base = base or RunConfig()
    values: dict[str, dict[str, str]] = {"plant": {}, "loop": {}, "adaptation": {}, "hough": {}, "gains": {}}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or section not in values:
            raise ConfigFileError(f"{source}:{n}: expected 'section.key = value', got {raw!r}")
        values[section][name] = val.strip()

    def build(section, obj, skip=()):
        known = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.name not in skip}
        kw = {}
        for name, val in values[section].items():
            if name not in known:
                raise ConfigFileError(f"{source}: unknown key {section}.{name}")
            try:
                kw[name] = _coerce(val, known[name])
            except ValueError as exc:
                raise ConfigFileError(f"{source}: {section}.{name}: {exc}") from None
        return replace(obj, **kw)

    try:
        plant = build("plant", base.plant)
        adaptation = build("adaptation", base.loop.adaptation)
        hough = build("hough", base.loop.hough)
        loop = build("loop", base.loop, skip=NESTED)
        gains = base.loop.gains
        g = values["gains"]
        if set(g) - {"kp", "kd"}:
            raise ConfigFileError(f"{source}: unknown gains key(s) {sorted(set(g) - {'kp', 'kd'})}")
        if g and any(v != "auto" for v in g.values()):
            ref = gains or loop.effective_gains
            gains = PdGains(float(g.get("kp", ref.kp)) if g.get("kp", "auto") != "auto" else ref.kp,
                            float(g.get("kd", ref.kd)) if g.get("kd", "auto") != "auto" else ref.kd)
        elif g:
            gains = None
        loop = replace(loop, adaptation=adaptation, hough=hough, gains=gains)
    except ConfigFileError:
        raise
    except ValueError as exc:
        raise ConfigFileError(f"{source}: {exc}") from None
    return RunConfig(plant, loop)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base, source=str(path))


__all__ = ["RunConfig", "ConfigFileError", "parse_config", "load_config"]
