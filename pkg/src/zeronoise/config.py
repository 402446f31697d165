"""Flat ``[section]`` / ``key = value`` experiment configuration.

Keys may repeat (``piece = ...`` lines of a piecewise map); every value
remembers its line number so errors can point at it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigError, ValidationError
from .kernels import NoiseKernel, get_kernel, load_kernel_csv
from .maps import CircleMap, get_map, map_from_expression, piecewise_from_expressions

SECTIONS = {"experiment", "map", "kernel", "backend", "sweep", "solver", "montecarlo", "abstract",
            "output"}
MODES = {"sweep", "stationary", "montecarlo", "abstract"}


@dataclass
class Entry:
    value: str
    lineno: int


@dataclass
class RawConfig:
    sections: dict[str, dict[str, list[Entry]]] = field(default_factory=dict)
    source: str = "<string>"

    def get(self, section: str, key: str, default=None) -> Optional[Entry]:
        vals = self.sections.get(section, {}).get(key)
        if not vals:
            return None if default is None else Entry(default, 0)
        return vals[-1]

    def all(self, section: str, key: str) -> list[Entry]:
        return self.sections.get(section, {}).get(key, [])

    def has(self, section: str) -> bool:
        return section in self.sections


def parse(text: str, source: str = "<string>") -> RawConfig:
    cfg = RawConfig(source=source)
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"unterminated section header {raw.strip()!r}", lineno)
            current = line[1:-1].strip().lower()
            if current not in SECTIONS:
                raise ConfigError(f"unknown section [{current}]; expected one of {sorted(SECTIONS)}",
                                  lineno)
            cfg.sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        cfg.sections[current].setdefault(key.lower(), []).append(Entry(value, lineno))
    return cfg


def _num(entry: Entry, kind=float, what: str = "value"):
    try:
        return kind(entry.value)
    except ValueError:
        raise ConfigError(f"{what} {entry.value!r} is not a valid {kind.__name__}", entry.lineno) from None


def _floats(entry: Entry) -> list[float]:
    try:
        return [float(t) for t in entry.value.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse number list {entry.value!r}", entry.lineno) from None


@dataclass
class ExperimentConfig:
    name: str
    mode: str
    map_spec: dict
    kernel_spec: dict
    backend: str = "fourier"
    resolution: int = 128
    deltas: list[float] = field(default_factory=list)
    tol: float = 1e-12
    max_iter: int = 100_000
    seed: int = 12345
    out: Optional[str] = None
    compare_kernel: Optional[str] = None
    validate_resolution: bool = True
    mc_samples: int = 10_000_000
    mc_bins: int = 64
    mc_delta: float = 0.05
    mc_reference_resolution: int = 8192
    abstract_deltas: list[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    family: str = "bundled"
    lipschitz_a: float = 3.0

    def build_map(self) -> CircleMap:
        spec = self.map_spec
        try:
            if "pieces" in spec:
                return piecewise_from_expressions(spec["pieces"])
            if "expression" in spec:
                return map_from_expression(spec["expression"])
            return get_map(spec["name"], **spec.get("params", {}))
        except ValidationError as err:
            raise ConfigError(str(err), spec.get("lineno")) from None

    def build_kernel(self, name: Optional[str] = None) -> NoiseKernel:
        spec = self.kernel_spec
        try:
            if name is not None:
                return get_kernel(name)
            if "csv" in spec:
                return load_kernel_csv(spec["csv"])
            return get_kernel(spec["name"])
        except (ValidationError, OSError) as err:
            raise ConfigError(str(err), spec.get("lineno")) from None


def from_raw(raw: RawConfig) -> ExperimentConfig:
    mode_e = raw.get("experiment", "mode", "sweep")
    mode = mode_e.value.lower()
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {sorted(MODES)}", mode_e.lineno)
    name = raw.get("experiment", "name", Path(raw.source).stem).value

    map_spec: dict = {}
    if raw.has("map"):
        pieces = raw.all("map", "piece")
        expr = raw.get("map", "expression")
        mname = raw.get("map", "name")
        if pieces:
            parsed = []
            for p in pieces:
                if "," not in p.value:
                    raise ConfigError("piece must read 'start, expression'", p.lineno)
                start, e = p.value.split(",", 1)
                parsed.append((_num(Entry(start.strip(), p.lineno), float, "breakpoint"), e.strip()))
            map_spec = {"pieces": parsed, "lineno": pieces[0].lineno}
        elif expr is not None:
            map_spec = {"expression": expr.value, "lineno": expr.lineno}
        elif mname is not None:
            params = {}
            for key, entries in raw.sections["map"].items():
                if key != "name":
                    params[key] = _num(entries[-1], float, key)
            map_spec = {"name": mname.value, "params": params, "lineno": mname.lineno}
        else:
            raise ConfigError("[map] needs name, expression or piece entries")
    elif mode != "abstract":
        raise ConfigError("missing [map] section")

    kernel_spec: dict = {"name": "uniform"}
    compare = None
    if raw.has("kernel"):
        k = raw.get("kernel", "name")
        c = raw.get("kernel", "csv")
        if c is not None:
            kernel_spec = {"csv": c.value, "lineno": c.lineno}
        elif k is not None:
            kernel_spec = {"name": k.value, "lineno": k.lineno}
        ce = raw.get("kernel", "compare")
        compare = ce.value if ce is not None else None

    cfg = ExperimentConfig(name=name, mode=mode, map_spec=map_spec, kernel_spec=kernel_spec,
                           compare_kernel=compare)

    b = raw.get("backend", "kind")
    if b is not None:
        if b.value not in ("fourier", "ulam"):
            raise ConfigError(f"backend must be fourier or ulam, got {b.value!r}", b.lineno)
        cfg.backend = b.value
        cfg.resolution = 128 if b.value == "fourier" else 4096
    r = raw.get("backend", "resolution")
    if r is not None:
        cfg.resolution = _num(r, int, "resolution")
    v = raw.get("backend", "validate")
    if v is not None:
        cfg.validate_resolution = v.value.lower() in ("1", "true", "yes", "on")

    d = raw.get("sweep", "deltas")
    g = raw.get("sweep", "geometric")
    if d is not None:
        cfg.deltas = _floats(d)
    elif g is not None:
        parts = _floats(g)
        if len(parts) != 3:
            raise ConfigError("geometric = start, ratio, count", g.lineno)
        start, ratio, count = parts
        cfg.deltas = [start * ratio ** -k for k in range(int(count))]
    elif mode == "sweep":
        cfg.deltas = [0.2 * 2.0 ** -k for k in range(7)]
    a = raw.get("sweep", "lipschitz_a")
    if a is not None:
        cfg.lipschitz_a = _num(a, float, "lipschitz_a")

    t = raw.get("solver", "tol")
    if t is not None:
        cfg.tol = _num(t, float, "tol")
    m = raw.get("solver", "max_iter")
    if m is not None:
        cfg.max_iter = _num(m, int, "max_iter")
    s = raw.get("experiment", "seed")
    if s is not None:
        cfg.seed = _num(s, int, "seed")
    o = raw.get("output", "dir")
    if o is not None:
        cfg.out = o.value

    for key, attr, kind in (("samples", "mc_samples", int), ("bins", "mc_bins", int),
                            ("delta", "mc_delta", float),
                            ("reference_resolution", "mc_reference_resolution", int)):
        e = raw.get("montecarlo", key)
        if e is not None:
            setattr(cfg, attr, _num(e, kind, key))
    e = raw.get("montecarlo", "seed")
    if e is not None:
        cfg.seed = _num(e, int, "seed")
    e = raw.get("abstract", "deltas")
    if e is not None:
        cfg.abstract_deltas = _floats(e)
    e = raw.get("abstract", "family")
    if e is not None:
        cfg.family = e.value
    return cfg


BUNDLED = ("smooth_quadratic", "piecewise_linear", "abstract_markov", "montecarlo_crosscheck")


def load(path_or_name: str) -> ExperimentConfig:
    """Read a config file, or a bundled config by name (e.g. ``smooth_quadratic``)."""
    p = Path(path_or_name)
    if not p.exists() and path_or_name in BUNDLED:
        text = resources.files("zeronoise.configs").joinpath(f"{path_or_name}.cfg").read_text()
        return from_raw(parse(text, f"{path_or_name}.cfg"))
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path_or_name!r}: {err}") from None
    return from_raw(parse(text, str(p)))
