"""Run configuration: INI sections ``metric``, ``measure``, ``walk`` and ``study``.

Every value keeps the line it came from so validation errors point at the
offending line. Overrides use ``section.key=value`` strings.
"""
import configparser
import io
import re

import numpy as np

from .atlas import SphereAtlas
from .errors import ConfigError
from .measures import family_by_name
from . import generator as gen
from . import zoo

KINDS = ("discrete", "subordinated", "interpolated")
FUNCTIONS = ("bump", "linear", "quadratic", "exp", "coordinate", "poly")


def _floats(text):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return [float(p) for p in parts]


def _points(text):
    rows = [r for r in text.split(";") if r.strip()]
    return [_floats(r) for r in rows]


def _ints(text):
    return [int(p) for p in re.split(r"[,\s]+", text.strip()) if p]


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _probe_list(text):
    # omitted, "default" or "none" selects the per-metric defaults; blank means no probes
    return None if text.strip().lower() in ("default", "none") else _points(text)


def _opt(parse):
    def inner(text):
        return None if text.strip().lower() in ("", "none") else parse(text)

    return inner


# section -> key -> (parser, default)
SCHEMA = {
    "metric": {
        "name": (str, "euclidean"),
        "m": (_opt(int), None),
        "scale": (float, 1.0),
        "r": (float, 0.5),
        "wind": (_floats, [0.3, 0.0]),
    },
    "measure": {
        "name": (str, "lebesgue-disc"),
        "mean": (str, "auto"),
        "vectors": (_opt(_points), None),
        "weights": (_opt(_floats), None),
    },
    "walk": {
        "kind": (str, "discrete"),
        "n": (float, 100.0),
        "start": (_opt(_floats), None),
        "chart": (int, 0),
        "steps": (_opt(int), None),
        "horizon": (_opt(float), None),
        "times": (_opt(_floats), None),
        "h_ode": (float, 0.05),
        "seed": (int, 0),
        "paths": (int, 1),
        "alpha": (float, 1.0),
        "threads": (int, 1),
    },
    "study": {
        "function": (str, "bump"),
        "center": (_opt(_floats), None),
        "width": (float, 0.7),
        "coeffs": (_opt(_floats), None),
        "index": (int, 0),
        "probes": (_probe_list, None),
        "probe_charts": (_opt(_ints), None),
        "ns": (_floats, [100.0, 400.0, 1600.0, 6400.0]),
        "h_ode": (float, 0.01),
        "deltas": (_floats, [0.2]),
        "times": (_floats, [0.0, 0.005, 0.01, 0.02]),
        "t": (float, 0.005),
        "drift": (_bool, True),
    },
}


class RunConfig:
    """Typed configuration values with the source line of each."""

    def __init__(self, values, lines, path=None):
        self.values = values
        self.lines = lines
        self.path = path

    def __getitem__(self, key):
        section, name = key.split(".")
        return self.values[section][name]

    def line(self, key):
        return self.lines.get(key)

    def error(self, key, message):
        return ConfigError(f"{key}: {message}", self.line(key), self.path)

    def to_ini(self):
        """Fully resolved configuration as INI text."""
        out = io.StringIO()
        for section, keys in SCHEMA.items():
            out.write(f"[{section}]\n")
            for key in keys:
                out.write(f"{key} = {_format(self.values[section][key])}\n")
        return out.getvalue()


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, list):
        if value and isinstance(value[0], list):
            return "; ".join(", ".join(repr(v) for v in row) for row in value)
        return ", ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_map(text):
    lines = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(raw)
        if m:
            section = m.group(1).strip().lower()
            lines.setdefault(section, n)
            continue
        m = _KEY.match(raw)
        if m and section is not None and not raw[:1].isspace():
            lines[f"{section}.{m.group(1).strip().lower()}"] = n
    return lines


def parse(text, path=None, overrides=()):
    """Parse INI text plus ``section.key=value`` overrides into a :class:`RunConfig`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), path) from None
    lines = _line_map(text)
    raw = {s: {} for s in SCHEMA}
    where = {}
    for section in parser.sections():
        name = section.lower()
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SCHEMA)}", lines.get(name), path)
        for key, value in parser.items(section):
            raw[name][key] = value
            where[f"{name}.{key}"] = lines.get(f"{name}.{key}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not section.key=value", None, "<override>")
        key, value = item.split("=", 1)
        section, name = key.strip().lower().split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section in override {item!r}", None, "<override>")
        raw[section][name] = value
        where[f"{section}.{name}"] = None
    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key in raw[section]:
            if key not in keys:
                raise ConfigError(f"unknown key '{key}' in [{section}]", where.get(f"{section}.{key}"), path)
        for key, (conv, default) in keys.items():
            if key in raw[section]:
                try:
                    values[section][key] = conv(raw[section][key])
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: {exc}", where.get(f"{section}.{key}"), path) from None
            else:
                values[section][key] = list(default) if isinstance(default, list) else default
    cfg = RunConfig(values, where, path)
    validate(cfg)
    return cfg


def load(path, overrides=()):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse(text, path, overrides)


def validate(cfg):
    name = cfg["metric.name"]
    if name not in zoo.ZOO:
        raise cfg.error("metric.name", f"unknown metric '{name}'; known: {', '.join(sorted(zoo.ZOO))}")
    if cfg["walk.kind"] not in KINDS:
        raise cfg.error("walk.kind", f"expected one of {', '.join(KINDS)}")
    if cfg["walk.n"] < 1:
        raise cfg.error("walk.n", "N must be at least 1")
    for key in ("walk.paths", "walk.threads"):
        if cfg[key] < 1:
            raise cfg.error(key, "must be at least 1")
    if cfg["walk.steps"] is not None and cfg["walk.steps"] < 0:
        raise cfg.error("walk.steps", "must be nonnegative")
    if cfg["walk.horizon"] is not None and cfg["walk.horizon"] < 0:
        raise cfg.error("walk.horizon", "must be nonnegative")
    if cfg["walk.h_ode"] <= 0 or cfg["study.h_ode"] <= 0:
        raise cfg.error("walk.h_ode" if cfg["walk.h_ode"] <= 0 else "study.h_ode", "must be positive")
    if cfg["study.function"] not in FUNCTIONS:
        raise cfg.error("study.function", f"expected one of {', '.join(FUNCTIONS)}")
    if abs(cfg["metric.r"]) >= 1 and name == "katok":
        raise cfg.error("metric.r", "Katok parameter must satisfy |r| < 1")
    if cfg["study.t"] <= 0:
        raise cfg.error("study.t", "must be positive")
    if any(d <= 0 for d in cfg["study.deltas"]):
        raise cfg.error("study.deltas", "radii must be positive")
    if any(t < 0 for t in cfg["study.times"]):
        raise cfg.error("study.times", "times must be nonnegative")


def build_metric(cfg):
    name = cfg["metric.name"]
    try:
        if name == "euclidean":
            return zoo.by_name(name, m=cfg["metric.m"] or 2, scale=cfg["metric.scale"])
        if name == "katok":
            return zoo.by_name(name, r=cfg["metric.r"])
        if name == "zermelo":
            return zoo.by_name(name, wind=cfg["metric.wind"], m=cfg["metric.m"])
        return zoo.by_name(name)
    except ValueError as exc:
        raise cfg.error("metric.name", str(exc)) from None


def build_family(cfg):
    name = cfg["measure.name"]
    try:
        if name in ("lebesgue-disc", "indicatrix-fundamental"):
            return family_by_name(name, mean_policy=cfg["measure.mean"])
        if name == "discrete":
            vecs, wts = cfg["measure.vectors"], cfg["measure.weights"]
            if vecs is None or wts is None:
                raise ValueError("discrete measure needs vectors and weights")
            return family_by_name(name, vectors=vecs, weights=wts)
        if name == "point-mass":
            vecs = cfg["measure.vectors"]
            if vecs is None:
                raise ValueError("point-mass measure needs vectors")
            return family_by_name(name, vector=vecs[0])
        return family_by_name(name)
    except (KeyError, ValueError) as exc:
        raise cfg.error("measure.name", str(exc).strip("'\"")) from None


def default_start(metric):
    return np.zeros(metric.dim)


def default_probes(metric):
    """Fixed chart-interior probe points, away from the chart-switch zone on the sphere."""
    if isinstance(metric.atlas, SphereAtlas):
        return [(0, np.array([0.3, 0.2])), (0, np.array([-1.0, 0.6])), (0, np.array([2.0, -0.4]))]
    m = metric.dim
    return [(0, np.zeros(m)), (0, np.full(m, 0.5)), (0, -0.3 * np.eye(m)[0])]


def probes(cfg, metric):
    pts = cfg["study.probes"]
    if pts is None:
        return default_probes(metric)
    charts = cfg["study.probe_charts"] or [0] * len(pts)
    if len(charts) != len(pts):
        raise cfg.error("study.probe_charts", "needs one chart per probe")
    for p in pts:
        if len(p) != metric.dim:
            raise cfg.error("study.probes", f"probe {p} does not have {metric.dim} coordinates")
    return [(int(c), np.array(p, dtype=float)) for c, p in zip(charts, pts)]


def walk_config(cfg, metric=None, family=None):
    from .walk import WalkConfig

    metric = metric or build_metric(cfg)
    family = family or build_family(cfg)
    start = cfg["walk.start"]
    start = default_start(metric) if start is None else np.array(start, dtype=float)
    if start.size != metric.dim:
        raise cfg.error("walk.start", f"start point needs {metric.dim} coordinates")
    return WalkConfig(
        metric=metric,
        family=family,
        start=start,
        N=cfg["walk.n"],
        chart=cfg["walk.chart"],
        n_steps=cfg["walk.steps"],
        horizon=cfg["walk.horizon"],
        h_ode=cfg["walk.h_ode"],
        seed=cfg["walk.seed"],
        n_paths=cfg["walk.paths"],
        alpha=cfg["walk.alpha"],
        threads=cfg["walk.threads"],
    )


def build_test_function(cfg, metric):
    """Test function named in ``study.function``; ambient on the sphere, coordinate-wise otherwise."""
    atlas = metric.atlas
    amb = 3 if isinstance(atlas, SphereAtlas) else metric.dim
    kind = cfg["study.function"]
    center = cfg["study.center"]
    coeffs = cfg["study.coeffs"]
    if kind == "bump":
        if center is None:
            center = [0.6, 0.5, 0.62] if amb == 3 else [0.2] * amb
        if len(center) != amb:
            raise cfg.error("study.center", f"needs {amb} components")
        return gen.gaussian_ambient(atlas, center, cfg["study.width"], "bump")
    if kind in ("linear", "exp"):
        a = coeffs if coeffs is not None else [0.0] * (amb - 1) + [1.0]
        if len(a) != amb:
            raise cfg.error("study.coeffs", f"needs {amb} components")
        return gen.linear_ambient(atlas, a) if kind == "linear" else gen.exp_ambient(atlas, a)
    if kind == "quadratic":
        return gen.quadratic_ambient(atlas, np.eye(amb))
    if kind == "coordinate":
        if not 0 <= cfg["study.index"] < metric.dim:
            raise cfg.error("study.index", "coordinate index out of range")
        return gen.coordinate_function(cfg["study.index"], metric.dim)
    if metric.dim != 1:
        raise cfg.error("study.function", "poly is only available on the line")
    return gen.polynomial_1d(coeffs or [0.0, 0.0, 1.0])
