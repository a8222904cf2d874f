"""Experiment configuration files.

Format: one ``key = value`` per line, ``#`` starts a comment, ``[section]``
headers group keys.  Every problem in a file is collected and reported
with its line number; nothing is silently defaulted except the documented
defaults in :data:`SCHEMA`.  Relative paths resolve against the directory
of the config file.  Command-line overrides use ``--section.key=value``.
"""

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .flow import KINDS, SCHEMES, FlowConfig
from .initial_data import PRESETS


class ConfigErrors(ConfigurationError):
    """All problems found in one config file; ``errors`` holds (lineno, message) pairs."""

    def __init__(self, source, errors):
        self.source = source
        self.errors = list(errors)
        lines = [f"{source}:{ln}: {msg}" if ln else f"{source}: {msg}" for ln, msg in self.errors]
        super().__init__("\n".join(lines))


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text):
    return tuple(_int(t) for t in text.replace(",", " ").split())


def _choice(*options):
    def parse(text):
        v = text.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    return parse


def _positive(name):
    def check(v):
        return None if v > 0 else f"{name} must be positive"
    return check


def _nonneg(name):
    def check(v):
        return None if v >= 0 else f"{name} must be nonnegative"
    return check


def _pair_positive(name):
    def check(v):
        if len(v) != 2 or min(v) <= 0:
            return f"{name} must be two positive numbers"
        return None
    return check


# section -> key -> (parser, default, validator); default None means "required when used"
SCHEMA = {
    "testbed": {
        "kind": (_choice("torus", "toric"), None, None),
        "periods": (_floats, (6.283185307179586, 6.283185307179586), _pair_positive("periods")),
        "n": (_int, None, _positive("n")),
        "polytope": (str, None, None),
    },
    "initial": {
        "preset": (_choice(*PRESETS), "zero", None),
        "seed": (_int, 0, _nonneg("seed")),
        "epsilon": (float, 1e-3, _positive("epsilon")),
        "band": (_int, 4, _positive("band")),
        "k": (_ints, (1, 0), None),
        "degree": (_int, 4, lambda v: None if v >= 2 else "degree must be >= 2"),
        "margin": (float, 0.1, lambda v: None if 0 < v < 1 else "margin must lie in (0, 1)"),
    },
    "flow": {
        "scheme": (_choice(*SCHEMES), "etd", None),
        "kind": (_choice(*KINDS), "modified", None),
        "dt_init": (float, 0.1, _positive("dt_init")),
        "dt_min": (float, 1e-12, _positive("dt_min")),
        "dt_max": (float, 0.5, _positive("dt_max")),
        "t_max": (float, 1e3, _positive("t_max")),
        "eps_stop": (float, 1e-12, _positive("eps_stop")),
        "positivity_margin": (float, 1e-6, _positive("positivity_margin")),
        "cadence": (_int, 1, _positive("cadence")),
        "snapshot_stride": (_int, 1, _positive("snapshot_stride")),
        "max_steps": (_int, 200000, _positive("max_steps")),
    },
    "diagnostics": {
        "gap": (_bool, True, None),
        "gap_stride": (_int, 10, _positive("gap_stride")),
        "rate_fit": (_bool, True, None),
        "rate_tolerance": (float, 0.10, _positive("rate_tolerance")),
        "distance_rate_tolerance": (float, 0.15, _positive("distance_rate_tolerance")),
        "sobolev": (_bool, True, None),
        "sobolev_eps": (float, 1e-20, _positive("sobolev_eps")),
        "sobolev_energy_window": (float, 1e6, lambda v: None if v >= 1 else "sobolev_energy_window must be >= 1"),
        "sobolev_tolerance": (float, 0.25, _positive("sobolev_tolerance")),
        "k_max": (_int, 4, _nonneg("k_max")),
        "identity": (_bool, True, None),
        "identity_dt": (float, 1e-6, _positive("identity_dt")),
        "identity_tolerance": (float, 0.01, _positive("identity_tolerance")),
        "futaki": (_bool, True, None),
        "plots": (_bool, True, None),
        "write_snapshots": (_bool, False, None),
    },
    "output": {
        "directory": (str, "out", None),
    },
}
REQUIRED_SECTIONS = ("testbed", "initial", "flow")


@dataclass
class ExperimentConfig:
    """Validated experiment description (see :data:`SCHEMA` for keys and defaults)."""

    testbed: dict
    initial: dict
    flow: FlowConfig
    diagnostics: dict
    output_dir: Path
    source: str = "<string>"
    lines: dict = field(default_factory=dict, repr=False)

    @property
    def kind(self):
        return self.testbed["kind"]

    def as_dict(self):
        flow = {k: getattr(self.flow, k) for k in SCHEMA["flow"]}
        testbed = {k: (str(v) if isinstance(v, Path) else v) for k, v in self.testbed.items()}
        return {"testbed": testbed, "initial": dict(self.initial), "flow": flow,
                "diagnostics": dict(self.diagnostics), "output": {"directory": str(self.output_dir)}}


def _split_lines(text):
    """Yield (lineno, section_or_None, key, value) entries and collect syntax errors."""
    entries, errors = [], []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                errors.append((lineno, f"malformed section header {line!r}"))
                continue
            section = line[1:-1].strip()
            entries.append((lineno, section, None, None))
            continue
        if "=" not in line:
            errors.append((lineno, f"expected 'key = value', got {line!r}"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            errors.append((lineno, "missing key before '='"))
            continue
        entries.append((lineno, section, key, value))
    return entries, errors


def parse_config_text(text, source="<string>", base_dir=None, overrides=()):
    """Parse and validate config text; raises :class:`ConfigErrors` listing every problem."""
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    entries, errors = _split_lines(text)
    raw = {}       # (section, key) -> (lineno, text)
    headers = {}   # section -> lineno
    for lineno, section, key, value in entries:
        if key is None:
            if section not in SCHEMA:
                errors.append((lineno, f"unknown section [{section}]"))
            elif section in headers:
                errors.append((lineno, f"duplicate section [{section}]"))
            headers.setdefault(section, lineno)
            continue
        if section is None:
            errors.append((lineno, f"key {key!r} appears before any section header"))
            continue
        if section not in SCHEMA:
            continue
        if key not in SCHEMA[section]:
            errors.append((lineno, f"unknown key {key!r} in [{section}]"))
            continue
        if (section, key) in raw:
            errors.append((lineno, f"duplicate key {key!r} in [{section}]"))
            continue
        raw[(section, key)] = (lineno, value)
    for ov in overrides:
        try:
            section, key, value = parse_override(ov)
        except ConfigurationError as exc:
            errors.append((0, str(exc)))
            continue
        if section not in SCHEMA or key not in SCHEMA[section]:
            errors.append((0, f"override {ov!r} names an unknown key"))
            continue
        headers.setdefault(section, 0)
        raw[(section, key)] = (0, value)

    for section in REQUIRED_SECTIONS:
        if section not in headers:
            errors.append((0, f"missing section [{section}]"))

    values = {s: {} for s in SCHEMA}
    for section, keys in SCHEMA.items():
        for key, (parse, default, check) in keys.items():
            if (section, key) in raw:
                lineno, text_value = raw[(section, key)]
                try:
                    v = parse(text_value)
                except (ValueError, TypeError) as exc:
                    errors.append((lineno, f"{section}.{key}: {exc}"))
                    continue
                msg = check(v) if check else None
                if msg:
                    errors.append((lineno, msg))
                    continue
                values[section][key] = v
            elif default is not None:
                values[section][key] = default

    lines = {f"{s}.{k}": ln for (s, k), (ln, _) in raw.items()}
    tb = values["testbed"]
    if "testbed" in headers:
        kind = tb.get("kind")
        if kind is None and ("testbed", "kind") not in raw:
            errors.append((headers["testbed"], "testbed.kind is required (torus or toric)"))
        if "n" not in tb and ("testbed", "n") not in raw:
            tb["n"] = 64 if kind == "torus" else 129
        if kind == "toric":
            if "polytope" not in tb:
                errors.append((headers["testbed"], "toric testbed needs a polytope file"))
            else:
                path = Path(tb["polytope"])
                path = path if path.is_absolute() else base_dir / path
                if not path.is_file():
                    errors.append((lines.get("testbed.polytope", 0),
                                   f"polytope file not found: {path}"))
                tb["polytope"] = path
        elif kind == "torus" and "polytope" in tb:
            errors.append((lines["testbed.polytope"], "a torus testbed takes no polytope"))
        if kind == "torus" and "n" in tb and tb["n"] & (tb["n"] - 1):
            errors.append((lines.get("testbed.n", 0), f"torus grid size {tb['n']} is not a power of two"))

    fl = values["flow"]
    if {"dt_min", "dt_init", "dt_max"} <= fl.keys() and not fl["dt_min"] <= fl["dt_init"] <= fl["dt_max"]:
        errors.append((lines.get("flow.dt_init", headers.get("flow", 0)),
                       "need dt_min <= dt_init <= dt_max"))
    k = values["initial"].get("k")
    if k is not None and len(k) != 2:
        errors.append((lines.get("initial.k", 0), "initial.k must be two integers"))

    if errors:
        errors.sort(key=lambda e: e[0])
        raise ConfigErrors(source, errors)

    flow = FlowConfig(**fl)
    out = Path(values["output"]["directory"])
    out = out if out.is_absolute() else base_dir / out
    return ExperimentConfig(tb, values["initial"], flow, values["diagnostics"], out, source, lines)


def parse_override(text):
    """``--section.key=value`` (leading dashes optional) -> (section, key, value)."""
    body = text.lstrip("-")
    if "=" not in body or "." not in body.split("=", 1)[0]:
        raise ConfigurationError(f"override {text!r} is not of the form --section.key=value")
    name, value = body.split("=", 1)
    section, key = name.split(".", 1)
    return section.strip(), key.strip(), value.strip()


def parse_config(path, overrides=()):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path), path.parent, overrides)
