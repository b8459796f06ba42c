"""INI run configuration with SI-suffixed numbers.

Sections::

    [design]   DesignPoint fields (m_rows, v_gate_on, t_window, swing, ...)
    [device]   MOSFET/RRAM parameters and topology
    [trials]   seed, n_trials, sampler
    [sweep]    axis = v1, v2, ...   plus optional  zip = a b | c d
    [contour]  v_gate, l_gate, v_node_*, weight_*, delta_v
    [perf]     base = calibrated | zero, plus PerfModel overrides
    [estimate] precision_targets, t_clock
    [output]   trace, plot_metrics

Every key is validated before anything runs; unknown keys are errors.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from quantiphy import InvalidNumber, Quantity

from .engine import PARAM_KEYS, _DESIGN_KEYS, _MOSFET_KEYS, _RRAM_KEYS
from .errors import ConfigurationError
from .metrics import PerfModel, TrialBatch, ZERO_IO, parse_sampler

_STRING_KEYS = {"topology", "cell_model"}
_DEVICE_KEYS = set(_MOSFET_KEYS) | set(_RRAM_KEYS) | {"topology", "cell_model", "ideal_i_min", "ideal_i_max"}
_CONTOUR_KEYS = {"v_gate", "l_gate", "v_node_min", "v_node_max", "v_node_points", "weight_min", "weight_max",
                 "weight_points", "delta_v", "v_cal"}
_PERF_KEYS = {f.name for f in fields(PerfModel)} | {"base"}
_SECTIONS = {"design", "device", "trials", "sweep", "contour", "perf", "estimate", "output"}


def parse_number(text: str, key: str = "value") -> float:
    """Parse '16ns', '2.5k', '10 fF', '1e-3' and the like into a float."""
    try:
        return float(Quantity(str(text).strip()))
    except (InvalidNumber, ValueError):
        raise ConfigurationError(f"{key}: cannot parse {text!r} as a number") from None


def parse_value(key: str, text: str):
    if key in _STRING_KEYS:
        return str(text).strip().lower()
    if text.strip().lower() in ("none", ""):
        return None
    value = parse_number(text, key)
    if _DESIGN_KEYS.get(key) is int or key in {"v_node_points", "weight_points", "n_trials", "seed",
                                                "reference_bits"}:
        if value != int(value):
            raise ConfigurationError(f"{key} must be an integer, got {text!r}")
        return int(value)
    return value


def parse_list(key: str, text: str) -> list:
    items = [t for t in (s.strip() for s in str(text).split(",")) if t]
    return [parse_value(key, t) for t in items]


@dataclass
class RunConfig:
    params: dict = field(default_factory=dict)
    batch: TrialBatch = field(default_factory=TrialBatch)
    grid: dict = field(default_factory=dict)
    zipped: list = field(default_factory=list)
    contour: dict = field(default_factory=dict)
    perf: PerfModel | None = None
    estimate: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    source_text: str = ""

    def resolved(self) -> dict:
        """JSON-friendly fully resolved configuration (used in manifests)."""
        return {
            "design": dict(self.params),
            "trials": {"seed": self.batch.seed, "n_trials": self.batch.n_trials, "sampler": str(self.batch.sampler)},
            "sweep": {k: list(v) for k, v in self.grid.items()},
            "zip": [list(g) for g in self.zipped],
            "contour": {k: (list(v) if isinstance(v, list) else v) for k, v in self.contour.items()},
            "perf": None if self.perf is None else {f.name: getattr(self.perf, f.name) for f in fields(PerfModel)},
            "estimate": dict(self.estimate),
            "output": dict(self.output),
        }

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _check_keys(section: str, keys, allowed):
    bad = sorted(set(keys) - set(allowed))
    if bad:
        raise ConfigurationError(f"[{section}] unknown key(s): {', '.join(bad)}")


def parse_config(text: str, overrides: list[str] | None = None) -> RunConfig:
    """Parse INI text; ``overrides`` are ``section.key=value`` strings applied on top."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from None
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key.strip(), value.strip())

    _check_keys("top level", cp.sections(), _SECTIONS)
    effective = io.StringIO()
    cp.write(effective)
    # the merged text (overrides applied) is what a manifest replays
    cfg = RunConfig(source_text=effective.getvalue())

    for section, allowed in (("design", PARAM_KEYS - _DEVICE_KEYS), ("device", _DEVICE_KEYS)):
        if cp.has_section(section):
            _check_keys(section, cp[section], allowed)
            for key, raw in cp[section].items():
                cfg.params[key] = parse_value(key, raw)

    if cp.has_section("trials"):
        s = cp["trials"]
        _check_keys("trials", s, {"seed", "n_trials", "sampler"})
        cfg.batch = TrialBatch(seed=parse_value("seed", s.get("seed", "0")),
                               n_trials=parse_value("n_trials", s.get("n_trials", "200")),
                               sampler=parse_sampler(s.get("sampler", "continuous")))

    if cp.has_section("sweep"):
        s = cp["sweep"]
        _check_keys("sweep", s, PARAM_KEYS | {"zip"})
        for key, raw in s.items():
            if key == "zip":
                cfg.zipped = [g.split() for g in raw.split("|") if g.strip()]
            else:
                cfg.grid[key] = parse_list(key, raw)

    if cp.has_section("contour"):
        s = cp["contour"]
        _check_keys("contour", s, _CONTOUR_KEYS)
        for key, raw in s.items():
            cfg.contour[key] = parse_list(key, raw) if key in ("v_gate", "l_gate") else parse_value(key, raw)

    if cp.has_section("perf"):
        s = dict(cp["perf"])
        _check_keys("perf", s, _PERF_KEYS)
        base = s.pop("base", "calibrated").strip().lower()
        if base not in ("calibrated", "zero"):
            raise ConfigurationError("[perf] base must be 'calibrated' or 'zero'")
        start = PerfModel() if base == "calibrated" else ZERO_IO
        values = {f.name: getattr(start, f.name) for f in fields(PerfModel)}
        values.update({k: parse_value(k, v) for k, v in s.items()})
        cfg.perf = PerfModel(**values)

    if cp.has_section("estimate"):
        s = cp["estimate"]
        _check_keys("estimate", s, {"precision_targets", "t_clock"})
        if "precision_targets" in s:
            targets = parse_list("output_bits", s["precision_targets"])
            if any(t < 1 for t in targets):
                raise ConfigurationError("[estimate] precision targets must be >= 1 bit")
            cfg.estimate["precision_targets"] = targets
        if "t_clock" in s:
            cfg.estimate["t_clock"] = parse_number(s["t_clock"], "t_clock")
        if "precision_targets" in cfg.estimate and "t_clock" not in cfg.estimate:
            raise ConfigurationError("[estimate] precision_targets needs t_clock")

    if cp.has_section("output"):
        s = cp["output"]
        _check_keys("output", s, {"trace", "plot_metrics"})
        if "trace" in s:
            cfg.output["trace"] = s.getboolean("trace")
        if "plot_metrics" in s:
            cfg.output["plot_metrics"] = [m.strip() for m in s["plot_metrics"].split(",") if m.strip()]

    return cfg


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    """Load an INI file, a preset name (``preset:table1`` or bare ``table1``) or a manifest."""
    text = read_config_text(path)
    return parse_config(text, overrides)


def read_config_text(path: str | Path) -> str:
    from importlib import resources

    p = Path(path)
    name = str(path)
    if not p.exists():
        preset = name.split(":", 1)[1] if name.startswith("preset:") else name
        res = resources.files("tdvmm.presets").joinpath(f"{preset}.ini")
        if res.is_file():
            return res.read_text()
        raise ConfigurationError(f"config {name!r} not found (neither a file nor a preset)")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {name}: {exc}") from None
    if p.suffix == ".json":
        try:
            return json.loads(text)["config_text"]
        except (ValueError, KeyError):
            raise ConfigurationError(f"{name} is not a run manifest") from None
    return text


def list_presets() -> list[str]:
    from importlib import resources

    return sorted(r.name[:-4] for r in resources.files("tdvmm.presets").iterdir() if r.name.endswith(".ini"))


def dump_text(cfg: RunConfig) -> str:
    buf = io.StringIO()
    json.dump(cfg.resolved(), buf, sort_keys=True, indent=2, default=str)
    return buf.getvalue()
