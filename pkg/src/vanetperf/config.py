"""Experiment configuration: a TOML file with flat sections plus ``section.key=value`` overrides."""
from __future__ import annotations

import copy
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import tomli

from .interference import NetworkParams, Strategy, INTERFERER_MODELS
from .mac import DEFAULT_POSITIONS, Protocol
from .simulator import SimConfig
from .traffic import ArrivalSpec, Junction, VelocityProfile

SLOWDOWN_POINTS = [[0.0, 0.8333], [1.0, 0.8333], [1.5, 0.2778], [2.5, 0.2778], [3.0, 0.8333], [5.0, 0.8333]]

DEFAULTS: Dict[str, Any] = {
    "output_dir": "out",
    "road": {"L_km": 5.0, "grid_dx_km": 0.001},
    "velocity": {"points": SLOWDOWN_POINTS},
    "arrivals": {"alpha": 15.0, "sweep": [], "junctions": [], "t_end": None, "dt": None},
    "network": {"R_km": 0.1, "beta": 10.0, "gamma": 4.0, "tau": 0.25, "cs_range_km": 0.178,
                "interferer_model": "independent"},
    "mac": {"protocol": "ALOHA", "strategy": "MPR", "p": "optimize", "n_positions": DEFAULT_POSITIONS},
    "sim": {"runs": 500, "seed": 0, "warmup_minislots": 200, "measure_minislots": 2000,
            "rel_gate": 0.05, "se_gate": 3.0},
}

_NUM = (int, float)
_SCHEMA = {
    "road": {"L_km": _NUM, "grid_dx_km": _NUM},
    "velocity": {"points": list},
    "arrivals": {"alpha": (int, float, list), "sweep": list, "junctions": list, "t_end": _NUM, "dt": _NUM},
    "network": {"R_km": _NUM, "beta": _NUM, "gamma": _NUM, "tau": _NUM, "cs_range_km": _NUM,
                "interferer_model": str},
    "mac": {"protocol": str, "strategy": str, "p": (int, float, str), "n_positions": int},
    "sim": {"runs": int, "seed": int, "warmup_minislots": int, "measure_minislots": int,
            "rel_gate": _NUM, "se_gate": _NUM},
}
_TOP = {"output_dir": str}
_JUNCTION_KEYS = {"x_km", "join_rate", "leave_fraction"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "config"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class ExperimentConfig:
    L: float
    grid_dx: float
    velocity: VelocityProfile
    arrivals: ArrivalSpec
    sweep: Tuple[float, ...]
    params: NetworkParams
    interferer_model: str
    protocol: Protocol
    strategy: Strategy
    p: Union[float, str]
    n_positions: int
    sim: SimConfig
    rel_gate: float
    se_gate: float
    output_dir: Path
    t_end: Optional[float] = None
    dt: Optional[float] = None

    @property
    def optimize_p(self) -> bool:
        return self.p == "optimize"

    @property
    def alphas(self) -> Tuple[float, ...]:
        if self.sweep:
            return self.sweep
        if not self.arrivals.is_constant:
            raise ValueError("a time-varying arrival rate has no single alpha; give arrivals.sweep")
        return (float(self.arrivals.alpha),)

    def with_alpha(self, alpha: float) -> "ExperimentConfig":
        a = ArrivalSpec(float(alpha), self.arrivals.junctions)
        return replace(self, arrivals=a)


def _key_lines(text: str) -> Dict[Tuple[str, str], int]:
    """Map (section, key) to the 1-based line it is assigned on ('' is the top level)."""
    lines = {}
    section = ""
    head = re.compile(r"^\s*\[\s*([A-Za-z0-9_.-]+)\s*\]")
    assign = re.compile(r"^\s*([A-Za-z0-9_-]+)\s*=")
    for k, line in enumerate(text.splitlines(), start=1):
        m = head.match(line)
        if m:
            section = m.group(1)
            lines.setdefault((section, ""), k)
            continue
        m = assign.match(line)
        if m:
            lines.setdefault((section, m.group(1)), k)
    return lines


def _parse_value(raw: str):
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value", source="--set")
        path, value = item.split("=", 1)
        parts = path.strip().split(".")
        if len(parts) == 1:
            out[parts[0]] = _parse_value(value.strip())
        elif len(parts) == 2:
            sec = out.setdefault(parts[0], {})
            if not isinstance(sec, dict):
                raise ConfigError(f"{parts[0]} is not a section", source="--set")
            sec[parts[1]] = _parse_value(value.strip())
        else:
            raise ConfigError(f"override key {path!r} nests too deeply", source="--set")
    return out


def _merged(raw: Dict[str, Any], lines, source) -> Dict[str, Any]:
    cfg = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if key in _TOP:
            if not isinstance(val, _TOP[key]):
                raise ConfigError(f"{key} must be {_TOP[key].__name__}", lines.get(("", key)), source)
            cfg[key] = val
            continue
        if key not in _SCHEMA:
            raise ConfigError(f"unknown section or key {key!r}", lines.get((key, ""), lines.get(("", key))), source)
        if not isinstance(val, dict):
            raise ConfigError(f"{key} must be a section", lines.get(("", key)), source)
        for sub, sv in val.items():
            line = lines.get((key, sub))
            if sub not in _SCHEMA[key]:
                raise ConfigError(f"unknown key {key}.{sub}", line, source)
            want = _SCHEMA[key][sub]
            if isinstance(sv, bool) or not isinstance(sv, want):
                raise ConfigError(f"{key}.{sub} has the wrong type ({type(sv).__name__})", line, source)
            cfg[key][sub] = sv
    return cfg


def build_config(raw: Dict[str, Any], text: str = "", source: str = "config") -> ExperimentConfig:
    lines = _key_lines(text)
    cfg = _merged(raw, lines, source)

    def fail(section, key, msg):
        raise ConfigError(msg, lines.get((section, key), lines.get((section, ""))), source)

    road, vel, arr, net, mac, sim = (cfg[k] for k in ("road", "velocity", "arrivals", "network", "mac", "sim"))
    L = float(road["L_km"])
    if L <= 0:
        fail("road", "L_km", f"road length must be positive, got {L}")
    if not 0 < road["grid_dx_km"] <= L:
        fail("road", "grid_dx_km", f"grid spacing must lie in (0, L], got {road['grid_dx_km']}")

    try:
        pts = [(float(x), float(v)) for x, v in vel["points"]]
        velocity = VelocityProfile(tuple(x for x, _ in pts), tuple(v for _, v in pts))
    except (TypeError, ValueError) as exc:
        fail("velocity", "points", f"velocity.points: {exc}")
    if abs(velocity.length - L) > 1e-9:
        fail("velocity", "points", f"velocity profile ends at {velocity.length} km but the road is {L} km long")
    if velocity.v_min <= 0:
        fail("velocity", "points", f"speeds must be positive everywhere (minimum {velocity.v_min})")

    junctions = []
    for j in arr["junctions"]:
        if not isinstance(j, dict) or set(j) - _JUNCTION_KEYS or "x_km" not in j:
            fail("arrivals", "junctions", f"each junction needs x_km and optional join_rate, leave_fraction; got {j!r}")
        try:
            junctions.append(Junction(float(j["x_km"]), float(j.get("join_rate", 0.0)),
                                      float(j.get("leave_fraction", 0.0))))
        except ValueError as exc:
            fail("arrivals", "junctions", str(exc))
    alpha = arr["alpha"]
    if isinstance(alpha, list):
        try:
            alpha = [(float(t), float(r)) for t, r in alpha]
        except (TypeError, ValueError):
            fail("arrivals", "alpha", "a time-varying alpha must be a list of [t, rate] pairs")
    try:
        arrivals = ArrivalSpec(alpha, tuple(junctions))
    except ValueError as exc:
        fail("arrivals", "alpha", str(exc))
    for j in junctions:
        if not 0 < j.x < L:
            fail("arrivals", "junctions", f"junction position {j.x} outside (0, {L})")
    sweep = arr["sweep"]
    if any(isinstance(a, bool) or not isinstance(a, _NUM) or a < 0 for a in sweep):
        fail("arrivals", "sweep", "sweep must be a list of non-negative arrival rates")
    t_end, dt = arr["t_end"], arr["dt"]
    if (t_end is None) != (dt is None):
        fail("arrivals", "t_end", "transient runs need both t_end and dt")
    if t_end is not None and (t_end <= 0 or dt <= 0):
        fail("arrivals", "t_end", "t_end and dt must be positive")
    if t_end is None and not arrivals.is_constant:
        fail("arrivals", "alpha", "a time-varying alpha needs a transient run (t_end and dt)")

    try:
        params = NetworkParams(R=float(net["R_km"]), beta=float(net["beta"]), gamma=float(net["gamma"]),
                               cs_range=float(net["cs_range_km"]), tau=float(net["tau"]))
    except ValueError as exc:
        fail("network", "", str(exc))
    if net["interferer_model"] not in INTERFERER_MODELS:
        fail("network", "interferer_model", f"interferer_model must be one of {INTERFERER_MODELS}")

    try:
        protocol = Protocol.parse(mac["protocol"])
    except ValueError as exc:
        fail("mac", "protocol", str(exc))
    try:
        strategy = Strategy.parse(mac["strategy"])
    except ValueError as exc:
        fail("mac", "strategy", str(exc))
    p = mac["p"]
    if isinstance(p, str):
        if p != "optimize":
            fail("mac", "p", f"mac.p must be a probability or \"optimize\", got {p!r}")
    elif not 0 <= p <= 1:
        fail("mac", "p", f"mac.p must lie in [0, 1], got {p}")
    else:
        p = float(p)
    if mac["n_positions"] < 3:
        fail("mac", "n_positions", "need at least 3 evaluation positions")

    try:
        simcfg = SimConfig(runs=sim["runs"], seed=sim["seed"], warmup_minislots=sim["warmup_minislots"],
                           measure_minislots=sim["measure_minislots"])
    except ValueError as exc:
        fail("sim", "", str(exc))
    if sim["rel_gate"] < 0 or sim["se_gate"] < 0:
        fail("sim", "rel_gate", "gates must be non-negative")

    return ExperimentConfig(
        L=L, grid_dx=float(road["grid_dx_km"]), velocity=velocity, arrivals=arrivals,
        sweep=tuple(float(a) for a in sweep), params=params, interferer_model=net["interferer_model"],
        protocol=protocol, strategy=strategy, p=p, n_positions=int(mac["n_positions"]), sim=simcfg,
        rel_gate=float(sim["rel_gate"]), se_gate=float(sim["se_gate"]), output_dir=Path(cfg["output_dir"]),
        t_end=None if t_end is None else float(t_end), dt=None if dt is None else float(dt),
    )


def load_config(path=None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read ``path`` (or start from defaults), apply overrides, validate."""
    text, raw, source = "", {}, "config"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", source=source) from None
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None, source) from None
    raw = apply_overrides(raw, overrides)
    return build_config(raw, text, source)
