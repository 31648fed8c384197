"""Scenario configuration: flat key = value files with '#' comments.

Every runnable scenario is described by a small text file; unknown keys,
missing required keys, and inconsistent numerics are all reported together
rather than one at a time.  Shipped presets live in ``dlqw/presets`` and can
be addressed by name (e.g. ``preset:fig1-left``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from importlib import resources

from .walk import ConfigurationError

VALID_SCENARIOS = (
    "walk",
    "channel",
    "trajectories",
    "lindblad",
    "kernel-lindblad",
    "telegraph",
    "fourier",
    "dirac-free",
    "compare",
    "sweep",
)

PDE_SCENARIOS = ("lindblad", "kernel-lindblad", "telegraph", "fourier", "dirac-free", "compare")


class ConfigError(ConfigurationError):
    """Invalid configuration; carries the full list of problems found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ScenarioConfig:
    scenario: str = ""
    label: str = ""
    output_dir: str = ""
    formats: str = "csv"
    seed: int = 0

    # physics
    m: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    p0: float = 1.0
    sigma: float = 0.5
    theta: float = 0.0
    pi1_rate: float = 0.0
    pi2_rate: float = 0.0
    noise_param: str = "theta"
    noise_kind: str = "gaussian"
    noise_delta: float = 0.0
    kernel_channel: str = ""
    kernel_rate: float = 0.0
    kernel_ell: float = 0.0

    # numerics
    n: int = 0
    dx: float = 0.0
    dt: float = 0.0
    eps: float = 0.0
    eps_list: tuple[float, ...] = ()
    t_final: float = 0.0
    n_steps: int = 0
    n_traj: int = 0
    alpha: float = 0.5
    n_snapshots: int = 21
    half_width: float = 0.0
    init: str = "packet"
    init_width: float = 0.0
    fast: str = "full"
    window: int = 7
    snapshot_spacing: str = "uniform"

    # declared targets and tolerances (gates are active when a target is set)
    tol: float = 0.0
    tol_trace: float = 1e-6
    tol_edge: float = 1e-8
    vg_target: float = 0.0
    tol_vg: float = 0.01
    plateau_target: float = 0.0
    tol_plateau: float = 0.1
    eta_target: float = 0.0
    tol_eta: float = 0.05
    slope_target: float = 0.0
    tol_slope: float = 0.1

    def metadata(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v != f.default:
                out[f.name] = v
        out["scenario"] = self.scenario
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}

_REQUIRED = {
    "walk": ("theta",),
    "channel": ("eps", "t_final"),
    "trajectories": ("eps", "t_final", "n_traj", "noise_delta"),
    "lindblad": ("dx", "t_final", "half_width"),
    "kernel-lindblad": ("dx", "t_final", "half_width", "kernel_channel", "kernel_rate", "kernel_ell"),
    "telegraph": ("dx", "t_final", "half_width", "gamma2"),
    "fourier": ("dx", "t_final", "half_width", "gamma2"),
    "dirac-free": ("dx", "t_final", "half_width", "m"),
    "compare": ("eps_list", "t_final", "half_width", "dx"),
    "sweep": ("eps_list",),
}

_NONNEGATIVE_RATES = ("gamma1", "gamma2", "pi1_rate", "pi2_rate", "kernel_rate", "noise_delta")


def _convert(key: str, raw: str):
    target = _FIELD_TYPES[key]
    if key == "eps_list" or "tuple" in str(target):
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if target in ("int", int):
        return int(raw)
    if target in ("float", float):
        return float(raw)
    return raw


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a config; raises ConfigError listing every problem."""
    errors: list[str] = []
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _FIELD_TYPES:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            errors.append(f"line {lineno}: cannot parse {key} = {raw!r}")

    scenario = values.get("scenario", "")
    if not scenario:
        errors.append("missing required key 'scenario'")
    elif scenario not in VALID_SCENARIOS:
        errors.append(f"unknown scenario {scenario!r} (valid: {', '.join(VALID_SCENARIOS)})")
    else:
        for key in _REQUIRED[scenario]:
            if key not in values:
                errors.append(f"scenario {scenario}: missing required key {key!r}")

    for key in _NONNEGATIVE_RATES:
        if key in values and values[key] < 0:
            errors.append(f"{key}: rate must be non-negative")
    if values.get("sigma", 1.0) <= 0:
        errors.append("sigma must be positive")
    if values.get("n_traj", 1) < 1:
        errors.append("n_traj must be >= 1")
    if scenario in PDE_SCENARIOS and "dt" in values:
        if abs(values["dt"] - values.get("dx", 0.0)) > 1e-12:
            errors.append(f"scenario {scenario}: requires dt = dx")
    if "eps" in values and values["eps"] <= 0:
        errors.append("eps must be positive")
    if "dx" in values and values["dx"] <= 0:
        errors.append("dx must be positive")
    if values.get("fast", "full") not in ("full", "diagonal", "spectral"):
        errors.append(f"fast must be one of full/diagonal/spectral, got {values.get('fast')!r}")
    if values.get("kernel_channel", "") not in ("", "identity", "phase-flip", "coin-flip"):
        errors.append(f"unknown kernel_channel {values.get('kernel_channel')!r}")
    if values.get("snapshot_spacing", "uniform") not in ("uniform", "log"):
        errors.append("snapshot_spacing must be 'uniform' or 'log'")

    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(**values)


def load_config(source: str) -> ScenarioConfig:
    """Load a config from a path or from ``preset:<name>``."""
    if source.startswith("preset:"):
        return parse_config(preset_text(source.split(":", 1)[1]))
    with open(source, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def preset_text(name: str) -> str:
    ref = resources.files("dlqw.presets").joinpath(f"{name}.cfg")
    if not ref.is_file():
        raise ConfigurationError(f"no preset named {name!r}; see dlqw.config.list_presets()")
    return ref.read_text(encoding="utf-8")


def list_presets() -> list[str]:
    return sorted(
        p.name[:-4]
        for p in resources.files("dlqw.presets").iterdir()
        if p.name.endswith(".cfg")
    )


def default_output_root() -> str:
    return os.environ.get("DLQW_OUTPUT_ROOT", "dlqw-out")
