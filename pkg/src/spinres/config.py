"""Flat INI-style configuration with paper-profile defaults.

Sections and keys are fixed by a schema; unknown keys are rejected with
their line number. Physical quantities carry their unit in the key name.
The "fast" profile shrinks the film resolution and schedule so a full
classification run finishes in minutes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geometry import GridSpec, MaterialParams
from .llg import IntegratorConfig, check_stability

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_list(conv):
    def inner(s: str):
        s = s.strip()
        if not s:
            return ()
        return tuple(conv(part.strip()) for part in s.split(","))

    return inner


_CONVERTERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str,
    "ints": _parse_list(int),
    "floats": _parse_list(float),
    "strs": _parse_list(str),
}

# (section, key) -> (type, paper default, fast-profile override or None)
SCHEMA: dict[tuple[str, str], tuple[str, object, object]] = {
    ("geometry", "nx"): ("int", 220, 110),
    ("geometry", "ny"): ("int", 220, 110),
    ("geometry", "cell_size_nm"): ("float", 10.0, 20.0),
    ("geometry", "thickness_nm"): ("float", 100.0, None),
    ("geometry", "damper_width_um"): ("float", 0.1, None),
    ("geometry", "electrode_diameter_um"): ("float", 0.2, None),
    ("material", "ms_ka_per_m"): ("float", 100.0, None),
    ("material", "a_ex_pj_per_m"): ("float", 3.6, None),
    ("material", "ku_high_kj_per_m3"): ("float", 10.0, None),
    ("material", "ku_low_kj_per_m3"): ("float", 1.0, None),
    ("material", "h_ext_ka_per_m"): ("float", 0.03, None),
    ("material", "alpha_interior"): ("float", 0.001, None),
    ("material", "alpha_damper"): ("float", 1.0, None),
    ("material", "drive_inplane_ka_per_m"): ("float", 1.0, None),
    ("integrator", "macro_step_ns"): ("float", 0.01, None),
    ("integrator", "substeps_per_macro"): ("int", 25, None),
    ("integrator", "gamma_rad_per_s_t"): ("float", 1.7595e11, None),
    ("integrator", "renormalize"): ("bool", True, None),
    ("integrator", "threads"): ("int", 0, None),
    ("schedule", "n_train_sections"): ("int", 15, 8),
    ("schedule", "n_test_sections"): ("int", 8, 4),
    ("schedule", "section_steps"): ("int", 1280, None),
    ("schedule", "frequency_ghz"): ("float", 2.5, None),
    ("schedule", "train_seed"): ("int", 1, None),
    ("schedule", "test_seed"): ("int", 2, None),
    ("readout", "window_steps"): ("int", 0, None),  # 0 = one drive period
    ("readout", "envelope_mode"): ("str", "rms", None),
    ("readout", "ridge"): ("float", 0.0, None),
    ("readout", "warmup_windows"): ("int", 1, None),
    ("readout", "settle_steps"): ("int", 300, None),
    ("experiment", "profile"): ("str", "paper", None),
    ("experiment", "arrangement"): ("str", "GRID", None),
    ("experiment", "n_o"): ("int", 64, None),
    ("experiment", "arrangements"): ("strs", ("GRID", "CIRCLE", "RANDOM"), None),
    ("experiment", "n_o_list"): ("ints", (4, 16, 25, 54, 81, 144, 196, 289), None),
    ("experiment", "compartment_n_o_list"): ("ints", (4, 16, 25, 81, 196), None),
    ("experiment", "repeats"): ("int", 10, None),
    ("experiment", "layout_seed"): ("int", 100, None),
    ("experiment", "train_freqs_ghz"): ("floats", (2.4, 2.6), None),
    ("experiment", "test_freqs_ghz"): (
        "floats",
        tuple(round(2.2 + 0.05 * i, 3) for i in range(13)),
        None,
    ),
    ("experiment", "snapshot_steps"): ("ints", (), None),
}

PROFILES = ("paper", "fast")


@dataclass(frozen=True)
class ScheduleParams:
    n_train_sections: int
    n_test_sections: int
    section_steps: int
    frequency: float  # Hz
    train_seed: int
    test_seed: int

    @property
    def period(self) -> float:
        return 1.0 / self.frequency


@dataclass(frozen=True)
class ReadoutParams:
    window_steps: int
    envelope_mode: str
    ridge: float
    warmup_windows: int
    settle_steps: int


@dataclass(frozen=True)
class SweepParams:
    arrangements: tuple
    n_o_list: tuple
    compartment_n_o_list: tuple
    repeats: int
    layout_seed: int
    train_freqs: tuple  # Hz
    test_freqs: tuple  # Hz


@dataclass
class ExperimentConfig:
    profile: str
    grid: GridSpec
    material: MaterialParams
    integrator: IntegratorConfig
    schedule: ScheduleParams
    readout: ReadoutParams
    sweep: SweepParams
    arrangement: str = "GRID"
    n_o: int = 64
    snapshot_steps: tuple = ()
    raw: dict = field(default_factory=dict, repr=False)

    def window_steps(self, frequency: float | None = None) -> int:
        """Envelope window: one drive period in macro steps unless pinned."""
        if self.readout.window_steps > 0:
            return self.readout.window_steps
        f = frequency if frequency is not None else self.schedule.frequency
        return max(1, int(round(1.0 / (f * self.integrator.macro_step))))


def _parse_lines(text: str) -> dict[tuple[str, str], tuple[str, int]]:
    values: dict[tuple[str, str], tuple[str, int]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            section = line[1:-1].strip().lower()
            if not any(sec == section for sec, _ in SCHEMA):
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside any [section]", lineno)
        key, _, val = line.partition("=")
        key = key.strip().lower()
        if (section, key) not in SCHEMA:
            raise ConfigError(f"unknown key {key!r} in section [{section}]", lineno)
        values[(section, key)] = (val.strip(), lineno)
    return values


def _resolve(values: dict, overrides: dict | None = None) -> dict:
    """Defaults, then profile overlay, then file values, then overrides."""
    overrides = overrides or {}
    profile = overrides.get(
        ("experiment", "profile"),
        values.get(("experiment", "profile"), ("paper", 0))[0]
        if ("experiment", "profile") in values
        else "paper",
    )
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {PROFILES}")

    resolved = {}
    for (sec, key), (typ, default, fast) in SCHEMA.items():
        val = default
        if profile == "fast" and fast is not None:
            val = fast
        if (sec, key) in values:
            text, lineno = values[(sec, key)]
            try:
                val = _CONVERTERS[typ](text)
            except ValueError as e:
                raise ConfigError(str(e), lineno) from None
        if (sec, key) in overrides:
            ov = overrides[(sec, key)]
            val = _CONVERTERS[typ](ov) if isinstance(ov, str) else ov
        resolved[(sec, key)] = val
    resolved[("experiment", "profile")] = profile
    return resolved


def _validate(r: dict) -> None:
    checks = [
        (("schedule", "n_train_sections"), lambda v: v >= 1, "must be >= 1"),
        (("schedule", "n_test_sections"), lambda v: v >= 1, "must be >= 1"),
        (("schedule", "section_steps"), lambda v: v >= 1, "must be >= 1"),
        (("schedule", "frequency_ghz"), lambda v: v > 0, "must be positive"),
        (("geometry", "cell_size_nm"), lambda v: v > 0, "must be positive"),
        (("geometry", "thickness_nm"), lambda v: v > 0, "must be positive"),
        (("integrator", "macro_step_ns"), lambda v: v > 0, "must be positive"),
        (("integrator", "substeps_per_macro"), lambda v: v >= 1, "must be >= 1"),
        (("experiment", "repeats"), lambda v: v >= 1, "must be >= 1"),
        (("readout", "warmup_windows"), lambda v: v >= 0, "must be >= 0"),
        (("readout", "ridge"), lambda v: v >= 0, "must be >= 0"),
    ]
    for key, ok, msg in checks:
        if not ok(r[key]):
            raise ConfigError(f"{key[0]}.{key[1]} {msg} (got {r[key]})")
    if r[("readout", "envelope_mode")] not in ("rms", "peak"):
        raise ConfigError("readout.envelope_mode must be 'rms' or 'peak'")


def _assemble(r: dict) -> ExperimentConfig:
    grid = GridSpec(
        nx=r[("geometry", "nx")],
        ny=r[("geometry", "ny")],
        cell_size=r[("geometry", "cell_size_nm")] * 1e-9,
        thickness=r[("geometry", "thickness_nm")] * 1e-9,
    )
    material = MaterialParams(
        ms=r[("material", "ms_ka_per_m")] * 1e3,
        a_ex=r[("material", "a_ex_pj_per_m")] * 1e-12,
        ku_high=r[("material", "ku_high_kj_per_m3")] * 1e3,
        ku_low=r[("material", "ku_low_kj_per_m3")] * 1e3,
        h_ext=r[("material", "h_ext_ka_per_m")] * 1e3,
        alpha_interior=r[("material", "alpha_interior")],
        alpha_damper=r[("material", "alpha_damper")],
        damper_width=r[("geometry", "damper_width_um")] * 1e-6,
        electrode_diameter=r[("geometry", "electrode_diameter_um")] * 1e-6,
        drive_inplane=r[("material", "drive_inplane_ka_per_m")] * 1e3,
    )
    integrator = IntegratorConfig(
        macro_step=r[("integrator", "macro_step_ns")] * 1e-9,
        substeps=r[("integrator", "substeps_per_macro")],
        gamma=r[("integrator", "gamma_rad_per_s_t")],
        renormalize=r[("integrator", "renormalize")],
        threads=r[("integrator", "threads")],
    )
    check_stability(integrator, grid, material)
    schedule = ScheduleParams(
        n_train_sections=r[("schedule", "n_train_sections")],
        n_test_sections=r[("schedule", "n_test_sections")],
        section_steps=r[("schedule", "section_steps")],
        frequency=r[("schedule", "frequency_ghz")] * 1e9,
        train_seed=r[("schedule", "train_seed")],
        test_seed=r[("schedule", "test_seed")],
    )
    readout = ReadoutParams(
        window_steps=r[("readout", "window_steps")],
        envelope_mode=r[("readout", "envelope_mode")],
        ridge=r[("readout", "ridge")],
        warmup_windows=r[("readout", "warmup_windows")],
        settle_steps=r[("readout", "settle_steps")],
    )
    sweep = SweepParams(
        arrangements=tuple(a.upper() for a in r[("experiment", "arrangements")]),
        n_o_list=r[("experiment", "n_o_list")],
        compartment_n_o_list=r[("experiment", "compartment_n_o_list")],
        repeats=r[("experiment", "repeats")],
        layout_seed=r[("experiment", "layout_seed")],
        train_freqs=tuple(f * 1e9 for f in r[("experiment", "train_freqs_ghz")]),
        test_freqs=tuple(f * 1e9 for f in r[("experiment", "test_freqs_ghz")]),
    )
    return ExperimentConfig(
        profile=r[("experiment", "profile")],
        grid=grid,
        material=material,
        integrator=integrator,
        schedule=schedule,
        readout=readout,
        sweep=sweep,
        arrangement=r[("experiment", "arrangement")].upper(),
        n_o=r[("experiment", "n_o")],
        snapshot_steps=r[("experiment", "snapshot_steps")],
        raw=dict(r),
    )


def parse_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Load a config file (None or empty file = paper defaults), apply
    overrides {(section, key): value}, validate, and assemble."""
    text = Path(path).read_text() if path is not None else ""
    values = _parse_lines(text)
    resolved = _resolve(values, overrides)
    _validate(resolved)
    return _assemble(resolved)


def default_config(profile: str = "paper", overrides: dict | None = None) -> ExperimentConfig:
    ov = dict(overrides or {})
    ov[("experiment", "profile")] = profile
    resolved = _resolve({}, ov)
    _validate(resolved)
    return _assemble(resolved)


def resolved_text(cfg: ExperimentConfig) -> str:
    """Canonical echo of the fully resolved configuration."""
    lines = []
    last_sec = None
    for (sec, key), (typ, _, _) in SCHEMA.items():
        if sec != last_sec:
            if last_sec is not None:
                lines.append("")
            lines.append(f"[{sec}]")
            last_sec = sec
        val = cfg.raw[(sec, key)]
        if typ in ("ints", "floats", "strs"):
            val = ",".join(str(v) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
