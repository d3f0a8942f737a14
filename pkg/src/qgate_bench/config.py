"""Experiment configuration: a versioned JSON schema with strict key checking.

Units follow the device files: gate lengths and flanks in ns, ZZ in kHz,
coherence times in us, sideband frequencies in MHz, flux in units of the
flux quantum.  Every section rejects unknown keys so that a typo never
silently falls back to a default.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, ConfigNotFound

SCHEMA_VERSION = 1
PRESET_DIR = Path(__file__).parent / "data" / "presets"
PRESETS = ("paper_fig6", "paper_fig5", "paper_zz0", "paper_device")
SWEEP_PARAMETERS = ("gate_length", "detuning", "drive_phase", "sideband")


def _build(cls, data, name: str):
    """Instantiate a flat dataclass section from a dict, rejecting unknown keys."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _pair(value, name: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be a pair")
    return (math.inf if value[0] is None else float(value[0]), math.inf if value[1] is None else float(value[1]))


@dataclass
class SimpleSection:
    """Two-level model parameters (defaults: reference device table, 200 ns gates)."""

    zeta_khz: float = -200.0
    gate_length_ns: float = 200.0
    single_qubit_ns: float = 0.0
    t1_us: list = field(default_factory=lambda: [70.0, 23.0])
    t2_star_us: list = field(default_factory=lambda: [50.0, 27.0])

    def __post_init__(self):
        if not self.gate_length_ns > 0:
            raise ConfigError("simple.gate_length_ns must be positive")
        if self.single_qubit_ns < 0:
            raise ConfigError("simple.single_qubit_ns must be non-negative")
        for name in ("t1_us", "t2_star_us"):
            for v in _pair(getattr(self, name), f"simple.{name}"):
                if not v > 0:
                    raise ConfigError(f"simple.{name} entries must be positive")


@dataclass
class PulseSection:
    """Pulse-level calibration settings.  ``amplitude`` None picks one from the gate length."""

    amplitude: float | None = None
    flank_ns: float = 5.0
    decoherence: bool = True
    n_points: int = 41
    phase_tol: float = 1e-3

    def __post_init__(self):
        if self.amplitude is not None and not 0 < self.amplitude < 0.5:
            raise ConfigError("pulse.amplitude must lie in (0, 0.5) flux quanta")
        if not self.flank_ns > 0:
            raise ConfigError("pulse.flank_ns must be positive")
        if self.n_points < 8:
            raise ConfigError("pulse.n_points must be at least 8")
        if not self.phase_tol > 0:
            raise ConfigError("pulse.phase_tol must be positive")


@dataclass
class JitterSection:
    sideband_mhz: float = 0.0
    max_cycles: int = 5
    per_gate: bool = False

    def __post_init__(self):
        if self.max_cycles < 1:
            raise ConfigError("noise.jitter.max_cycles must be at least 1")


@dataclass
class DriveDephasingSection:
    """sigma(Omega) = c0 + c2 Omega^2; None keeps the package defaults."""

    enabled: bool = False
    c0_hz: float | None = None
    c2_per_hz: float | None = None


@dataclass
class NoiseSection:
    jitter: JitterSection = field(default_factory=JitterSection)
    drive_dephasing: DriveDephasingSection = field(default_factory=DriveDephasingSection)

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        unknown = set(data) - {"jitter", "drive_dephasing"}
        if unknown:
            raise ConfigError(f"unknown keys in noise: {sorted(unknown)}")
        return cls(jitter=_build(JitterSection, data.get("jitter"), "noise.jitter"),
                   drive_dephasing=_build(DriveDephasingSection, data.get("drive_dephasing"),
                                          "noise.drive_dephasing"))


@dataclass
class RBSection:
    lengths: list = field(default_factory=lambda: [1, 2, 4, 8, 12, 16, 24, 32, 48, 64])
    n_random: int = 10
    shots: int | None = None
    purity: bool = False

    def __post_init__(self):
        if not self.lengths or any(int(m) != m or m < 1 for m in self.lengths):
            raise ConfigError("rb.lengths must be positive integers")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("rb.shots must be positive or null")


@dataclass
class SweepSection:
    """Grid for ``sweep``.  Units: gate_length ns, detuning kHz, drive_phase rad, sideband MHz.

    On the full backend a gate-length sweep runs over ``amplitudes`` and the
    calibrated length of each is recorded.
    """

    parameter: str = "gate_length"
    values: list = field(default_factory=list)
    amplitudes: list = field(default_factory=list)

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep.parameter must be one of {SWEEP_PARAMETERS}")


@dataclass
class HistogramSection:
    lengths: list = field(default_factory=lambda: [2, 8, 16])
    bins: int = 20
    interleaved: bool = True

    def __post_init__(self):
        if not self.lengths:
            raise ConfigError("histogram.lengths must not be empty")
        if self.bins < 1:
            raise ConfigError("histogram.bins must be positive")


@dataclass
class ExperimentConfig:
    seed: int
    backend: str = "simple"
    gate: str = "cz"
    device: str = "paper"
    description: str = ""
    calibration_report: str | None = None
    output: str = "qgate_runs"
    simple: SimpleSection = field(default_factory=SimpleSection)
    pulse: PulseSection = field(default_factory=PulseSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    rb: RBSection = field(default_factory=RBSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    histogram: HistogramSection = field(default_factory=HistogramSection)
    schema_version: int = SCHEMA_VERSION
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.backend not in ("full", "simple"):
            raise ConfigError(f"backend must be 'full' or 'simple', got {self.backend!r}")
        if self.gate not in ("cz", "iswap"):
            raise ConfigError(f"gate must be 'cz' or 'iswap', got {self.gate!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def device_path(self) -> Path | None:
        """None means the bundled reference device."""
        if self.device in ("paper", "paper_zz"):
            from .device import DEFAULT_DEVICE
            return DEFAULT_DEVICE if self.device == "paper" else DEFAULT_DEVICE.with_name("device_paper_zz.json")
        return self.resolve(self.device)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form (sorted keys), independent of file layout."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_(self, **changes) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)


_TOP_KEYS = {"schema_version", "seed", "backend", "gate", "device", "description", "calibration_report",
             "output", "simple", "pulse", "noise", "rb", "sweep", "histogram"}


def config_from_dict(data: dict, base_dir=".") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in config: {sorted(unknown)}")
    if "schema_version" not in data:
        raise ConfigError("schema_version is required")
    if "seed" not in data:
        raise ConfigError("seed is required")
    top = {k: v for k, v in data.items() if k not in ("simple", "pulse", "noise", "rb", "sweep", "histogram")}
    try:
        return ExperimentConfig(
            **top,
            simple=_build(SimpleSection, data.get("simple"), "simple"),
            pulse=_build(PulseSection, data.get("pulse"), "pulse"),
            noise=NoiseSection.from_dict(data.get("noise")),
            rb=_build(RBSection, data.get("rb"), "rb"),
            sweep=_build(SweepSection, data.get("sweep"), "sweep"),
            histogram=_build(HistogramSection, data.get("histogram"), "histogram"),
            base_dir=Path(base_dir),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigNotFound(f"no preset named {name!r}; available: {', '.join(PRESETS)}")
    return PRESET_DIR / f"{name}.json"


def load_config(path) -> ExperimentConfig:
    """Load a config file, or a bundled preset given as ``preset:<name>``."""
    path = str(path)
    if path.startswith("preset:"):
        p = preset_path(path.split(":", 1)[1])
    else:
        p = Path(path)
    if not p.is_file():
        raise ConfigNotFound(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return config_from_dict(data, base_dir=p.parent)
