"""Uniformly sampled time series, test-signal generation, filtering, CSV I/O.

TimeSeries is the carrier for every experiment record in the toolkit:
a sample rate, a start time, and named equal-length channels. Instances
are immutable; operations return new series.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import signal as sps

from .errors import ConfigError, DomainError, FormatError

RNG_NAME = "numpy.random.Generator(PCG64)"

# Relative timestep jitter tolerated when inferring a uniform timebase.
TIME_JITTER_REL = 1e-6


def _readonly(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DomainError("channel data must be one-dimensional")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Immutable multichannel record sampled uniformly at fs from t0."""

    fs: float  # sample rate [Hz]
    channels: Mapping[str, np.ndarray]
    t0: float = 0.0  # start time [s]
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.fs > 0.0:
            raise DomainError("TimeSeries.fs must be > 0")
        if not self.channels:
            raise DomainError("TimeSeries needs at least one channel")
        frozen = {str(k): _readonly(v) for k, v in self.channels.items()}
        lengths = {arr.size for arr in frozen.values()}
        if len(lengths) != 1 or 0 in lengths:
            raise DomainError("all channels must share the same nonzero length")
        object.__setattr__(self, "channels", MappingProxyType(frozen))
        object.__setattr__(
            self, "meta", MappingProxyType({str(k): str(v) for k, v in self.meta.items()})
        )

    @property
    def n_samples(self) -> int:
        return next(iter(self.channels.values())).size

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.channels)

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.fs

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise KeyError(f"no channel {name!r}; have {list(self.channels)}") from None

    def with_meta(self, **extra: str) -> "TimeSeries":
        merged = dict(self.meta)
        merged.update({k: str(v) for k, v in extra.items()})
        return TimeSeries(fs=self.fs, channels=dict(self.channels), t0=self.t0, meta=merged)


class SignalKind(enum.Enum):
    PIECEWISE_CONSTANT_RANDOM = "PiecewiseConstantRandom"
    BAND_LIMITED_RANDOM = "BandLimitedRandom"
    STEP = "Step"
    RAMP = "Ramp"


@dataclass(frozen=True)
class SignalSpec:
    """Recipe for a deterministic test signal."""

    kind: SignalKind
    amplitude: float  # signal units
    duration: float  # [s]
    seed: int = 0
    hold_duration: float | None = None  # [s], piecewise-constant kind
    cutoff: float | None = None  # [Hz], band-limited kind

    def __post_init__(self) -> None:
        if not self.duration > 0.0:
            raise ConfigError("SignalSpec.duration must be > 0")
        if self.amplitude < 0.0:
            raise ConfigError("SignalSpec.amplitude must be >= 0")
        if self.kind is SignalKind.PIECEWISE_CONSTANT_RANDOM:
            if self.hold_duration is None or not self.hold_duration > 0.0:
                raise ConfigError("piecewise-constant signals need hold_duration > 0")
        if self.kind is SignalKind.BAND_LIMITED_RANDOM:
            if self.cutoff is None or not self.cutoff > 0.0:
                raise ConfigError("band-limited signals need cutoff > 0")


def generate(spec: SignalSpec, fs: float, channel: str = "u") -> TimeSeries:
    """Render a SignalSpec at sample rate fs; bit-reproducible per seed."""
    if not fs > 0.0:
        raise ConfigError("fs must be > 0")
    n = int(round(spec.duration * fs))
    if n < 1:
        raise ConfigError("duration shorter than one sample")
    rng = np.random.default_rng(spec.seed)

    if spec.kind is SignalKind.STEP:
        x = np.full(n, spec.amplitude)
    elif spec.kind is SignalKind.RAMP:
        x = np.linspace(0.0, spec.amplitude, n)
    elif spec.kind is SignalKind.PIECEWISE_CONSTANT_RANDOM:
        n_hold = int(round(spec.hold_duration * fs))
        if n_hold < 1:
            raise ConfigError("hold_duration shorter than one sample")
        n_seg = math.ceil(n / n_hold)
        levels = rng.uniform(-spec.amplitude, spec.amplitude, n_seg)
        x = np.repeat(levels, n_hold)[:n]
    elif spec.kind is SignalKind.BAND_LIMITED_RANDOM:
        if not spec.cutoff < fs / 2.0:
            raise ConfigError("cutoff must be below the Nyquist frequency fs/2")
        white = rng.uniform(-spec.amplitude, spec.amplitude, n)
        x = _lowpass_array(white, fs, spec.cutoff)
    else:  # pragma: no cover - enum is exhaustive
        raise ConfigError(f"unknown signal kind {spec.kind}")

    meta = {
        "seed": str(spec.seed),
        "rng": RNG_NAME,
        "kind": spec.kind.value,
    }
    return TimeSeries(fs=fs, channels={channel: x}, meta=meta)


def _lowpass_array(x: np.ndarray, fs: float, cutoff: float) -> np.ndarray:
    # Fourth-order Butterworth applied forward-backward: zero phase,
    # unit DC gain, 8th-order effective magnitude rolloff.
    sos = sps.butter(4, cutoff, btype="low", fs=fs, output="sos")
    return sps.sosfiltfilt(sos, x)


def lowpass(x: TimeSeries, cutoff: float, channel: str | None = None) -> TimeSeries:
    """Zero-phase Butterworth low-pass of one channel (or all when None)."""
    if not 0.0 < cutoff < x.fs / 2.0:
        raise ConfigError(f"cutoff must lie in (0, fs/2) = (0, {x.fs / 2:g}) Hz")
    names = x.names if channel is None else (channel,)
    out = dict(x.channels)
    for name in names:
        out[name] = _lowpass_array(x.channel(name), x.fs, cutoff)
    return TimeSeries(fs=x.fs, channels=out, t0=x.t0, meta=dict(x.meta))


def write_csv(x: TimeSeries, path) -> None:
    """Write a series as `t,<channels...>` CSV at round-trip-safe precision.

    Channel units (meta keys `units:<name>`) go into a `# units:` comment;
    remaining meta into `# meta:` comments. Values use 17 significant digits.
    """
    path = Path(path)
    names = x.names
    units = {k.split(":", 1)[1]: v for k, v in x.meta.items() if k.startswith("units:")}
    lines = []
    if units:
        pairs = ",".join(f"{n}={units[n]}" for n in names if n in units)
        lines.append(f"# units: {pairs}")
    for key in sorted(x.meta):
        if not key.startswith("units:"):
            lines.append(f"# meta: {key}={x.meta[key]}")
    if x.n_samples == 1 and "fs" not in x.meta:
        # fs cannot be inferred from a single timestamp on read-back
        lines.append(f"# meta: fs={x.fs:.17g}")
    lines.append("t," + ",".join(names))
    t = x.times()
    cols = [x.channel(n) for n in names]
    for i in range(x.n_samples):
        row = [f"{t[i]:.17g}"] + [f"{c[i]:.17g}" for c in cols]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path) -> TimeSeries:
    """Read a `t,<channels...>` CSV back into a TimeSeries.

    The time column must be uniform to within 1e-6 relative jitter; the
    sample rate is inferred from the median timestep.
    """
    path = Path(path)
    units: dict[str, str] = {}
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[str] = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("units:"):
                for pair in body[len("units:"):].strip().split(","):
                    if "=" in pair:
                        k, v = pair.split("=", 1)
                        units[k.strip()] = v.strip()
            elif body.startswith("meta:"):
                pair = body[len("meta:"):].strip()
                if "=" in pair:
                    k, v = pair.split("=", 1)
                    meta[k.strip()] = v.strip()
            continue
        if header is None:
            header = [h.strip() for h in line.split(",")]
            continue
        rows.append(line)

    if header is None or not header or header[0] != "t" or len(header) < 2:
        raise FormatError(f"{path}: missing `t,<channel>...` header row")
    if len(set(header[1:])) != len(header[1:]):
        raise FormatError(f"{path}: duplicate channel names in header")
    if not rows:
        raise FormatError(f"{path}: no data rows")

    try:
        data = np.array([[float(v) for v in r.split(",")] for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value ({exc})") from None
    if data.shape[1] != len(header):
        raise FormatError(f"{path}: row width does not match header")

    t = data[:, 0]
    if t.size >= 2:
        dt = np.diff(t)
        dt_ref = float(np.median(dt))
        if dt_ref <= 0.0:
            raise FormatError(f"{path}: time column is not strictly increasing")
        bad = np.nonzero(np.abs(dt - dt_ref) > TIME_JITTER_REL * abs(dt_ref))[0]
        if bad.size:
            i = int(bad[0])
            raise FormatError(
                f"{path}: non-uniform timebase at data row {i + 2} "
                f"(dt={dt[i]:.9g}, expected {dt_ref:.9g})"
            )
        fs = 1.0 / dt_ref
    else:
        if "fs" not in meta:
            raise FormatError(f"{path}: single-row file without `# meta: fs=` hint")
        fs = float(meta.pop("fs"))

    channels = {name: data[:, j + 1] for j, name in enumerate(header[1:])}
    for name, unit in units.items():
        meta[f"units:{name}"] = unit
    return TimeSeries(fs=fs, channels=channels, t0=float(t[0]), meta=meta)
