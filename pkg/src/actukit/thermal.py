"""Two-node RC thermal model: evaluation, simulation, identification, limits.

The winding-to-ambient heat path is modeled as the two-pole network

    T_W(s) - T_A     R_total + C_slow*R_HA*R_WH*s
    ------------  =  -------------------------------------------
        P(s)         (C_slow*R_HA*s + 1)(C_fast*R_WH*s + 1)

with R_total = R_WH + R_HA. C_slow pairs with R_HA (housing pole,
~minutes) and C_fast with R_WH (winding pole, ~seconds); this pairing
reproduces the published peak-current limits, the swapped one misses
by more than 2x. Simulation uses the exact zero-order-hold
discretization of the state-space realization, so step responses carry
no integration error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy import signal as sps

from .core import MotorParams, copper_loss
from .errors import DomainError, EstimationError, FitError
from .signals import TimeSeries

# Bisection tolerances for the limit solvers.
CURRENT_TOL = 1e-4  # [A]
DURATION_TOL = 1e-3  # [s]


class ThermalLabel(enum.Enum):
    FAN = "Fan"
    NOFAN = "NoFan"
    CUSTOM = "Custom"


# Published total thermal resistance per cooling configuration, used to
# sanity-check labeled networks at construction.
_DC_REFERENCE = {ThermalLabel.FAN: 2.27, ThermalLabel.NOFAN: 7.77}
_DC_REFERENCE_RTOL = 0.01


@dataclass(frozen=True)
class ThermalNetwork:
    """Parameters of the two-pole winding-to-ambient heat path."""

    R_WH: float  # winding->housing resistance [degC/W]
    R_HA: float  # housing->ambient resistance [degC/W]
    C_fast: float  # capacitance of the fast (winding) pole [J/degC]
    C_slow: float  # capacitance of the slow (housing) pole [J/degC]
    label: ThermalLabel = ThermalLabel.CUSTOM

    def __post_init__(self) -> None:
        for name in ("R_WH", "R_HA", "C_fast", "C_slow"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"ThermalNetwork.{name} must be > 0")
        ref = _DC_REFERENCE.get(self.label)
        if ref is not None:
            dc = self.R_WH + self.R_HA
            if abs(dc - ref) > _DC_REFERENCE_RTOL * ref:
                raise DomainError(
                    f"{self.label.value} network has R_WH+R_HA = {dc:.4g} degC/W, "
                    f"expected {ref} within {100 * _DC_REFERENCE_RTOL:.0f}%"
                )

    @property
    def tau_slow(self) -> float:
        return self.C_slow * self.R_HA

    @property
    def tau_fast(self) -> float:
        return self.C_fast * self.R_WH


# Identified parameter sets for the actuator's two cooling configurations.
FAN_NETWORK = ThermalNetwork(R_WH=0.828, R_HA=1.44, C_fast=15.9, C_slow=146.0, label=ThermalLabel.FAN)
NOFAN_NETWORK = ThermalNetwork(R_WH=1.09, R_HA=6.68, C_fast=18.4, C_slow=138.0, label=ThermalLabel.NOFAN)


def dc_resistance(net: ThermalNetwork) -> float:
    """Total winding-to-ambient resistance R_WH + R_HA [degC/W]."""
    return net.R_WH + net.R_HA


def _tf_coeffs(net: ThermalNetwork) -> tuple[float, float, float, float]:
    """(a, b, tau_slow, tau_fast) of H(s) = (a + b*s)/((tau_s*s+1)(tau_f*s+1))."""
    a = net.R_WH + net.R_HA
    b = net.C_slow * net.R_HA * net.R_WH
    return a, b, net.tau_slow, net.tau_fast


def impedance(net: ThermalNetwork, f) -> complex | np.ndarray:
    """Thermal impedance (T_W - T_A)/P at frequency f [Hz], complex degC/W."""
    a, b, t1, t2 = _tf_coeffs(net)
    s = 2j * math.pi * np.asarray(f, dtype=float)
    z = (a + b * s) / ((t1 * s + 1.0) * (t2 * s + 1.0))
    return complex(z) if z.ndim == 0 else z


def _discretize(net: ThermalNetwork, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact ZOH discrete transfer function (num, den) at timestep dt."""
    a, b, t1, t2 = _tf_coeffs(net)
    scale = t1 * t2
    num = [b / scale, a / scale]
    den = [1.0, (t1 + t2) / scale, 1.0 / scale]
    numd, dend, _ = sps.cont2discrete((num, den), dt, method="zoh")
    return np.atleast_1d(np.squeeze(numd)), np.atleast_1d(np.squeeze(dend))


def simulate(net: ThermalNetwork, P: TimeSeries, T_A: float, channel: str | None = None) -> TimeSeries:
    """Winding temperature for a power input, from a cold start T_W(0) = T_A.

    ZOH-exact: the only approximation is that P is piecewise constant
    between samples, which is exactly how generated inputs are defined.
    """
    name = _sole_channel(P, channel)
    p = P.channel(name)
    if np.any(p < 0.0):
        raise DomainError("power input must be nonnegative")
    numd, dend = _discretize(net, 1.0 / P.fs)
    t_w = T_A + sps.lfilter(numd, dend, p)
    meta = dict(P.meta)
    meta["T_A"] = f"{T_A:.17g}"
    return TimeSeries(fs=P.fs, channels={"T_W": t_w}, t0=P.t0, meta=meta)


def _sole_channel(ts: TimeSeries, channel: str | None) -> str:
    if channel is not None:
        return channel
    if len(ts.names) == 1:
        return ts.names[0]
    raise DomainError(f"series has channels {list(ts.names)}; specify one")


def step_rise(net: ThermalNetwork, P_watts: float, t: float) -> float:
    """Temperature rise at time t after a cold-start power step of P_watts.

    One exact ZOH step of size t (the input is constant, so a single
    step evaluates the continuous response exactly).
    """
    if t <= 0.0:
        return 0.0
    numd, dend = _discretize(net, t)
    y = sps.lfilter(numd, dend, [P_watts, P_watts])
    return float(y[1])


@dataclass(frozen=True)
class ThermistorCalib:
    """Linear winding-resistance-to-temperature calibration."""

    slope: float  # [degC/Ohm]
    intercept: float  # [degC]
    r_squared: float

    def __post_init__(self) -> None:
        if not self.slope > 0.0:
            raise DomainError("thermistor slope must be > 0 (resistance rises with T)")


def resistance_from_vi(V: float, i_bus: float) -> float:
    """Line-to-line winding resistance V/i_bus [Ohm]."""
    if i_bus == 0.0:
        raise DomainError("i_bus must be nonzero")
    return V / i_bus


def thermistor_fit(samples: Sequence[tuple[float, float]]) -> ThermistorCalib:
    """Least-squares line T = slope*R + intercept over (R_ll, T) samples."""
    if len(samples) < 2:
        raise FitError("thermistor calibration needs at least 2 samples")
    r = np.array([s[0] for s in samples], dtype=float)
    t = np.array([s[1] for s in samples], dtype=float)
    if np.ptp(r) == 0.0:
        raise FitError("thermistor calibration needs at least 2 distinct resistances")
    slope, intercept = np.polyfit(r, t, 1)
    resid = t - (slope * r + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot > 0.0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    if slope <= 0.0:
        raise FitError(f"calibration slope {slope:.4g} degC/Ohm is not positive")
    return ThermistorCalib(slope=float(slope), intercept=float(intercept), r_squared=r2)


def temperature(calib: ThermistorCalib, R_ll: float) -> float:
    """Winding temperature [degC] from line-to-line resistance [Ohm]."""
    return calib.slope * R_ll + calib.intercept


def max_sustainable_current(net: ThermalNetwork, motor: MotorParams, duration: float) -> float:
    """Largest q-axis current step sustainable for `duration` from cold start.

    Solves step_rise(duration; P(i)) = T_max - T_ambient by bisection;
    the rise is monotone in current, so the root is unique.
    """
    if not duration > 0.0:
        raise DomainError("duration must be > 0")
    limit = motor.T_max - motor.T_ambient

    def rise(i_q: float) -> float:
        return step_rise(net, copper_loss(motor.R_phi, i_q), duration)

    lo = 0.0
    hi = math.sqrt(limit / (dc_resistance(net) * 1.5 * motor.R_phi))  # continuous limit
    while rise(hi) < limit:
        hi *= 2.0
    while hi - lo > CURRENT_TOL:
        mid = 0.5 * (lo + hi)
        if rise(mid) < limit:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def peak_duration(net: ThermalNetwork, motor: MotorParams, i_q: float) -> float:
    """Time until a cold-start current step first hits the winding limit.

    Returns +inf when i_q is at or below the continuous limit (the
    steady-state rise never reaches T_max).
    """
    if not i_q > 0.0:
        raise DomainError("i_q must be > 0")
    limit = motor.T_max - motor.T_ambient
    P = copper_loss(motor.R_phi, i_q)
    if P * dc_resistance(net) <= limit:
        return math.inf
    lo, hi = 0.0, 1.0
    while step_rise(net, P, hi) < limit:
        hi *= 2.0
    while hi - lo > DURATION_TOL:
        mid = 0.5 * (lo + hi)
        if step_rise(net, P, mid) < limit:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cooling_advantage(fan: ThermalNetwork, nofan: ThermalNetwork) -> float:
    """Ratio of total thermal resistances, no-fan over fan."""
    return dc_resistance(nofan) / dc_resistance(fan)


@dataclass(frozen=True)
class ThermalFit:
    """Identified network plus goodness of fit."""

    network: ThermalNetwork
    vaf: float  # [%]


MIN_IDENT_DURATION = 600.0  # [s]


def _pole_response(p: np.ndarray, tau: float, dt: float) -> np.ndarray:
    # Unit-DC-gain first-order response, ZOH-exact for piecewise-constant p.
    e = math.exp(-dt / tau)
    return sps.lfilter([0.0, 1.0 - e], [1.0, -e], p)


def identify_thermal(
    P: TimeSeries,
    T_W: TimeSeries,
    T_A: float,
    power_channel: str | None = None,
    temp_channel: str | None = None,
) -> ThermalFit:
    """Fit the four network parameters to measured power/temperature data.

    Two stages: a log grid over the two pole time constants with the two
    pole gains solved linearly at each grid point (the model is linear in
    the gains), then a simplex refinement of all four physical parameters
    against the exact simulated response.
    """
    if P.fs != T_W.fs or P.n_samples != T_W.n_samples:
        raise EstimationError("power and temperature series must share fs and length")
    if P.duration < MIN_IDENT_DURATION:
        raise EstimationError(
            f"need at least {MIN_IDENT_DURATION / 60:.0f} minutes of data, got {P.duration / 60:.1f}"
        )
    p = P.channel(_sole_channel(P, power_channel))
    y = T_W.channel(_sole_channel(T_W, temp_channel)) - T_A
    if float(np.std(p)) < 1e-9 * max(1.0, float(np.mean(np.abs(p)))):
        raise FitError("insufficient excitation: power input is constant")
    dt = 1.0 / P.fs

    # Stage 1: grid over pole time constants, gains by linear least squares.
    tau_slow_grid = np.logspace(math.log10(10.0), math.log10(5000.0), 41)
    tau_fast_grid = np.logspace(math.log10(0.5), math.log10(200.0), 41)
    fast_responses = {t2: _pole_response(p, t2, dt) for t2 in tau_fast_grid}
    best = None
    for t1 in tau_slow_grid:
        x1 = _pole_response(p, t1, dt)
        for t2 in tau_fast_grid:
            if t2 >= 0.5 * t1:
                continue  # enforce slow/fast ordering with separation
            X = np.column_stack([x1, fast_responses[t2]])
            gains, *_ = np.linalg.lstsq(X, y, rcond=None)
            if gains[0] <= 0.0 or gains[1] <= 0.0:
                continue
            sse = float(np.sum((y - X @ gains) ** 2))
            if best is None or sse < best[0]:
                best = (sse, t1, t2, float(gains[0]), float(gains[1]))
    if best is None:
        raise FitError("no admissible pole pair found; excitation may be insufficient")
    _, t1, t2, gA, gB = best

    # Map (tau_slow, tau_fast, gain_slow, gain_fast) to physical parameters.
    # gain_slow + gain_fast = R_WH + R_HA and the slow gain carries the
    # pole separation factor (tau_slow - tau_fast)/tau_slow.
    R_WH0 = gB + gA * t2 / t1
    R_HA0 = gA * (t1 - t2) / t1
    net0 = np.log10([R_WH0, R_HA0, t2 / R_WH0, t1 / R_HA0])

    norm = float(np.sum(y**2))

    def loss(logp: np.ndarray) -> float:
        R_WH, R_HA, C_fast, C_slow = 10.0**logp
        net = ThermalNetwork(R_WH=R_WH, R_HA=R_HA, C_fast=C_fast, C_slow=C_slow)
        numd, dend = _discretize(net, dt)
        resid = y - sps.lfilter(numd, dend, p)
        return float(np.sum(resid**2)) / norm

    res = optimize.minimize(
        loss,
        net0,
        method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000, "maxfev": 6000},
    )
    if not res.success:
        raise FitError(f"thermal fit did not converge: {res.message}; residual {res.fun:.3e}")
    R_WH, R_HA, C_fast, C_slow = (float(v) for v in 10.0**res.x)
    net = ThermalNetwork(R_WH=R_WH, R_HA=R_HA, C_fast=C_fast, C_slow=C_slow)
    numd, dend = _discretize(net, dt)
    y_hat = sps.lfilter(numd, dend, p)
    resid_var = float(np.var(y - y_hat))
    vaf = 100.0 * max(0.0, 1.0 - resid_var / float(np.var(y)))
    return ThermalFit(network=net, vaf=vaf)


def thermal_to_dict(net: ThermalNetwork) -> dict:
    return {
        "R_WH": net.R_WH,
        "R_HA": net.R_HA,
        "C_fast": net.C_fast,
        "C_slow": net.C_slow,
        "label": net.label.value,
    }


def thermal_from_dict(doc: dict, path: str = "thermal") -> ThermalNetwork:
    from .errors import ConfigError

    fields = dict(doc)
    label = fields.pop("label", "Custom")
    try:
        label = ThermalLabel(label)
    except ValueError:
        raise ConfigError(f"{path}.label: unknown label {label!r}") from None
    kwargs = {}
    for name in ("R_WH", "R_HA", "C_fast", "C_slow"):
        if name not in fields:
            raise ConfigError(f"{path}.{name}: missing")
        value = fields.pop(name)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{path}.{name}: expected a number, got {value!r}")
        kwargs[name] = float(value)
    fields.pop("schema", None)
    if fields:
        raise ConfigError(f"{path}.{sorted(fields)[0]}: unknown field")
    try:
        return ThermalNetwork(label=label, **kwargs)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from None
