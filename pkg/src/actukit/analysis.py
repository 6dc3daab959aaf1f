"""Post-processing: efficiency maps, wear trends, and benchmark comparisons.

Works on immutable records produced by the dynamometer (real or
virtual); everything here is pure arithmetic over those records.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ActuatorSpec
from .errors import DomainError, EstimationError, FitError

# Both powers below this magnitude [W] make efficiency meaningless.
DEFAULT_POWER_EPS = 0.5


class Quadrant(enum.Enum):
    POSITIVE_WORK = "PositiveWork"
    NEGATIVE_WORK = "NegativeWork"


@dataclass(frozen=True)
class EfficiencyRecord:
    """One averaged torque/speed operating condition."""

    tau_a: float  # [Nm]
    omega_a: float  # [rad/s]
    P_mech: float  # [W], tau_a * omega_a
    P_elec: float  # [W], bus voltage * bus current
    eta: float | None  # None when both powers are below threshold
    quadrant: Quadrant
    feasible: bool = True

    @property
    def defined(self) -> bool:
        return self.eta is not None and self.feasible


def efficiency(tau_a: float, omega_a: float, P_elec: float, eps: float = DEFAULT_POWER_EPS) -> EfficiencyRecord:
    """Quadrant-aware efficiency of one measured condition.

    Positive work (P_mech > 0): eta = P_mech/P_elec. Negative work: the
    definition inverts, eta = P_elec/P_mech; eta < 0 then means the
    actuator sinks power from both the electrical and mechanical sides.
    Both powers below eps: eta is undefined.
    """
    P_mech = tau_a * omega_a
    if not (math.isfinite(P_mech) and math.isfinite(P_elec)):
        raise DomainError("powers must be finite")
    quadrant = Quadrant.POSITIVE_WORK if P_mech > 0.0 else Quadrant.NEGATIVE_WORK
    if abs(P_mech) < eps and abs(P_elec) < eps:
        eta = None
    elif quadrant is Quadrant.POSITIVE_WORK:
        eta = math.inf if P_elec == 0.0 else P_mech / P_elec
    else:
        eta = math.inf if P_mech == 0.0 else P_elec / P_mech
    return EfficiencyRecord(
        tau_a=tau_a,
        omega_a=omega_a,
        P_mech=P_mech,
        P_elec=P_elec,
        eta=eta,
        quadrant=quadrant,
    )


@dataclass(frozen=True)
class EfficiencyMap:
    """Cell means of defined efficiencies on a torque/speed grid."""

    tau_edges: np.ndarray
    omega_edges: np.ndarray
    eta: np.ndarray  # shape (n_tau_bins, n_omega_bins), NaN where empty
    count: np.ndarray

    def cell(self, i: int, j: int) -> float:
        return float(self.eta[i, j])


def build_map(
    records: Sequence[EfficiencyRecord],
    tau_bins: Sequence[float],
    omega_bins: Sequence[float],
) -> EfficiencyMap:
    """Average defined efficiencies into grid cells; empty cells are NaN."""
    tau_edges = np.asarray(tau_bins, dtype=float)
    omega_edges = np.asarray(omega_bins, dtype=float)
    for name, edges in (("tau_bins", tau_edges), ("omega_bins", omega_edges)):
        if edges.size < 2 or not np.all(np.diff(edges) > 0.0):
            raise DomainError(f"{name} must be strictly increasing with >= 2 edges")
    shape = (tau_edges.size - 1, omega_edges.size - 1)
    total = np.zeros(shape)
    count = np.zeros(shape, dtype=int)
    for rec in records:
        if not rec.defined:
            continue
        i = int(np.searchsorted(tau_edges, rec.tau_a, side="right")) - 1
        j = int(np.searchsorted(omega_edges, rec.omega_a, side="right")) - 1
        if 0 <= i < shape[0] and 0 <= j < shape[1]:
            total[i, j] += rec.eta
            count[i, j] += 1
    with np.errstate(invalid="ignore"):
        eta = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    if not np.any(count > 0):
        warnings.warn("efficiency map is empty: no defined records fell in any cell", stacklevel=2)
    return EfficiencyMap(tau_edges=tau_edges, omega_edges=omega_edges, eta=eta, count=count)


def write_map_csv(m: EfficiencyMap, path) -> None:
    """CSV grid: rows are torque bins, columns speed bins, cells mean eta."""
    tau_centers = 0.5 * (m.tau_edges[:-1] + m.tau_edges[1:])
    omega_centers = 0.5 * (m.omega_edges[:-1] + m.omega_edges[1:])
    lines = ["tau_nm\\omega_rad_s," + ",".join(f"{w:.17g}" for w in omega_centers)]
    for i, tc in enumerate(tau_centers):
        cells = ",".join("" if math.isnan(m.eta[i, j]) else f"{m.eta[i, j]:.17g}" for j in range(omega_centers.size))
        lines.append(f"{tc:.17g}," + cells)
    Path(path).write_text("\n".join(lines) + "\n")


def damping_test(tau_est: float, omega: float) -> float:
    """Effective damping coefficient tau/omega [Nms/rad]."""
    if omega == 0.0:
        raise DomainError("damping test requires nonzero velocity")
    return tau_est / omega


@dataclass(frozen=True)
class BacklashTrend:
    rate: float  # [rad/hr] total across the tested pair
    ci: float  # 2-sigma half-width on rate
    per_actuator_rate: float  # [rad/hr]
    per_actuator_ci: float
    baseline: float  # [rad] flex proxy subtracted before the fit


def backlash_trend(
    hourly_max_discrepancy: Sequence[float],
    hours: Sequence[float] | None = None,
    baseline_policy: str = "first",
    units_in_series: int = 2,
) -> BacklashTrend:
    """OLS growth rate of encoder discrepancy, attributed to backlash.

    The first-hour maximum serves as the torsional-flex baseline
    (baseline_policy="first"; "none" skips subtraction — the slope is
    unaffected either way). Rate is split evenly across the actuators
    in series on the rig.
    """
    y = np.asarray(hourly_max_discrepancy, dtype=float)
    if y.size < 3:
        raise FitError("need at least 3 hourly points for a trend")
    x = np.arange(y.size, dtype=float) if hours is None else np.asarray(hours, dtype=float)
    if x.size != y.size:
        raise DomainError("hours and discrepancy vectors must have equal length")
    if baseline_policy not in ("first", "none"):
        raise DomainError(f"unknown baseline policy {baseline_policy!r}")
    baseline = float(y[0]) if baseline_policy == "first" else 0.0
    y = y - baseline

    x_mean = x.mean()
    s_xx = float(np.sum((x - x_mean) ** 2))
    if s_xx == 0.0:
        raise FitError("hour points are all identical")
    slope = float(np.sum((x - x_mean) * (y - y.mean())) / s_xx)
    resid = y - (y.mean() + slope * (x - x_mean))
    dof = y.size - 2
    se = math.sqrt(float(np.sum(resid**2)) / dof / s_xx) if dof > 0 else 0.0
    ci = 2.0 * se
    return BacklashTrend(
        rate=slope,
        ci=ci,
        per_actuator_rate=slope / units_in_series,
        per_actuator_ci=ci / units_in_series,
        baseline=baseline,
    )


@dataclass(frozen=True)
class EfficiencyTrend:
    hours: np.ndarray
    eta_pos_mean: np.ndarray
    max_drop_pct: float  # largest drop vs the first interval, percent of it
    final_delta_pct: float  # final vs first interval, percent (negative = lower)
    skipped: tuple[int, ...] = ()  # interval indices with no defined records


def efficiency_trend(
    intervals: Sequence[tuple[float, Sequence[EfficiencyRecord]]]
) -> EfficiencyTrend:
    """Mean positive-work efficiency per interval and its drop/rebound."""
    if len(intervals) < 2:
        raise EstimationError("need at least 2 intervals for a trend")
    hours = []
    means = []
    skipped = []
    for idx, (t_h, records) in enumerate(intervals):
        etas = [
            r.eta
            for r in records
            if r.defined and r.quadrant is Quadrant.POSITIVE_WORK
        ]
        if not etas:
            skipped.append(idx)
            continue
        hours.append(float(t_h))
        means.append(float(np.mean(etas)))
    if len(means) < 2:
        raise EstimationError("fewer than 2 intervals have defined positive-work records")
    eta0 = means[0]
    drops = [100.0 * (eta0 - m) / eta0 for m in means]
    return EfficiencyTrend(
        hours=np.asarray(hours),
        eta_pos_mean=np.asarray(means),
        max_drop_pct=max(drops),
        final_delta_pct=100.0 * (means[-1] - eta0) / eta0,
        skipped=tuple(skipped),
    )


def torque_from_current(i_q, spec: ActuatorSpec):
    """Driver torque estimate i_q * K_Ta (scalar or elementwise)."""
    return np.asarray(i_q, dtype=float) * spec.K_Ta if np.ndim(i_q) else i_q * spec.K_Ta


def median_torque(estimates: Sequence) -> np.ndarray | float:
    """Elementwise median of per-unit torque estimates."""
    if len(estimates) == 0:
        raise DomainError("need at least one unit's torque estimate")
    stacked = np.asarray(estimates, dtype=float)
    out = np.median(stacked, axis=0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LifecycleReport:
    """Aggregated wear analytics over a lifecycle run."""

    hours: np.ndarray  # interval times [hr]
    eta_pos_mean: np.ndarray  # mean positive-work efficiency per interval
    damping_estimates: tuple[tuple[float, float, float], ...]  # (speed, B, 2-sigma)
    backlash_rate: float  # [rad/hr] total
    backlash_ci: float
    per_actuator_rate: float  # [rad/hr]
    discrepancy_max_per_hour: np.ndarray  # [rad]
    max_drop_pct: float
    final_delta_pct: float

    def __post_init__(self) -> None:
        if self.hours.size != self.eta_pos_mean.size:
            raise DomainError("hours and eta vectors must share length")


def lifecycle_report(
    interval_data: Sequence[tuple[float, Sequence[EfficiencyRecord]]],
    damping_samples: Sequence[tuple[float, float]],
    hourly_discrepancy_max: Sequence[float],
    hour_marks: Sequence[float] | None = None,
    units_in_series: int = 2,
) -> LifecycleReport:
    """Fold interval tests and hourly discrepancy maxima into one report."""
    trend = efficiency_trend(interval_data)
    blt = backlash_trend(
        hourly_discrepancy_max, hours=hour_marks, units_in_series=units_in_series
    )
    by_speed: dict[float, list[float]] = {}
    for speed, b in damping_samples:
        by_speed.setdefault(float(speed), []).append(float(b))
    damping = tuple(
        (
            speed,
            float(np.mean(vals)),
            2.0 * float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
        )
        for speed, vals in sorted(by_speed.items())
    )
    return LifecycleReport(
        hours=trend.hours,
        eta_pos_mean=trend.eta_pos_mean,
        damping_estimates=damping,
        backlash_rate=blt.rate,
        backlash_ci=blt.ci,
        per_actuator_rate=blt.per_actuator_rate,
        discrepancy_max_per_hour=np.asarray(hourly_discrepancy_max, dtype=float),
        max_drop_pct=trend.max_drop_pct,
        final_delta_pct=trend.final_delta_pct,
    )
