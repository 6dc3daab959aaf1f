"""Frequency-response estimation and parametric first-order identification.

The workflow mirrors the dynamometer practice: Welch-averaged FRF with
coherence from random-input data, a coherence-weighted two-stage fit of
the rigid-body model Omega(s)/Tau(s) = 1/(J s + B), rig-dynamics
subtraction in the impedance domain, and the scalar report metrics
(VAF, half-power bandwidth, 10-90% rise time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy import signal as sps

from .errors import AlignmentError, DomainError, EstimationError, FitError
from .signals import TimeSeries

DEFAULT_COHERENCE_THRESHOLD = 0.9
MIN_BAND_BINS = 5

# Two-stage fit settings: log grid span per parameter (decades) and
# simplex convergence (relative size / iteration cap).
GRID_POINTS = 41
GRID_DECADES = 4.0
SIMPLEX_XATOL = 1e-9
SIMPLEX_MAXITER = 500


@dataclass(frozen=True)
class FrfEstimate:
    """Nonparametric frequency response with per-bin coherence."""

    freq: np.ndarray  # [Hz], strictly increasing
    H: np.ndarray  # complex response
    coherence: np.ndarray  # [0, 1] per bin
    nseg: int
    window: str
    warning: str | None = None

    def __post_init__(self) -> None:
        freq = np.asarray(self.freq, dtype=float)
        H = np.asarray(self.H, dtype=complex)
        coh = np.asarray(self.coherence, dtype=float)
        if not (freq.size == H.size == coh.size):
            raise AlignmentError("freq, H, coherence must have equal length")
        if freq.size >= 2 and not np.all(np.diff(freq) > 0.0):
            raise DomainError("frequency grid must be strictly increasing")
        finite = coh[np.isfinite(coh)]
        if finite.size and (finite.min() < -1e-9 or finite.max() > 1.0 + 1e-9):
            raise DomainError("coherence must lie in [0, 1]")
        for name, arr in (("freq", freq), ("H", H), ("coherence", coh)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class MechFit:
    """Identified inertia/damping with goodness of fit."""

    J: float  # [kg m^2]
    B: float  # [Nms/rad]
    vaf: float | None = None  # [%], time-domain replay when available
    ci_J: float = 0.0  # 2-sigma half-width across repeated fits
    ci_B: float = 0.0

    def __post_init__(self) -> None:
        if not self.J > 0.0:
            raise DomainError("MechFit.J must be > 0")
        if self.B < 0.0:
            raise DomainError("MechFit.B must be >= 0")
        if self.vaf is not None and self.vaf > 100.0:
            raise DomainError("MechFit.vaf cannot exceed 100%")


def estimate_frf(
    u: np.ndarray,
    y: np.ndarray,
    fs: float,
    seg_len: int | None = None,
    overlap: float = 0.5,
    window: str = "hann",
) -> FrfEstimate:
    """Welch-averaged H1 estimate Y/U with magnitude-squared coherence.

    Defaults give 8 half-overlapped Hann segments. Detrending is off so
    static relations keep unity coherence down to the DC bin.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise AlignmentError("u and y must be 1-D arrays of equal length")
    if not 0.0 <= overlap <= 0.9:
        raise DomainError("overlap must lie in [0, 0.9]")
    n = u.size
    if seg_len is None:
        seg_len = max(8, int(n / (1.0 + 7.0 * (1.0 - overlap))))
    if seg_len > n:
        raise DomainError(f"seg_len {seg_len} exceeds record length {n}")
    noverlap = int(round(overlap * seg_len))
    step = seg_len - noverlap
    nseg = 1 + (n - seg_len) // step if step > 0 else 1
    if nseg < 2:
        raise EstimationError(
            "fewer than 2 averaging segments; coherence is undefined "
            f"(length {n}, seg_len {seg_len}, overlap {overlap})"
        )
    kwargs = dict(fs=fs, window=window, nperseg=seg_len, noverlap=noverlap, detrend=False)
    f, s_uu = sps.welch(u, **kwargs)
    _, s_yy = sps.welch(y, **kwargs)
    _, s_uy = sps.csd(u, y, **kwargs)
    with np.errstate(divide="ignore", invalid="ignore"):
        H = s_uy / s_uu
        coh = np.abs(s_uy) ** 2 / (s_uu * s_yy)
    coh = np.clip(np.nan_to_num(coh, nan=0.0), 0.0, 1.0)
    H = np.nan_to_num(H, nan=0.0)
    return FrfEstimate(freq=f, H=H, coherence=coh, nseg=int(nseg), window=window)


def first_order_frf(J: float, B: float, freq: np.ndarray) -> FrfEstimate:
    """Analytic FRF of 1/(J s + B) on a grid, unit coherence (oracle helper)."""
    freq = np.asarray(freq, dtype=float)
    s = 2j * math.pi * freq
    with np.errstate(divide="ignore", invalid="ignore"):
        H = 1.0 / (J * s + B)
    return FrfEstimate(freq=freq, H=H, coherence=np.ones_like(freq), nseg=1, window="analytic")


def simulate_first_order(J: float, B: float, u: np.ndarray, fs: float) -> np.ndarray:
    """ZOH-exact velocity response of 1/(J s + B) to a torque sequence."""
    u = np.asarray(u, dtype=float)
    dt = 1.0 / fs
    if B > 0.0:
        e = math.exp(-B * dt / J)
        return sps.lfilter([0.0, (1.0 - e) / B], [1.0, -e], u)
    return sps.lfilter([0.0, dt / J], [1.0, -1.0], u)


def _band_selection(
    frf: FrfEstimate, band: tuple[float, float], coherence_threshold: float
) -> np.ndarray:
    f_lo, f_hi = band
    if not (f_lo < f_hi):
        raise DomainError("band must satisfy f_lo < f_hi")
    if f_lo < frf.freq[0] - 1e-12 or f_hi > frf.freq[-1] + 1e-12:
        raise DomainError(
            f"band [{f_lo}, {f_hi}] Hz outside FRF range "
            f"[{frf.freq[0]:g}, {frf.freq[-1]:g}] Hz"
        )
    mask = (frf.freq >= f_lo) & (frf.freq <= f_hi) & (frf.coherence >= coherence_threshold)
    if not np.any(mask):
        raise FitError(f"no bins pass the coherence threshold {coherence_threshold}")
    if np.count_nonzero(mask) < MIN_BAND_BINS:
        raise FitError(
            f"only {np.count_nonzero(mask)} usable bins in band; need {MIN_BAND_BINS}"
        )
    return mask


def fit_first_order(
    frf: FrfEstimate,
    band: tuple[float, float],
    coherence_threshold: float = DEFAULT_COHERENCE_THRESHOLD,
    replay: tuple[np.ndarray, np.ndarray, float] | None = None,
) -> MechFit:
    """Fit (J, B) of 1/(J s + B) to an FRF over a frequency band.

    Coherence-squared-weighted complex least squares; stage 1 is a log
    grid spanning 4 decades around a data-derived seed, stage 2 a
    Nelder-Mead refinement in log space. Pass replay=(u, y, fs) to score
    the fit with a time-domain VAF replay.
    """
    mask = _band_selection(frf, band, coherence_threshold)
    f = frf.freq[mask]
    H = frf.H[mask]
    w = frf.coherence[mask] ** 2
    omega = 2.0 * math.pi * f
    norm = float(np.sum(w * np.abs(H) ** 2))
    if norm == 0.0:
        raise FitError("response is identically zero in the fit band")

    def loss_arr(J: np.ndarray, B: np.ndarray) -> np.ndarray:
        model = 1.0 / (J[..., None] * 1j * omega + B[..., None])
        return np.sum(w * np.abs(model - H) ** 2, axis=-1) / norm

    # Seeds: |H| ~ 1/B at the low edge, ~ 1/(J w) at the high edge.
    B0 = 1.0 / max(np.abs(H[0]), 1e-30)
    J0 = 1.0 / max(np.abs(H[-1]) * omega[-1], 1e-30)
    half = GRID_DECADES / 2.0
    J_grid = np.logspace(math.log10(J0) - half, math.log10(J0) + half, GRID_POINTS)
    B_grid = np.logspace(math.log10(B0) - half, math.log10(B0) + half, GRID_POINTS)
    JJ, BB = np.meshgrid(J_grid, B_grid, indexing="ij")
    grid_loss = loss_arr(JJ, BB)
    i, j = np.unravel_index(np.argmin(grid_loss), grid_loss.shape)

    res = optimize.minimize(
        lambda x: float(loss_arr(np.array(10.0 ** x[0]), np.array(10.0 ** x[1]))),
        [math.log10(J_grid[i]), math.log10(B_grid[j])],
        method="Nelder-Mead",
        options={"xatol": SIMPLEX_XATOL, "fatol": 1e-12, "maxiter": SIMPLEX_MAXITER},
    )
    if not res.success:
        raise FitError(
            f"simplex stage did not converge in {SIMPLEX_MAXITER} iterations; "
            f"weighted residual {res.fun:.3e}"
        )
    J_hat, B_hat = (float(10.0**v) for v in res.x)

    vaf_pct = None
    if replay is not None:
        u, y, fs = replay
        vaf_pct = vaf(y, simulate_first_order(J_hat, B_hat, u, fs))
    return MechFit(J=J_hat, B=B_hat, vaf=vaf_pct)


def summarize_fits(fits: Sequence[MechFit]) -> MechFit:
    """Pool repeated fits (e.g. across input amplitudes): mean and 2-sigma CI."""
    if not fits:
        raise DomainError("need at least one fit to summarize")
    J = np.array([f.J for f in fits])
    B = np.array([f.B for f in fits])
    vafs = [f.vaf for f in fits if f.vaf is not None]
    return MechFit(
        J=float(J.mean()),
        B=float(B.mean()),
        vaf=float(np.mean(vafs)) if vafs else None,
        ci_J=2.0 * float(J.std(ddof=1)) if len(fits) > 1 else 0.0,
        ci_B=2.0 * float(B.std(ddof=1)) if len(fits) > 1 else 0.0,
    )


def subtract_rig(total: FrfEstimate, rig: FrfEstimate) -> FrfEstimate:
    """Remove rig dynamics by subtracting mechanical impedances pointwise.

    H_out = 1/(1/H_total - 1/H_rig); per-bin coherence is the minimum of
    the inputs. Bins where the impedances cancel become +inf sentinels
    and the result carries a warning; a non-positive DC impedance also
    sets the warning (the remainder is not a passive mechanical system).
    """
    if total.freq.shape != rig.freq.shape or not np.allclose(
        total.freq, rig.freq, rtol=0.0, atol=1e-12
    ):
        raise AlignmentError("FRF frequency grids must be identical")
    with np.errstate(divide="ignore", invalid="ignore"):
        z_total = np.where(np.isfinite(total.H) & (total.H != 0), 1.0 / total.H, 0.0)
        z_rig = np.where(np.isfinite(rig.H) & (rig.H != 0), 1.0 / rig.H, 0.0)
        z = z_total - z_rig
        H = np.where(z != 0, 1.0 / z, np.inf + 0j)
    warning = None
    if np.any(z == 0):
        warning = "degenerate: rig impedance equals total impedance in some bins"
    elif z[0].real <= 0.0:
        warning = "non-positive DC impedance after subtraction"
    return FrfEstimate(
        freq=total.freq.copy(),
        H=H,
        coherence=np.minimum(total.coherence, rig.coherence),
        nseg=min(total.nseg, rig.nseg),
        window=total.window,
        warning=warning,
    )


def vaf(y_meas: np.ndarray, y_pred: np.ndarray) -> float:
    """Variance Accounted For, percent, clamped at 0 from below."""
    y_meas = np.asarray(y_meas, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_meas.shape != y_pred.shape or y_meas.ndim != 1:
        raise AlignmentError("signals must be 1-D arrays of equal length")
    if y_meas.size < 2:
        raise EstimationError("need at least 2 samples")
    var_meas = float(np.var(y_meas))
    if var_meas == 0.0:
        raise EstimationError("measurement has zero variance; VAF undefined")
    return 100.0 * max(0.0, 1.0 - float(np.var(y_meas - y_pred)) / var_meas)


def half_power_bandwidth(frf: FrfEstimate) -> float:
    """Lowest frequency where |H| first drops below |H(f_min)|/sqrt(2).

    Linearly interpolated between bins; returns +inf when the response
    never crosses (bandwidth is at least the top of the grid).
    """
    mag = np.abs(frf.H)
    ref = mag[0]
    if not np.isfinite(ref) or ref <= 0.0:
        raise EstimationError("reference magnitude at the lowest bin is unusable")
    target = ref / math.sqrt(2.0)
    below = np.nonzero(mag < target)[0]
    if below.size == 0:
        return math.inf
    i = int(below[0])
    if i == 0:
        return float(frf.freq[0])
    f0, f1 = frf.freq[i - 1], frf.freq[i]
    m0, m1 = mag[i - 1], mag[i]
    return float(f0 + (f1 - f0) * (m0 - target) / (m0 - m1))


def average_steps(trials: Sequence[TimeSeries]) -> TimeSeries:
    """Pointwise mean profile across aligned repeated trials."""
    if not trials:
        raise AlignmentError("need at least one trial")
    first = trials[0]
    for k, tr in enumerate(trials):
        if tr.n_samples != first.n_samples or tr.fs != first.fs:
            raise AlignmentError(f"trial {k} length/rate differs from trial 0")
        if tr.names != first.names:
            raise AlignmentError(f"trial {k} channels differ from trial 0")
    channels = {
        name: np.mean([tr.channel(name) for tr in trials], axis=0) for name in first.names
    }
    return TimeSeries(
        fs=first.fs, channels=channels, t0=first.t0, meta={"trials": str(len(trials))}
    )


def rise_time(profile: TimeSeries | np.ndarray, fs: float | None = None, channel: str | None = None) -> float:
    """10-90% rise time of a step profile [s].

    The steady-state value is the mean of the final 20% of samples and
    must be positive; crossing times are linearly interpolated.
    """
    if isinstance(profile, TimeSeries):
        if channel is None:
            if len(profile.names) != 1:
                raise DomainError(f"profile has channels {list(profile.names)}; specify one")
            channel = profile.names[0]
        samples = profile.channel(channel)
        fs = profile.fs
    else:
        if fs is None:
            raise DomainError("fs is required with array input")
        samples = np.asarray(profile, dtype=float)
    if samples.size < 5:
        raise EstimationError("profile too short for a rise-time estimate")
    tail = samples[int(math.floor(0.8 * samples.size)):]
    steady = float(tail.mean())
    if steady <= 0.0:
        raise EstimationError("steady-state window mean must be positive")

    def first_crossing(level: float) -> float:
        above = np.nonzero(samples >= level)[0]
        if above.size == 0:
            raise EstimationError(f"profile never reaches {level:.4g}")
        i = int(above[0])
        if i == 0:
            return 0.0
        frac = (level - samples[i - 1]) / (samples[i] - samples[i - 1])
        return (i - 1 + frac) / fs

    return first_crossing(0.9 * steady) - first_crossing(0.1 * steady)


def frf_to_csv(frf: FrfEstimate, path) -> None:
    """Export an FRF as `freq,re,im,coherence` CSV rows."""
    from pathlib import Path

    lines = ["freq,re,im,coherence"]
    for k in range(frf.freq.size):
        lines.append(
            f"{frf.freq[k]:.17g},{frf.H[k].real:.17g},{frf.H[k].imag:.17g},{frf.coherence[k]:.17g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def frf_from_csv(path) -> FrfEstimate:
    """Read an FRF exported by frf_to_csv."""
    from pathlib import Path

    from .errors import FormatError

    lines = [l for l in Path(path).read_text().splitlines() if l.strip() and not l.startswith("#")]
    if not lines or lines[0].strip() != "freq,re,im,coherence":
        raise FormatError(f"{path}: expected `freq,re,im,coherence` header")
    try:
        data = np.array([[float(v) for v in l.split(",")] for l in lines[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value ({exc})") from None
    return FrfEstimate(
        freq=data[:, 0],
        H=data[:, 1] + 1j * data[:, 2],
        coherence=data[:, 3],
        nseg=1,
        window="file",
    )
