"""Domain types and closed-form derivations for motor/transmission sizing.

Everything here is steady-state arithmetic: motor constants, co-selection
metrics, gearing of constants through a transmission, and the thermally
limited continuous operating point. All quantities are SI (rad/s, Nm,
kg·m², °C, W, s); unit conversion happens only at I/O boundaries.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ConfigError, DomainError

# q-axis copper loss of a Wye-wound PMSM under field-oriented control.
Q_AXIS_LOSS_FACTOR = 1.5

# Transmission ratios outside this range fall outside the co-selection
# study range and trigger a warning (not an error).
RATIO_RANGE = (1.0, 30.0)


class WindingStyle(enum.Enum):
    WYE = "Wye"
    DELTA = "Delta"


class TransmissionStyle(enum.Enum):
    DIRECT = "Direct"
    PLANETARY = "Planetary"
    WOLFROM = "Wolfrom"


@dataclass(frozen=True)
class MotorParams:
    """Electrical/magnetic/inertial constants of a PMSM."""

    R_phi: float  # phase resistance [Ohm]
    L_e: float  # phase inductance [H]
    K_T: float  # torque constant [Nm/A]
    K_B: float  # back-EMF constant [Vs/rad]
    J_m: float  # rotor inertia [kg m^2]
    mass: float  # [kg]
    winding_style: WindingStyle = WindingStyle.WYE
    T_max: float = 100.0  # winding temperature limit [degC]
    T_ambient: float = 25.0  # [degC]

    def __post_init__(self) -> None:
        for name in ("R_phi", "L_e", "K_T", "K_B", "J_m", "mass"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"MotorParams.{name} must be > 0")
        if not self.T_max > self.T_ambient:
            raise DomainError("MotorParams.T_max must exceed T_ambient")


@dataclass(frozen=True)
class TransmissionSpec:
    """Speed-reduction stage placed between motor and output."""

    ratio: float  # speed reduction N, dimensionless
    style: TransmissionStyle = TransmissionStyle.PLANETARY

    def __post_init__(self) -> None:
        if not self.ratio >= 1.0:
            raise DomainError("TransmissionSpec.ratio must be >= 1")
        if not RATIO_RANGE[0] <= self.ratio <= RATIO_RANGE[1]:
            warnings.warn(
                f"transmission ratio {self.ratio} outside the "
                f"{RATIO_RANGE[0]:g}:1..{RATIO_RANGE[1]:g}:1 selection range",
                stacklevel=2,
            )


@dataclass(frozen=True)
class ActuatorSpec:
    """Motor + transmission with derived effective constants.

    The derived fields are definitions, not measurements: K_Ta = N*K_T,
    K_Ma = N*K_M, J_a_pred = N^2*J_m. Build instances via derive_actuator.
    """

    motor: MotorParams
    transmission: TransmissionSpec
    K_Ta: float  # effective torque constant [Nm/A]
    K_Ma: float  # effective motor constant [Nm/sqrt(W)]
    J_a_pred: float  # predicted (gearless) output inertia [kg m^2]


class SelectionMetrics(NamedTuple):
    """Scalar co-selection metrics for motor comparison."""

    K_M: float  # motor constant [Nm/sqrt(W)]
    S_M: float  # responsiveness metric J_m/K_M^2 [s]
    S_T: float  # torque-specific inertia J_m/K_T^2 [kg (A/N)^2]


class ContinuousLimits(NamedTuple):
    i_cont: float  # continuous q-axis current [A]
    tau_cont: float  # continuous output torque [Nm]


def motor_constant(K_T: float, K_B: float, R_phi: float) -> float:
    """Motor constant sqrt(K_T*K_B/R_phi) in Nm/sqrt(W).

    Torque per square-root watt of copper loss; the single number that
    captures how efficiently a winding turns heat into torque.
    """
    if not (K_T > 0.0 and K_B > 0.0 and R_phi > 0.0):
        raise DomainError("motor_constant requires K_T, K_B, R_phi > 0")
    return math.sqrt(K_T * K_B / R_phi)


def copper_loss(R_phi: float, i_q: float) -> float:
    """Stator copper loss (3/2)*R_phi*i_q^2 [W] for a Wye-wound PMSM."""
    return Q_AXIS_LOSS_FACTOR * R_phi * i_q * i_q


def selection_metrics(motor: MotorParams) -> SelectionMetrics:
    """Compute K_M plus the responsiveness / torque-specific-inertia metrics.

    S_M = J_m/K_M^2 (an electromechanical time constant) and
    S_T = J_m/K_T^2; lower is better for both.
    """
    K_M = motor_constant(motor.K_T, motor.K_B, motor.R_phi)
    return SelectionMetrics(
        K_M=K_M,
        S_M=motor.J_m / (K_M * K_M),
        S_T=motor.J_m / (motor.K_T * motor.K_T),
    )


def derive_actuator(motor: MotorParams, transmission: TransmissionSpec) -> ActuatorSpec:
    """Gear the motor constants through the transmission.

    K_Ta and K_Ma scale linearly with the ratio N; the reflected inertia
    scales with N^2 and excludes gear inertia (measured values run higher).
    """
    N = transmission.ratio
    K_M = motor_constant(motor.K_T, motor.K_B, motor.R_phi)
    return ActuatorSpec(
        motor=motor,
        transmission=transmission,
        K_Ta=N * motor.K_T,
        K_Ma=N * K_M,
        J_a_pred=N * N * motor.J_m,
    )


def continuous_limits(act: ActuatorSpec, R_th: float) -> ContinuousLimits:
    """Thermally limited continuous current and output torque.

    At steady state the copper loss (3/2)*R_phi*i^2 flowing through the
    total thermal resistance R_th must not push the winding past T_max.
    """
    if not R_th > 0.0:
        raise DomainError("R_th must be > 0")
    motor = act.motor
    delta_T = motor.T_max - motor.T_ambient
    i_cont = math.sqrt(delta_T / (R_th * Q_AXIS_LOSS_FACTOR * motor.R_phi))
    return ContinuousLimits(i_cont=i_cont, tau_cont=act.K_Ta * i_cont)


# Reference motor: T-Motor RI50 (interior-rotating PMSM), constants as
# published for this actuator family.
RI50 = MotorParams(
    R_phi=0.705,
    L_e=2.559e-3,
    K_T=0.105,
    K_B=0.094,
    J_m=9.01e-6,
    mass=0.193,
    winding_style=WindingStyle.WYE,
    T_max=100.0,
    T_ambient=25.0,
)

PARAM_SCHEMA_VERSION = 1


def motor_to_dict(motor: MotorParams) -> dict:
    return {
        "R_phi": motor.R_phi,
        "L_e": motor.L_e,
        "K_T": motor.K_T,
        "K_B": motor.K_B,
        "J_m": motor.J_m,
        "mass": motor.mass,
        "winding_style": motor.winding_style.value,
        "T_max": motor.T_max,
        "T_ambient": motor.T_ambient,
    }


def motor_from_dict(doc: dict, path: str = "motor") -> MotorParams:
    """Build MotorParams from a JSON-style dict, reporting the failing field."""
    fields = dict(doc)
    style = fields.pop("winding_style", "Wye")
    try:
        style = WindingStyle(style)
    except ValueError:
        raise ConfigError(f"{path}.winding_style: unknown style {style!r}") from None
    kwargs = {}
    for name in ("R_phi", "L_e", "K_T", "K_B", "J_m", "mass", "T_max", "T_ambient"):
        if name in fields:
            value = fields.pop(name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{path}.{name}: expected a number, got {value!r}")
            kwargs[name] = float(value)
    fields.pop("schema", None)
    if fields:
        raise ConfigError(f"{path}.{sorted(fields)[0]}: unknown field")
    try:
        return MotorParams(winding_style=style, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def transmission_to_dict(tr: TransmissionSpec) -> dict:
    return {"ratio": tr.ratio, "style": tr.style.value}


def transmission_from_dict(doc: dict, path: str = "transmission") -> TransmissionSpec:
    fields = dict(doc)
    style = fields.pop("style", "Planetary")
    try:
        style = TransmissionStyle(style)
    except ValueError:
        raise ConfigError(f"{path}.style: unknown style {style!r}") from None
    ratio = fields.pop("ratio", None)
    fields.pop("schema", None)
    if ratio is None:
        raise ConfigError(f"{path}.ratio: missing")
    if not isinstance(ratio, (int, float)) or isinstance(ratio, bool):
        raise ConfigError(f"{path}.ratio: expected a number, got {ratio!r}")
    if fields:
        raise ConfigError(f"{path}.{sorted(fields)[0]}: unknown field")
    try:
        return TransmissionSpec(ratio=float(ratio), style=style)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from None
