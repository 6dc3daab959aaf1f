"""actukit: characterization toolkit and virtual dynamometer for QDD actuators.

Submodules
----------
core      motor/transmission types and closed-form derivations
signals   time-series container, test signals, filtering, CSV I/O
sysid     FRF estimation, first-order parametric fits, report metrics
thermal   two-node RC model: simulation, identification, limit solvers
dyno      virtual dynamometer protocols producing oracle datasets
analysis  efficiency maps, lifecycle wear analytics
cli       command-line front end (`actukit <command>`)
"""

from . import analysis, core, dyno, errors, signals, sysid, thermal

__all__ = ["analysis", "core", "dyno", "errors", "signals", "sysid", "thermal"]
__version__ = "0.1.0"
