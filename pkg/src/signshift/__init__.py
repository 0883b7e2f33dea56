"""Numerical laboratory for Helmholtz transmission problems with sign-changing coefficients."""

from .complementing import ComplementingReport, InterfaceReport, check_interface, check_pair
from .errors import SignShiftError
from .geometry import Circle, Ellipse, InterfaceGeometry, make_geometry
from .lab import (Scenario, SweepReport, detect_resonance, emit_report, load_scenario, run_sweep,
                  scenario_from_dict)
from .reflectmap import (classify, curvature_gap_spectrum, curvature_reflection, kelvin_reflection,
                         kelvin_transform, standard_reflection, verify_thm1, verify_thm2)

__version__ = "0.1.0"

__all__ = [
    "Circle", "ComplementingReport", "Ellipse", "InterfaceGeometry", "InterfaceReport", "Scenario",
    "SignShiftError", "SweepReport", "check_interface", "check_pair", "classify", "curvature_gap_spectrum",
    "curvature_reflection", "detect_resonance", "emit_report", "kelvin_reflection", "kelvin_transform",
    "load_scenario", "make_geometry", "run_sweep", "scenario_from_dict", "standard_reflection",
    "verify_thm1", "verify_thm2",
]
