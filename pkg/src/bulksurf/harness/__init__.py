"""Experiment harness: oracles, error measurement, convergence studies,
report writers (CSV + figures + VTK) and the command-line interface."""

from .oracles import RadialOracle, radial_oracle, radial_oracle_ode
from .lifting import lifted_surface_pencil, lifted_points
from .errors import ExactField, ErrorRow, measure_errors, eoc_sequence
from .studies import (ErrorReport, FracnormReport, CheckResult,
                      robin_convergence, flow_convergence, tau_convergence,
                      convergence_study, fracnorm_check)
from .vtkio import write_vtk
from .reportio import write_csv, read_csv

__all__ = [
    "RadialOracle", "radial_oracle", "radial_oracle_ode",
    "lifted_surface_pencil", "lifted_points", "ExactField", "ErrorRow",
    "measure_errors", "eoc_sequence", "ErrorReport", "FracnormReport",
    "CheckResult", "robin_convergence", "flow_convergence",
    "tau_convergence", "convergence_study", "fracnorm_check",
    "write_vtk", "write_csv", "read_csv",
]
