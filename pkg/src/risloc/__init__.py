"""Near-field localization of a multi-antenna MS aided by a reconfigurable intelligent surface."""
from .bounds import BoundReport, FimMatrix, UnidentifiableError, assemble_fim, crlb, gdop
from .geometry import ArrayLayout, StationPose, planar_layout, rotation_matrix
from .scenario import Scenario, SignalConfig, Station, default_scenario
from .signal_model import add_noise, asynchronous_response, synchronous_response

__version__ = "0.1.0"

__all__ = [
    "ArrayLayout", "BoundReport", "FimMatrix", "Scenario", "SignalConfig", "Station",
    "StationPose", "UnidentifiableError", "add_noise", "assemble_fim", "asynchronous_response",
    "crlb", "default_scenario", "gdop", "planar_layout", "rotation_matrix",
    "synchronous_response",
]
