"""Discrete-time simulator of C-V2X mode-4 semi-persistent subchannel scheduling."""

from cv2xsim.grid import GridConfig, SubchannelId
from cv2xsim.channel import ChannelConfig, decode_threshold
from cv2xsim.sps import SpsPolicyConfig, weighted_average
from cv2xsim.mobility import FreewayConfig, Vehicle
from cv2xsim.engine import SimConfig, run
from cv2xsim.metrics import ErrorClass, PrrTable, SimulationReport, Verdict

__all__ = [
    "GridConfig",
    "SubchannelId",
    "ChannelConfig",
    "decode_threshold",
    "SpsPolicyConfig",
    "weighted_average",
    "FreewayConfig",
    "Vehicle",
    "SimConfig",
    "run",
    "ErrorClass",
    "Verdict",
    "PrrTable",
    "SimulationReport",
]

__version__ = "0.1.0"
