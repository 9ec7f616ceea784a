"""Device initialization and PHY training firmware.

Runs against :mod:`dfibridge.busmap` only, so the same code could drive a
real register file.
"""
from .firmware import (DQ_CAL_PATTERN, N_TAPS, WRITE_PATTERN, Firmware, FirmwareConfig,
                       InitReport, InitTimeout, LaneResult, NoEyeFound, Scheduler, TrainingError,
                       TrainingReport, center_tap, lane_bits, pack_word, pass_window)

__all__ = ["DQ_CAL_PATTERN", "N_TAPS", "WRITE_PATTERN", "Firmware", "FirmwareConfig",
           "InitReport", "InitTimeout", "LaneResult", "NoEyeFound", "Scheduler", "TrainingError",
           "TrainingReport", "center_tap", "lane_bits", "pack_word", "pass_window"]
