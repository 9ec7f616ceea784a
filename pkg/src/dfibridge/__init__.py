"""Cycle-stepped model of a DFI bridge, its DMA engines, a PHY with per-lane
delay lines and an LPDDR4-like device, plus the training firmware that runs
against the register map."""

__version__ = "0.1.0"
