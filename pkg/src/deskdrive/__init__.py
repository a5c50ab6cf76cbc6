"""Desk-scale detection-driven end-to-end driving: perception, fusion, planning, control, simulation."""

__version__ = "0.1.0"
