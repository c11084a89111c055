"""Gear-driven actuator simulation and black-box system identification."""

__version__ = "0.1.0"
